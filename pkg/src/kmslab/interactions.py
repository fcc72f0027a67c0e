"""Interaction energies, Wick ordering, spectral gradients, and vector fields.

Five variants, all evaluated pseudospectrally on an oversampled grid chosen
so that every pointwise product is alias-free for the lattice in play:

* ``nls1d``        (1/q) int |u|^q, optionally negated (focusing)
* ``wick_nls2d``   (1/2r) int :|u|^{2r}:
* ``hartree1d``    (1/4) int int |u|^2 V |u|^2
* ``wick_hartree`` (1/4) int int :|u|^2: V :|u|^2:   (d = 2 or 3)
* ``wick_wave``    (1/m) int :u^m: on the real position component

Wick ordering recenters by the pointwise variance of the free field the
sampler actually produces: E|u(x)|^2 = 2*sigma_{n,beta} for complex fields
(two real directions per mode) and sigma_{n,beta} for real wave fields,
with sigma_{n,beta} = sum_{|k|<=n} 1/(beta*lam_k).

Gradient formulas are the honest derivatives of the energies above and are
gated by the central-difference oracle in the tests, not assumed. For the
complex Wick power the derivative of the Laguerre form gives the multiplier

    grad (1/2r) int :|u|^{2r}: = (-1)^{r-1} (r-1)! sigma^{r-1}
                                  L^{(1)}_{r-1}(|u|^2/sigma) * u

(associated Laguerre), which for r=1 is u and for r=2 is (|u|^2 - 2 sigma) u.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_genlaguerre, eval_hermitenorm, eval_laguerre

from kmslab.lattice import (
    FieldPair,
    ModeLattice,
    SpectralField,
    build_lattice,
    grid_eval_batch,
    grid_synth_batch,
    min_grid,
    pair_real,
)

__all__ = [
    "PotentialSpec",
    "InteractionSpec",
    "WickConstant",
    "wick_sigma",
    "wick_point_variance",
    "wick_complex_power",
    "wick_real_power",
    "energy",
    "gradient",
    "vector_field",
    "directional_fd",
    "energy_batch",
    "gradient_batch",
    "vector_field_batch",
    "save_potential_csv",
    "load_potential_csv",
]

VARIANTS = ("hartree1d", "wick_hartree", "nls1d", "wick_nls2d", "wick_wave")
_COMPLEX_VARIANTS = ("hartree1d", "wick_hartree", "nls1d", "wick_nls2d")


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialSpec:
    """Even, nonnegative interaction potential given by its Fourier coefficients.

    kind="family": V(k) = amplitude * (|k|^2 + 1)^(-decay/2).
    kind="table": explicit entries {k: value}; entries must come in +/-k pairs
    with equal values. ``bound = (C, eps)`` declares a decay envelope
    V(k) <= C (|k|^2+1)^(-(2+eps)/2), required for table potentials in d=3.
    """

    kind: str
    amplitude: float = 1.0
    decay: float = 0.0
    entries: tuple = ()
    bound: tuple | None = None

    def __post_init__(self):
        if self.kind == "family":
            if self.amplitude < 0:
                raise ValueError("potential amplitude must be nonnegative")
        elif self.kind == "table":
            seen = {}
            for k, v in self.entries:
                if v < 0:
                    raise ValueError(f"potential table value at {k} is negative")
                seen[tuple(int(x) for x in k)] = float(v)
            for k, v in seen.items():
                mirror = tuple(-x for x in k)
                if mirror not in seen or seen[mirror] != v:
                    raise ValueError(f"potential table is not even at k={k}")
            object.__setattr__(self, "entries", tuple(sorted(seen.items())))
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    def value_array(self, kvecs: np.ndarray) -> np.ndarray:
        """V(k) for an integer array of shape (..., d)."""
        kvecs = np.asarray(kvecs)
        if self.kind == "family":
            bracket = (kvecs.astype(np.float64) ** 2).sum(axis=-1) + 1.0
        else:
            table = dict(self.entries)
            flat = kvecs.reshape(-1, kvecs.shape[-1])
            vals = np.array([table.get(tuple(int(x) for x in k), 0.0) for k in flat])
            return vals.reshape(kvecs.shape[:-1])
        return self.amplitude * bracket ** (-self.decay / 2.0)

    def values_on_grid(self, d: int, m: int) -> np.ndarray:
        freqs = np.fft.fftfreq(m, 1.0 / m).astype(np.int64)
        grids = np.meshgrid(*([freqs] * d), indexing="ij")
        kvecs = np.stack(grids, axis=-1)
        if self.kind == "table":
            for k, _ in self.entries:
                if any(abs(x) > (m - 1) // 2 for x in k):
                    raise ValueError(f"potential table entry {k} does not fit an m={m} grid")
        return self.value_array(kvecs)

    def covers_ball(self, d: int, radius: int) -> bool:
        """Whether every mode with |k| <= radius has an explicit table entry."""
        if self.kind == "family":
            return True
        table = dict(self.entries)
        lat = build_lattice(d, radius)
        return all(tuple(int(x) for x in k) in table for k in lat.modes)

    def decay_envelope_ok(self) -> bool:
        """Check declared (C, eps) bound against every table entry."""
        if self.kind == "family":
            return True
        if self.bound is None:
            return False
        c, eps = self.bound
        for k, v in self.entries:
            bracket = sum(x * x for x in k) + 1.0
            if v > c * bracket ** (-(2.0 + eps) / 2.0) + 1e-12:
                return False
        return True

    def to_dict(self) -> dict:
        if self.kind == "family":
            return {"kind": "family", "amplitude": self.amplitude, "decay": self.decay}
        out = {"kind": "table", "entries": [[list(k), v] for k, v in self.entries]}
        if self.bound is not None:
            out["bound"] = list(self.bound)
        return out

    @staticmethod
    def from_dict(data: dict) -> "PotentialSpec":
        kind = data["kind"]
        if kind == "family":
            return PotentialSpec(
                kind="family",
                amplitude=float(data.get("amplitude", 1.0)),
                decay=float(data.get("decay", 0.0)),
            )
        entries = tuple((tuple(int(x) for x in k), float(v)) for k, v in data["entries"])
        bound = tuple(data["bound"]) if data.get("bound") else None
        return PotentialSpec(kind="table", entries=entries, bound=bound)


def save_potential_csv(pot: PotentialSpec, path, d: int | None = None) -> None:
    if pot.kind != "table":
        raise ValueError("only table potentials save to CSV")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dd = d if d is not None else len(pot.entries[0][0])
        writer.writerow([f"k{i+1}" for i in range(dd)] + ["value"])
        for k, v in pot.entries:
            writer.writerow(list(k) + [repr(v)])


def load_potential_csv(path, bound: tuple | None = None) -> PotentialSpec:
    entries = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                k = tuple(int(x) for x in row[:-1])
            except ValueError:
                continue  # header row
            entries.append((k, float(row[-1])))
    return PotentialSpec(kind="table", entries=tuple(entries), bound=bound)


# ---------------------------------------------------------------------------
# interaction specifications


@dataclass(frozen=True)
class InteractionSpec:
    variant: str
    beta: float
    d: int
    n: int
    power: int | None = None
    potential: PotentialSpec | None = None
    focusing: bool = False
    mass_cutoff: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        v = self.variant
        if v == "nls1d":
            if self.d != 1:
                raise ValueError("nls1d requires d=1")
            q = self.power
            if q is None or q < 4 or q % 2:
                raise ValueError("nls1d power q must be an even integer >= 4")
            if self.focusing and not (self.mass_cutoff and self.mass_cutoff > 0):
                raise ValueError("focusing nls1d requires a positive mass_cutoff")
        elif v == "wick_nls2d":
            if self.d != 2:
                raise ValueError("wick_nls2d requires d=2")
            if self.power is None or self.power < 1:
                raise ValueError("wick_nls2d power r must be >= 1")
        elif v == "wick_wave":
            if self.d not in (1, 2, 3):
                raise ValueError("wick_wave requires d in {1,2,3}")
            m = self.power
            if m is None or m < 2 or m % 2:
                raise ValueError("wick_wave power m must be an even integer >= 2")
        else:  # hartree variants
            if v == "hartree1d" and self.d != 1:
                raise ValueError("hartree1d requires d=1")
            if v == "wick_hartree" and self.d not in (2, 3):
                raise ValueError("wick_hartree requires d in {2,3}")
            if self.potential is None:
                raise ValueError(f"{v} requires a potential")
        if self.focusing and v != "nls1d":
            raise ValueError("the focusing flag only applies to nls1d")
        if self.potential is not None:
            if not self.potential.covers_ball(self.d, 2 * self.n):
                raise ValueError("potential table must cover the 2n ball")
            if v == "wick_hartree" and self.d == 3:
                ok = (
                    self.potential.decay > 2.0
                    if self.potential.kind == "family"
                    else self.potential.decay_envelope_ok()
                )
                if not ok:
                    raise ValueError(
                        "wick_hartree in d=3 needs potential decay faster than |k|^-2 "
                        "(family decay > 2, or a declared (C, eps) bound on the table)"
                    )

    @property
    def lattice(self) -> ModeLattice:
        return build_lattice(self.d, self.n)

    @property
    def is_wave(self) -> bool:
        return self.variant == "wick_wave"

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "beta": self.beta,
            "d": self.d,
            "n": self.n,
        }
        if self.power is not None:
            out["power"] = self.power
        if self.potential is not None:
            out["potential"] = self.potential.to_dict()
        if self.focusing:
            out["focusing"] = True
        if self.mass_cutoff is not None:
            out["mass_cutoff"] = self.mass_cutoff
        return out

    @staticmethod
    def from_dict(data: dict) -> "InteractionSpec":
        pot = data.get("potential")
        if isinstance(pot, dict) and "csv" in pot:
            bound = tuple(pot["bound"]) if pot.get("bound") else None
            potential = load_potential_csv(pot["csv"], bound=bound)
        elif isinstance(pot, dict):
            potential = PotentialSpec.from_dict(pot)
        else:
            potential = None
        return InteractionSpec(
            variant=str(data["variant"]).lower(),
            beta=float(data["beta"]),
            d=int(data["d"]),
            n=int(data["n"]),
            power=int(data["power"]) if data.get("power") is not None else None,
            potential=potential,
            focusing=bool(data.get("focusing", False)),
            mass_cutoff=float(data["mass_cutoff"]) if data.get("mass_cutoff") else None,
        )


# ---------------------------------------------------------------------------
# Wick machinery


@dataclass(frozen=True)
class WickConstant:
    value: float
    d: int
    n: int
    beta: float

    def __float__(self):
        return self.value


@lru_cache(maxsize=None)
def _sigma_lattice_sum(d: int, n: int) -> float:
    return float(np.sum(1.0 / build_lattice(d, n).lam))


def wick_sigma(d: int, n: int, beta: float) -> WickConstant:
    """sigma_{n,beta} = sum_{|k|<=n} 1/(beta (|k|^2+1)), an exact lattice sum."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return WickConstant(value=_sigma_lattice_sum(d, n) / beta, d=d, n=n, beta=beta)


def wick_point_variance(spec: InteractionSpec) -> float:
    """Pointwise variance E|u_n(x)|^2 (complex) or E u_n(x)^2 (real) of the
    free field, the recentering constant for this spec's Wick powers."""
    base = wick_sigma(spec.d, spec.n, spec.beta).value
    return base if spec.is_wave else 2.0 * base


def wick_complex_power(x, sigma: float, r: int):
    """:|u|^{2r}: evaluated at x = |u|^2, equal to (-1)^r r! sigma^r L_r(x/sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if r < 1:
        raise ValueError("r must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    return (-1.0) ** r * math.factorial(r) * sigma**r * eval_laguerre(r, x / sigma)


def _complex_wick_multiplier(x, sigma: float, r: int):
    """d/dx of :|u|^{2r}:/r at x = |u|^2; the gradient of the normalized Wick
    energy is this multiplier times u. Uses L_r' = -L^{(1)}_{r-1}."""
    x = np.asarray(x, dtype=np.float64)
    return (
        (-1.0) ** (r - 1)
        * math.factorial(r - 1)
        * sigma ** (r - 1)
        * eval_genlaguerre(r - 1, 1, x / sigma)
    )


def wick_real_power(u, sigma: float, m: int):
    """:u^m: = sigma^(m/2) He_m(u / sqrt(sigma)) with probabilists' Hermite."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if m < 1:
        raise ValueError("m must be >= 1")
    u = np.asarray(u)
    if np.iscomplexobj(u):
        if np.max(np.abs(u.imag)) > 1e-10:
            raise ValueError("wick_real_power needs real input")
        u = u.real
    return sigma ** (m / 2.0) * eval_hermitenorm(m, u / np.sqrt(sigma))


# ---------------------------------------------------------------------------
# energies and gradients (batched over ensemble rows)


def _grid_degree(spec: InteractionSpec) -> int:
    if spec.variant == "nls1d":
        return spec.power
    if spec.variant == "wick_nls2d":
        return 2 * spec.power
    if spec.variant == "wick_wave":
        return spec.power
    return 4  # hartree quartics


def _grid_size(spec: InteractionSpec) -> int:
    return min_grid(spec.lattice, _grid_degree(spec))


def _row_chunks(nrows: int, gridpoints: int):
    per = max(1, int(3_000_000 // max(1, gridpoints)))
    for a in range(0, nrows, per):
        yield a, min(a + per, nrows)


def _check_coeffs(spec: InteractionSpec, coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.complex128))
    if coeffs.shape[1] != spec.lattice.size:
        raise ValueError(
            f"coefficient width {coeffs.shape[1]} does not match lattice size {spec.lattice.size}"
        )
    return coeffs


def energy_batch(spec: InteractionSpec, coeffs: np.ndarray) -> np.ndarray:
    """Interaction energy of each coefficient row (wave variants take the
    position component)."""
    coeffs = _check_coeffs(spec, coeffs)
    lat = spec.lattice
    m = _grid_size(spec)
    axes = tuple(range(1, lat.d + 1))
    npts = m**lat.d
    out = np.empty(coeffs.shape[0])
    if spec.variant in ("hartree1d", "wick_hartree"):
        vhat = spec.potential.values_on_grid(lat.d, m)
        sigma = wick_point_variance(spec) if spec.variant == "wick_hartree" else None
        for a, b in _row_chunks(coeffs.shape[0], npts):
            rho = np.abs(grid_eval_batch(lat, coeffs[a:b], m)) ** 2
            rho_hat = np.fft.fftn(rho, axes=axes) / npts
            if sigma is not None:
                rho_hat[(slice(None),) + (0,) * lat.d] -= sigma
            out[a:b] = 0.25 * np.sum(
                (vhat * np.abs(rho_hat) ** 2).reshape(b - a, -1), axis=1
            )
        return out
    for a, b in _row_chunks(coeffs.shape[0], npts):
        U = grid_eval_batch(lat, coeffs[a:b], m)
        if spec.variant == "nls1d":
            q = spec.power
            vals = np.abs(U) ** q / q
            if spec.focusing:
                vals = -vals
        elif spec.variant == "wick_nls2d":
            r = spec.power
            sigma = wick_point_variance(spec)
            vals = wick_complex_power(np.abs(U) ** 2, sigma, r) / (2 * r)
        else:  # wick_wave
            mp = spec.power
            sigma = wick_point_variance(spec)
            vals = wick_real_power(U, sigma, mp) / mp
        out[a:b] = np.mean(vals.reshape(b - a, -1), axis=1)
    return out


def gradient_batch(spec: InteractionSpec, coeffs: np.ndarray) -> np.ndarray:
    """Spectral gradient rows: the lattice projection of the pointwise formula."""
    coeffs = _check_coeffs(spec, coeffs)
    lat = spec.lattice
    m = _grid_size(spec)
    axes = tuple(range(1, lat.d + 1))
    npts = m**lat.d
    out = np.empty_like(coeffs)
    if spec.variant in ("hartree1d", "wick_hartree"):
        vhat = spec.potential.values_on_grid(lat.d, m)
        sigma = wick_point_variance(spec) if spec.variant == "wick_hartree" else None
        for a, b in _row_chunks(coeffs.shape[0], npts):
            U = grid_eval_batch(lat, coeffs[a:b], m)
            rho_hat_scaled = np.fft.fftn(np.abs(U) ** 2, axes=axes)
            if sigma is not None:
                rho_hat_scaled[(slice(None),) + (0,) * lat.d] -= sigma * npts
            conv = np.fft.ifftn(vhat * rho_hat_scaled, axes=axes)
            out[a:b] = grid_synth_batch(conv * U, lat)
        return out
    for a, b in _row_chunks(coeffs.shape[0], npts):
        U = grid_eval_batch(lat, coeffs[a:b], m)
        if spec.variant == "nls1d":
            q = spec.power
            g = np.abs(U) ** (q - 2) * U
            if spec.focusing:
                g = -g
        elif spec.variant == "wick_nls2d":
            r = spec.power
            sigma = wick_point_variance(spec)
            g = _complex_wick_multiplier(np.abs(U) ** 2, sigma, r) * U
        else:  # wick_wave: d/du of :u^m:/m is :u^{m-1}:
            mp = spec.power
            sigma = wick_point_variance(spec)
            g = wick_real_power(U, sigma, mp - 1).astype(np.complex128)
        out[a:b] = grid_synth_batch(g, lat)
    return out


def vector_field_batch(spec: InteractionSpec | None, coeffs: np.ndarray, coeffs_v=None, lattice=None):
    """Hamiltonian vector field rows. spec=None gives the linear field
    X_0 = -i A u (complex) or (v, -A u) (wave, when coeffs_v is given)."""
    if spec is not None:
        lattice = spec.lattice
    if lattice is None:
        raise ValueError("need a lattice when spec is None")
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.complex128))
    lam = lattice.lam
    grad = 0.0 if spec is None else gradient_batch(spec, coeffs)
    if coeffs_v is None:
        return -1j * (lam * coeffs + grad)
    coeffs_v = np.atleast_2d(np.asarray(coeffs_v, dtype=np.complex128))
    return coeffs_v.copy(), -(lam * coeffs + grad)


# ---------------------------------------------------------------------------
# single-field conveniences


def _position(state) -> SpectralField:
    return state.u if isinstance(state, FieldPair) else state


def energy(spec: InteractionSpec, state) -> float:
    return float(energy_batch(spec, _position(state).coeffs[None, :])[0])


def gradient(spec: InteractionSpec, state) -> SpectralField:
    u = _position(state)
    return SpectralField(u.lattice, gradient_batch(spec, u.coeffs[None, :])[0])


def vector_field(spec: InteractionSpec | None, state):
    if isinstance(state, FieldPair):
        xu, xv = vector_field_batch(
            spec, state.u.coeffs[None, :], state.v.coeffs[None, :], lattice=state.lattice
        )
        return FieldPair(
            SpectralField(state.lattice, xu[0]), SpectralField(state.lattice, xv[0])
        )
    xc = vector_field_batch(spec, state.coeffs[None, :], lattice=state.lattice)
    return SpectralField(state.lattice, xc[0])


def directional_fd(spec: InteractionSpec, state, direction: SpectralField, step: float) -> float:
    """Central difference of the energy along ``direction`` (an independent
    oracle for the gradient formulas)."""
    if step <= 0:
        raise ValueError("step must be positive")
    u = _position(state)
    plus = SpectralField(u.lattice, u.coeffs + step * direction.coeffs)
    minus = SpectralField(u.lattice, u.coeffs - step * direction.coeffs)
    return (energy(spec, plus) - energy(spec, minus)) / (2.0 * step)


def gradient_pairing(spec: InteractionSpec, state, direction: SpectralField) -> float:
    """pair_real(gradient, direction), the quantity directional_fd approximates."""
    return pair_real(gradient(spec, state), direction)


__all__.append("gradient_pairing")
