"""Fourier lattices and band-limited fields on the unit-volume torus.

A field is a finite Fourier sum ``u(x) = sum_{|k| <= n} c_k exp(2 pi i k.x)``
over the Euclidean ball of integer frequencies k in Z^d, d in {1, 2, 3}.
The exponentials are orthonormal for the normalized volume measure and each
mode carries the dispersion multiplier ``lambda_k = |k|^2 + 1``.

This module holds the lattice bookkeeping, real-linear pairings, Sobolev
norms, the complex structure J, and exact grid evaluation / synthesis by
trigonometric interpolation (FFT with unit-volume normalization: the grid
mean of mode 0 is its coefficient).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import next_fast_len

__all__ = [
    "ModeLattice",
    "SpectralField",
    "FieldPair",
    "build_lattice",
    "basis_field",
    "zero_field",
    "pair_real",
    "sobolev_norm",
    "apply_J",
    "grid_eval",
    "grid_synth",
    "grid_eval_batch",
    "grid_synth_batch",
    "min_grid",
    "field_to_json",
    "field_from_json",
]


@dataclass(frozen=True)
class ModeLattice:
    """Euclidean-ball frequency set {k in Z^d : |k| <= n}, deterministically ordered.

    Modes are sorted by (|k|^2, lexicographic k) so that equal lattices are
    bitwise identical across processes. ``lam`` holds |k|^2 + 1 per mode.
    """

    d: int
    n: int
    modes: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {tuple(k): i for i, k in enumerate(self.modes)})

    @property
    def size(self) -> int:
        return self.modes.shape[0]

    def index_of(self, k) -> int:
        k = tuple(int(x) for x in np.atleast_1d(k))
        return self._index[k]

    def __contains__(self, k) -> bool:
        k = tuple(int(x) for x in np.atleast_1d(k))
        return k in self._index

    def embed_indices(self, sub: "ModeLattice") -> np.ndarray:
        """Positions of a coarser lattice's modes inside this one."""
        if sub.d != self.d or sub.n > self.n:
            raise ValueError("embed_indices needs a coarser lattice of the same dimension")
        return np.array([self.index_of(k) for k in sub.modes], dtype=np.int64)

    def __eq__(self, other):
        return isinstance(other, ModeLattice) and self.d == other.d and self.n == other.n

    def __hash__(self):
        return hash((self.d, self.n))


@lru_cache(maxsize=None)
def build_lattice(d: int, n: int) -> ModeLattice:
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2, or 3, got {d}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rng = np.arange(-n, n + 1)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    sq = (pts**2).sum(axis=1)
    keep = sq <= n * n
    pts, sq = pts[keep], sq[keep]
    order = np.lexsort(tuple(pts[:, j] for j in reversed(range(d))) + (sq,))
    pts = np.ascontiguousarray(pts[order])
    lam = (pts**2).sum(axis=1).astype(np.float64) + 1.0
    pts.setflags(write=False)
    lam.setflags(write=False)
    return ModeLattice(d=d, n=n, modes=pts, lam=lam)


@dataclass(frozen=True)
class SpectralField:
    """Immutable coefficient vector over a ModeLattice."""

    lattice: ModeLattice
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (self.lattice.size,):
            raise ValueError(
                f"coefficient shape {c.shape} does not match lattice size {self.lattice.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def coefficient(self, k) -> complex:
        return complex(self.coeffs[self.lattice.index_of(k)])


@dataclass(frozen=True)
class FieldPair:
    """Position/velocity pair (u, v) on a shared lattice, for second-order flows."""

    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.u.lattice != self.v.lattice:
            raise ValueError("FieldPair components must share a lattice")

    @property
    def lattice(self) -> ModeLattice:
        return self.u.lattice


def zero_field(lattice: ModeLattice) -> SpectralField:
    return SpectralField(lattice, np.zeros(lattice.size, dtype=np.complex128))


def basis_field(lattice: ModeLattice, k, imaginary: bool = False) -> SpectralField:
    """The probe e_k, or i*e_k when imaginary=True (the second real direction)."""
    c = np.zeros(lattice.size, dtype=np.complex128)
    c[lattice.index_of(k)] = 1j if imaginary else 1.0
    return SpectralField(lattice, c)


def _as_coeff_pairs(a, b):
    if isinstance(a, FieldPair) != isinstance(b, FieldPair):
        raise TypeError("cannot pair a FieldPair with a plain field")
    if isinstance(a, FieldPair):
        return [(a.u.coeffs, b.u.coeffs), (a.v.coeffs, b.v.coeffs)]
    return [(a.coeffs, b.coeffs)]


def pair_real(a, b) -> float:
    """Real pairing <a, b>_R = Re sum_k conj(a_k) b_k (summed over components)."""
    tot = 0.0
    for ca, cb in _as_coeff_pairs(a, b):
        tot += float(np.sum(np.real(np.conj(ca) * cb)))
    return tot


def sobolev_norm(a, s: float = 0.0) -> float:
    """H^s norm (sum_k lambda_k^s |c_k|^2)^(1/2); pairs sum both components."""
    if isinstance(a, FieldPair):
        lam = a.lattice.lam
        val = np.sum(lam**s * (np.abs(a.u.coeffs) ** 2 + np.abs(a.v.coeffs) ** 2))
    else:
        val = np.sum(a.lattice.lam**s * np.abs(a.coeffs) ** 2)
    return float(np.sqrt(val))


def apply_J(a):
    """The symplectic rotation: c -> -i c on complex fields, (u, v) -> (v, -u) on pairs."""
    if isinstance(a, FieldPair):
        return FieldPair(
            u=SpectralField(a.lattice, a.v.coeffs.copy()),
            v=SpectralField(a.lattice, -a.u.coeffs),
        )
    return SpectralField(a.lattice, -1j * a.coeffs)


def min_grid(lattice: ModeLattice, degree: int = 1) -> int:
    """Smallest fast FFT length that resolves degree-``degree`` pointwise products
    alias-free on this lattice (m >= degree*n + 1, and always > 2n)."""
    need = max(degree * lattice.n + 1, 2 * lattice.n + 1)
    return next_fast_len(need)


def _grid_index(lattice: ModeLattice, m: int):
    return tuple(lattice.modes[:, ax] % m for ax in range(lattice.d))


def grid_eval_batch(lattice: ModeLattice, coeffs: np.ndarray, m: int) -> np.ndarray:
    """Evaluate rows of ``coeffs`` on the uniform m^d grid x_j = j/m."""
    if m <= 2 * lattice.n:
        raise ValueError(f"grid size {m} too small for lattice n={lattice.n} (need m > 2n)")
    coeffs = np.atleast_2d(coeffs)
    shape = (coeffs.shape[0],) + (m,) * lattice.d
    G = np.zeros(shape, dtype=np.complex128)
    G[(slice(None),) + _grid_index(lattice, m)] = coeffs
    axes = tuple(range(1, lattice.d + 1))
    return np.fft.ifftn(G, axes=axes) * float(m**lattice.d)


def grid_synth_batch(values: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    """Project grid values back to lattice coefficients (exact for band-limited data)."""
    values = np.asarray(values)
    m = values.shape[-1]
    if m <= 2 * lattice.n:
        raise ValueError(f"grid size {m} too small for lattice n={lattice.n} (need m > 2n)")
    axes = tuple(range(1, lattice.d + 1))
    if values.ndim == lattice.d:
        values = values[None]
        squeeze = True
    else:
        squeeze = False
    Chat = np.fft.fftn(values, axes=axes) / float(m**lattice.d)
    out = Chat[(slice(None),) + _grid_index(lattice, m)]
    return out[0] if squeeze else out


def grid_eval(fieldobj: SpectralField, m: int) -> np.ndarray:
    return grid_eval_batch(fieldobj.lattice, fieldobj.coeffs[None, :], m)[0]


def grid_synth(values: np.ndarray, lattice: ModeLattice) -> SpectralField:
    return SpectralField(lattice, grid_synth_batch(values, lattice))


def field_to_json(fieldobj: SpectralField) -> str:
    """Serialize as {"d":..., "n":..., "coeffs":[[re, im], ...]} in lattice order."""
    c = fieldobj.coeffs
    payload = {
        "d": fieldobj.lattice.d,
        "n": fieldobj.lattice.n,
        "coeffs": [[float(z.real), float(z.imag)] for z in c],
    }
    return json.dumps(payload)


def field_from_json(text: str) -> SpectralField:
    payload = json.loads(text)
    lat = build_lattice(int(payload["d"]), int(payload["n"]))
    arr = np.array(payload["coeffs"], dtype=np.float64)
    if arr.shape != (lat.size, 2):
        raise ValueError(f"expected {lat.size} coefficient pairs, got shape {arr.shape}")
    return SpectralField(lat, arr[:, 0] + 1j * arr[:, 1])
