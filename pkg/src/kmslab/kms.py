"""Monte Carlo residual estimators for the classical equilibrium identities.

A measure mu is a (beta, X)-KMS state when int {F,G} dmu = beta int <grad F,
X> G dmu for smooth cylindrical F, G. Every estimator here reduces that, or
one of its specializations, to a pointwise quantity Z_i whose weighted mean
must vanish in equilibrium:

* exponential form   <phi1, J phi2>_R E[e^{i<u,phi2>}]
                       + i beta E[<phi1, X>_R e^{i<u,phi2>}] = 0
* bracket form       E[{F,G}] - beta E[<grad F, X>_R G] = 0
* stationarity       E[<phi, X>_R e^{i<u,phi>}] = 0
* moment hierarchy   (beta/(p+1)) E[<phi2,u>^{p+1} <u,phi2>^p <X,phi1>]
                       = 2i <phi2,phi1> E[|<phi2,u>|^{2p}]
* Gaussian IBP       E[G <grad F, phi>] = E[F(-<grad G, phi> + beta G <u,A phi>)]

plus a pointwise (non-statistical) check that the Gibbs density solves
grad rho + beta rho grad h = 0, with grad rho taken by finite differences so
the check is independent of the spectral gradient formulas.

Complex pairings <.,.> are anti-linear on the left (numpy vdot order); the
real pairing and the symplectic form are Re<.,.> and Im<.,.>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kmslab._stats import ResidualReport, make_report, weighted_mean
from kmslab.gibbs import GibbsWeights, mass_values
from kmslab.interactions import InteractionSpec, energy_batch, gradient_batch, vector_field_batch
from kmslab.lattice import FieldPair, SpectralField, apply_J, pair_real, sobolev_norm
from kmslab.sampler import Ensemble, pairing_values

__all__ = [
    "CylinderFunctional",
    "ResidualReport",
    "kms_residual_exponential",
    "kms_residual_bracket",
    "stationarity_residual",
    "hierarchy_residual",
    "ibp_residual",
    "density_ode_residual",
    "default_probe_battery",
    "radial_bump",
    "radial_bump_prime",
]

_CHUNK = 32768


# ---------------------------------------------------------------------------
# test functionals


def radial_bump(t, radius: float):
    """Smooth bump of the squared mass: exp(1 - 1/(1-(t/R)^2)) inside [0, R), 0 beyond."""
    t = np.asarray(t, dtype=np.float64)
    s2 = (t / radius) ** 2
    inside = s2 < 1.0
    out = np.zeros_like(t)
    with np.errstate(divide="ignore", over="ignore"):
        val = np.exp(1.0 - 1.0 / np.where(inside, 1.0 - s2, 1.0))
    out[inside] = val[inside]
    return out


def radial_bump_prime(t, radius: float):
    """d/dt of radial_bump; vanishes smoothly at both 0 and R."""
    t = np.asarray(t, dtype=np.float64)
    s2 = (t / radius) ** 2
    inside = s2 < 1.0
    out = np.zeros_like(t)
    denom = np.where(inside, (1.0 - s2) ** 2, 1.0)
    out[inside] = (radial_bump(t, radius) * (-2.0 * t / radius**2) / denom)[inside]
    return out


@dataclass(frozen=True)
class CylinderFunctional:
    """Test functions with closed-form gradients, of four shapes:

    exponential  e^{i <u, probe>_R}
    sin / cos    sin or cos of <u, probe>_R
    moment       <u, probe>_R ** power
    radial       radial_bump(mass(u), radius), supported inside the mass ball

    The gradient always factors as alpha(u) * direction where direction is
    the fixed probe field, except for radial, whose direction is the sample
    itself (gradient of mass is 2u, folded into alpha).
    """

    kind: str
    probe: object = None
    power: int = 1
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exponential", "sin", "cos", "moment", "radial"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "radial":
            if not self.radius > 0:
                raise ValueError("radial functional needs a positive radius")
        elif self.probe is None:
            raise ValueError(f"{self.kind} functional needs a probe field")
        if self.kind == "moment" and self.power < 1:
            raise ValueError("moment power must be >= 1")

    def values(self, ensemble: Ensemble) -> np.ndarray:
        if self.kind == "radial":
            return radial_bump(mass_values(ensemble), self.radius)
        p = pairing_values(ensemble, self.probe)
        if self.kind == "exponential":
            return np.exp(1j * p)
        if self.kind == "sin":
            return np.sin(p)
        if self.kind == "cos":
            return np.cos(p)
        return p**self.power

    def gradient_factors(self, ensemble: Ensemble):
        """(alpha, direction); direction None means the per-sample radial
        direction, i.e. grad F(u_i) = alpha_i * u_i."""
        if self.kind == "radial":
            return 2.0 * radial_bump_prime(mass_values(ensemble), self.radius), None
        p = pairing_values(ensemble, self.probe)
        if self.kind == "exponential":
            return 1j * np.exp(1j * p), self.probe
        if self.kind == "sin":
            return np.cos(p), self.probe
        if self.kind == "cos":
            return -np.sin(p), self.probe
        return float(self.power) * p ** (self.power - 1), self.probe


# ---------------------------------------------------------------------------
# shared plumbing


def _resolve_weights(ensemble: Ensemble, weights):
    if isinstance(weights, GibbsWeights):
        return weights.weights
    if weights is None:
        return ensemble.weights
    return np.asarray(weights, dtype=np.float64)


def _check_spec(ensemble: Ensemble, spec: InteractionSpec | None):
    if spec is None:
        return
    if (spec.d, spec.n) != (ensemble.lattice.d, ensemble.lattice.n):
        raise ValueError("spec lattice does not match ensemble lattice")
    if spec.is_wave != ensemble.is_wave:
        raise ValueError("wave spec needs a wave ensemble and vice versa")


def _vector_field_arrays(ensemble: Ensemble, spec: InteractionSpec | None):
    if ensemble.is_wave:
        return vector_field_batch(
            spec, ensemble.coeffs, ensemble.coeffs_v, lattice=ensemble.lattice
        )
    return vector_field_batch(spec, ensemble.coeffs, lattice=ensemble.lattice)


def _rowwise_real_pair(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.empty(A.shape[0])
    for a in range(0, A.shape[0], _CHUNK):
        blk = A[a : a + _CHUNK]
        out[a : a + _CHUNK] = np.sum(
            blk.real * B[a : a + _CHUNK].real + blk.imag * B[a : a + _CHUNK].imag, axis=1
        )
    return out


def _probe_real_pair(X, probe) -> np.ndarray:
    """<probe, X_i>_R rows, for fixed probe against per-sample field rows."""
    if isinstance(probe, FieldPair):
        Xu, Xv = X
        return _fixed_pair(Xu, probe.u.coeffs) + _fixed_pair(Xv, probe.v.coeffs)
    return _fixed_pair(X, probe.coeffs)


def _fixed_pair(rows: np.ndarray, w: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(w)
    if nz.size == 0:
        return np.zeros(rows.shape[0])
    cols = rows[:, nz]
    return np.sum(cols.real * w[nz].real + cols.imag * w[nz].imag, axis=1)


def _complex_pairing(rows: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_k conj(w_k) rows_k, anti-linear in the fixed left argument."""
    nz = np.flatnonzero(w)
    if nz.size == 0:
        return np.zeros(rows.shape[0], dtype=np.complex128)
    return np.sum(np.conj(w[nz]) * rows[:, nz], axis=1)


def _x_radial_pair(ensemble: Ensemble, X) -> np.ndarray:
    """<u_i, X_i>_R rows (position-and-velocity for wave ensembles)."""
    if ensemble.is_wave:
        Xu, Xv = X
        return _rowwise_real_pair(ensemble.coeffs, Xu) + _rowwise_real_pair(
            ensemble.coeffs_v, Xv
        )
    return _rowwise_real_pair(ensemble.coeffs, X)


# ---------------------------------------------------------------------------
# estimators


def kms_residual_exponential(
    ensemble: Ensemble,
    phi1,
    phi2,
    spec: InteractionSpec | None = None,
    weights=None,
    multiplier: float = 3.0,
    nbatches: int = 100,
    name: str | None = None,
) -> ResidualReport:
    """Exponential-form KMS residual for the probe pair (phi1, phi2)."""
    _check_spec(ensemble, spec)
    w = _resolve_weights(ensemble, weights)
    p2 = pairing_values(ensemble, phi2)
    phase = np.exp(1j * p2)
    X = _vector_field_arrays(ensemble, spec)
    px1 = _probe_real_pair(X, phi1)
    const = pair_real(phi1, apply_J(phi2))
    beta = ensemble.beta
    values = const * phase + 1j * beta * px1 * phase
    sym_est, _ = weighted_mean(const * phase, w)
    dyn_est, _ = weighted_mean(1j * beta * px1 * phase, w)
    return make_report(
        name or "kms_exponential",
        values,
        w,
        multiplier=multiplier,
        nbatches=nbatches,
        details={"symplectic_term": sym_est, "transport_term": dyn_est, "beta": beta},
    )


def stationarity_residual(
    ensemble: Ensemble,
    phi,
    spec: InteractionSpec | None = None,
    weights=None,
    multiplier: float = 3.0,
    nbatches: int = 100,
    name: str | None = None,
) -> ResidualReport:
    """Liouville stationarity residual E[<phi, X>_R e^{i<u,phi>_R}], with the
    plain first moment E[<phi, X>_R] reported in the details."""
    _check_spec(ensemble, spec)
    w = _resolve_weights(ensemble, weights)
    p = pairing_values(ensemble, phi)
    X = _vector_field_arrays(ensemble, spec)
    px = _probe_real_pair(X, phi)
    first, first_se = weighted_mean(px, w)
    return make_report(
        name or "stationarity",
        px * np.exp(1j * p),
        w,
        multiplier=multiplier,
        nbatches=nbatches,
        details={"first_moment": first, "first_moment_stderr": list(first_se)},
    )


def kms_residual_bracket(
    ensemble: Ensemble,
    F: CylinderFunctional,
    G: CylinderFunctional,
    spec: InteractionSpec | None = None,
    weights=None,
    multiplier: float = 3.0,
    nbatches: int = 100,
    name: str | None = None,
) -> ResidualReport:
    """Bracket-form residual E[{F,G}] - beta E[<grad F, X>_R G].

    A radial functional is only meaningful on a mass-cutoff (local) ensemble
    whose cutoff contains its support, so it demands GibbsWeights carrying a
    cutoff at least as large as the bump radius.
    """
    _check_spec(ensemble, spec)
    for fn in (F, G):
        if fn.kind == "radial":
            if not isinstance(weights, GibbsWeights) or weights.mass_cutoff is None:
                raise ValueError(
                    "radial functionals need cutoff GibbsWeights (a local ensemble)"
                )
            if fn.radius > weights.mass_cutoff + 1e-12:
                raise ValueError("radial support exceeds the ensemble's mass cutoff")
    w = _resolve_weights(ensemble, weights)
    beta = ensemble.beta
    aF, dF = F.gradient_factors(ensemble)
    aG, dG = G.gradient_factors(ensemble)
    if dF is not None and dG is not None:
        bracket = (aF * aG) * pair_real(dF, apply_J(dG))
    elif dF is None and dG is not None:
        bracket = (aF * aG) * pairing_values(ensemble, apply_J(dG))
    elif dF is not None and dG is None:
        bracket = -(aF * aG) * pairing_values(ensemble, apply_J(dF))
    else:
        bracket = np.zeros(ensemble.nsamples)
    X = _vector_field_arrays(ensemble, spec)
    pxF = _probe_real_pair(X, dF) if dF is not None else _x_radial_pair(ensemble, X)
    gvals = G.values(ensemble)
    values = bracket - beta * (aF * pxF) * gvals
    brk_est, _ = weighted_mean(bracket, w)
    trn_est, _ = weighted_mean(beta * (aF * pxF) * gvals, w)
    return make_report(
        name or "kms_bracket",
        values,
        w,
        multiplier=multiplier,
        nbatches=nbatches,
        details={"bracket_term": brk_est, "transport_term": trn_est, "beta": beta},
    )


def hierarchy_residual(
    ensemble: Ensemble,
    phi1,
    phi2,
    p: int,
    spec: InteractionSpec | None = None,
    weights=None,
    multiplier: float = 3.0,
    nbatches: int = 100,
    name: str | None = None,
) -> ResidualReport:
    """Moment-hierarchy residual at order p for U(1)-equivariant dynamics.

    (beta/(p+1)) E[<phi2,u>^{p+1} <u,phi2>^p <X,phi1>]
        - 2i <phi2,phi1> E[|<phi2,u>|^{2p}],
    complex pairings anti-linear on the left. Wave ensembles are rejected:
    their phase space carries a different complex pairing bookkeeping.
    """
    if ensemble.is_wave:
        raise ValueError("hierarchy residuals apply to complex-field ensembles only")
    if p < 0:
        raise ValueError("p must be >= 0")
    _check_spec(ensemble, spec)
    w = _resolve_weights(ensemble, weights)
    beta = ensemble.beta
    z = _complex_pairing(ensemble.coeffs, phi2.coeffs)
    X = _vector_field_arrays(ensemble, spec)
    # <X, phi1> = conj(<phi1, X>)
    x1 = np.conj(_complex_pairing(X, phi1.coeffs))
    inner = complex(np.vdot(phi2.coeffs, phi1.coeffs))
    lhs = (beta / (p + 1)) * z ** (p + 1) * np.conj(z) ** p * x1
    rhs = 2j * inner * np.abs(z) ** (2 * p)
    lhs_est, _ = weighted_mean(lhs, w)
    rhs_est, _ = weighted_mean(rhs, w)
    return make_report(
        name or f"hierarchy[p={p}]",
        lhs - rhs,
        w,
        multiplier=multiplier,
        nbatches=nbatches,
        details={"lhs": lhs_est, "rhs": rhs_est, "inner": inner, "p": p},
    )


def _apply_A(probe):
    if isinstance(probe, FieldPair):
        lam = probe.lattice.lam
        return FieldPair(
            SpectralField(probe.lattice, lam * probe.u.coeffs),
            SpectralField(probe.lattice, probe.v.coeffs.copy()),
        )
    return SpectralField(probe.lattice, probe.lattice.lam * probe.coeffs)


def ibp_residual(
    ensemble: Ensemble,
    F: CylinderFunctional,
    G: CylinderFunctional,
    phi,
    multiplier: float = 3.0,
    nbatches: int = 100,
    name: str | None = None,
) -> ResidualReport:
    """Gaussian integration-by-parts residual on an unweighted free ensemble:
    E[G <grad F, phi>] - E[F (-<grad G, phi> + beta G <u, A phi>_R)]."""
    if ensemble.weights is not None:
        raise ValueError("integration by parts is a free-measure identity; "
                         "pass the unweighted ensemble")
    for fn in (F, G):
        if fn.kind == "radial":
            raise ValueError("radial functionals are not cylindrical; use trig kinds")
    beta = ensemble.beta
    aF, dF = F.gradient_factors(ensemble)
    aG, dG = G.gradient_factors(ensemble)
    gF = aF * pair_real(dF, phi)
    gG = aG * pair_real(dG, phi)
    fvals = F.values(ensemble)
    gvals = G.values(ensemble)
    ua = pairing_values(ensemble, _apply_A(phi))
    values = gvals * gF - fvals * (-gG + beta * gvals * ua)
    return make_report(
        name or "ibp",
        values,
        None,
        multiplier=multiplier,
        nbatches=nbatches,
        details={"beta": beta},
    )


def density_ode_residual(
    spec: InteractionSpec,
    ensemble: Ensemble,
    mass_shift: float = 0.0,
    s: float = 1.0,
    step: float = 1e-5,
    tol: float = 1e-8,
    name: str | None = None,
) -> ResidualReport:
    """Pointwise check that rho = e^{-beta h} solves grad rho + beta rho grad h = 0.

    grad rho is taken by central differences of the density along every real
    basis direction (independent of the spectral gradient formulas), divided
    by rho, and compared to -beta grad h in the H^{-s} norm, normalized by
    (1 + ||beta grad h||). ``mass_shift`` games the density to
    e^{-beta(h + mass_shift*mass)} while keeping grad h fixed, which breaks
    the identity by exactly 2*beta*mass_shift*u (a discrimination handle).

    The report's estimate is the worst normalized residual over the samples;
    it passes when that is <= tol. Not a statistical test: stderr is zero.
    """
    if spec.focusing:
        raise ValueError("density check expects a defocusing spec")
    if spec.is_wave or ensemble.is_wave:
        raise ValueError("density check runs on complex-field ensembles")
    _check_spec(ensemble, spec)
    lat = spec.lattice
    m = lat.size
    beta = spec.beta

    def log_density(coeffs):
        vals = -beta * energy_batch(spec, coeffs)
        if mass_shift:
            vals = vals - beta * mass_shift * mass_values(coeffs)
        return vals

    dirs = np.concatenate([np.eye(m), 1j * np.eye(m)]).astype(np.complex128)
    ratios = []
    for i in range(ensemble.nsamples):
        u = ensemble.coeffs[i]
        batch = np.concatenate([u + step * dirs, u - step * dirs])
        rho = np.exp(log_density(batch))
        rho0 = float(np.exp(log_density(u[None, :]))[0])
        diff = (rho[: 2 * m] - rho[2 * m :]) / (2.0 * step * rho0)
        grad_rho_over_rho = SpectralField(lat, diff[:m] + 1j * diff[m:])
        gh = beta * gradient_batch(spec, u[None, :])[0]
        resid = SpectralField(lat, grad_rho_over_rho.coeffs + gh)
        scale = 1.0 + sobolev_norm(SpectralField(lat, gh), -s)
        ratios.append(sobolev_norm(resid, -s) / scale)
    worst = float(np.max(ratios))
    return ResidualReport(
        name=name or "density_ode",
        estimate=complex(worst),
        stderr=(0.0, 0.0),
        nsamples=ensemble.nsamples,
        multiplier=0.0,
        passed=bool(worst <= tol),
        details={"ratios": ratios, "tol": tol, "step": step, "sobolev_s": s,
                 "mass_shift": mass_shift},
    )


# ---------------------------------------------------------------------------
# probe batteries


def default_probe_battery(lattice, wave: bool = False):
    """Ten deterministic (name, phi1, phi2) probe pairs mixing diagonal,
    orthogonal, and composite directions over the lowest modes."""

    def unit(i, imaginary=False):
        c = np.zeros(lattice.size, dtype=np.complex128)
        c[i % lattice.size] = 1j if imaginary else 1.0
        return SpectralField(lattice, c)

    def mix(a, b):
        return SpectralField(lattice, (a.coeffs + b.coeffs) / np.sqrt(2.0))

    e = [unit(i) for i in range(4)]
    f = [unit(i, imaginary=True) for i in range(4)]
    battery = [
        ("ie0|e0", f[0], e[0]),
        ("e0|e0", e[0], e[0]),
        ("ie1|e1", f[1], e[1]),
        ("e1|ie1", e[1], f[1]),
        ("e0|e1", e[0], e[1]),
        ("ie2|e2", f[2], e[2]),
        ("mix01|mix01", mix(e[0], e[1]), mix(e[0], e[1])),
        ("mix0i1|e0", mix(e[0], f[1]), e[0]),
        ("ie3|e3", f[3], e[3]),
        ("e2|mix1i2", e[2], mix(e[1], f[2])),
    ]
    if not wave:
        return battery
    zero = SpectralField(lattice, np.zeros(lattice.size, dtype=np.complex128))
    out = []
    for i, (tag, p1, p2) in enumerate(battery):
        # alternate the slot the probes live in: u, v, or split across both
        if i % 3 == 0:
            out.append((tag + "|uu", FieldPair(p1, zero), FieldPair(p2, zero)))
        elif i % 3 == 1:
            out.append((tag + "|vv", FieldPair(zero, p1), FieldPair(zero, p2)))
        else:
            out.append((tag + "|uv", FieldPair(p1, zero), FieldPair(zero, p2)))
    return out
