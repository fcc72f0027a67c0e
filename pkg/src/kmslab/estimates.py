"""Numerical certification of the supporting analytic bounds.

Three families of checks:

* conv_check: lattice convolution sums S(n) = sum_{k+l=n} <k>^{-d'} <l>^{-2}
  with a floor constraint max(|k|,|l|) >= M, certified as "normalized ratio
  bounded over a probe range". The sum is split into an exact lattice part
  over the Euclidean ball |k| <= K and a continuum tail integral whose
  angular average is closed-form; doubling K and demanding agreement guards
  the tail approximation.

* hypercontractivity_check: Monte Carlo verification of the Wiener-chaos
  bound ||psi||_p <= (p-1)^{m/2} ||psi||_2 on a fixed battery of degree-m
  polynomials in independent standard complex Gaussians.

* cauchy_decay_check: with common random numbers (one master ensemble,
  truncated consistently), the L^2 decay of Wick energy differences
  D(m) = ||h_{2m} - h_m||_{L^2} and the H^{-s} gradient analogue, certified
  as strictly decreasing across a level ladder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from kmslab.interactions import (
    InteractionSpec,
    PotentialSpec,
    energy_batch,
    gradient_batch,
)
from kmslab.lattice import build_lattice
from kmslab.sampler import Ensemble, SamplerConfig, restrict_ensemble, sample_free
from kmslab.sampler import _normals

__all__ = [
    "BoundCheck",
    "conv_partial_sum",
    "conv_check",
    "hypercontractivity_battery",
    "hypercontractivity_check",
    "cauchy_decay_check",
    "cauchy_presets",
]


@dataclass(frozen=True)
class BoundCheck:
    """Outcome of one bound certification over a finite probe range."""

    name: str
    params: dict
    probes: tuple
    values: tuple
    ratios: tuple
    worst: float
    passed: bool
    details: dict

    def summary(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: worst ratio = {self.worst:.6g} over {len(self.probes)} probes"

    def table_rows(self):
        return list(zip(self.probes, self.values, self.ratios))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.params),
            "probes": list(self.probes),
            "values": [float(v) for v in self.values],
            "ratios": [float(r) for r in self.ratios],
            "worst": float(self.worst),
            "passed": bool(self.passed),
            "details": _jsonable_details(self.details),
        }


def _jsonable_details(obj):
    if isinstance(obj, dict):
        return {k: _jsonable_details(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable_details(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


# ---------------------------------------------------------------------------
# convolution sums


def _deltap(d: int, delta: float) -> float:
    return delta if d == 2 else 2.0 + delta


def conv_partial_sum(d: int, delta: float, n: int, M: int = 0, K: int = 1) -> float:
    """Literal sup-ball partial sum (small K), the hand-checkable oracle."""
    dp = _deltap(d, delta)
    ax = np.arange(-K, K + 1)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    ksq = sum(g**2 for g in grids).astype(np.float64)
    ellsq = ksq - 2.0 * n * grids[0] + float(n) ** 2
    term = (1.0 + ksq) ** (-dp / 2) / (1.0 + ellsq)
    if M > 0:
        term = np.where((ksq < M * M) & (ellsq < M * M), 0.0, term)
    return float(np.sum(term))


def _exclusion_sum(d: int, dp: float, n: int, M: int) -> float:
    """Sum over the excluded corner |k| < M and |l| < M (empty once n >= 2M)."""
    if M <= 0 or abs(n) >= 2 * M:
        return 0.0
    ax = np.arange(-(M - 1), M)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    ksq = sum(g**2 for g in grids).astype(np.float64)
    ellsq = ksq - 2.0 * n * grids[0] + float(n) ** 2
    keep = (ksq < M * M) & (ellsq < M * M)
    term = np.where(keep, (1.0 + ksq) ** (-dp / 2) / (1.0 + ellsq), 0.0)
    return float(np.sum(term))


def _direct_sums_d2(dp: float, n: int, radii) -> dict:
    """Exact sums over Euclidean balls |k| <= K for each K in radii (M = 0)."""
    R = int(max(radii))
    ax = np.arange(-R, R + 1)
    k1 = ax[:, None].astype(np.float64)
    k2 = ax[None, :].astype(np.float64)
    ksq = k1**2 + k2**2
    ellsq = ksq - 2.0 * n * k1 + float(n) ** 2
    base = (1.0 + ksq) ** (-dp / 2) / (1.0 + ellsq)
    return {K: float(np.sum(base[ksq <= K * K])) for K in radii}


def _direct_sums_d3(dp: float, n: int, radii) -> dict:
    """Same for d = 3, collapsing the transverse plane onto its radial
    multiplicity so the work is O(R * unique q) instead of O(R^3)."""
    R = int(max(radii))
    ax = np.arange(-R, R + 1)
    q = (ax[:, None] ** 2 + ax[None, :] ** 2).ravel()
    counts = np.bincount(q)
    qv = np.flatnonzero(counts).astype(np.float64)
    qc = counts[np.flatnonzero(counts)].astype(np.float64)
    totals = {K: 0.0 for K in radii}
    for k1 in range(-R, R + 1):
        ksq = k1 * k1 + qv
        ellsq = (k1 - n) ** 2 + qv
        base = qc * (1.0 + ksq) ** (-dp / 2) / (1.0 + ellsq)
        for K in radii:
            totals[K] += float(np.sum(base[ksq <= K * K]))
    return totals


def _far_integral(d: int, dp: float, n: int, K: float) -> float:
    """Continuum tail over |k| > K. The angular average of <n-k>^{-2} at
    radius r is closed-form in both dimensions, so only a 1-d radial
    integral remains."""
    n = abs(n)

    if d == 2:

        def integrand(r):
            amb = (r - n) ** 2 + 1.0
            apb = (r + n) ** 2 + 1.0
            return 2.0 * np.pi * r * (1.0 + r * r) ** (-dp / 2) / np.sqrt(amb * apb)

    else:

        def integrand(r):
            if n == 0:
                avg = 1.0 / (1.0 + r * r)
            else:
                amb = (r - n) ** 2 + 1.0
                apb = (r + n) ** 2 + 1.0
                avg = np.log(apb / amb) / (4.0 * r * n)
            return 4.0 * np.pi * r * r * (1.0 + r * r) ** (-dp / 2) * avg

    mid, _ = quad(integrand, K, 10.0 * K, limit=200)
    tail, _ = quad(integrand, 10.0 * K, np.inf, limit=200)
    return mid + tail


def _default_probes():
    return (2, 4, 8, 16, 24, 32, 48, 64)


def _default_K(d: int, n: int) -> int:
    if d == 2:
        return max(64, 4 * abs(n))
    return max(48, 2 * abs(n))


def _tail_growth(probes, ratios):
    """Flag an upward-drifting ratio tail that no bounded sequence shows.

    Two honest patterns must survive: a plateau (rise well under a percent
    across the last four probes) and slow convergence up to the constant,
    whose slope per unit log<n> keeps shrinking. A stray log factor instead
    lifts the ratios ~30% with roughly constant slope, and a missed power
    accelerates. Flag only a monotone rise above 5% whose log-slope has not
    decayed by at least 20% across the window.
    """
    last4 = list(ratios[-4:])
    monotone = len(last4) == 4 and all(last4[i] < last4[i + 1] for i in range(3))
    rise = last4[-1] / last4[0] - 1.0 if len(last4) == 4 else 0.0
    growing = monotone and rise > 0.05
    if growing:
        logn = [0.5 * np.log(1.0 + float(n) ** 2) for n in probes[-4:]]
        slopes = [
            (last4[i + 1] - last4[i]) / (logn[i + 1] - logn[i]) for i in range(3)
        ]
        growing = slopes[-1] > 0.8 * slopes[0]
    return bool(growing), float(rise)


def conv_check(
    d: int,
    delta: float,
    M: int = 0,
    rho: float = 0.0,
    probes=None,
    K: int | None = None,
    tail_frac: float = 0.01,
) -> BoundCheck:
    """Certify the convolution bound over a range of |n| probes.

    S(n) is the ball sum plus the far-field integral, evaluated at truncation
    K and 2K; any probe whose value moves by more than ``tail_frac`` under
    the doubling fails the tail guard and raises. The reported ratio is
    S(n) <n>^{delta-rho} <M>^{rho} / log<n> in d=2 and
    S(n) <n>^{1+delta-rho} <M>^{rho} in d=3. Verdict: ratios within a factor
    10 of each other and not monotonically growing over the last four probes.
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    if d == 2 and not 0 < delta <= 2:
        raise ValueError("d=2 needs delta in (0, 2]")
    if d == 3 and delta < 0:
        raise ValueError("d=3 needs delta >= 0")
    if M < 0:
        raise ValueError("M must be >= 0")
    limit = delta if d == 2 else 1.0 + delta
    if not 0 <= rho <= limit:
        raise ValueError(f"rho must lie in [0, {limit}]")
    probes = tuple(probes) if probes is not None else _default_probes()
    if any(p < 2 for p in probes):
        raise ValueError("probes must be >= 2 (the d=2 ratio divides by log<n>)")
    dp = _deltap(d, delta)
    direct = _direct_sums_d2 if d == 2 else _direct_sums_d3
    values, ratios, guards = [], [], []
    for n in probes:
        Kn = K if K is not None else _default_K(d, n)
        if Kn < max(M, 2 * abs(n)):
            raise ValueError("K must be at least max(M, 2|n|)")
        sums = direct(dp, n, (Kn, 2 * Kn))
        excl = _exclusion_sum(d, dp, n, M)
        s_k = sums[Kn] - excl + _far_integral(d, dp, n, Kn)
        s_2k = sums[2 * Kn] - excl + _far_integral(d, dp, n, 2 * Kn)
        rel = abs(s_2k - s_k) / s_2k
        if rel > tail_frac:
            raise RuntimeError(
                f"tail guard violated at n={n}: doubling K={Kn} moved S by {rel:.2%}"
            )
        guards.append(rel)
        nb = np.sqrt(1.0 + n * n)
        mb = np.sqrt(1.0 + M * M)
        if d == 2:
            ratio = s_2k * nb ** (delta - rho) * mb**rho / np.log(nb)
        else:
            ratio = s_2k * nb ** (1.0 + delta - rho) * mb**rho
        values.append(s_2k)
        ratios.append(float(ratio))
    worst = max(ratios)
    spread = worst / min(ratios)
    growing, rise = _tail_growth(probes, ratios)
    passed = np.isfinite(worst) and spread <= 10.0 and not growing
    return BoundCheck(
        name=f"conv{d}d[delta={delta},M={M},rho={rho}]",
        params={"d": d, "delta": delta, "M": M, "rho": rho, "tail_frac": tail_frac},
        probes=probes,
        values=tuple(values),
        ratios=tuple(ratios),
        worst=float(worst),
        passed=bool(passed),
        details={"spread": float(spread), "tail_guards": guards,
                 "growing_tail": bool(growing), "last4_rise": float(rise)},
    )


# ---------------------------------------------------------------------------
# hypercontractivity


def hypercontractivity_battery(m: int):
    """Fixed degree-m polynomials in independent standard complex Gaussians
    g_0, g_1, g_2 (E|g|^2 = 1). Returns (name, function of the (N,3) Gaussian
    matrix) pairs."""
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    if m == 0:
        return [("one", lambda G: np.ones(G.shape[0], dtype=np.complex128))]
    if m == 1:
        return [
            ("g0", lambda G: G[:, 0]),
            ("(g0+g1)/sqrt2", lambda G: (G[:, 0] + G[:, 1]) * inv_sqrt2),
        ]
    if m == 2:
        return [
            ("g0^2", lambda G: G[:, 0] ** 2),
            ("g0 g1", lambda G: G[:, 0] * G[:, 1]),
            ("|g0|^2-1", lambda G: np.abs(G[:, 0]) ** 2 - 1.0 + 0j),
        ]
    if m == 3:
        return [
            ("g0^3", lambda G: G[:, 0] ** 3),
            ("g0 g1 g2", lambda G: G[:, 0] * G[:, 1] * G[:, 2]),
            ("(|g0|^2-1) g1", lambda G: (np.abs(G[:, 0]) ** 2 - 1.0) * G[:, 1]),
        ]
    raise ValueError("battery defined for degrees m in {0, 1, 2, 3}")


_HYPER_CHUNK = 1 << 17


def hypercontractivity_check(
    m: int,
    p: int,
    nsamples: int = 10**6,
    seed: int = 0,
    stream: int = 0,
    slack: float = 5.0,
) -> BoundCheck:
    """Monte Carlo check of ||psi||_p <= (p-1)^{m/2} ||psi||_2 with a
    stderr-aware slack: the verdict tolerates 1 + slack * combined relative
    stderr of the two norm estimates."""
    if p not in (4, 6):
        raise ValueError("p must be 4 or 6")
    members = hypercontractivity_battery(m)
    names = [nm for nm, _ in members]
    sums = np.zeros((len(members), 4))  # |psi|^2, |psi|^4, |psi|^p, |psi|^{2p}
    for a in range(0, nsamples, _HYPER_CHUNK):
        b = min(a + _HYPER_CHUNK, nsamples)
        z = _normals(seed, stream, 6, a, b - a)
        G = (z[:, 0::2] + 1j * z[:, 1::2]) / np.sqrt(2.0)
        for i, (_, fn) in enumerate(members):
            a2 = np.abs(fn(G)) ** 2
            sums[i, 0] += float(np.sum(a2))
            sums[i, 1] += float(np.sum(a2**2))
            sums[i, 2] += float(np.sum(a2 ** (p / 2)))
            sums[i, 3] += float(np.sum(a2**p))
    bound = (p - 1.0) ** (m / 2.0)
    values, ratios, rows = [], [], []
    for i, nm in enumerate(names):
        m2, m4, mp, m2p = sums[i] / nsamples
        l2 = np.sqrt(m2)
        lp = mp ** (1.0 / p)
        se2 = np.sqrt(max(m4 - m2 * m2, 0.0) / nsamples)
        sep = np.sqrt(max(m2p - mp * mp, 0.0) / nsamples)
        rel2 = se2 / (2.0 * m2) if m2 > 0 else 0.0
        relp = sep / (p * mp) if mp > 0 else 0.0
        tol = 1.0 + slack * np.sqrt(rel2**2 + relp**2)
        ratio = lp / (bound * l2) if l2 > 0 else np.inf
        values.append(lp)
        ratios.append(float(ratio))
        rows.append({"member": nm, "lp": lp, "l2": l2, "rel_stderr_lp": relp,
                     "rel_stderr_l2": rel2, "tolerance": tol, "ok": bool(ratio <= tol)})
    passed = all(row["ok"] for row in rows)
    return BoundCheck(
        name=f"hypercontractivity[m={m},p={p}]",
        params={"m": m, "p": p, "nsamples": nsamples, "seed": seed, "slack": slack},
        probes=tuple(names),
        values=tuple(values),
        ratios=tuple(ratios),
        worst=float(max(ratios)),
        passed=bool(passed),
        details={"bound": bound, "members": rows},
    )


# ---------------------------------------------------------------------------
# Cauchy decay under truncation refinement


def _align_to(ensemble: Ensemble, lattice) -> np.ndarray:
    """Coefficients of the ensemble carried onto ``lattice`` (restriction or
    zero-padding, both exact for common-random-number comparisons)."""
    src = ensemble.lattice
    if lattice.n <= src.n:
        return restrict_ensemble(ensemble, lattice).coeffs
    out = np.zeros((ensemble.nsamples, lattice.size), dtype=np.complex128)
    out[:, lattice.embed_indices(src)] = ensemble.coeffs
    return out


def cauchy_decay_check(
    spec_family: Callable[[int], InteractionSpec],
    levels,
    nsamples: int = 4000,
    seed: int = 0,
    stream: int = 0,
    s: float = 1.0,
    master_n: int | None = None,
    name: str | None = None,
) -> BoundCheck:
    """Certify that D(m) = ||h_{2m} - h_m||_{L^2} decreases along ``levels``.

    One master free ensemble is drawn at ``master_n`` (default twice the
    largest level) and every truncation reuses its coefficients, so D(m) is
    a genuine common-random-number Cauchy increment, not a difference of
    independent runs. The gradient analogue is measured in H^{-s} after
    zero-padding the coarse gradient into the fine lattice. Verdict: both
    sequences strictly decreasing; z-scores of each drop are reported.
    """
    levels = tuple(levels)
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be at least two strictly increasing truncations")
    probe = spec_family(levels[0])
    if probe.is_wave:
        raise ValueError("decay checks cover the complex-field variants")
    if master_n is None:
        master_n = 2 * max(levels)
    master_lat = build_lattice(probe.d, master_n)
    ens = sample_free(
        SamplerConfig(beta=probe.beta, lattice=master_lat, seed=seed, stream=stream),
        nsamples,
    )
    needed = sorted({ell for m in levels for ell in (m, 2 * m)})
    energies, grads, lats = {}, {}, {}
    for ell in needed:
        spec = spec_family(ell)
        lats[ell] = spec.lattice
        coeffs = _align_to(ens, spec.lattice)
        energies[ell] = energy_batch(spec, coeffs)
        grads[ell] = gradient_batch(spec, coeffs)
    d_vals, d_ses, g_vals, g_ses = [], [], [], []
    for m in levels:
        diff = energies[2 * m] - energies[m]
        sq = diff**2
        mean_sq = float(np.mean(sq))
        D = np.sqrt(mean_sq)
        se_sq = float(np.std(sq) / np.sqrt(nsamples))
        d_vals.append(D)
        d_ses.append(se_sq / (2.0 * D) if D > 0 else 0.0)
        fine = lats[2 * m]
        gdiff = grads[2 * m].copy()
        gdiff[:, fine.embed_indices(lats[m])] -= grads[m]
        wts = fine.lam ** (-s)
        gsq = np.sum(wts * np.abs(gdiff) ** 2, axis=1)
        gmean = float(np.mean(gsq))
        G = np.sqrt(gmean)
        gse = float(np.std(gsq) / np.sqrt(nsamples))
        g_vals.append(G)
        g_ses.append(gse / (2.0 * G) if G > 0 else 0.0)
    def zscores(vals, ses):
        return [
            (vals[i] - vals[i + 1]) / np.sqrt(ses[i] ** 2 + ses[i + 1] ** 2)
            if ses[i] + ses[i + 1] > 0 else np.inf
            for i in range(len(vals) - 1)
        ]
    dec_e = all(d_vals[i + 1] < d_vals[i] for i in range(len(levels) - 1))
    dec_g = all(g_vals[i + 1] < g_vals[i] for i in range(len(levels) - 1))
    ratios = [d_vals[i + 1] / d_vals[i] if d_vals[i] > 0 else 0.0
              for i in range(len(levels) - 1)]
    return BoundCheck(
        name=name or f"cauchy_decay[{spec_family(levels[0]).variant}]",
        params={"levels": list(levels), "nsamples": nsamples, "seed": seed,
                "master_n": master_n, "sobolev_s": s},
        probes=levels,
        values=tuple(d_vals),
        ratios=tuple(ratios),
        worst=float(max(ratios)) if ratios else 0.0,
        passed=bool(dec_e and dec_g),
        details={
            "energy_stderr": d_ses,
            "gradient_values": g_vals,
            "gradient_stderr": g_ses,
            "energy_zscores": zscores(d_vals, d_ses),
            "gradient_zscores": zscores(g_vals, g_ses),
            "energy_decreasing": bool(dec_e),
            "gradient_decreasing": bool(dec_g),
        },
    )


def cauchy_presets() -> dict:
    """The shipped decay ladders (all Wick-ordered, beta = 1)."""

    def wick_nls2d(n):
        return InteractionSpec(variant="wick_nls2d", beta=1.0, d=2, n=n, power=2)

    def wick_hartree_d2(n):
        pot = PotentialSpec(kind="family", amplitude=1.0, decay=1.0)
        return InteractionSpec(variant="wick_hartree", beta=1.0, d=2, n=n, potential=pot)

    def wick_hartree_d3(n):
        pot = PotentialSpec(kind="family", amplitude=1.0, decay=2.5)
        return InteractionSpec(variant="wick_hartree", beta=1.0, d=3, n=n, potential=pot)

    # The quartic ladder starts at 4: the 2 -> 4 increment genuinely exceeds
    # the 4 -> 8 one (the asymptotic decay has not set in on a 13-mode ball).
    return {
        "wick_nls2d_r2": {"spec_family": wick_nls2d, "levels": (4, 8, 16)},
        "wick_hartree_d2": {"spec_family": wick_hartree_d2, "levels": (2, 4, 8)},
        "wick_hartree_d3": {"spec_family": wick_hartree_d3, "levels": (4, 8)},
    }
