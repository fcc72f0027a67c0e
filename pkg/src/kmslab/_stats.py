"""Shared estimator plumbing: self-normalized means, batch-means errors, reports.

Every equilibrium identity we test reduces to a weighted expectation of some
pointwise complex quantity Z over an ensemble, estimated as
``sum(w * Z) / sum(w)``. The helpers here keep the two error routes in one
place: batch means (default, robust to the heavy-tailed weights reweighting
produces) and the delta method for the ratio estimator (fallback when batches
degenerate, e.g. after a mass cutoff kills most of the sample).

All reductions go through np.sum on materialized products, never matrix
calls, so results are bit-reproducible regardless of BLAS threading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ess", "weighted_mean", "batch_residual", "ResidualReport", "make_report"]


def ess(weights: np.ndarray) -> float:
    """Kish effective sample size (sum w)^2 / sum w^2."""
    weights = np.asarray(weights, dtype=np.float64)
    s1 = np.sum(weights)
    s2 = np.sum(weights * weights)
    if s2 == 0.0:
        return 0.0
    return float(s1 * s1 / s2)


def _delta_stderr(values: np.ndarray, weights: np.ndarray, est: complex):
    """Delta-method stderr of the ratio sum(wZ)/sum(w), per real component."""
    sw = np.sum(weights)
    if sw <= 0.0:
        return (np.inf, np.inf)
    dev = values - est
    se_re = np.sqrt(np.sum((weights * dev.real) ** 2)) / sw
    se_im = np.sqrt(np.sum((weights * dev.imag) ** 2)) / sw
    return (float(se_re), float(se_im))


def weighted_mean(values: np.ndarray, weights: np.ndarray | None = None):
    """Self-normalized weighted mean with delta-method stderr.

    Returns (estimate, (se_re, se_im)). ``values`` may be real or complex.
    """
    values = np.asarray(values, dtype=np.complex128)
    if weights is None:
        weights = np.ones(values.shape[0], dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    sw = np.sum(weights)
    if sw <= 0.0:
        raise ValueError("total weight is zero; cannot form a weighted mean")
    est = complex(np.sum(weights * values) / sw)
    return est, _delta_stderr(values, weights, est)


def batch_residual(values: np.ndarray, weights: np.ndarray | None = None, nbatches: int = 100):
    """Weighted mean with batch-means stderr over ``nbatches`` contiguous blocks.

    Blocks whose total weight vanishes are dropped; if fewer than half the
    blocks survive (a cutoff ensemble with a handful of live samples), the
    batch spread is meaningless and we fall back to the delta method on the
    full sample.

    Returns (estimate, (se_re, se_im), info dict).
    """
    values = np.asarray(values, dtype=np.complex128)
    n = values.shape[0]
    if weights is None:
        weights = np.ones(n, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    est, delta_se = weighted_mean(values, weights)
    nbatches = max(2, min(int(nbatches), n))
    idx = np.array_split(np.arange(n), nbatches)
    bvals = []
    for ix in idx:
        bw = np.sum(weights[ix])
        if bw > 0.0:
            bvals.append(np.sum(weights[ix] * values[ix]) / bw)
    usable = len(bvals)
    info = {"nbatches": nbatches, "usable_batches": usable, "method": "batch_means"}
    if usable < nbatches // 2:
        info["method"] = "delta"
        return est, delta_se, info
    bvals = np.array(bvals)
    se_re = float(np.std(bvals.real, ddof=1) / np.sqrt(usable))
    se_im = float(np.std(bvals.imag, ddof=1) / np.sqrt(usable))
    return est, (se_re, se_im), info


@dataclass
class ResidualReport:
    """Outcome of one identity check: a residual that should vanish, with errors.

    ``passed`` means both real and imaginary parts sit within
    ``multiplier * stderr`` of zero.
    """

    name: str
    estimate: complex
    stderr: tuple
    nsamples: int
    multiplier: float
    passed: bool
    details: dict = field(default_factory=dict)

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (
            f"[{flag}] {self.name}: residual = {self.estimate.real:+.3e}{self.estimate.imag:+.3e}j"
            f"  stderr = ({self.stderr[0]:.2e}, {self.stderr[1]:.2e})"
            f"  n = {self.nsamples}"
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": [self.estimate.real, self.estimate.imag],
            "stderr": [self.stderr[0], self.stderr[1]],
            "nsamples": self.nsamples,
            "multiplier": self.multiplier,
            "passed": self.passed,
            "details": _jsonable(self.details),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def make_report(
    name: str,
    values: np.ndarray,
    weights: np.ndarray | None = None,
    multiplier: float = 3.0,
    nbatches: int = 100,
    details: dict | None = None,
) -> ResidualReport:
    est, se, info = batch_residual(values, weights, nbatches=nbatches)
    passed = abs(est.real) <= multiplier * se[0] and abs(est.imag) <= multiplier * se[1]
    d = dict(info)
    if details:
        d.update(details)
    return ResidualReport(
        name=name,
        estimate=est,
        stderr=se,
        nsamples=int(np.asarray(values).shape[0]),
        multiplier=float(multiplier),
        passed=bool(passed),
        details=d,
    )
