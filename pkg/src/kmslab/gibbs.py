"""Importance reweighting of free ensembles into Gibbs ensembles.

The Gibbs measure is the free Gaussian reweighted by e^{-beta h} for an
interaction energy h, restricted to the mass ball {sum |c_k|^2 <= R} when a
cutoff is active (mandatory for focusing interactions, where e^{-beta h}
alone is not integrable). Expectations are self-normalized, so the unknown
partition function cancels; zhat = mean of the raw weights is an unbiased
estimate of it and is reported alongside the effective sample size.

Weights are computed in log space and shifted only if they would overflow;
the shift is recorded and cancels in every self-normalized quantity.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from kmslab._stats import ess, weighted_mean
from kmslab.interactions import InteractionSpec, energy_batch
from kmslab.sampler import Ensemble

__all__ = [
    "GibbsWeights",
    "gibbs_weights",
    "mass_values",
    "expect",
    "spec_hash",
    "weights_summary",
]

_LOG_CAP = 700.0  # exp() overflows just past 709


@dataclass(frozen=True)
class GibbsWeights:
    """Per-sample weights w_i = e^{-beta h(u_i)} (times the mass indicator),
    possibly rescaled by e^{log_shift} to stay in floating range."""

    weights: np.ndarray = field(repr=False)
    log_shift: float
    beta: float
    mass_cutoff: float | None = None

    @property
    def zhat(self) -> float:
        return float(np.exp(self.log_shift) * np.mean(self.weights))

    @property
    def ess(self) -> float:
        return ess(self.weights)

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.weights))


def mass_values(source) -> np.ndarray:
    """L^2 mass sum_k |c_k|^2 of each sample (position component for pairs)."""
    coeffs = source.coeffs if isinstance(source, Ensemble) else np.atleast_2d(source)
    return np.sum(np.abs(coeffs) ** 2, axis=1)


def gibbs_weights(
    ensemble: Ensemble, spec: InteractionSpec, mass_cutoff: float | None = None
) -> GibbsWeights:
    if ensemble.weights is not None:
        raise ValueError("gibbs_weights needs an unweighted free ensemble")
    if ensemble.beta != spec.beta:
        raise ValueError(f"ensemble beta {ensemble.beta} != spec beta {spec.beta}")
    if (ensemble.lattice.d, ensemble.lattice.n) != (spec.d, spec.n):
        raise ValueError("ensemble lattice does not match spec (d, n)")
    if ensemble.is_wave != spec.is_wave:
        raise ValueError("wave spec needs a wave ensemble and vice versa")
    cutoff = mass_cutoff if mass_cutoff is not None else spec.mass_cutoff
    if spec.focusing and cutoff is None:
        raise ValueError("focusing interactions require a mass cutoff")
    logw = -spec.beta * energy_batch(spec, ensemble.coeffs)
    shift = 0.0
    peak = float(np.max(logw))
    if peak > _LOG_CAP:
        shift = peak - _LOG_CAP
        logw = logw - shift
    w = np.exp(logw)
    if cutoff is not None:
        w = np.where(mass_values(ensemble) <= cutoff, w, 0.0)
    if not np.any(w > 0):
        raise ValueError("all weights vanish (cutoff excluded every sample)")
    return GibbsWeights(weights=w, log_shift=shift, beta=spec.beta, mass_cutoff=cutoff)


def expect(ensemble: Ensemble, observable, weights=None):
    """Self-normalized estimate of E[observable] with delta-method stderr.

    ``observable`` is a callable on the ensemble or a precomputed value array;
    ``weights`` may be an array, a GibbsWeights, or None (falls back to the
    ensemble's own weights, or the plain mean).
    """
    values = observable(ensemble) if callable(observable) else np.asarray(observable)
    if values.shape[0] != ensemble.nsamples:
        raise ValueError("observable values must align with the ensemble")
    if not np.all(np.isfinite(values)):
        raise ValueError("observable produced non-finite values")
    if isinstance(weights, GibbsWeights):
        weights = weights.weights
    if weights is None:
        weights = ensemble.weights
    return weighted_mean(values, weights)


def spec_hash(spec: InteractionSpec) -> str:
    payload = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def weights_summary(gw: GibbsWeights, spec: InteractionSpec, nsamples: int) -> dict:
    return {
        "zhat": gw.zhat,
        "ess": gw.ess,
        "ess_fraction": gw.ess / nsamples,
        "n_alive": gw.n_alive,
        "beta": gw.beta,
        "mass_cutoff": gw.mass_cutoff,
        "log_shift": gw.log_shift,
        "spec_hash": spec_hash(spec),
    }
