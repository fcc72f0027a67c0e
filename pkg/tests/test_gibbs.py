"""Importance weights for the interacting measures, checked against quadrature."""

import numpy as np
import pytest
from scipy.integrate import quad

from kmslab.gibbs import expect, gibbs_weights, mass_values, spec_hash, weights_summary
from kmslab.interactions import InteractionSpec, PotentialSpec
from kmslab.lattice import build_lattice
from kmslab.sampler import SamplerConfig, sample_free


def single_mode_quartic(beta):
    return InteractionSpec("nls1d", beta=beta, d=1, n=0, power=4)


def test_mass_values_hand_check():
    lat = build_lattice(1, 1)
    ens_coeffs = np.array([[1 + 1j, 0, 2j], [0.5, 0.5, 0.5]], dtype=complex)
    from kmslab.sampler import Ensemble

    ens = Ensemble(lat, 1.0, ens_coeffs)
    np.testing.assert_allclose(mass_values(ens), [2 + 4, 0.75])


def test_single_mode_gibbs_against_quadrature():
    # One mode, H_int = |c|^4 / 4, free density exp(-beta |c|^2 / 2): every
    # Gibbs expectation reduces to a radial integral we can do by quadrature.
    beta = 1.2
    spec = single_mode_quartic(beta)
    ens = sample_free(SamplerConfig(beta, build_lattice(1, 0), seed=3), 200000)
    gw = gibbs_weights(ens, spec)

    dens = lambda r: np.exp(-beta * r**2 / 2 - beta * r**4 / 4) * r
    num = quad(lambda r: r**2 * dens(r), 0, 12)[0]
    den = quad(dens, 0, 12)[0]
    oracle = num / den

    est, se = expect(ens, mass_values, weights=gw)
    assert abs(est.real - oracle) <= 4 * se[0]

    # normalizing constant: Z = E_free[exp(-beta H_int)]
    z_oracle = quad(lambda r: beta * np.exp(-beta * r**4 / 4) * np.exp(-beta * r**2 / 2) * r, 0, 12)[0]
    assert gw.zhat == pytest.approx(z_oracle, abs=0.005)
    assert gw.ess / ens.nsamples > 0.5


def test_weights_internal_consistency():
    spec = InteractionSpec("nls1d", beta=1.0, d=1, n=2, power=4)
    ens = sample_free(SamplerConfig(1.0, spec.lattice, seed=11), 5000)
    gw = gibbs_weights(ens, spec)
    w = gw.weights
    assert w.shape == (5000,)
    assert np.all(w >= 0)
    assert gw.ess == pytest.approx(np.sum(w) ** 2 / np.sum(w * w))
    assert gw.n_alive == int(np.count_nonzero(w))


def test_mass_cutoff_kills_heavy_samples():
    spec = InteractionSpec(
        "nls1d", beta=1.0, d=1, n=2, power=4, focusing=True, mass_cutoff=1.0
    )
    ens = sample_free(SamplerConfig(1.0, spec.lattice, seed=12), 20000)
    gw = gibbs_weights(ens, spec, mass_cutoff=1.0)
    masses = mass_values(ens)
    assert np.all(gw.weights[masses > 1.0] == 0)
    assert 0 < gw.n_alive < ens.nsamples


def test_expect_unweighted_is_plain_mean():
    lat = build_lattice(1, 1)
    ens = sample_free(SamplerConfig(1.0, lat, seed=1), 4000)
    est, _ = expect(ens, mass_values)
    assert est.real == pytest.approx(np.mean(mass_values(ens)))


def test_defocusing_weights_never_exceed_shift():
    # exp(-beta H_int) with H_int >= 0 keeps every weight in (0, 1] after
    # the max-shift normalization
    spec = InteractionSpec("nls1d", beta=2.0, d=1, n=3, power=4)
    ens = sample_free(SamplerConfig(2.0, spec.lattice, seed=5), 3000)
    gw = gibbs_weights(ens, spec)
    assert np.all(gw.weights > 0)
    assert np.max(gw.weights) <= 1.0 + 1e-12


def test_spec_hash_discriminates():
    a = InteractionSpec("nls1d", beta=1.0, d=1, n=2, power=4)
    b = InteractionSpec("nls1d", beta=2.0, d=1, n=2, power=4)
    assert spec_hash(a) == spec_hash(a)
    assert spec_hash(a) != spec_hash(b)
    pot = PotentialSpec("family", amplitude=1.0, decay=1.0)
    c = InteractionSpec("hartree1d", beta=1.0, d=1, n=2, potential=pot)
    assert spec_hash(c) != spec_hash(a)


def test_weights_summary_fields():
    spec = InteractionSpec("nls1d", beta=1.0, d=1, n=2, power=4)
    ens = sample_free(SamplerConfig(1.0, spec.lattice, seed=2), 2000)
    gw = gibbs_weights(ens, spec)
    summ = weights_summary(gw, spec, ens.nsamples)
    for key in ("zhat", "ess", "ess_fraction", "n_alive", "beta", "spec_hash"):
        assert key in summ
    assert summ["ess_fraction"] == pytest.approx(gw.ess / 2000)


def test_beta_mismatch_rejected():
    spec = InteractionSpec("nls1d", beta=2.0, d=1, n=2, power=4)
    ens = sample_free(SamplerConfig(1.0, spec.lattice, seed=2), 100)
    with pytest.raises(ValueError):
        gibbs_weights(ens, spec)
