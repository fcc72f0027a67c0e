"""Equilibrium identity estimators against quadrature and free-field theory."""

import dataclasses

import numpy as np
import pytest

from kmslab.gibbs import gibbs_weights
from kmslab.interactions import InteractionSpec
from kmslab.kms import (
    CylinderFunctional,
    default_probe_battery,
    density_ode_residual,
    hierarchy_residual,
    ibp_residual,
    kms_residual_bracket,
    kms_residual_exponential,
    radial_bump,
    radial_bump_prime,
    stationarity_residual,
)
from kmslab.lattice import SpectralField, apply_J, basis_field, build_lattice, pair_real
from kmslab.sampler import SamplerConfig, sample_free, sample_wave_pair


def free_ensemble(beta, d, n, nsamples, seed, stream=0):
    return sample_free(SamplerConfig(beta, build_lattice(d, n), seed=seed, stream=stream), nsamples)


def test_single_mode_exponential_identity_by_quadrature():
    # One complex mode with symbol lam: both terms of the exponential identity
    # have Gaussian closed forms; 80-node Gauss-Hermite resolves them to
    # machine precision and they must cancel.
    nodes, wts = np.polynomial.hermite_e.hermegauss(80)
    lat = build_lattice(1, 0)
    for beta, phi2c in [(1.3, 0.8 + 0.3j), (0.7, -0.2 + 1.1j)]:
        lam = lat.lam[0]
        phi1 = SpectralField(lat, np.array([1.0 + 0.0j]))
        phi2 = SpectralField(lat, np.array([phi2c]))
        sd = 1.0 / np.sqrt(beta * lam)
        A, B = np.meshgrid(nodes * sd, nodes * sd, indexing="ij")
        W = np.outer(wts, wts) / (2 * np.pi)
        C = A + 1j * B
        pr = np.real(np.conj(C) * phi2c)
        e = np.exp(1j * pr)
        X = -1j * lam * C  # J grad H for H = lam |c|^2 / 2
        term2 = 1j * beta * np.sum(np.real(np.conj(phi1.coeffs[0]) * X) * e * W)
        term1 = pair_real(phi1, apply_J(phi2)) * np.sum(e * W)
        assert abs(term1 + term2) < 1e-12


def test_free_battery_passes():
    ens = free_ensemble(1.0, 1, 4, 50000, seed=21)
    reports = []
    for tag, p1, p2 in default_probe_battery(ens.lattice):
        reports.append(kms_residual_exponential(ens, p1, p2, name=tag))
    assert len(reports) == 10
    bad = [r.name for r in reports if not r.passed]
    assert not bad, f"failed: {bad}"


def test_free_wave_battery_passes():
    lat = build_lattice(2, 2)
    ens = sample_wave_pair(SamplerConfig(2.0, lat, seed=22), 50000)
    reports = []
    for tag, p1, p2 in default_probe_battery(lat, wave=True):
        reports.append(kms_residual_exponential(ens, p1, p2, name=tag))
    bad = [r.name for r in reports if not r.passed]
    assert not bad, f"failed: {bad}"


def test_gibbs_exponential_and_bracket_pass():
    spec = InteractionSpec("nls1d", beta=1.0, d=1, n=2, power=4)
    ens = free_ensemble(1.0, 1, 2, 100000, seed=7)
    gw = gibbs_weights(ens, spec)
    e0 = basis_field(ens.lattice, (0,))
    ie1 = basis_field(ens.lattice, (1,), imaginary=True)
    r1 = kms_residual_exponential(ens, e0, ie1, spec=spec, weights=gw)
    assert r1.passed, r1.summary()
    F = CylinderFunctional("exponential", e0)
    G = CylinderFunctional("exponential", ie1)
    r2 = kms_residual_bracket(ens, F, G, spec, gw)
    assert r2.passed, r2.summary()


def test_interacting_term_matters():
    # dropping the interaction from the vector field must break the identity
    spec = InteractionSpec("nls1d", beta=1.0, d=1, n=2, power=4)
    ens = free_ensemble(1.0, 1, 2, 100000, seed=7)
    gw = gibbs_weights(ens, spec)
    e0 = basis_field(ens.lattice, (0,))
    ie0 = basis_field(ens.lattice, (0,), imaginary=True)
    wrong = kms_residual_exponential(ens, ie0, e0, spec=None, weights=gw)
    right = kms_residual_exponential(ens, ie0, e0, spec=spec, weights=gw)
    assert right.passed
    z = max(
        abs(wrong.estimate.real) / wrong.stderr[0],
        abs(wrong.estimate.imag) / wrong.stderr[1],
    )
    assert z > 5.0


def test_stationarity_free_and_gibbs():
    ens = free_ensemble(1.0, 1, 3, 100000, seed=41)
    for k, imag in [((0,), False), ((1,), True), ((2,), False)]:
        probe = basis_field(ens.lattice, k, imaginary=imag)
        r = stationarity_residual(ens, probe, spec=None, weights=None)
        assert r.passed, r.summary()
    spec = InteractionSpec("nls1d", beta=1.0, d=1, n=3, power=4)
    gw = gibbs_weights(ens, spec)
    probe = basis_field(ens.lattice, (1,))
    r = stationarity_residual(ens, probe, spec=spec, weights=gw)
    assert r.passed, r.summary()


def test_hierarchy_order_zero_closed_form():
    # at p = 0 the right side is exactly 2i <phi2, phi1>, independent of
    # beta and of the symbol
    for beta, k, seed in [(1.0, (0,), 31), (2.0, (1,), 32), (0.5, (2,), 33)]:
        ens = free_ensemble(beta, 1, 2, 100000, seed=seed)
        e_k = basis_field(ens.lattice, k)
        r = hierarchy_residual(ens, e_k, e_k, p=0)
        assert r.details["rhs"] == pytest.approx(2j, abs=1e-14)
        assert r.passed, r.summary()


def test_hierarchy_higher_orders_free():
    ens = free_ensemble(1.0, 1, 2, 100000, seed=31)
    e0 = basis_field(ens.lattice, (0,))
    e1 = basis_field(ens.lattice, (1,))
    for p in (1, 2):
        for phi1, phi2 in [(e0, e0), (e0, e1)]:
            r = hierarchy_residual(ens, phi1, phi2, p=p)
            assert r.passed, r.summary()


def test_hierarchy_rejects_wave():
    lat = build_lattice(1, 1)
    ens = sample_wave_pair(SamplerConfig(1.0, lat, seed=1), 100)
    e0 = basis_field(lat, (0,))
    with pytest.raises(ValueError):
        hierarchy_residual(ens, e0, e0, p=0)


def test_ibp_battery():
    ens = free_ensemble(1.5, 1, 2, 100000, seed=51)
    lat = ens.lattice
    e0 = basis_field(lat, (0,))
    e1 = basis_field(lat, (1,))
    combos = [
        (CylinderFunctional("cos", e0), CylinderFunctional("sin", e1), e0),
        (CylinderFunctional("sin", e0), CylinderFunctional("cos", e0), e1),
        (CylinderFunctional("moment", e0, power=2), CylinderFunctional("exponential", e1), e0),
        (CylinderFunctional("exponential", e0), CylinderFunctional("moment", e1, power=1), e1),
    ]
    for i, (F, G, phi) in enumerate(combos):
        r = ibp_residual(ens, F, G, phi, name=f"ibp{i}")
        assert r.passed, r.summary()


def test_ibp_rejects_weighted_and_radial():
    ens = free_ensemble(1.0, 1, 1, 200, seed=1)
    e0 = basis_field(ens.lattice, (0,))
    F = CylinderFunctional("cos", e0)
    G = CylinderFunctional("sin", e0)
    weighted = ens.with_weights(np.ones(200))
    with pytest.raises(ValueError):
        ibp_residual(weighted, F, G, e0)
    with pytest.raises(ValueError):
        ibp_residual(ens, CylinderFunctional("radial", radius=1.0), G, e0)


def test_density_ode_clean_and_shifted():
    spec = InteractionSpec("nls1d", beta=1.0, d=1, n=4, power=4)
    ens = free_ensemble(1.0, 1, 4, 6, seed=61)
    clean = density_ode_residual(spec, ens)
    assert clean.passed
    assert clean.estimate.real < 1e-8
    shifted = density_ode_residual(spec, ens, mass_shift=0.01, tol=np.inf)
    assert shifted.estimate.real > 1e-3


def test_cylinder_gradients_match_finite_differences():
    lat = build_lattice(1, 2)
    ens = free_ensemble(1.0, 1, 2, 3, seed=77)
    rng = np.random.default_rng(0)
    phi = SpectralField(lat, rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size))
    probe = SpectralField(lat, rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size))
    h = 1e-6
    kinds = [
        CylinderFunctional("exponential", probe),
        CylinderFunctional("sin", probe),
        CylinderFunctional("cos", probe),
        CylinderFunctional("moment", probe, power=3),
    ]
    for F in kinds:
        alpha, direction = F.gradient_factors(ens)
        plus = dataclasses.replace(ens, coeffs=ens.coeffs + h * phi.coeffs)
        minus = dataclasses.replace(ens, coeffs=ens.coeffs - h * phi.coeffs)
        fd = (F.values(plus) - F.values(minus)) / (2 * h)
        grad = alpha * pair_real(direction, phi)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_radial_gradient_direction_is_the_sample():
    ens = free_ensemble(1.0, 1, 2, 5, seed=9)
    F = CylinderFunctional("radial", radius=4.0)
    alpha, direction = F.gradient_factors(ens)
    assert direction is None
    assert alpha.shape == (5,)


def test_radial_bump_derivative():
    ts = np.linspace(0.05, 0.94, 12)
    h = 1e-6
    fd = (radial_bump(ts + h, 1.0) - radial_bump(ts - h, 1.0)) / (2 * h)
    np.testing.assert_allclose(radial_bump_prime(ts, 1.0), fd, rtol=1e-5, atol=1e-8)
    assert radial_bump(1.5, 1.0) == 0.0
    assert radial_bump_prime(1.5, 1.0) == 0.0


def test_bracket_radial_requires_cutoff_weights():
    spec = InteractionSpec("nls1d", beta=1.0, d=1, n=2, power=4)
    ens = free_ensemble(1.0, 1, 2, 1000, seed=3)
    gw = gibbs_weights(ens, spec)  # no cutoff
    F = CylinderFunctional("radial", radius=1.0)
    G = CylinderFunctional("exponential", basis_field(ens.lattice, (0,)))
    with pytest.raises(ValueError):
        kms_residual_bracket(ens, F, G, spec, gw)
