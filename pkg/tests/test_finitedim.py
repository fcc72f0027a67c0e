"""Deterministic quadrature check of the bracket identity in few dimensions."""

import numpy as np
import pytest

from kmslab.finitedim import (
    FiniteDimResult,
    fd_coordinate,
    fd_harmonic,
    fd_quartic,
    fd_trig,
    finite_dim_check,
    perturbation_factor,
)

T1, S1 = np.array([0.7]), np.array([-0.3])
T2, S2 = np.array([-0.4]), np.array([0.9])


def trig_pair():
    return (fd_trig(T1, S1, "sin", phase=0.4), fd_trig(T2, S2, "cos", phase=-0.7))


def coord_pair():
    return (fd_coordinate(1, 0), fd_coordinate(1, 0, conjugate=True))


@pytest.mark.parametrize("h,lhs_frozen", [(fd_harmonic(1), 2.400346522e-02), (fd_quartic(1), 5.825231060e-02)])
def test_equilibrium_gap_vanishes_trig(h, lhs_frozen):
    F, G = trig_pair()
    r = finite_dim_check(F, G, h, beta=1.0, n=1)
    assert isinstance(r, FiniteDimResult)
    assert r.converged
    assert r.gap < 1e-12
    assert r.lhs == pytest.approx(lhs_frozen, rel=1e-6)


def test_equilibrium_gap_vanishes_coordinates():
    F, G = coord_pair()
    for h in (fd_harmonic(1), fd_quartic(1)):
        r = finite_dim_check(F, G, h, beta=1.0, n=1)
        # both sides reduce to the same first moment scaled to 1
        assert r.lhs == pytest.approx(1.0, abs=1e-9)
        assert r.rhs == pytest.approx(1.0, abs=1e-9)
        assert r.gap < 1e-9


def test_identity_holds_for_other_temperatures():
    F, G = trig_pair()
    for beta in (0.5, 2.0):
        r = finite_dim_check(F, G, fd_quartic(1), beta=beta, n=1)
        assert r.gap < 1e-10, f"beta={beta}: gap={r.gap}"


def test_perturbed_density_detected_by_trig_probes():
    F, G = trig_pair()
    bad = perturbation_factor(0.2)
    r_h = finite_dim_check(F, G, fd_harmonic(1), beta=1.0, n=1, density_factor=bad)
    r_q = finite_dim_check(F, G, fd_quartic(1), beta=1.0, n=1, density_factor=bad)
    assert r_h.gap == pytest.approx(1.379963e-2, rel=1e-4)
    assert r_q.gap == pytest.approx(2.111513e-2, rel=1e-4)


def test_coordinate_probes_are_blind_to_odd_perturbation():
    # the shipped perturbation 1 + 0.2 x_1 is odd in x_1; the parity-even
    # coordinate probes shift both sides equally and see nothing
    F, G = coord_pair()
    r = finite_dim_check(F, G, fd_quartic(1), beta=1.0, n=1, density_factor=perturbation_factor(0.2))
    assert r.gap < 1e-9


def test_gaps_by_level_monotone_bookkeeping():
    F, G = trig_pair()
    r = finite_dim_check(F, G, fd_harmonic(1), beta=1.0, n=1, levels=(32, 48, 64))
    assert len(r.gaps_by_level) == 3
    assert r.level == 64
    assert r.converged


def test_ladder_validation():
    F, G = trig_pair()
    with pytest.raises(ValueError):
        finite_dim_check(F, G, fd_harmonic(1), beta=1.0, n=1, levels=(8,))
    # a ladder too coarse to stabilize must refuse to report a verdict
    with pytest.raises(RuntimeError):
        finite_dim_check(F, G, fd_harmonic(1), beta=1.0, n=1, levels=(8, 12))


def test_trig_requires_vector_arguments():
    with pytest.raises(ValueError):
        fd_trig(np.array([0.7, 0.1]), np.array([0.2]), "sin")


def test_zero_phase_exact_rows_are_vacuous():
    # with no phase, parity kills both sides of the exact identity (0 = 0
    # certifies nothing); the shipped phases make the exact rows carry an
    # actual nonzero moment
    F = fd_trig(T1, S1, "sin", phase=0.0)
    G = fd_trig(T2, S2, "cos", phase=0.0)
    r = finite_dim_check(F, G, fd_harmonic(1), beta=1.0, n=1)
    assert abs(r.lhs) < 1e-15 and abs(r.rhs) < 1e-15
    phased = finite_dim_check(*trig_pair(), fd_harmonic(1), beta=1.0, n=1)
    assert abs(phased.lhs) > 1e-2
