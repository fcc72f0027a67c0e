"""Mode lattice bookkeeping, pairings, and grid transforms."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmslab.lattice import (
    FieldPair,
    SpectralField,
    apply_J,
    basis_field,
    build_lattice,
    field_from_json,
    field_to_json,
    grid_eval,
    grid_synth,
    min_grid,
    pair_real,
    sobolev_norm,
    zero_field,
)


def brute_ball_count(d, n):
    count = 0
    for k in itertools.product(range(-n, n + 1), repeat=d):
        if sum(x * x for x in k) <= n * n:
            count += 1
    return count


@pytest.mark.parametrize("d,n", [(1, 0), (1, 3), (2, 2), (2, 5), (3, 2)])
def test_ball_counts(d, n):
    lat = build_lattice(d, n)
    assert lat.size == brute_ball_count(d, n)
    assert lat.modes.shape == (lat.size, d)


def test_symbol_values():
    lat = build_lattice(2, 3)
    for i, k in enumerate(lat.modes):
        assert lat.lam[i] == 1 + np.dot(k, k)
    assert lat.lam.min() == 1.0


def test_index_roundtrip():
    lat = build_lattice(2, 4)
    for i, k in enumerate(lat.modes):
        assert lat.index_of(tuple(k)) == i


def test_basis_field_entries():
    lat = build_lattice(1, 2)
    e = basis_field(lat, (1,))
    ie = basis_field(lat, (1,), imaginary=True)
    i = lat.index_of((1,))
    assert e.coeffs[i] == 1.0 and np.count_nonzero(e.coeffs) == 1
    assert ie.coeffs[i] == 1.0j
    z = zero_field(lat)
    assert not np.any(z.coeffs)


def test_pair_real_hand_value():
    lat = build_lattice(1, 1)
    # modes are a 3-point lattice; put values on two of them
    a = np.array([1 + 2j, 0.5, 0], dtype=complex)
    b = np.array([3 - 1j, 2j, 0], dtype=complex)
    fa = SpectralField(lat, a)
    fb = SpectralField(lat, b)
    # Re[(1-2j)(3-1j)] + Re[0.5*2j] = 1 + 0
    assert pair_real(fa, fb) == pytest.approx(1.0)


def test_pair_real_pairs_sum_components():
    lat = build_lattice(1, 0)
    u = SpectralField(lat, np.array([1.0 + 0j]))
    v = SpectralField(lat, np.array([0.0 + 2j]))
    p = FieldPair(u, v)
    assert pair_real(p, p) == pytest.approx(1.0 + 4.0)


def test_apply_J_squares_to_minus_one():
    lat = build_lattice(1, 2)
    rng = np.random.default_rng(3)
    f = SpectralField(lat, rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size))
    jj = apply_J(apply_J(f))
    np.testing.assert_allclose(jj.coeffs, -f.coeffs, atol=1e-15)
    p = FieldPair(f, SpectralField(lat, 2.0 * f.coeffs))
    jp = apply_J(apply_J(p))
    np.testing.assert_allclose(jp.u.coeffs, -p.u.coeffs, atol=1e-15)
    np.testing.assert_allclose(jp.v.coeffs, -p.v.coeffs, atol=1e-15)


def test_pairing_is_symplectically_orthogonal():
    lat = build_lattice(2, 2)
    rng = np.random.default_rng(11)
    f = SpectralField(lat, rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size))
    assert pair_real(f, apply_J(f)) == pytest.approx(0.0, abs=1e-12)


def test_sobolev_norm_single_mode():
    lat = build_lattice(1, 3)
    i = lat.index_of((2,))
    c = np.zeros(lat.size, dtype=complex)
    c[i] = 3.0 - 4.0j
    f = SpectralField(lat, c)
    lam = 1 + 4
    assert sobolev_norm(f, s=0.0) == pytest.approx(5.0)
    assert sobolev_norm(f, s=1.0) == pytest.approx(5.0 * np.sqrt(lam))
    assert sobolev_norm(f, s=-1.0) == pytest.approx(5.0 / np.sqrt(lam))


@pytest.mark.parametrize("d,n", [(1, 4), (2, 3)])
def test_grid_roundtrip(d, n):
    lat = build_lattice(d, n)
    rng = np.random.default_rng(7)
    f = SpectralField(lat, rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size))
    m = min_grid(lat, degree=2)
    vals = grid_eval(f, m)
    back = grid_synth(vals, lat)
    np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-12)


def test_grid_eval_constant_mode():
    lat = build_lattice(1, 1)
    f = basis_field(lat, (0,))
    vals = grid_eval(f, 8)
    np.testing.assert_allclose(vals, np.ones_like(vals), atol=1e-14)


def test_json_roundtrip():
    lat = build_lattice(2, 2)
    rng = np.random.default_rng(19)
    f = SpectralField(lat, rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size))
    g = field_from_json(field_to_json(f))
    assert g.lattice.d == lat.d and g.lattice.n == lat.n
    np.testing.assert_array_equal(g.coeffs, f.coeffs)


coeff_lists = st.lists(
    st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=6, max_size=6
)


@settings(max_examples=30, deadline=None)
@given(coeff_lists, coeff_lists)
def test_pair_real_symmetric(xs, ys):
    lat = build_lattice(1, 1)
    a = np.array(xs[:3]) + 1j * np.array(xs[3:])
    b = np.array(ys[:3]) + 1j * np.array(ys[3:])
    fa, fb = SpectralField(lat, a), SpectralField(lat, b)
    assert pair_real(fa, fb) == pytest.approx(pair_real(fb, fa), abs=1e-9)
