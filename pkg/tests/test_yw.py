import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdrift.yw import YWParams, build_yw, check_phi_properties, phi_by_quadrature, psi_mass, write_table

DELTAS = (math.e, 2.0, 10.0)
KAPPAS = (0.1, 0.01, 0.001)


def test_params_validation():
    for d, k in ((1.0, 0.1), (0.5, 0.1), (2.0, 0.0), (2.0, 1.0)):
        with pytest.raises(ValueError):
            YWParams(d, k)


@pytest.mark.parametrize("delta", DELTAS)
def test_normalizer(delta):
    pair = build_yw(YWParams(delta, 0.1))
    assert pair.normalizer == pytest.approx(1 / math.log(delta), rel=1e-15)
    assert abs(psi_mass(pair) - 1) < 1e-10


def test_psi_support_and_bound():
    pair = build_yw(YWParams(3.0, 0.2))
    z = np.linspace(1e-6, 1.0, 20001)
    p = pair.psi(z)
    assert np.all(p[(z < pair.lower) | (z > pair.kappa)] == 0)
    assert np.all(p >= 0)
    assert np.all(p <= 2 / (z * math.log(3.0)))


def test_phi_trivial_values():
    pair = build_yw(YWParams(2.0, 0.1))
    x = np.linspace(-0.05, 0.05, 101)
    assert np.all(pair.phi(x) == 0)
    assert np.all(pair.dphi(np.array([0.1, 0.3, -0.2])) == [1, 1, -1])


def test_closed_form_example_e():
    pair = build_yw(YWParams(math.e, 0.1))
    assert pair.d2phi(0.05) == pytest.approx(20.0, rel=1e-14)
    assert 2 / (0.05 * 1.0) == 40.0
    assert pair.d2phi(-0.05) == pair.d2phi(0.05)


@pytest.mark.parametrize("delta", DELTAS)
@pytest.mark.parametrize("kappa", KAPPAS)
def test_closed_form_against_nested_quadrature(delta, kappa):
    pair = build_yw(YWParams(delta, kappa))
    for x in (kappa / delta * 1.3, 0.5 * kappa, kappa, 1.7 * kappa, -0.8 * kappa):
        assert pair.phi(x) == pytest.approx(phi_by_quadrature(pair, x), abs=1e-11)
    # property A holds with strict slack at x = kappa
    assert pair.phi(kappa) > 0


@pytest.mark.parametrize("delta", DELTAS)
@pytest.mark.parametrize("kappa", KAPPAS)
def test_property_report(delta, kappa):
    rep = check_phi_properties(build_yw(YWParams(delta, kappa)))
    assert rep.ok
    assert max(rep.defect_a, rep.defect_b, rep.defect_c, rep.defect_c_identity) < 1e-8
    assert len(rep.lines()) == 4


@settings(max_examples=60, deadline=None)
@given(delta=st.floats(1.01, 100), kappa=st.floats(1e-4, 0.99), x=st.floats(-3, 3))
def test_sandwich_symmetry_convexity(delta, kappa, x):
    pair = build_yw(YWParams(delta, kappa))
    f = pair.phi(x)
    assert abs(x) - kappa - 1e-12 <= f <= abs(x) + 1e-12
    assert pair.phi(-x) == f
    assert pair.dphi(-x) == -pair.dphi(x)
    assert pair.d2phi(x) >= 0


def test_approximation_improves_as_kappa_shrinks():
    x = np.linspace(-1, 1, 20001)
    gaps = []
    for kappa in (1e-1, 1e-2, 1e-3, 1e-4):
        pair = build_yw(YWParams(2.0, kappa))
        gap = np.max(np.abs(np.abs(x) - pair.phi(x)))
        assert gap <= kappa
        gaps.append(gap)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_dphi_is_derivative_of_phi():
    pair = build_yw(YWParams(5.0, 0.3))
    x = np.linspace(-0.6, 0.6, 1201)
    h = 1e-6
    fd = (pair.phi(x + h) - pair.phi(x - h)) / (2 * h)
    assert np.max(np.abs(fd - pair.dphi(x))) < 1e-5


def test_table_csv(tmp_path):
    pair = build_yw(YWParams(2.0, 0.1))
    write_table(tmp_path / "t.csv", pair)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "x,phi,dphi,d2phi" and len(rows) == 2002
