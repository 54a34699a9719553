import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdrift.drift import DriftSpec
from distdrift.harness import (RateParams, StudyConfig, balance_residual, balanced_beta, eta_opt, fit_loglog, m_of_n,
                               monotone_decreasing, rate_r, run_rate_study, theoretical_rates)

mpmath.mp.dps = 50


def r_mp(beta, eps):
    beta, eps = mpmath.mpf(beta), mpmath.mpf(eps)
    q = mpmath.mpf(1) / 2 - beta - eps
    return q**2 / (1 + beta + eps + 2 * q**2)


def eta_mp(bh, eps):
    bh, eps = mpmath.mpf(bh), mpmath.mpf(eps)
    q = mpmath.mpf(1) / 2 - bh - eps
    return 1 / (2 * ((eps + bh + 1) / 2 + q**2))


def test_formulas_against_high_precision():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        beta = rng.uniform(0.001, 0.49)
        eps = rng.uniform(0, 0.5 - beta) or 1e-3
        bh = rng.uniform(0.001, 0.49)
        e2 = rng.uniform(0, 0.5 - bh) or 1e-3
        assert abs(rate_r(beta, eps) - float(r_mp(beta, eps))) < 1e-12
        assert abs(eta_opt(bh, e2) - float(eta_mp(bh, e2))) < 1e-12


def test_spot_values():
    assert rate_r(0.1, 0.05) == pytest.approx(0.1225 / 1.395, abs=1e-15)
    assert round(rate_r(0.1, 0.05), 6) == 0.087814
    assert rate_r(0.4, 0.0999999) < 1e-6
    assert rate_r(1e-9, 1e-9) == pytest.approx(1 / 6, abs=1e-8)
    assert eta_opt(0.3, 0.2) == pytest.approx(2 / 3, abs=1e-15)
    assert round(eta_opt(0.15, 0.05), 6) == 0.724638
    # 1 / (2 (0.745 + 0.0001)) = 1 / 1.4902
    assert eta_opt(0.45, 0.04) == pytest.approx(1 / 1.4902, abs=1e-15)
    assert round(eta_opt(0.45, 0.04), 6) == 0.671051
    lp, l1 = theoretical_rates(RateParams(0.1, 0.15, 0.05, p=2))
    assert round(lp, 7) == 0.0439068
    assert round(l1, 6) == 0.030735


def test_domain_errors():
    for args in ((0.0, 0.1), (0.5, 0.01), (0.2, 0.3), (0.2, 0.0)):
        with pytest.raises(ValueError):
            rate_r(*args)
    with pytest.raises(ValueError):
        eta_opt(0.3, 0.25)
    with pytest.raises(ValueError):
        RateParams(0.2, 0.1, 0.05)
    with pytest.raises(ValueError):
        RateParams(0.1, 0.15, 0.05, p=1.5)


def test_alpha_range():
    rp = RateParams(0.1, 0.15, 0.05)
    assert rp.alpha == pytest.approx(0.8)
    assert 0.5 < rp.alpha < 1 - rp.beta_hat


@settings(max_examples=50, deadline=None)
@given(bh=st.floats(0.26, 0.49), frac=st.floats(0.01, 0.99))
def test_eta_balances_the_exponents(bh, frac):
    eps = frac * (0.5 - bh)
    beta = balanced_beta(bh, eps)
    if not 0 < beta < bh:
        return
    assert abs(balance_residual(eta_opt(bh, eps), beta, bh, eps)) < 1e-12


def test_balance_is_not_zero_off_the_balanced_beta():
    # with beta chosen freely the formula no longer solves the balance equation
    assert abs(balance_residual(eta_opt(0.15, 0.05), 0.1, 0.15, 0.05)) > 1e-3


@settings(max_examples=50, deadline=None)
@given(beta=st.floats(0.01, 0.4), eps=st.floats(0.001, 0.08), d=st.floats(1e-4, 0.02))
def test_rate_decreasing_in_beta_and_eps(beta, eps, d):
    if beta + eps + d >= 0.5:
        return
    assert rate_r(beta + d, eps) < rate_r(beta, eps)
    assert rate_r(beta, eps + d) < rate_r(beta, eps)


@settings(max_examples=30, deadline=None)
@given(eta=st.floats(0.5, 0.95))
def test_m_of_n_monotone(eta):
    ms = [m_of_n(n, eta) for n in range(1, 2000, 7)]
    assert all(b >= a for a, b in zip(ms, ms[1:]))
    assert min(ms) >= 1


def test_fit_loglog():
    ns = 2.0 ** np.arange(4, 10)
    fit = fit_loglog(ns, 3 * ns**-0.7)
    assert fit.slope == pytest.approx(-0.7, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    errs = 3 * ns**-0.7
    se = 0.01 * errs
    se[-1] = 0.5 * errs[-1]
    dropped = fit_loglog(ns, errs, se)
    assert dropped.used == 5
    flat = fit_loglog(ns, np.full(6, 1e-14))
    assert flat.degenerate and math.isnan(flat.slope)


def test_monotone():
    assert monotone_decreasing([1.0, 0.5, 0.54, 0.3])
    assert not monotone_decreasing([1.0, 0.5, 0.6])


def test_zero_drift_study_is_degenerate():
    cfg = StudyConfig(drift=DriftSpec(profile="zero"), rate=None, m_fixed=8, paths=20, n_fine=2**12,
                      num_points=256, workers=1)
    rep = run_rate_study(cfg)
    assert all(s.l1_sup < 1e-12 for s in rep.sweep)
    assert rep.degenerate


def test_ou_study_and_csv(tmp_path):
    cfg = StudyConfig(drift=DriftSpec(profile="ou_linear"), rate=None, paths=400, x0=1.0, workers=1)
    rep = run_rate_study(cfg)
    assert rep.fitted_slope == pytest.approx(-1.0, abs=0.15)
    rep.write_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "n,m,l1_sup,lp_sup,std_error,theory_l1,theory_lp" and len(rows) == 7
    assert "fitted_slope=" in rep.summary()


def test_study_checks_reference_resolution():
    cfg = StudyConfig(drift=DriftSpec(profile="ou_linear"), rate=None, n_fine=2**11, paths=4)
    with pytest.raises(ValueError):
        run_rate_study(cfg)


def test_distributional_m_schedule():
    rp = RateParams(0.1, 0.15, 0.05)
    cfg = StudyConfig(drift=DriftSpec(kind="distributional_derivative", beta=0.1, beta_hat=0.15, seed=3),
                      rate=rp, n_list=(16, 32), paths=8, num_points=1024, workers=1)
    rep = run_rate_study(cfg)
    assert [s.m for s in rep.sweep] == [m_of_n(16, rp.eta), m_of_n(32, rp.eta)] == [7, 12]
    assert rep.m_ref == 64
    assert rep.theory_rate == pytest.approx(0.030735, abs=1e-6)
