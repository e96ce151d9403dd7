"""Time-varying gain calculus: clock, kappa factors, growth criteria."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dptco.errors import NonPositiveInput, TimeOutOfWindow
from dptco.timegain import (GainFunction, GrowthCriterion, PrescribedClock,
                            alpha_s_from_dc2, check_growth_criterion,
                            exp_gain, gain_integral, kappa, linear_gain,
                            log_grid, log_gain, power_gain)


# --- clock -------------------------------------------------------------------

def test_mu_at_start():
    clock = PrescribedClock(t0=0.0, T=1.0)
    assert clock.mu(0.0) == 1.0


def test_mu_midpoint():
    clock = PrescribedClock(t0=0.0, T=1.0)
    assert clock.mu(0.5) == 2.0


def test_mu_rejects_deadline():
    clock = PrescribedClock(t0=0.0, T=1.0)
    with pytest.raises(TimeOutOfWindow):
        clock.mu(1.0)


def test_mu0_is_inverse_deadline():
    for T in (0.5, 1.0, 2.0, 7.25):
        assert PrescribedClock(t0=0.0, T=T).mu0 == pytest.approx(1.0 / T)


def test_mu_derivative_is_mu_squared():
    # numerical check of d(mu)/dt = mu^2
    clock = PrescribedClock(t0=0.0, T=1.0)
    h = 1e-6
    for t in (0.0, 0.3, 0.7, 0.9):
        fd = (clock.mu(t + h) - clock.mu(t)) / h
        assert fd == pytest.approx(clock.mu(t) ** 2, rel=1e-4)


def test_mu_strictly_increasing():
    clock = PrescribedClock(t0=2.0, T=3.0)
    ts = np.linspace(2.0, 2.0 + 3.0 * 0.999, 200)
    mus = [clock.mu(t) for t in ts]
    assert all(b > a for a, b in zip(mus, mus[1:]))


def test_clock_rejects_bad_params():
    with pytest.raises(NonPositiveInput):
        PrescribedClock(t0=0.0, T=0.0)
    with pytest.raises(NonPositiveInput):
        PrescribedClock(t0=0.0, T=1.0, guard_frac=1.0)


# --- kappa -------------------------------------------------------------------

def test_kappa_zero_iota():
    clock = PrescribedClock(t0=0.0, T=1.0)
    assert kappa(clock, linear_gain(3.0), 0.0, 0.7) == 1.0


def test_kappa_at_start():
    clock = PrescribedClock(t0=0.0, T=1.0)
    assert kappa(clock, linear_gain(3.0), -2.5, 0.0) == 1.0


def test_kappa_linear_closed_form():
    # alpha(s) = 2s, iota = -1: integral is 2 ln(mu/mu0), kappa = (mu0/mu)^2
    clock = PrescribedClock(t0=0.0, T=1.0)
    assert kappa(clock, linear_gain(2.0), -1.0, 0.5) == pytest.approx(0.25)


def test_kappa_linear_power_law():
    rng = np.random.default_rng(3)
    clock = PrescribedClock(t0=0.0, T=1.0)
    k = 1.7
    alpha = linear_gain(k)
    for t in rng.uniform(0.0, 0.99, size=100):
        expected = (clock.mu(clock.t0) / clock.mu(t)) ** k
        assert kappa(clock, alpha, -1.0, float(t)) == pytest.approx(
            expected, rel=1e-8)


def test_kappa_multiplicative_in_iota():
    clock = PrescribedClock(t0=1.0, T=2.0)
    alpha = power_gain(0.8, 1.5)
    for i1, i2 in ((-1.0, -0.5), (0.3, 0.7), (-2.0, 1.0)):
        prod = (kappa(clock, alpha, i1, 2.4) * kappa(clock, alpha, i2, 2.4))
        assert prod == pytest.approx(
            kappa(clock, alpha, i1 + i2, 2.4), rel=1e-9)


def test_kappa_underflows_to_zero():
    clock = PrescribedClock(t0=0.0, T=1.0, guard_frac=1.0 - 1e-9)
    assert kappa(clock, linear_gain(100.0), -10.0, 1.0 - 1e-8) == 0.0


# --- gain families and quadrature -------------------------------------------

def test_gain_integral_linear_closed_form():
    assert gain_integral(linear_gain(3.0), 1.0, math.e) == pytest.approx(3.0)


def test_gain_integral_power_closed_form():
    # k s^a / s^2 integrates to k s^{a-1}/(a-1)
    got = gain_integral(power_gain(2.0, 3.0), 1.0, 2.0)
    assert got == pytest.approx(2.0 * (4.0 - 1.0) / 2.0)


def test_gain_integral_simpson_matches_closed_form():
    # force quadrature through the table family and compare with linear
    xs = tuple(np.linspace(0.5, 20.0, 400))
    ys = tuple(3.0 * x for x in xs)
    table = GainFunction("table", (xs, ys))
    assert gain_integral(table, 1.0, 10.0) == pytest.approx(
        gain_integral(linear_gain(3.0), 1.0, 10.0), rel=1e-6)


def test_gain_roundtrip_serialization():
    for g in (linear_gain(2.0), power_gain(1.5, 1.5), log_gain(0.3),
              exp_gain(1.0, 1.0)):
        assert GainFunction.from_dict(g.to_dict()) == g


def test_validate_rejects_nonzero_origin():
    bad = GainFunction("power", (1.0, 0.0))  # constant 1, alpha(0) != 0
    with pytest.raises(ValueError):
        bad.validate()


@given(st.floats(min_value=0.1, max_value=10.0),
       st.floats(min_value=1.0, max_value=3.0))
@settings(max_examples=30, deadline=None)
def test_power_gain_deriv_matches_fd(k, a):
    g = power_gain(k, a)
    for s in (0.5, 1.0, 4.0):
        h = 1e-6 * s
        fd = (g.eval(s + h) - g.eval(s - h)) / (2.0 * h)
        assert g.deriv(s) == pytest.approx(fd, rel=1e-5)


def test_all_families_validate():
    for g in (linear_gain(2.0), power_gain(1.5, 1.5), log_gain(0.3),
              exp_gain(1.0, 1.0)):
        g.validate()


# --- growth criteria ---------------------------------------------------------

def test_linear_boundary_exact():
    # k s' satisfies k <= (c*/2) k^2 exactly when k >= 2/c*
    c_star = 0.1
    crit = GrowthCriterion("generator", c_star=c_star)
    grid = log_grid(1.0, 1000.0, 1000)
    k_pass = 2.0 / c_star
    assert check_growth_criterion(linear_gain(k_pass), crit, grid).passed
    assert not check_growth_criterion(
        linear_gain(1.0 / c_star), crit, grid).passed


def test_linear_boundary_resolution():
    # the pass/fail boundary sits at k = 2/c* within 1e-6 relative
    c_star = 0.1
    crit = GrowthCriterion("generator", c_star=c_star)
    grid = log_grid(1.0, 1000.0, 1000)
    k_b = 2.0 / c_star
    assert check_growth_criterion(
        linear_gain(k_b * (1.0 + 1e-6)), crit, grid).passed
    assert not check_growth_criterion(
        linear_gain(k_b * (1.0 - 1e-6)), crit, grid).passed


def test_log_family_passes():
    # alpha(s) = k s ln(s+2); k = 2/(c* ln 2) passes for all s >= 0 with
    # equality exactly at s = 0 (half that k fails for s below about 5)
    c_star = 0.1
    crit = GrowthCriterion("generator", c_star=c_star)
    grid = log_grid(1e-2, 1000.0, 2000)
    k = 2.0 / (c_star * math.log(2.0))
    assert check_growth_criterion(log_gain(k), crit, grid).passed
    assert not check_growth_criterion(log_gain(0.5 * k), crit, grid).passed


def test_exp_family_passes():
    # alpha(s) = k1 s e^{k2 s} passes for k1 large enough on s >= 1
    c_star = 0.1
    crit = GrowthCriterion("generator", c_star=c_star)
    grid = log_grid(1.0, 500.0, 2000)
    k1 = 4.0 / c_star
    assert check_growth_criterion(exp_gain(k1, 1.0), crit, grid).passed


def test_criterion_report_carries_worst_point():
    crit = GrowthCriterion("generator", c_star=0.1)
    grid = log_grid(1.0, 100.0, 500)
    rep = check_growth_criterion(linear_gain(10.0), crit, grid)
    assert not rep.passed
    assert rep.worst_margin < 0
    d = rep.to_dict()
    assert d["pass"] is False and "worst_s" in d


def test_coupling_bound_checked():
    # chain gain must stay below (c*/v1) alpha
    crit = GrowthCriterion("chain_dc1", c_star=0.1, v1=1.0, v2=4.0,
                           coupling_coef=0.1)
    grid = log_grid(1.0, 100.0, 500)
    alpha_main = linear_gain(20.0)
    ok = check_growth_criterion(linear_gain(1.0), crit, grid, alpha_main)
    assert ok.coupling_passed
    bad = check_growth_criterion(linear_gain(3.0), crit, grid, alpha_main)
    assert not bad.coupling_passed


# --- derived chain gain ------------------------------------------------------

def test_dc2_closed_form_linear_base():
    # alpha_x(s) = s, v1 = 2, m = 2, mu0 = 1: at s = e the integral of
    # 1/tau over [1, e] is 1, so alpha_s(e) = e^2 * e^1
    alpha_s = alpha_s_from_dc2(linear_gain(1.0), v1=2.0, m=2, mu0=1.0)
    assert alpha_s.eval(math.e) == pytest.approx(math.e ** 3, rel=1e-8)


def test_dc2_closed_form_power_base():
    # alpha_x(s) = s^{3/2}: integral of tau^{-1/2} over [1, 4] is 2,
    # so alpha_s(4) = 4^3 * e^2
    alpha_s = alpha_s_from_dc2(power_gain(1.0, 1.5), v1=2.0, m=2, mu0=1.0)
    assert alpha_s.eval(4.0) == pytest.approx(64.0 * math.e ** 2, rel=1e-8)


def test_dc2_at_lower_limit():
    alpha_s = alpha_s_from_dc2(power_gain(2.0, 1.5), v1=1.0, m=3, mu0=1.5)
    assert alpha_s.eval(1.5) == pytest.approx(
        power_gain(2.0, 1.5).eval(1.5) ** 3)


def test_dc2_rejects_bad_inputs():
    with pytest.raises(NonPositiveInput):
        alpha_s_from_dc2(linear_gain(1.0), v1=0.0, m=2, mu0=1.0)
    with pytest.raises(NonPositiveInput):
        alpha_s_from_dc2(linear_gain(1.0), v1=1.0, m=0, mu0=1.0)


def test_dc2_deriv_matches_fd():
    alpha_s = alpha_s_from_dc2(linear_gain(1.0), v1=2.0, m=2, mu0=1.0)
    for s in (1.5, 3.0, 8.0):
        h = 1e-6 * s
        fd = (alpha_s.eval(s + h) - alpha_s.eval(s - h)) / (2.0 * h)
        assert alpha_s.deriv(s) == pytest.approx(fd, rel=1e-5)
