"""ODE engine: accuracy, determinism, guard discipline, CSV round trips."""

import math

import numpy as np
import pytest

from dptco.costs import CostSet, QuadraticCost, default_box, optimum_oracle
from dptco.errors import (DimensionMismatch, NonFiniteState, StepUnderflow)
from dptco.generator import GeneratorState
from dptco.graph import build_network
from dptco.sim_engine import (CoupledSystem, SolverSettings, export_csv,
                              integrate, make_disturbance, step_ceiling,
                              trajectory_columns)
from dptco.timegain import PrescribedClock, linear_gain

CLOCK = PrescribedClock(0.0, 1.0)


def mu_decay_rhs(t, y):
    # y' = -mu y has the exact solution y0 (1 - t) on [0, 1)
    return -CLOCK.mu(t) * y


# --- accuracy ------------------------------------------------------------

def test_rk45_matches_exact_solution():
    settings = SolverSettings(method="rk45", dt=1e-3, dt_max=1e-2,
                              rel_tol=1e-10, abs_tol=1e-12, t_end=0.9)
    traj = integrate(mu_decay_rhs, np.array([1.0]), CLOCK, settings)
    assert traj.times[-1] == pytest.approx(0.9, abs=1e-12)
    assert traj.states[-1, 0] == pytest.approx(0.1, abs=1e-8)


def test_rk4_fourth_order_convergence():
    # halve dt twice on [0, 0.5] where the mu ceiling never binds; the
    # observed order of the endpoint error should be close to 4.  The test
    # problem y' = -mu^2 y has the curved solution exp(1 - mu(t)).
    errs = []
    exact = math.exp(1.0 - 2.0)
    for dt in (4e-3, 2e-3, 1e-3):
        settings = SolverSettings(method="rk4", dt=dt, dt_max=1.0, t_end=0.5)
        traj = integrate(lambda t, y: -CLOCK.mu(t) ** 2 * y,
                         np.array([1.0]), CLOCK, settings)
        errs.append(abs(traj.states[-1, 0] - exact))
    for coarse, fine in zip(errs, errs[1:]):
        assert math.log2(coarse / fine) > 3.7


def test_step_ceiling_tracks_mu():
    assert step_ceiling(CLOCK, 0.0, 1.0) == pytest.approx(0.05)
    assert step_ceiling(CLOCK, 0.9, 1.0) == pytest.approx(0.05 / 100.0)
    assert step_ceiling(CLOCK, 0.0, 1e-3) == 1e-3


def test_step_ceiling_coefficient_configurable():
    assert step_ceiling(CLOCK, 0.9, 1.0, coef=5.0) == pytest.approx(0.05)
    settings = SolverSettings(method="rk45", dt=1e-3, dt_max=1e-2,
                              rel_tol=1e-10, abs_tol=1e-12, t_end=0.9,
                              mu_dt_coef=5.0)
    loose = integrate(mu_decay_rhs, np.array([1.0]), CLOCK, settings)
    tight = integrate(mu_decay_rhs, np.array([1.0]), CLOCK,
                      SolverSettings(method="rk45", dt=1e-3, dt_max=1e-2,
                                     rel_tol=1e-10, abs_tol=1e-12, t_end=0.9))
    # a higher ceiling hands step control to the error estimator: fewer
    # steps, same answer within tolerance
    assert loose.n_steps < tight.n_steps
    assert loose.states[-1, 0] == pytest.approx(0.1, abs=1e-8)
    with pytest.raises(ValueError):
        SolverSettings(mu_dt_coef=0.0)


def test_rk4_respects_ceiling():
    # with dt much larger than the ceiling the engine still resolves the
    # fast late-time dynamics
    settings = SolverSettings(method="rk4", dt=0.5, dt_max=1.0, t_end=0.9)
    traj = integrate(mu_decay_rhs, np.array([1.0]), CLOCK, settings)
    assert traj.states[-1, 0] == pytest.approx(0.1, abs=1e-4)


# --- guard discipline ------------------------------------------------------

def test_no_rhs_evaluation_at_deadline():
    seen = []

    def rhs(t, y):
        seen.append(t)
        return -CLOCK.mu(t) * y

    settings = SolverSettings(method="rk45", dt=1e-3, dt_max=1e-2)
    traj = integrate(rhs, np.array([1.0]), CLOCK, settings)
    assert max(seen) < CLOCK.t0 + CLOCK.T
    assert traj.times[-1] <= CLOCK.t_guard + 1e-12


def test_t_end_cannot_pass_guard():
    settings = SolverSettings(method="rk4", dt=1e-2, dt_max=1e-2, t_end=5.0)
    traj = integrate(mu_decay_rhs, np.array([1.0]), CLOCK, settings)
    assert traj.times[-1] <= CLOCK.t_guard + 1e-12


# --- failure modes ----------------------------------------------------------

def test_nonfinite_state_detected():
    def blowup(t, y):
        with np.errstate(over="ignore"):
            return y ** 3

    settings = SolverSettings(method="rk4", dt=0.05, dt_max=0.05, t_end=0.9)
    with pytest.raises(NonFiniteState):
        with np.errstate(over="ignore", invalid="ignore"):
            integrate(blowup, np.array([10.0]), CLOCK, settings)


def test_step_underflow_on_nan_rhs():
    def bad(t, y):
        return np.array([math.nan])

    settings = SolverSettings(method="rk45", dt=1e-3, dt_max=1e-2)
    with pytest.raises(StepUnderflow):
        integrate(bad, np.array([1.0]), CLOCK, settings)


def test_solver_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(method="euler")
    with pytest.raises(ValueError):
        SolverSettings(dt=0.0)


# --- coupled generator system ------------------------------------------------

def ring_system(T=1.0, k=21.0):
    net = build_network(4, [[i, (i + 1) % 4, 1.0] for i in range(4)])
    costs = CostSet([QuadraticCost(np.eye(2) * (0.5 + 0.25 * i), [i, -i])
                     for i in range(4)], 2, default_box(2, 10.0))
    clock = PrescribedClock(0.0, T)
    sys = CoupledSystem(clock, net, costs, linear_gain(k))
    return sys, costs


def test_determinism_bit_identical():
    sys, _ = ring_system()
    y0 = sys.pack(GeneratorState(np.arange(8.0).reshape(4, 2),
                                 np.zeros((4, 2))))
    settings = SolverSettings(method="rk45", dt=1e-3, dt_max=1e-2,
                              rel_tol=1e-8, abs_tol=1e-10, t_end=0.9)
    a = integrate(sys.rhs, y0, sys.clock, settings)
    b = integrate(sys.rhs, y0, sys.clock, settings)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.times, b.times)


def test_optimum_is_equilibrium():
    sys, costs = ring_system()
    cert = optimum_oracle(costs)
    varpi = np.tile(cert.z_star, (4, 1))
    p = -np.array([c.gradient(cert.z_star) for c in costs.costs])
    y0 = sys.pack(GeneratorState(varpi, p))
    settings = SolverSettings(method="rk45", dt=1e-3, dt_max=1e-2,
                              rel_tol=1e-9, abs_tol=1e-11, t_end=0.5)
    traj = integrate(sys.rhs, y0, sys.clock, settings)
    assert np.abs(traj.states - y0).max() < 1e-6


def test_deadline_rescaling_of_generator():
    # with alpha = k mu the generator flow depends on t only through the
    # window fraction, so runs with T = 1 and T = 2 agree at matched times
    sys1, _ = ring_system(T=1.0)
    sys2, _ = ring_system(T=2.0)
    y0 = sys1.pack(GeneratorState(np.arange(8.0).reshape(4, 2) / 4.0,
                                  np.zeros((4, 2))))
    out = []
    for sys, frac_end in ((sys1, 0.9), (sys2, 1.8)):
        settings = SolverSettings(method="rk45", dt=1e-4, dt_max=1e-2,
                                  rel_tol=1e-11, abs_tol=1e-13,
                                  t_end=frac_end)
        out.append(integrate(sys.rhs, y0, sys.clock, settings))
    assert np.allclose(out[0].states[-1], out[1].states[-1], atol=1e-7)


def test_column_names_cover_state():
    sys, _ = ring_system()
    names = sys.column_names()
    assert len(names) == sys.total_dim
    assert names[0] == "agent0.varpi0"
    assert names[-1] == "agent3.p1"


def test_trajectory_columns_layout():
    sys, _ = ring_system()
    y0 = sys.pack(GeneratorState(np.zeros((4, 2)), np.zeros((4, 2))))
    settings = SolverSettings(method="rk4", dt=1e-2, dt_max=1e-2, t_end=0.1)
    traj = integrate(sys.rhs, y0, sys.clock, settings)
    cols = trajectory_columns(sys, traj)
    assert list(cols)[:2] == ["t", "mu"]
    assert len(cols) == 2 + sys.total_dim
    assert cols["mu"][0] == pytest.approx(1.0)


# --- disturbance -------------------------------------------------------------

def test_disturbance_bounded_and_seeded():
    d = make_disturbance(3, 2, 2, amplitude=0.1)
    ts = np.linspace(0.0, 10.0, 500)
    sup = max(np.abs(d(t, i)).max() for t in ts for i in range(2))
    assert sup <= 0.1 + 1e-12
    d2 = make_disturbance(3, 2, 2, amplitude=0.1)
    assert np.array_equal(d(1.234, 0), d2(1.234, 0))
    d3 = make_disturbance(4, 2, 2, amplitude=0.1)
    assert not np.array_equal(d(1.234, 0), d3(1.234, 0))


# --- CSV export ----------------------------------------------------------

def test_export_csv_shape(tmp_path):
    path = tmp_path / "out.csv"
    export_csv(str(path), {"t": [0.0, 1.0], "y": [2.0, 3.0]})
    raw = path.read_bytes()
    assert raw.count(b"\r") == 0
    lines = raw.decode().splitlines()
    assert len(lines) == 3
    assert lines[0] == "t,y"


def test_export_csv_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(11)
    vals = rng.standard_normal(20) * 10.0 ** rng.integers(-8, 8, 20)
    path = tmp_path / "rt.csv"
    export_csv(str(path), {"v": vals})
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back, vals)


def test_export_csv_rejects_ragged(tmp_path):
    with pytest.raises(DimensionMismatch):
        export_csv(str(tmp_path / "bad.csv"), {"a": [1.0], "b": [1.0, 2.0]})
