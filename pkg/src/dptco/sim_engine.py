"""Fixed and adaptive ODE integration for the coupled closed loop.

The state vector stacks the trajectory generator with every agent's plant
and controller states:

    y = [varpi (N*dim); p (N*dim); x^1 .. x^N; ctrl^1 .. ctrl^N]

Both integrators cap the step at min(dt_max, mu_dt_coef / mu^2), default
coefficient 0.05, so resolution
follows the blow-up of the time-varying gain, and integration stops at the
guard time strictly before the prescribed deadline; no right-hand side is
ever evaluated at or beyond the deadline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain_ctrl import (ChainControllerConfig, chain_control,
                         chain_plant_rhs, el_acceleration)
from .errors import (DimensionMismatch, IoFailure, NonFiniteState,
                     StepUnderflow)
from .generator import GeneratorState
from .graph import Network
from .strictfb_ctrl import (SfControllerConfig, adaptation_rhs, filter_rhs,
                            sf_plant_rhs, tau_value, virtual_controls)
from .timegain import GainFunction, PrescribedClock

_STEP_CEILING_COEF = 0.05


@dataclass
class SolverSettings:
    """Integrator configuration.

    method "rk4" uses the fixed step dt (still capped by the mu ceiling);
    "rk45" is an embedded Dormand-Prince pair with absolute/relative error
    control.  log_every decimates the stored trajectory.
    """

    method: str = "rk45"
    dt: float = 1e-3
    dt_max: float = 1e-2
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    log_every: int = 1
    t_end: float | None = None
    mu_dt_coef: float = _STEP_CEILING_COEF

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt <= 0 or self.dt_max <= 0 or self.log_every < 1:
            raise ValueError("dt, dt_max and log_every must be positive")
        if self.mu_dt_coef <= 0:
            raise ValueError("mu_dt_coef must be positive")


@dataclass
class Trajectory:
    """Logged solution: times (K,) and states (K, D)."""

    times: np.ndarray
    states: np.ndarray
    n_steps: int
    n_rejected: int = 0

    def __post_init__(self):
        if self.times.shape[0] != self.states.shape[0]:
            raise DimensionMismatch("times and states disagree in length")


def step_ceiling(clock: PrescribedClock, t: float, dt_max: float,
                 coef: float = _STEP_CEILING_COEF) -> float:
    """Largest allowed step at time t: min(dt_max, coef / mu(t)^2)."""
    mu = clock.mu(t)
    return min(dt_max, coef / (mu * mu))


def _check_finite(y: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise NonFiniteState(t, bad)


def _rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = np.zeros((7, 7))
_DP_A[1, :1] = [1 / 5]
_DP_A[2, :2] = [3 / 40, 9 / 40]
_DP_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_DP_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_DP_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176,
                -5103 / 18656]
_DP_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192,
                   -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


def _rk45_step(rhs, t, y, h):
    """One Dormand-Prince trial step: (y5, error estimate)."""
    K = np.empty((7, y.shape[0]))
    K[0] = rhs(t, y)
    for s in range(1, 7):
        K[s] = rhs(t + _DP_C[s] * h, y + h * (_DP_A[s, :s] @ K[:s]))
    return y + h * (_DP_B5 @ K), h * (_DP_E @ K)


def integrate(rhs, y0: np.ndarray, clock: PrescribedClock,
              settings: SolverSettings) -> Trajectory:
    """Integrate y' = rhs(t, y) from the window start to the guard time.

    Deterministic: no hidden randomness, and identical inputs give
    bit-identical trajectories.
    """
    t_end = clock.t_guard if settings.t_end is None else float(settings.t_end)
    t_end = min(t_end, clock.t_guard)
    t = clock.t0
    y = np.asarray(y0, dtype=float).copy()
    _check_finite(y, t)
    times = [t]
    states = [y.copy()]
    n_steps = 0
    n_rejected = 0
    h = min(settings.dt, step_ceiling(clock, t, settings.dt_max,
                                      settings.mu_dt_coef))
    while t < t_end - 1e-15 * max(1.0, abs(t_end)):
        cap = min(step_ceiling(clock, t, settings.dt_max,
                               settings.mu_dt_coef), t_end - t)
        if settings.method == "rk4":
            h_used = min(settings.dt, cap)
            y = _rk4_step(rhs, t, y, h_used)
            t += h_used
        else:
            h = min(h, cap)
            while True:
                if h < 1e-14 * max(1.0, abs(t)):
                    raise StepUnderflow(f"step size {h} underflowed at t={t}")
                y_new, err = _rk45_step(rhs, t, y, h)
                scale = settings.abs_tol + settings.rel_tol * np.maximum(
                    np.abs(y), np.abs(y_new))
                err_norm = math.sqrt(float(np.mean((err / scale) ** 2)))
                if err_norm <= 1.0:
                    break
                n_rejected += 1
                h *= max(0.2, 0.9 * err_norm ** -0.2)
            t += h
            y = y_new
            # grow the step for the next attempt, within the ceiling
            factor = 5.0 if err_norm == 0.0 else min(
                5.0, 0.9 * err_norm ** -0.2)
            h = max(h * factor, 1e-14)
        _check_finite(y, t)
        n_steps += 1
        if n_steps % settings.log_every == 0 or t >= t_end - 1e-15:
            times.append(t)
            states.append(y.copy())
    return Trajectory(np.array(times), np.array(states), n_steps, n_rejected)


# --- coupled closed-loop system -------------------------------------------

@dataclass
class CoupledSystem:
    """Generator plus homogeneous per-agent plants and controllers.

    plant is one of "none", "chain", "euler_lagrange", "strict_feedback".
    offsets, when given, shift each agent's reference to varpi_i + offset_i
    (formation tracking).  disturbance(t, i) adds a bounded signal at the
    last plant stage of chain-type agents.
    """

    clock: PrescribedClock
    net: Network
    costs: object
    alpha: GainFunction
    plant: str = "none"
    chain_cfg: ChainControllerConfig | None = None
    sf_cfg: SfControllerConfig | None = None
    el_true: object = None
    el_nominal: object = None
    offsets: np.ndarray | None = None
    thetas: np.ndarray | None = None
    disturbance: object = None

    def __post_init__(self):
        self.dim = self.costs.dim
        n = self.net.n_agents
        if self.plant == "none":
            self.plant_size = 0
            self.ctrl_size = 0
        elif self.plant in ("chain", "euler_lagrange"):
            cfg = self.chain_cfg
            if cfg is None:
                raise ValueError("chain-type plant needs chain_cfg")
            if cfg.n != self.dim:
                raise DimensionMismatch("chain stage dim != cost dim")
            self.plant_size = cfg.m * cfg.n
            self.ctrl_size = 0
            if self.plant == "euler_lagrange" and (
                    self.el_true is None or self.el_nominal is None):
                raise ValueError("euler_lagrange plant needs el parameters")
        elif self.plant == "strict_feedback":
            cfg = self.sf_cfg
            if cfg is None:
                raise ValueError("strict_feedback plant needs sf_cfg")
            if cfg.n != self.dim:
                raise DimensionMismatch("plant stage dim != cost dim")
            self.plant_size = cfg.m * cfg.n
            self.ctrl_size = cfg.n_ctrl
            if self.thetas is None or len(self.thetas) != n:
                raise ValueError("strict_feedback plant needs one theta per agent")
        else:
            raise ValueError(f"unknown plant kind {self.plant!r}")
        if self.offsets is not None:
            self.offsets = np.asarray(self.offsets, dtype=float)
            if self.offsets.shape != (n, self.dim):
                raise DimensionMismatch("offsets must be (N, dim)")
        self.gen_size = 2 * n * self.dim
        self.total_dim = self.gen_size + n * (self.plant_size + self.ctrl_size)

    # -- state layout helpers --

    def plant_slice(self, i: int) -> slice:
        base = self.gen_size + i * self.plant_size
        return slice(base, base + self.plant_size)

    def ctrl_slice(self, i: int) -> slice:
        base = (self.gen_size + self.net.n_agents * self.plant_size
                + i * self.ctrl_size)
        return slice(base, base + self.ctrl_size)

    def gen_state(self, y: np.ndarray) -> GeneratorState:
        return GeneratorState.unflatten(y, self.net.n_agents, self.dim)

    def plant_state(self, y: np.ndarray, i: int) -> np.ndarray:
        m = self.plant_size // self.dim
        return y[self.plant_slice(i)].reshape(m, self.dim)

    def ctrl_state(self, y: np.ndarray, i: int):
        """(theta_hat, xi_f) for strict-feedback agents."""
        c = y[self.ctrl_slice(i)]
        return float(c[0]), c[1:].reshape(self.sf_cfg.m - 1, self.dim)

    def reference(self, varpi: np.ndarray, i: int) -> np.ndarray:
        if self.offsets is None:
            return varpi[i]
        return varpi[i] + self.offsets[i]

    def pack(self, gen: GeneratorState, plants=None, ctrls=None) -> np.ndarray:
        y = np.zeros(self.total_dim)
        y[:self.gen_size] = gen.flatten()
        for i in range(self.net.n_agents):
            if plants is not None:
                y[self.plant_slice(i)] = np.asarray(plants[i]).ravel()
            if ctrls is not None:
                y[self.ctrl_slice(i)] = np.asarray(ctrls[i]).ravel()
        return y

    def control(self, t: float, y: np.ndarray, i: int) -> np.ndarray:
        """Control applied by agent i at (t, y)."""
        mu = self.clock.mu(t)
        varpi = self.gen_state(y).varpi
        ref = self.reference(varpi, i)
        if self.plant in ("chain", "euler_lagrange"):
            return chain_control(self.plant_state(y, i), ref, mu,
                                 self.chain_cfg)
        if self.plant == "strict_feedback":
            theta_hat, xi_f = self.ctrl_state(y, i)
            view = virtual_controls(self.plant_state(y, i), ref, xi_f,
                                    theta_hat, mu, self.sf_cfg)
            return view["xi"][-1]
        raise ValueError("plant 'none' has no control")

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        mu = self.clock.mu(t)
        a = self.alpha.eval(mu)
        n, d = self.net.n_agents, self.dim
        half = n * d
        varpi = y[:half].reshape(n, d)
        p = y[half:2 * half].reshape(n, d)
        cons = self.net.laplacian @ varpi
        grads = self.costs.grad_stack(varpi)
        dy = np.zeros_like(y)
        dy[:half] = (-a * (cons + grads + p)).ravel()
        dy[half:2 * half] = (a * cons).ravel()
        if self.plant == "none":
            return dy
        for i in range(self.net.n_agents):
            ref = self.reference(varpi, i)
            x = self.plant_state(y, i)
            if self.plant in ("chain", "euler_lagrange"):
                u = chain_control(x, ref, mu, self.chain_cfg)
                d = (np.zeros(self.dim) if self.disturbance is None
                     else self.disturbance(t, i))
                if self.plant == "chain":
                    dx = chain_plant_rhs(x, u, d)
                else:
                    dx = np.empty_like(x)
                    dx[0] = x[1]
                    dx[1] = el_acceleration(self.el_true, self.el_nominal,
                                            x[0], x[1], u) + d
                dy[self.plant_slice(i)] = dx.ravel()
            else:
                theta_hat, xi_f = self.ctrl_state(y, i)
                view = virtual_controls(x, ref, xi_f, theta_hat, mu,
                                        self.sf_cfg)
                u = view["xi"][-1]
                dx = sf_plant_rhs(x, u, float(self.thetas[i]), self.sf_cfg)
                dxi_f = filter_rhs(xi_f, view["xi"], mu, self.sf_cfg)
                tau = tau_value(x, view["x_tilde"], mu, self.sf_cfg)
                dth = adaptation_rhs(theta_hat, tau, mu, self.sf_cfg)
                dy[self.plant_slice(i)] = dx.ravel()
                dy[self.ctrl_slice(i)] = np.concatenate([[dth],
                                                         dxi_f.ravel()])
        return dy

    def column_names(self) -> list:
        """State channel names in layout order: agent{i}.{channel}{k}."""
        n, d = self.net.n_agents, self.dim
        names = [f"agent{i}.varpi{k}" for i in range(n) for k in range(d)]
        names += [f"agent{i}.p{k}" for i in range(n) for k in range(d)]
        if self.plant != "none":
            m = self.plant_size // d
            names += [f"agent{i}.x{q + 1}_{k}" for i in range(n)
                      for q in range(m) for k in range(d)]
        if self.ctrl_size:
            mf = self.sf_cfg.m - 1
            for i in range(n):
                names.append(f"agent{i}.theta_hat")
                names += [f"agent{i}.xif{q + 2}_{k}" for q in range(mf)
                          for k in range(d)]
        return names


def make_disturbance(seed: int, n_agents: int, dim: int,
                     amplitude: float = 0.1, n_modes: int = 3):
    """Smooth bounded per-agent disturbance: a short random Fourier sum.

    Deterministic in the seed; the sup norm is at most `amplitude`.
    """
    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.5, 5.0, size=(n_agents, dim, n_modes))
    phase = rng.uniform(0.0, 2.0 * math.pi, size=(n_agents, dim, n_modes))
    coef = rng.uniform(0.2, 1.0, size=(n_agents, dim, n_modes))
    coef *= amplitude / coef.sum(axis=2, keepdims=True)

    def d(t, i):
        return np.sum(coef[i] * np.sin(freq[i] * t + phase[i]), axis=1)

    return d


def export_csv(path: str, columns: dict) -> None:
    """Write named columns to CSV with 17 significant digits and LF endings,
    so every float round-trips exactly."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    length = arrays[0].shape[0]
    for k, arr in zip(names, arrays):
        if arr.shape != (length,):
            raise DimensionMismatch(f"column {k!r} has shape {arr.shape}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for row in range(length):
                fh.write(",".join(f"{arr[row]:.17g}" for arr in arrays))
                fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def trajectory_columns(sys: CoupledSystem, traj: Trajectory) -> dict:
    """CSV-ready columns: time, mu, then every state channel."""
    cols = {"t": traj.times,
            "mu": np.array([sys.clock.mu(t) for t in traj.times])}
    for j, name in enumerate(sys.column_names()):
        cols[name] = traj.states[:, j]
    return cols
