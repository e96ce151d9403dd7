"""Robust prescribed-time tracking controller for chain-integrator agents.

The plant is a chain of m integrators (each stage n-dimensional) with a
bounded matched disturbance at the last stage.  The controller builds a
sliding-like variable s_tilde from descending powers of a gain alpha_x(mu),
scales it into e_tilde_s = alpha_s(mu) * s_tilde, and applies

    u = -(v + psi(x)^2 + 1) sign(k1) e_tilde_s - pi(x)
        - B(mu)^{-1} delta_s(mu) s_tilde

where pi(x) collects the known part of the s_tilde dynamics.  K places all
eigenvalues of the companion matrix Lambda at -1; (P, Q) solve the
associated Lyapunov equation and give the decay constants v1, v2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyTrajectory, GuardExceeded, NotHurwitz,
                     SingularSystem)
from .timegain import (GainFunction, GrowthCriterion, PrescribedClock,
                       alpha_s_from_dc2, check_growth_criterion, kappa,
                       log_grid)


def hurwitz_gain(m: int) -> np.ndarray:
    """Gain vector K of length m-1 placing all eigenvalues of Lambda at -1.

    The entries are the binomial coefficients of (s+1)^(m-1) below the
    leading term, so the characteristic polynomial is exactly (s+1)^(m-1).
    """
    if m < 2:
        raise ValueError("chain order must be >= 2")
    return np.array([math.comb(m - 1, j) for j in range(m - 1)], dtype=float)


def companion(K: np.ndarray) -> np.ndarray:
    """Companion matrix Lambda with last row -K."""
    d = K.shape[0]
    lam = np.zeros((d, d))
    if d > 1:
        lam[:-1, 1:] = np.eye(d - 1)
    lam[-1, :] = -K
    return lam


def solve_lyapunov(Lambda: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve P Lambda + Lambda^T P = -Q by Kronecker vectorization.

    Lambda must be Hurwitz and Q symmetric positive definite; the result is
    symmetric positive definite with residual below 1e-10.
    """
    Lambda = np.asarray(Lambda, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = Lambda.shape[0]
    eigs = np.linalg.eigvals(Lambda)
    if np.max(eigs.real) >= 0.0:
        raise NotHurwitz(f"eigenvalues {eigs} not all in the open left half-plane")
    A = np.kron(np.eye(d), Lambda.T) + np.kron(Lambda.T, np.eye(d))
    try:
        vec_p = np.linalg.solve(A, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    P = vec_p.reshape(d, d)
    P = 0.5 * (P + P.T)
    resid = np.linalg.norm(P @ Lambda + Lambda.T @ P + Q)
    if resid > 1e-10:
        raise SingularSystem(f"Lyapunov residual {resid} too large")
    if np.min(np.linalg.eigvalsh(P)) <= 0.0:
        raise SingularSystem("Lyapunov solution not positive definite")
    return P


def v_constants(P: np.ndarray, Q: np.ndarray, m: int) -> tuple[float, float]:
    """v1 = lambda_min(Q)/lambda_max(P); v2 = 2 m lambda_max(P)/lambda_min(P)."""
    ep = np.linalg.eigvalsh(P)
    eq = np.linalg.eigvalsh(Q)
    return float(eq[0] / ep[-1]), float(2.0 * m * ep[-1] / ep[0])


@dataclass
class ChainControllerConfig:
    """Resolved chain-controller parameters for one agent family."""

    m: int
    n: int
    K: np.ndarray
    Lambda: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    v1: float
    v2: float
    v: float
    alpha_x: GainFunction
    alpha_s: GainFunction
    psi: object  # callable x -> bounded positive scalar
    mu_guard: float
    alpha_s_override: bool = False

    @property
    def k1(self) -> float:
        return float(self.K[0])

    @property
    def L(self) -> np.ndarray:
        """Scale exponents L_j = j - 1 for stages j = 1..m."""
        return np.arange(self.m, dtype=float)


def make_chain_config(m: int, n: int, v: float, alpha_x: GainFunction,
                      mu_guard: float, alpha_s: GainFunction | None = None,
                      K=None, Q=None, psi=None,
                      mu0: float = 1.0) -> ChainControllerConfig:
    """Assemble a chain controller: pole placement, Lyapunov solve, and the
    DC2-derived alpha_s unless an override gain is supplied."""
    K = hurwitz_gain(m) if K is None else np.asarray(K, dtype=float)
    Lambda = companion(K)
    Q = np.eye(m - 1) if Q is None else np.asarray(Q, dtype=float)
    P = solve_lyapunov(Lambda, Q)
    v1, v2 = v_constants(P, Q, m)
    override = alpha_s is not None
    if alpha_s is None:
        alpha_s = alpha_s_from_dc2(alpha_x, v1, m, mu0)
    if psi is None:
        psi = lambda x: 1.0
    return ChainControllerConfig(m, n, K, Lambda, P, Q, v1, v2, float(v),
                                 alpha_x, alpha_s, psi, float(mu_guard),
                                 alpha_s_override=override)


def check_dc1(cfg: ChainControllerConfig, alpha: GainFunction,
              c_star: float, mu0: float, grid_points: int = 1000):
    """DC1 report for alpha_x against the generator gain alpha."""
    crit = GrowthCriterion("chain_dc1", c_star=c_star, v1=cfg.v1, v2=cfg.v2,
                           coupling_coef=c_star / cfg.v1)
    grid = log_grid(mu0, cfg.mu_guard, grid_points)
    return check_growth_criterion(cfg.alpha_x, crit, grid, alpha_main=alpha)


def _phi_weights(cfg: ChainControllerConfig, mu: float) -> np.ndarray:
    """Diagonal of Phi(mu): alpha_x(mu)^{-L_j} for stages j = 1..m."""
    ax = cfg.alpha_x.eval(mu)
    return ax ** (-cfg.L)


def chain_error_view(x: np.ndarray, varpi_i: np.ndarray, mu: float,
                     cfg: ChainControllerConfig) -> dict:
    """Error coordinates e_s, s_tilde, e_tilde_s at one state.

    x is (m, n); varpi_i is the n-vector reference for the first stage.
    """
    e_s = x.copy()
    e_s[0] = x[0] - varpi_i
    w = _phi_weights(cfg, mu)
    k_tilde = np.concatenate([cfg.K, [1.0]])
    s_tilde = (k_tilde * w) @ e_s / cfg.k1
    e_tilde_s = cfg.alpha_s.eval(mu) * s_tilde
    return {"e_s": e_s, "s_tilde": s_tilde, "e_tilde_s": e_tilde_s}


def chain_control(x: np.ndarray, varpi_i: np.ndarray, mu: float,
                  cfg: ChainControllerConfig) -> np.ndarray:
    """Robust tracking control for one chain-integrator agent."""
    if mu > cfg.mu_guard * (1.0 + 1e-12):
        raise GuardExceeded(f"mu={mu} beyond guard {cfg.mu_guard}")
    m, K = cfg.m, cfg.K
    ax = cfg.alpha_x.eval(mu)
    dax = cfg.alpha_x.deriv(mu)
    als = cfg.alpha_s.eval(mu)
    dals = cfg.alpha_s.deriv(mu)
    delta_x = dax * mu * mu / ax
    delta_s = dals * mu * mu / als
    L_m = float(m - 1)

    view = chain_error_view(x, varpi_i, mu, cfg)
    s_tilde = view["s_tilde"]
    e_tilde_s = view["e_tilde_s"]

    # r1 stacks stages 1..m-1 weighted by alpha_x^{-L_j}; its derivative uses
    # the next stage minus the scale-rate correction
    dr1 = np.empty((m - 1, cfg.n))
    dr1[0] = x[1]
    for j in range(1, m - 1):
        Lj = float(j)  # L_{j+1} = j for the (j+1)-th stage (0-based row j)
        dr1[j] = ax ** (-Lj) * (x[j + 1] - Lj * delta_x * x[j])
    pi = ax ** L_m * (K @ dr1) - L_m * delta_x * x[m - 1]

    B = ax ** (-L_m) / cfg.k1
    psi_val = cfg.psi(x)
    u = (-(cfg.v + psi_val ** 2 + 1.0) * math.copysign(1.0, cfg.k1) * e_tilde_s
         - pi - (delta_s / B) * s_tilde)
    return u


def chain_plant_rhs(x: np.ndarray, u: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Chain dynamics: x_q' = x_{q+1}, x_m' = u + phi."""
    dx = np.empty_like(x)
    dx[:-1] = x[1:]
    dx[-1] = u + phi
    return dx


def chain_decay_monitor(times, e_s_norms, e_tilde_norms,
                        cfg: ChainControllerConfig, clock: PrescribedClock,
                        name: str = "chain_decay"):
    """Fit the smallest C with ||e_s(t)|| <= C kappa(-(v1/4m) alpha_x(mu(t))).

    Passes iff the fit is finite and sup ||e_tilde_s|| is finite (the
    boundedness of e_tilde_s is the closed-loop guarantee).
    """
    from .generator import MonitorReport

    times = np.asarray(times, dtype=float)
    e_s_norms = np.asarray(e_s_norms, dtype=float)
    e_tilde_norms = np.asarray(e_tilde_norms, dtype=float)
    if times.size < 2:
        raise EmptyTrajectory("chain decay monitor needs a logged trajectory")
    rate = cfg.v1 / (4.0 * cfg.m)
    c_fit = 0.0
    for t, nrm in zip(times, e_s_norms):
        k = kappa(clock, cfg.alpha_x, -rate, t)
        if k <= 0.0:
            if nrm > 1e-12:
                c_fit = math.inf
            continue
        c_fit = max(c_fit, nrm / k)
    sup_tilde = float(e_tilde_norms.max())
    passed = math.isfinite(c_fit) and math.isfinite(sup_tilde)
    return MonitorReport(name, passed, c_fit, None if passed else float(times[0]))


# --- Euler-Lagrange embedding (two-link manipulator family) ----------------

@dataclass(frozen=True)
class EulerLagrangeParams:
    """Two-link manipulator parameters theta_1..theta_6 and gravity."""

    theta: tuple
    gravity: float = 9.8


def el_matrices(par: EulerLagrangeParams, x1: np.ndarray, x2: np.ndarray):
    """Inertia M(x1), Coriolis C(x1, x2) and gravity G(x1) matrices."""
    t1, t2, t3, t4, t5, t6 = par.theta
    g = par.gravity
    c12 = math.cos(x1[1])
    s12 = math.sin(x1[1])
    M = np.array([[t1 + t2 + 2.0 * t3 * c12, t2 + t3 * c12],
                  [t2 + t3 * c12, t4]])
    C = np.array([[-t3 * s12 * x2[0], -2.0 * t3 * s12 * x2[0]],
                  [0.0, t3 * s12 * x2[1]]])
    G = np.array([t5 * g * math.cos(x1[0]) + t6 * g * math.cos(x1[0] + x1[1]),
                  t6 * g * math.cos(x1[0] + x1[1])])
    return M, C, G


def el_acceleration(true_par: EulerLagrangeParams,
                    nominal_par: EulerLagrangeParams,
                    x1: np.ndarray, x2: np.ndarray,
                    u: np.ndarray) -> np.ndarray:
    """Closed-loop acceleration of the Euler-Lagrange plant.

    The chain controller's output u is applied through inverse dynamics
    computed with nominal parameters, u_applied = M_hat u + C_hat x2 + G_hat;
    the true plant responds with x2' = M^{-1}(u_applied - C x2 - G).  The
    parameter mismatch is the bounded matched disturbance the robust term
    absorbs.
    """
    M_hat, C_hat, G_hat = el_matrices(nominal_par, x1, x2)
    M, C, G = el_matrices(true_par, x1, x2)
    u_applied = M_hat @ u + C_hat @ x2 + G_hat
    return np.linalg.solve(M, u_applied - C @ x2 - G)
