"""Scenario files: JSON in, a ready-to-integrate closed loop out.

A scenario has sections {clock, network, costs, gains, agents, solver,
monitors}.  Loading resolves every constant (spectrum, curvature, c1..c*,
v1/v2), checks the gain growth criteria, and refuses to build when a
criterion fails unless the scenario sets "acknowledge_criteria_override":
true.  Monitor evaluation lives here too, so the command-line layer stays a
thin shell.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import chain_ctrl, strictfb_ctrl
from .costs import CostSet, cost_from_dict, default_box
from .errors import ScenarioError
from .generator import (GeneratorConstants, GeneratorState, MonitorReport,
                        conservation_monitor, envelope_monitor, error_state,
                        generator_constants)
from .graph import Network, build_network, require_connected
from .sim_engine import (CoupledSystem, SolverSettings, Trajectory,
                         make_disturbance)
from .timegain import (GainFunction, GrowthCriterion, PrescribedClock,
                       check_growth_criterion, log_grid)

_SECTIONS = ("clock", "network", "costs", "gains", "agents", "solver",
             "monitors")

_PHI_REGISTRY = {
    "identity": lambda x: x,
    "sin": np.sin,
    "tanh": np.tanh,
}


def _fail(path: str, where: str, msg: str) -> ScenarioError:
    return ScenarioError(f"{path}: {where}: {msg}")


@dataclass
class ScenarioBuild:
    """Everything a run needs, with provenance for the manifest."""

    name: str
    path: str
    sha256: str
    clock: PrescribedClock
    net: Network
    costs: CostSet
    alpha: GainFunction
    sys: CoupledSystem
    y0: np.ndarray
    settings: SolverSettings
    monitors: dict
    criterion_reports: list
    constants: dict
    override_acknowledged: bool
    seed: int = 0

    @property
    def criteria_ok(self) -> bool:
        return all(r.passed and r.coupling_passed
                   for r in self.criterion_reports)


@dataclass
class Scenario:
    """Parsed scenario file; build() resolves it into a ScenarioBuild."""

    raw: dict
    path: str = "<dict>"

    @property
    def name(self) -> str:
        return self.raw.get("name", "unnamed")

    def build(self, seed: int | None = None,
              guard_frac: float | None = None) -> ScenarioBuild:
        return _build(self, seed=seed, guard_frac=guard_frac)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: top level must be a JSON object")
    return Scenario(raw, path)


def scenario_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _require(raw: dict, key: str, path: str, where: str = "top level"):
    if key not in raw:
        raise _fail(path, where, f"missing required key {key!r}")
    return raw[key]


def _build(sc: Scenario, seed: int | None = None,
           guard_frac: float | None = None) -> ScenarioBuild:
    raw, path = sc.raw, sc.path
    for section in _SECTIONS:
        _require(raw, section, path)

    ck = raw["clock"]
    clock = PrescribedClock(
        t0=float(ck.get("t0", 0.0)),
        T=float(_require(ck, "T", path, "clock")),
        guard_frac=float(guard_frac if guard_frac is not None
                         else ck.get("guard_frac", 0.999)))

    nw = raw["network"]
    net = build_network(int(_require(nw, "n_agents", path, "network")),
                        _require(nw, "edges", path, "network"))
    require_connected(net)

    cs = raw["costs"]
    dim = int(_require(cs, "dim", path, "costs"))
    agent_costs = [cost_from_dict(d)
                   for d in _require(cs, "agents", path, "costs")]
    if len(agent_costs) != net.n_agents:
        raise _fail(path, "costs", "one cost per agent required")
    box = np.asarray(cs["box"], dtype=float) if "box" in cs else default_box(dim)
    costs = CostSet(agent_costs, dim, box)

    consts = generator_constants(costs.rho_c, costs.varrho_c,
                                 net.lambda2, net.lambdaN)
    constants = {
        "lambda2": net.lambda2, "lambdaN": net.lambdaN,
        "rho_c": costs.rho_c, "varrho_c": costs.varrho_c,
        "c1": consts.c1, "c2": consts.c2, "c3": consts.c3,
        "c_star": consts.c_star,
    }

    gains = raw["gains"]
    alpha = GainFunction.from_dict(_require(gains, "alpha", path, "gains"))
    alpha.validate()
    override = bool(gains.get("acknowledge_criteria_override", False))
    grid = log_grid(clock.mu0, clock.mu_guard, 1000)
    reports = [check_growth_criterion(
        alpha, GrowthCriterion("generator", c_star=consts.c_star), grid)]

    ag = raw["agents"]
    controller = ag.get("controller", "none")
    chain_cfg = None
    sf_cfg = None
    plant = "none"
    el_true = el_nominal = None
    thetas = None
    disturbance = None
    dist_seed = 0
    if controller == "chain":
        m = int(_require(ag, "order", path, "agents"))
        K = ag.get("K", "auto")
        alpha_x = GainFunction.from_dict(
            _require(gains, "alpha_x", path, "gains"))
        alpha_x.validate()
        a_s = gains.get("alpha_s", "auto_dc2")
        alpha_s = None if a_s == "auto_dc2" else GainFunction.from_dict(a_s)
        psi_val = float(ag.get("psi", 1.0))
        chain_cfg = chain_ctrl.make_chain_config(
            m, dim, float(ag.get("v", 1.0)), alpha_x, clock.mu_guard,
            alpha_s=alpha_s, K=None if K == "auto" else K,
            psi=lambda x, _p=psi_val: _p, mu0=clock.mu0)
        constants["v1"] = chain_cfg.v1
        constants["v2"] = chain_cfg.v2
        reports.append(chain_ctrl.check_dc1(chain_cfg, alpha, consts.c_star,
                                            clock.mu0))
        plant = ag.get("plant", "chain")
        if plant == "euler_lagrange":
            if m != 2:
                raise _fail(path, "agents", "euler_lagrange needs order 2")
            theta_true = tuple(_require(ag, "el_true_theta", path, "agents"))
            scale = float(ag.get("el_nominal_scale", 0.9))
            gravity = float(ag.get("gravity", 9.8))
            el_true = chain_ctrl.EulerLagrangeParams(theta_true, gravity)
            el_nominal = chain_ctrl.EulerLagrangeParams(
                tuple(scale * t for t in theta_true), gravity)
        if "disturbance" in ag:
            dd = ag["disturbance"]
            dist_seed = int(seed if seed is not None else dd.get("seed", 0))
            disturbance = make_disturbance(dist_seed, net.n_agents, dim,
                                           float(dd.get("amplitude", 0.1)))
    elif controller == "strict_feedback":
        m = int(_require(ag, "order", path, "agents"))
        l = float(ag.get("l", 1.0))
        if "c" in ag:
            c = tuple(float(v) for v in ag["c"])
            upsilon = tuple(float(v)
                            for v in _require(ag, "upsilon", path, "agents"))
            sigma = float(_require(ag, "sigma", path, "agents"))
        else:
            par = strictfb_ctrl.select_parameters(
                m, l, float(ag.get("sigma_prime", 1.0)),
                float(ag.get("rho", 10.0)), float(ag.get("margin", 1.0)))
            c, upsilon, sigma = par.c, par.upsilon, par.sigma
        alpha_xi = GainFunction.from_dict(
            _require(gains, "alpha_xi", path, "gains"))
        alpha_xi.validate()
        phi_ids = ag.get("phi", ["identity"] * (m - 1))
        try:
            phis = tuple(_PHI_REGISTRY[p] for p in phi_ids)
        except KeyError as exc:
            raise _fail(path, "agents", f"unknown phi id {exc}") from exc
        sf_cfg = strictfb_ctrl.SfControllerConfig(
            m, dim, l, c, upsilon, sigma, alpha_xi, clock.mu_guard, phis)
        L = sf_cfg.L
        reports.append(strictfb_ctrl.check_dcxi(
            alpha_xi, alpha, consts.c_star, float(L[1]), clock.mu0,
            clock.mu_guard))
        plant = "strict_feedback"
        thetas = np.asarray(_require(ag, "thetas", path, "agents"),
                            dtype=float)
    elif controller != "none":
        raise _fail(path, "agents", f"unknown controller {controller!r}")

    failed = [r for r in reports if not (r.passed and r.coupling_passed)]
    if failed and not override:
        kinds = ", ".join(r.kind for r in failed)
        raise _fail(path, "gains",
                    f"growth criterion failed ({kinds}); worst margin "
                    f"{failed[0].worst_margin:.3g} at s={failed[0].worst_s:.4g}."
                    " Set \"acknowledge_criteria_override\": true to run anyway")

    offsets = None
    if "offsets" in ag:
        offsets = np.asarray(ag["offsets"], dtype=float)

    sys = CoupledSystem(clock, net, costs, alpha, plant=plant,
                        chain_cfg=chain_cfg, sf_cfg=sf_cfg, el_true=el_true,
                        el_nominal=el_nominal, offsets=offsets,
                        thetas=thetas, disturbance=disturbance)

    # initial state
    varpi0 = np.asarray(_require(ag, "varpi_init", path, "agents"),
                        dtype=float)
    p_init = ag.get("p_init", "zeros")
    if p_init == "zeros":
        p0 = np.zeros((net.n_agents, dim))
    else:
        p0 = np.asarray(p_init, dtype=float)
        if float(np.abs(p0.sum(axis=0)).max()) > 1e-12:
            raise _fail(path, "agents", "p_init must sum to zero")
    gen0 = GeneratorState(varpi0, p0)
    plants = ctrls = None
    if plant != "none":
        plants = [np.asarray(x, dtype=float)
                  for x in _require(ag, "x_init", path, "agents")]
    if plant == "strict_feedback":
        th0 = ag.get("theta_hat_init", [0.0] * net.n_agents)
        ctrls = []
        for i in range(net.n_agents):
            xi_f0 = np.zeros((sf_cfg.m - 1) * dim)
            ctrls.append(np.concatenate([[float(th0[i])], xi_f0]))
    y0 = sys.pack(gen0, plants, ctrls)

    sv = raw["solver"]
    settings = SolverSettings(
        method=sv.get("method", "rk45"), dt=float(sv.get("dt", 1e-3)),
        dt_max=float(sv.get("dt_max", 1e-2)),
        rel_tol=float(sv.get("rel_tol", 1e-8)),
        abs_tol=float(sv.get("abs_tol", 1e-10)),
        log_every=int(sv.get("log_every", 1)),
        mu_dt_coef=float(sv.get("mu_dt_coef", 0.05)))

    monitors = dict(raw["monitors"])
    return ScenarioBuild(sc.name, path, scenario_hash(raw), clock, net,
                         costs, alpha, sys, y0, settings, monitors, reports,
                         constants, override, seed=dist_seed)


# --- derived channels and monitor evaluation --------------------------------

def derived_series(build: ScenarioBuild, traj: Trajectory,
                   z_star: np.ndarray) -> dict:
    """Per-logged-point verification channels.

    Always: mu, e_r_norm, p_sum (K, dim), track_err (K, N).  Chain plants
    add e_s_norm / e_tilde_norm (max over agents); strict-feedback adds
    theta_hat, tau, stage norms and the scaled error norm.
    """
    sys = build.sys
    n = build.net.n_agents
    K = traj.times.shape[0]
    z_star = np.asarray(z_star, dtype=float)
    out = {
        "mu": np.empty(K),
        "e_r_norm": np.empty(K),
        "p_sum": np.empty((K, build.costs.dim)),
        "track_err": np.empty((K, n)),
    }
    chainlike = sys.plant in ("chain", "euler_lagrange")
    sf = sys.plant == "strict_feedback"
    if chainlike or sf:
        out["e_s_norm"] = np.empty((K, n))
        out["e_tilde_norm"] = np.empty((K, n))
    if sf:
        out["theta_hat"] = np.empty((K, n))
        out["tau"] = np.empty((K, n))
        out["x2_norm"] = np.empty((K, n))
        out["x3_norm"] = np.empty((K, n)) if sys.sf_cfg.m >= 3 else None
        if out["x3_norm"] is None:
            del out["x3_norm"]
    for k in range(K):
        t = traj.times[k]
        y = traj.states[k]
        mu = build.clock.mu(t)
        out["mu"][k] = mu
        gen = sys.gen_state(y)
        err = error_state(gen, build.costs, z_star)
        out["e_r_norm"][k] = err.norm
        out["p_sum"][k] = gen.p.sum(axis=0)
        for i in range(n):
            target = z_star if sys.offsets is None else z_star + sys.offsets[i]
            if sys.plant == "none":
                out["track_err"][k, i] = float(
                    np.linalg.norm(gen.varpi[i] - z_star))
                continue
            x = sys.plant_state(y, i)
            out["track_err"][k, i] = float(np.linalg.norm(x[0] - target))
            ref = sys.reference(gen.varpi, i)
            if chainlike:
                view = chain_ctrl.chain_error_view(x, ref, mu, sys.chain_cfg)
                out["e_s_norm"][k, i] = float(np.linalg.norm(view["e_s"]))
                out["e_tilde_norm"][k, i] = float(
                    np.linalg.norm(view["e_tilde_s"]))
            else:
                theta_hat, xi_f = sys.ctrl_state(y, i)
                cfg = sys.sf_cfg
                out["e_s_norm"][k, i] = float(np.linalg.norm(
                    strictfb_ctrl.error_vector(x, ref, xi_f, theta_hat)))
                out["e_tilde_norm"][k, i] = float(np.linalg.norm(
                    strictfb_ctrl.scaled_error_vector(
                        x, ref, xi_f, theta_hat, float(sys.thetas[i]), mu,
                        cfg)))
                view = strictfb_ctrl.virtual_controls(x, ref, xi_f,
                                                      theta_hat, mu, cfg)
                out["theta_hat"][k, i] = theta_hat
                out["tau"][k, i] = strictfb_ctrl.tau_value(
                    x, view["x_tilde"], mu, cfg)
                out["x2_norm"][k, i] = float(np.linalg.norm(x[1]))
                if "x3_norm" in out:
                    out["x3_norm"][k, i] = float(np.linalg.norm(x[2]))
    return out


def evaluate_monitors(build: ScenarioBuild, traj: Trajectory,
                      z_star: np.ndarray, derived: dict | None = None) -> list:
    """Run every monitor the scenario lists; returns MonitorReport objects."""
    if derived is None:
        derived = derived_series(build, traj, z_star)
    times = traj.times
    consts = GeneratorConstants(build.constants["c1"], build.constants["c2"],
                                build.constants["c3"],
                                build.constants["c_star"])
    reports = []
    for name, params in build.monitors.items():
        params = params or {}
        if name == "conservation":
            reports.append(conservation_monitor(
                times, derived["p_sum"], tol=float(params.get("tol", 1e-8))))
        elif name == "envelope":
            reports.append(envelope_monitor(
                times, derived["e_r_norm"], build.clock, build.alpha, consts,
                slack=float(params.get("slack", 0.05))))
        elif name == "tracking":
            tol = float(params.get("tol", 1e-2))
            final = float(derived["track_err"][-1].max())
            reports.append(MonitorReport("tracking", final <= tol,
                                         final / tol,
                                         None if final <= tol
                                         else float(times[-1])))
        elif name == "chain_decay":
            worst = None
            for i in range(build.net.n_agents):
                rep = chain_ctrl.chain_decay_monitor(
                    times, derived["e_s_norm"][:, i],
                    derived["e_tilde_norm"][:, i], build.sys.chain_cfg,
                    build.clock)
                if worst is None or (not rep.passed and worst.passed) or (
                        rep.max_ratio > worst.max_ratio):
                    worst = rep
            reports.append(worst)
        elif name == "invariant_set":
            h = params.get("h")
            worst = None
            for i in range(build.net.n_agents):
                norms = derived["e_tilde_norm"][:, i]
                hi = float(h) if h is not None else (
                    strictfb_ctrl.default_invariant_radius(float(norms[0])))
                rep = strictfb_ctrl.invariant_set_monitor(
                    times, norms, hi, slack=float(params.get("slack", 0.02)))
                if worst is None or (not rep.passed and worst.passed) or (
                        rep.max_ratio > worst.max_ratio):
                    worst = rep
            reports.append(worst)
        elif name == "sf_decay":
            worst = None
            for i in range(build.net.n_agents):
                rep = strictfb_ctrl.sf_decay_monitor(
                    times, derived["mu"], derived["e_s_norm"][:, i],
                    build.sys.sf_cfg)
                if worst is None or rep.max_ratio > worst.max_ratio:
                    worst = rep
            reports.append(worst)
        elif name == "theta_hat_envelope":
            worst = None
            for i in range(build.net.n_agents):
                rep = strictfb_ctrl.theta_hat_monitor(
                    times, derived["mu"], derived["theta_hat"][:, i],
                    derived["tau"][:, i], build.sys.sf_cfg)
                if worst is None or (not rep.passed and worst.passed) or (
                        rep.max_ratio > worst.max_ratio):
                    worst = rep
            reports.append(worst)
        else:
            raise ScenarioError(f"{build.path}: monitors: unknown monitor "
                                f"{name!r}")
    return reports
