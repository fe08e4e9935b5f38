"""Oracle-equivalence and invariant suites behind ``twostage validate``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .bilevel import (build_milp, decision_kkt, enumeration_oracle, hour_data,
                      solve_da_deterministic, solve_hour, verify_duality_identity)
from .clearing import solve_clearing, welfare
from .config import RunConfig
from .dro import (ZERO_AMBIGUITY, closed_form_worst_case, estimate_ambiguity,
                  sample_support_oracle, solve_hour_dro, worst_case_expectation)
from .grid import ac_power_flow, read_loads
from .market import ImbalancePriceModel, read_curves, read_forecast
from .rtmarket import (DerCapability, complementarity, der_capabilities, project_feasible,
                       run_rt_market, stationarity)
from .scenario import sample_forecast_errors, sub_rng
from .workflow import load_market, load_rt

SUITES = ("kkt", "dro", "projection", "powerflow", "convergence")
TOL = 1e-6


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def data_file(name: str) -> Path:
    return Path(str(resources.files("twostage") / "data" / name))


# -- kkt ---------------------------------------------------------------------------

def suite_kkt(cfg: RunConfig) -> list[Check]:
    checks = []
    curves = read_curves(data_file("desk_curves.csv"))
    forecast = read_forecast(data_file("desk_forecast.csv"), 15.0, 5.0)
    prices = ImbalancePriceModel()
    milp = solve_da_deterministic(build_milp(curves, forecast, prices))
    oracle = enumeration_oracle(curves, forecast, prices, grid_resolution=11)
    gap = milp.objective - oracle.objective
    checks.append(Check("desk instance vs enumeration oracle", gap <= TOL,
                        f"MILP {milp.objective:.6f}, oracle {oracle.objective:.6f}"))

    curves, forecast = load_market(cfg)
    day = solve_da_deterministic(build_milp(curves, forecast, cfg.prices), cfg.mip_gap)
    worst_kkt = max(decision_kkt(h).worst() for h in day.hours)
    worst_dual = max(verify_duality_identity(h) for h in day.hours)
    checks.append(Check("clearing optimality residuals", worst_kkt <= TOL,
                        f"worst {worst_kkt:.2e} over {len(day)} hours"))
    checks.append(Check("strong-duality identity", worst_dual <= TOL, f"worst {worst_dual:.2e}"))
    # the dispatch can be degenerate, the welfare it attains cannot
    w_err = 0.0
    for h in day.hours:
        c = h.clearing
        re = solve_clearing(h.inputs.supply, h.inputs.demand, (h.alpha_s, h.E_das_max),
                            (h.alpha_b, h.E_dab_max))
        w_milp = welfare(h.inputs, c.dso_supply, c.dso_demand, c.supply_dispatch,
                         c.demand_dispatch)
        w_lp = welfare(h.inputs, re.dso_supply, re.dso_demand, re.supply_dispatch,
                       re.demand_dispatch)
        w_err = max(w_err, abs(w_milp - w_lp) / max(1.0, abs(w_lp)))
    checks.append(Check("re-cleared welfare matches", w_err <= TOL, f"worst {w_err:.2e}"))
    return checks


# -- dro ---------------------------------------------------------------------------

def suite_dro(cfg: RunConfig) -> list[Check]:
    checks = []
    curves, forecast = load_market(cfg)
    sigma = cfg.sigma if cfg.sigma > 0 else 0.2
    samples = sample_forecast_errors(sigma, forecast, cfg.n_samples, cfg.seed)
    amb_set = estimate_ambiguity(samples.centered())
    t = cfg.rt_hour
    amb = amb_set[t]
    rng = sub_rng(cfg.seed, "validate-dro")
    worst_low = worst_closed = worst_corner = 0.0
    for _ in range(100):
        f = tuple(rng.normal(0.0, 10.0, 4))
        wc = worst_case_expectation(f, amb)
        worst_low = max(worst_low, sample_support_oracle(f, amb, samples.centered()[t]) - wc)
        worst_closed = max(worst_closed, abs(wc - closed_form_worst_case(f, amb)))
        worst_corner = max(worst_corner, abs(wc - sample_support_oracle(f, amb, amb.corners())))
    checks.append(Check("worst case dominates sample support", worst_low <= TOL,
                        f"largest excess {worst_low:.2e}"))
    checks.append(Check("cutting planes match closed form", worst_closed <= TOL,
                        f"largest gap {worst_closed:.2e}"))
    checks.append(Check("extreme-point atoms attain the worst case", worst_corner <= TOL,
                        f"largest gap {worst_corner:.2e}"))
    data = hour_data(curves, forecast, cfg.prices)[t]
    det, _ = solve_hour(build_milp(curves, forecast, cfg.prices).hours[t], cfg.mip_gap)
    zero = solve_hour_dro(data, ZERO_AMBIGUITY, cfg.mip_gap).decision
    checks.append(Check("zero ambiguity equals deterministic",
                        abs(zero.objective - det.objective) <= TOL,
                        f"{zero.objective:.6f} vs {det.objective:.6f}"))
    objs = [solve_hour_dro(data, amb.scaled(s), cfg.mip_gap).decision.objective
            for s in (1.0, 2.0, 4.0)]
    mono = all(b >= a - TOL for a, b in zip(objs, objs[1:]))
    checks.append(Check("objective monotone under scaling x1, x2, x4", mono,
                        ", ".join(f"{o:.4f}" for o in objs)))
    return checks


# -- projection --------------------------------------------------------------------

GRID_STEP = 1e-3


def grid_projection(p: float, q: float, cap: DerCapability, step: float = GRID_STEP):
    """Nearest point over a ``step`` grid of active powers; for each the
    nearest reactive power is the clamp of ``q`` to the disc chord."""
    lo, hi = max(cap.p_min, -cap.s_max), min(cap.p_max, cap.s_max)
    n = max(2, int(math.ceil((hi - lo) / step)) + 1)
    ps = np.linspace(lo, hi, n)
    h = np.sqrt(np.maximum(cap.s_max ** 2 - ps ** 2, 0.0))
    qs = np.clip(q, -h, h)
    d2 = (ps - p) ** 2 + (qs - q) ** 2
    i = int(np.argmin(d2))
    return float(ps[i]), float(qs[i])


def random_capability(rng) -> DerCapability:
    s = float(rng.uniform(0.05, 1.0))
    a, b = np.clip(np.sort(rng.uniform(-1.2 * s, 1.2 * s, 2)), -s, s)
    return DerCapability(float(a), float(b), s)


def suite_projection(cfg: RunConfig, n: int = 1000) -> list[Check]:
    rng = sub_rng(cfg.seed, "validate-projection")
    worst_gap = worst_pos = worst_idem = worst_feas = 0.0
    for _ in range(n):
        cap = random_capability(rng)
        p, q = rng.normal(0.0, 1.0, 2) * cap.s_max
        pp, qq = project_feasible(p, q, cap)
        gp, gq = grid_projection(p, q, cap)
        d_proj = math.hypot(pp - p, qq - q)
        d_grid = math.hypot(gp - p, gq - q)
        worst_gap = max(worst_gap, d_proj - d_grid, d_grid - d_proj - GRID_STEP)
        # for a convex set ||y - proj||^2 <= d(x, y)^2 - d(x, proj)^2
        bound = math.sqrt(max(d_grid ** 2 - d_proj ** 2, 0.0))
        worst_pos = max(worst_pos, math.hypot(gp - pp, gq - qq) - bound)
        p2, q2 = project_feasible(pp, qq, cap)
        worst_idem = max(worst_idem, abs(p2 - pp), abs(q2 - qq))
        if not cap.contains(pp, qq, 1e-12):
            worst_feas = max(worst_feas, 1.0)
    return [Check("distance matches grid search", worst_gap <= 1e-12,
                  f"{n} points, worst {worst_gap:.2e}"),
            Check("grid optimum lies within the convexity bound", worst_pos <= 1e-9,
                  f"worst {worst_pos:.2e}"),
            Check("idempotent", worst_idem <= 1e-12, f"worst {worst_idem:.2e}"),
            Check("feasible", worst_feas == 0.0, "all projections inside the set"
                  if worst_feas == 0.0 else "infeasible projection found")]


# -- powerflow -----------------------------------------------------------------------

def node_power_mismatch(feeder, V: np.ndarray, p, q) -> float:
    """Largest ``|V_j conj(I_j) - s_j|`` with injections ``I_j`` rebuilt from
    the line currents ``(V_parent - V_child) / z``."""
    r, x = feeder.impedances()
    par = feeder.parents()[1:]
    Vf = np.concatenate([[feeder.v0], V])
    I_line = (Vf[par] - Vf[1:]) / (r + 1j * x)  # into child j+1
    inj = -I_line.astype(complex)
    for j in range(feeder.N):
        if par[j] > 0:
            inj[par[j] - 1] += I_line[j]
    s = np.asarray(p) + 1j * np.asarray(q)
    return float(np.max(np.abs(V * np.conj(inj) - s)))


def powerflow_cases(cfg: RunConfig, setup):
    feeder = setup.feeder
    if cfg.feeder_loads is not None:
        load_p, load_q = read_loads(cfg.feeder_loads, feeder)
    else:
        load_p, load_q = setup.traces.load_p[0], setup.traces.load_q[0]
    der = np.zeros(feeder.N)
    der[feeder.der_nodes - 1] = [d.s_max for d in feeder.ders]
    return {"rated load": (-load_p, -load_q),
            "rated generation, half load": (der - 0.5 * load_p, -0.5 * load_q),
            "rated generation, no load": (der, np.zeros(feeder.N))}


def suite_powerflow(cfg: RunConfig) -> list[Check]:
    setup = load_rt(cfg)
    checks = []
    for name, (p, q) in powerflow_cases(cfg, setup).items():
        res = ac_power_flow(setup.feeder, p, q, full=True)
        err = float(np.max(np.abs(setup.sens.voltages(p, q) - res.v)))
        mis = node_power_mismatch(setup.feeder, res.voltages, p, q)
        checks.append(Check(f"{name}: linear vs sweep", err <= 0.01,
                            f"max error {err:.4f} pu, {res.iterations} sweeps"))
        checks.append(Check(f"{name}: sweep solves the power flow",
                            res.iterations < 100 and mis <= 1e-8, f"mismatch {mis:.1e} pu"))
    return checks


# -- convergence ----------------------------------------------------------------------

def suite_convergence(cfg: RunConfig, steps: int = 5000) -> list[Check]:
    setup = load_rt(cfg)
    rc = cfg.rt()
    # hold the first step's reference energy at the forecast net position
    curves, forecast = load_market(cfg)
    t = cfg.rt_hour
    n = cfg.grid.steps_per_slot
    E = np.full(steps, (forecast.generation[t] - forecast.load[t]) / n)
    trace = run_rt_market(setup.feeder, setup.sens, E, setup.traces, rc, steps=steps,
                          static=True)
    below = np.flatnonzero(trace.residuals < 1e-4)
    first = int(below[0]) if below.size else -1
    final = trace.states[-1]
    caps = der_capabilities(setup.feeder, setup.traces.pv[0])
    stat = stationarity(final, caps, setup.feeder.der_nodes)
    comp = complementarity(final, rc)
    return [Check("fixed-point residual below 1e-4", first >= 0,
                  f"first at step {first}, final {trace.residuals[-1]:.2e}"),
            Check("interior stationarity", stat <= 1e-4, f"{stat:.2e}"),
            Check("dual complementarity", comp <= 1e-6, f"{comp:.2e}")]


RUNNERS = {"kkt": suite_kkt, "dro": suite_dro, "projection": suite_projection,
           "powerflow": suite_powerflow, "convergence": suite_convergence}


def run_suite(name: str, cfg: RunConfig) -> list[Check]:
    return RUNNERS[name](cfg)
