"""Glue between a run configuration and the market modules: loading the
inputs, the day-ahead solve, the real-time run and their summaries."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bilevel import DaDecision, write_decision
from .config import RunConfig
from .dro import LdrPolicy, estimate_ambiguity, solve_da_dro, write_policy
from .grid import FeederModel, Sensitivity, load_feeder, sensitivity_matrices
from .market import read_curves, read_forecast
from .rtmarket import RtTrace, run_rt_market, uncontrolled_voltages, write_trace_csv
from .scenario import (ForecastSampleSet, Traces, load_traces, rt_reference,
                       sample_forecast_errors)

VIOLATION_TOL = 1e-4  # pu above the limit before a step counts as a violation
SETTLE_STEPS = 60     # transient excluded from the settled voltage maximum
ALLOWANCE = 0.002     # pu overshoot attributable to the dual regularisation


def fmt(x: float) -> str:
    return f"{x:.10g}"


def write_summary(path, items: dict) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items.items()))


def read_summary(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# -- day-ahead ---------------------------------------------------------------------

@dataclass
class DaRun:
    sigma: float
    decision: DaDecision
    policy: LdrPolicy
    samples: ForecastSampleSet


def load_market(cfg: RunConfig):
    return read_curves(cfg.curves), read_forecast(cfg.forecast, cfg.g_cap, cfg.tr_max)


def solve_day_ahead(cfg: RunConfig, sigma: float | None = None) -> DaRun:
    """Robust day-ahead bid for ``sigma`` (zero sigma gives the deterministic
    bid, since the ambiguity set collapses to a point mass)."""
    sigma = cfg.sigma if sigma is None else sigma
    curves, forecast = load_market(cfg)
    samples = sample_forecast_errors(sigma, forecast, cfg.n_samples, cfg.seed)
    amb = estimate_ambiguity(samples.centered())
    decision, policy = solve_da_dro(curves, forecast, cfg.prices, amb, cfg.mip_gap)
    return DaRun(sigma, decision, policy, samples)


def da_summary(run: DaRun) -> dict:
    d = run.decision
    return {"sigma": fmt(run.sigma),
            "objective_eur": fmt(d.objective),
            "offered_energy_mwh": fmt(d.offered_energy),
            "purchased_energy_mwh": fmt(sum(h.E_dab for h in d.hours)),
            "net_sale_mwh": fmt(sum(h.net_sale for h in d.hours)),
            "hours_optimal": sum(h.status.value == "Optimal" for h in d.hours),
            "status": "optimal" if d.all_optimal else "incomplete"}


def write_da(out: Path, run: DaRun) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_decision(out / "decision.csv", run.decision)
    write_policy(out / "policy.csv", run.policy)
    summary = da_summary(run)
    write_summary(out / "da_summary.txt", summary)
    return summary


# -- real-time -----------------------------------------------------------------------

@dataclass
class RtSetup:
    feeder: FeederModel
    sens: Sensitivity
    traces: Traces


def load_rt(cfg: RunConfig) -> RtSetup:
    feeder = load_feeder(cfg.feeder_lines, cfg.feeder_nodes, cfg.base_mva, cfg.base_kv,
                         cfg.v0_pu, cfg.v_min, cfg.v_max)
    traces = load_traces(cfg.pv_trace, cfg.load_trace, cfg.grid, feeder.N,
                         cfg.rt_hour * cfg.dt_da, cfg.rt_steps, cfg.base_mva, cfg.trace_unit)
    return RtSetup(feeder, sensitivity_matrices(feeder), traces)


def rt_energy(cfg: RunConfig, decision: DaDecision) -> np.ndarray:
    """Per-step reference (MWh) for the configured real-time hour."""
    ref = rt_reference(decision, cfg.grid).hour(cfg.rt_hour)
    return np.asarray(ref[:cfg.rt_steps])


def run_rt(cfg: RunConfig, setup: RtSetup, decision: DaDecision,
           gamma: float | None = None) -> tuple[RtTrace, np.ndarray]:
    E = rt_energy(cfg, decision)
    trace = run_rt_market(setup.feeder, setup.sens, E, setup.traces, cfg.rt(gamma),
                          steps=cfg.rt_steps)
    return trace, E


def rt_summary(cfg: RunConfig, setup: RtSetup, trace: RtTrace, gamma: float) -> dict:
    rc = cfg.rt(gamma)
    v_unc = uncontrolled_voltages(setup.feeder, setup.traces, cfg.rt_steps, rc, setup.sens)
    unc_max = v_unc.max(axis=1)
    ctl_max = trace.v_max
    abs_imb = np.abs(trace.imbalance) * cfg.base_mva * cfg.dt_rt / 3600.0
    settle = min(SETTLE_STEPS, len(ctl_max) - 1)
    alphas = np.array([s.alpha for s in trace.states])
    return {"gamma": fmt(gamma),
            "steps": len(trace.states),
            "reference_energy_mwh": fmt(float(trace.E_rt.sum()) * cfg.base_mva * cfg.dt_rt / 3600.0),
            "uncontrolled_max_voltage_pu": fmt(float(unc_max.max())),
            "uncontrolled_violation_steps": int(np.sum(unc_max > cfg.v_max + VIOLATION_TOL)),
            "voltage_violation": "yes" if unc_max.max() > cfg.v_max + VIOLATION_TOL else "no",
            "controlled_max_voltage_pu": fmt(float(ctl_max.max())),
            "controlled_max_voltage_settled_pu": fmt(float(ctl_max[settle:].max())),
            "controlled_violation_steps": int(np.sum(ctl_max > cfg.v_max + VIOLATION_TOL)),
            "controlled_steps_beyond_allowance": int(np.sum(ctl_max > cfg.v_max + ALLOWANCE)),
            "mean_abs_imbalance_mwh": fmt(trace.mean_abs_imbalance()),
            "max_abs_imbalance_mwh": fmt(float(abs_imb.max())),
            "incentive_magnitude_pu": fmt(trace.incentive_magnitude()),
            "alpha_min_pu": fmt(float(alphas.min())),
            "alpha_max_pu": fmt(float(alphas.max())),
            "final_residual": fmt(float(trace.residuals[-1]))}


def write_rt(out: Path, cfg: RunConfig, setup: RtSetup, trace: RtTrace, E: np.ndarray,
             gamma: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / "rt_trace.csv", trace, E)
    summary = rt_summary(cfg, setup, trace, gamma)
    write_summary(out / "rt_summary.txt", summary)
    return summary
