"""Online incentive-based balancing controller.

Each real-time step measures voltages, moves the voltage duals along the
regularised Lagrangian gradient, turns duals and the imbalance gradient into
per-node incentives and lets every DER take one projected gradient step on
its own cost plus incentive payment. Quantities are per-unit internally;
energy inside the controller is counted in per-unit power times one
real-time slot.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .grid import FeederModel, Sensitivity, ac_power_flow
from .scenario import MisalignedGrids, TraceGap, Traces

RT_COLUMNS = ["k", "node", "p_kw", "q_kvar", "v_pu", "alpha", "beta", "lambda_lo",
              "lambda_hi", "D_value", "E_rt_mwh"]
FEEDBACK_SOURCES = ("ac-sweep", "linear")


class EmptyCapability(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DerCapability:
    """``{p in [p_min, p_max], p**2 + q**2 <= s_max**2}`` with cost
    ``a (p - p_pv)**2 + b q**2``; all in the same power unit."""
    p_min: float
    p_max: float
    s_max: float
    a: float = 3.0
    b: float = 1.0
    p_pv: float = 0.0

    def __post_init__(self):
        if self.s_max < 0 or self.p_min > self.p_max or self.p_min > self.s_max \
                or self.p_max < -self.s_max:
            raise EmptyCapability(f"empty capability set {self}")

    def contains(self, p: float, q: float, tol: float = 1e-9) -> bool:
        return (self.p_min - tol <= p <= self.p_max + tol
                and math.hypot(p, q) <= self.s_max + tol)


def project_feasible(p: float, q: float, cap: DerCapability) -> tuple[float, float]:
    """Exact Euclidean projection onto the box-disc intersection.

    Candidates: the box clamp (when it lands in the disc), the radial
    projection onto the circle (when it lands in the box) and the two
    box-edge chords clamped to the disc. The nearest feasible one wins.
    """
    lo, hi, s = cap.p_min, cap.p_max, cap.s_max
    pc = min(max(p, lo), hi)
    if pc * pc + q * q <= s * s:
        return pc, q
    cands = []
    r = math.hypot(p, q)
    if r > 0.0:
        pr, qr = p * s / r, q * s / r
        if lo <= pr <= hi:
            cands.append((pr, qr))
    for pe in (lo, hi):
        if abs(pe) <= s:
            h = math.sqrt(s * s - pe * pe)
            cands.append((pe, min(max(q, -h), h)))
    if not cands:
        raise EmptyCapability("no feasible point")
    return min(cands, key=lambda c: (c[0] - p) ** 2 + (c[1] - q) ** 2)


@dataclass(frozen=True)
class RtConfig:
    gamma: float = 30.0
    eta: float = 2e-4
    eps_p: float = 5e-3
    eps_q: float = 2e-2
    eps_lambda: float = 20.0
    v_min: float = 0.95
    v_max: float = 1.045
    dt_rt: float = 5.0
    feedback: str = "ac-sweep"

    def __post_init__(self):
        if self.gamma < 0 or self.eta <= 0:
            raise ValueError("need gamma >= 0 and eta > 0")
        if min(self.eps_p, self.eps_q, self.eps_lambda) <= 0:
            raise ValueError("step sizes must be positive")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.feedback not in FEEDBACK_SOURCES:
            raise ValueError(f"feedback must be one of {FEEDBACK_SOURCES}")


@dataclass
class RtState:
    """Controller state at step ``k``; DER vectors follow the feeder's DER
    order, node vectors cover nodes 1..N."""
    k: int
    p: np.ndarray
    q: np.ndarray
    lam_lo: np.ndarray
    lam_hi: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    v: np.ndarray
    alpha_v: np.ndarray = field(default=None)
    alpha_dso: np.ndarray = field(default=None)
    D: float = 0.0

    def copy(self) -> "RtState":
        return RtState(self.k, *(None if a is None else a.copy() for a in (
            self.p, self.q, self.lam_lo, self.lam_hi, self.alpha, self.beta, self.v,
            self.alpha_v, self.alpha_dso)), self.D)


def step_primal(state: RtState, caps: list[DerCapability], config: RtConfig,
                der_nodes) -> tuple[np.ndarray, np.ndarray]:
    """One projected gradient step of every DER on its cost plus incentive."""
    idx = np.asarray(der_nodes) - 1
    if len(caps) != len(state.p):
        raise DimensionMismatch("capability list does not match the DER count")
    a = np.array([c.a for c in caps])
    b = np.array([c.b for c in caps])
    p_pv = np.array([c.p_pv for c in caps])
    gp = 2.0 * a * (state.p - p_pv) + state.alpha[idx]
    gq = 2.0 * b * state.q + state.beta[idx]
    return kernels.project_box_disc(state.p - config.eps_p * gp, state.q - config.eps_q * gq,
                                    [c.p_min for c in caps], [c.p_max for c in caps],
                                    [c.s_max for c in caps])


def step_dual(state: RtState, config: RtConfig) -> tuple[np.ndarray, np.ndarray]:
    e, eta = config.eps_lambda, config.eta
    lo = np.maximum(state.lam_lo + e * (config.v_min - state.v - eta * state.lam_lo), 0.0)
    hi = np.maximum(state.lam_hi + e * (state.v - config.v_max - eta * state.lam_hi), 0.0)
    return lo, hi


def imbalance_gradient(p, E_rt: float, dt_rt: float) -> tuple[float, np.ndarray]:
    """``D = (sum(p) dt - E)**2`` and its gradient, equal in every component."""
    p = np.asarray(p, dtype=float)
    gap = float(p.sum()) * dt_rt - E_rt
    return gap * gap, np.full(p.shape, 2.0 * gap * dt_rt)


def compute_incentives(state: RtState, grad_D: np.ndarray, sens: Sensitivity,
                       config: RtConfig):
    """``alpha = R (lam_hi - lam_lo + gamma grad_D)``, ``beta = X (lam_hi - lam_lo)``.

    Returns ``(alpha, beta, alpha_v, alpha_dso)`` with the voltage and
    balancing parts of ``alpha`` split out. A positive incentive is a charge
    per unit of injection, so an upper-voltage dual discourages injection.
    """
    dlam = state.lam_hi - state.lam_lo
    alpha = sens.R @ (dlam + config.gamma * grad_D)
    beta = sens.X @ dlam
    alpha_v = sens.R @ dlam
    alpha_dso = sens.R @ (config.gamma * grad_D)
    return alpha, beta, alpha_v, alpha_dso


def fixed_point_residual(state: RtState, nxt: RtState) -> float:
    a = (state.p, state.q, state.lam_lo, state.lam_hi)
    b = (nxt.p, nxt.q, nxt.lam_lo, nxt.lam_hi)
    if any(x.shape != y.shape for x, y in zip(a, b)):
        raise DimensionMismatch("states differ in size")
    return float(max(np.max(np.abs(x - y), initial=0.0) for x, y in zip(a, b)))


# -- closed loop ----------------------------------------------------------------------

@dataclass
class RtTrace:
    states: list[RtState]
    residuals: np.ndarray
    E_rt: np.ndarray        # per-unit slot energy per step
    imbalance: np.ndarray   # sum of net injections minus E_rt, per-unit
    der_nodes: np.ndarray
    base_mva: float
    dt_rt: float

    @property
    def v_max(self) -> np.ndarray:
        return np.array([s.v.max() for s in self.states])

    def mean_abs_imbalance(self) -> float:
        """Time-averaged ``|sum p dt - E_rt|`` in MWh."""
        return float(np.mean(np.abs(self.imbalance))) * self.base_mva * self.dt_rt / 3600.0

    def incentive_magnitude(self) -> float:
        return float(np.mean([np.max(np.abs(s.alpha[self.der_nodes - 1])) for s in self.states]))

    def diverging(self, tol: float = 1e-4) -> bool:
        """True when the residual envelope fails to decay: the last tenth of the
        run is not below ``tol`` and not below half the middle tenth."""
        n = len(self.residuals)
        w = max(1, n // 10)
        tail = float(np.max(self.residuals[-w:]))
        mid = float(np.max(self.residuals[n // 2 - w // 2: n // 2 + w - w // 2]))
        return tail > tol and tail > 0.5 * mid


def der_capabilities(feeder: FeederModel, pv: np.ndarray) -> list[DerCapability]:
    """Capabilities at one step; ``pv`` is the node availability vector and
    caps the active limit."""
    caps = []
    for d in feeder.ders:
        avail = float(pv[d.node - 1])
        p_max = max(min(d.p_max, avail), d.p_min)
        caps.append(DerCapability(d.p_min, p_max, d.s_max, d.cost_a, d.cost_b, avail))
    return caps


def gradient_bounds(feeder: FeederModel, pv_max: np.ndarray) -> tuple[float, float]:
    """Largest cost-gradient norm over the capability sets (``M_J``) and the
    per-component imbalance-gradient bound for slot energies within the
    feeder's rating (``M_D``)."""
    mj = 0.0
    for d in feeder.ders:
        avail = float(pv_max[d.node - 1])
        dp = max(abs(d.p_min - avail), abs(d.p_max - avail))
        mj = max(mj, math.hypot(2 * d.cost_a * dp, 2 * d.cost_b * d.s_max))
    total = sum(d.s_max for d in feeder.ders)
    return mj, 2.0 * 2.0 * total


def _measure(feeder, sens, config, p_net, q_net):
    if config.feedback == "linear":
        return sens.voltages(p_net, q_net)
    return ac_power_flow(feeder, p_net, q_net)


def initial_state(feeder: FeederModel, traces: Traces) -> RtState:
    """DERs at their PV availability with zero reactive power and zero duals."""
    caps = der_capabilities(feeder, traces.pv[0])
    p = np.array([c.p_max for c in caps])
    N, n = feeder.N, len(caps)
    z = np.zeros(N)
    return RtState(0, p, np.zeros(n), z.copy(), z.copy(), z.copy(), z.copy(),
                   np.full(N, feeder.v0), z.copy(), z.copy())


def run_rt_market(feeder: FeederModel, sens: Sensitivity, E_rt, traces: Traces,
                  config: RtConfig, steps: int | None = None,
                  state: RtState | None = None, static: bool = False) -> RtTrace:
    """Closed-loop run over ``steps`` real-time slots.

    ``E_rt`` holds the day-ahead reference per step in MWh. With
    ``static=True`` the first trace row is held for every step (a snapshot
    run used to study convergence).
    """
    E_rt = np.asarray(E_rt, dtype=float)
    steps = len(E_rt) if steps is None else steps
    if len(E_rt) < steps:
        raise ValueError(f"reference covers {len(E_rt)} steps, {steps} requested")
    if not static and traces.K < steps:
        raise TraceGap(f"traces cover {traces.K} steps, {steps} requested")
    if abs(traces.dt - config.dt_rt) > 1e-9:
        raise MisalignedGrids("trace step differs from the controller step")
    der = feeder.der_nodes
    idx = der - 1
    slot_pu = feeder.base_mva * config.dt_rt / 3600.0  # MWh per per-unit slot
    E_pu = E_rt / slot_pu
    st = initial_state(feeder, traces) if state is None else state.copy()
    states, res, imb = [], np.zeros(steps), np.zeros(steps)
    for k in range(steps):
        row = 0 if static else k
        p_net = -traces.load_p[row].copy()
        q_net = -traces.load_q[row].copy()
        p_net[idx] += st.p
        q_net[idx] += st.q
        st.v = _measure(feeder, sens, config, p_net, q_net)
        st.k = k
        D, g = imbalance_gradient(p_net, E_pu[k], 1.0)
        st.D = D * slot_pu ** 2
        imb[k] = float(p_net.sum()) - E_pu[k]
        grad = np.zeros(feeder.N)
        grad[idx] = g[idx]
        lo, hi = step_dual(st, config)
        nxt = st.copy()
        nxt.lam_lo, nxt.lam_hi = lo, hi
        nxt.alpha, nxt.beta, nxt.alpha_v, nxt.alpha_dso = compute_incentives(
            nxt, grad, sens, config)
        caps = der_capabilities(feeder, traces.pv[0 if static else min(k + 1, traces.K - 1)])
        nxt.p, nxt.q = step_primal(nxt, caps, config, der)
        nxt.k = k + 1
        res[k] = fixed_point_residual(st, nxt)
        states.append(st)
        st = nxt
    return RtTrace(states, res, E_pu[:steps], imb, der, feeder.base_mva, config.dt_rt)


def uncontrolled_voltages(feeder: FeederModel, traces: Traces, steps: int,
                          config: RtConfig, sens: Sensitivity | None = None) -> np.ndarray:
    """Node voltages per step with every DER at its PV availability and no
    reactive power."""
    out = np.zeros((steps, feeder.N))
    for k in range(steps):
        caps = der_capabilities(feeder, traces.pv[k])
        p_net = -traces.load_p[k].copy()
        q_net = -traces.load_q[k].copy()
        p_net[feeder.der_nodes - 1] += [c.p_max for c in caps]
        out[k] = _measure(feeder, sens, config, p_net, q_net)
    return out


def stationarity(state: RtState, caps: list[DerCapability], der_nodes,
                 tol: float = 1e-9) -> float:
    """Largest ``|grad J + incentive|`` over DERs strictly inside their set."""
    idx = np.asarray(der_nodes) - 1
    worst = 0.0
    for i, cap in enumerate(caps):
        p, q = state.p[i], state.q[i]
        interior = (cap.p_min + tol < p < cap.p_max - tol
                    and math.hypot(p, q) < cap.s_max - tol)
        if interior:
            worst = max(worst, abs(2 * cap.a * (p - cap.p_pv) + state.alpha[idx[i]]),
                        abs(2 * cap.b * q + state.beta[idx[i]]))
    return worst


def complementarity(state: RtState, config: RtConfig) -> float:
    hi = state.lam_hi * (config.v_max - state.v + config.eta * state.lam_hi)
    lo = state.lam_lo * (state.v - config.v_min + config.eta * state.lam_lo)
    return float(max(np.max(np.abs(hi), initial=0.0), np.max(np.abs(lo), initial=0.0)))


def write_trace_csv(path, trace: RtTrace, E_rt_mwh) -> None:
    kw = 1000.0 * trace.base_mva
    der_pos = {int(n): i for i, n in enumerate(trace.der_nodes)}
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RT_COLUMNS)
        for s in trace.states:
            for j in range(len(s.v)):
                i = der_pos.get(j + 1)
                p = s.p[i] * kw if i is not None else 0.0
                q = s.q[i] * kw if i is not None else 0.0
                w.writerow([s.k, j + 1, f"{p:.9g}", f"{q:.9g}", f"{s.v[j]:.12g}",
                            f"{s.alpha[j]:.9g}", f"{s.beta[j]:.9g}", f"{s.lam_lo[j]:.9g}",
                            f"{s.lam_hi[j]:.9g}", f"{s.D:.9g}", f"{E_rt_mwh[s.k]:.12g}"])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Columns of an RT trace CSV as arrays."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RT_COLUMNS:
            raise ValueError(f"{path}: expected columns {RT_COLUMNS}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in RT_COLUMNS}
