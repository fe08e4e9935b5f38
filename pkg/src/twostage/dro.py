"""Distributionally robust day-ahead bidding with linear decision rules.

The forecast error ``delta`` of every hour ranges over the family of
distributions with zero mean, bounded mean absolute deviation, bounded second
moment and bounded support. The moments are lifted to auxiliary coordinates
``u1 >= |delta|`` and ``u2 >= delta**2`` so that the worst-case expectation of an
affine function is a moment LP over

    W = {delta in [dmin, dmax], |delta| <= u1 <= u1max, delta**2 <= u2 <= u2max}.

Its dual has one semi-infinite constraint per point of ``W``; both the dual and
the robust nonnegativity of the decision rules are handled by constraint
generation with an exact separation oracle (:func:`maximize_affine`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bilevel import (BilevelError, DaDecision, HourData, HourDecision, HourVars,
                      Infeasible, add_hour, extract_hour, hour_data)
from .market import DsoForecast
from .solver import LinearModel, Status, solve_lp, solve_milp
from .solver.lp import relaxation

CG_TOL = 1e-7
MAX_CG_ITER = 200

LDR_COLUMNS = ["hour", "k0", "k1", "k2", "k3", "l0", "l1", "l2", "l3"]


class EmptySamples(ValueError):
    pass


class SeparationStalled(RuntimeError):
    pass


class InfeasibleMoments(ValueError):
    pass


# -- ambiguity sets -------------------------------------------------------------

@dataclass(frozen=True)
class HourAmbiguity:
    zeta1: float
    zeta2: float
    delta_min: float
    delta_max: float

    def __post_init__(self):
        if not (self.delta_min <= 0.0 <= self.delta_max):
            raise ValueError("support must contain zero")
        if self.zeta1 < 0 or self.zeta2 < 0:
            raise ValueError("moment bounds must be nonnegative")
        if self.zeta1 > self.u1_max * (1 + 1e-12) + 1e-15:
            raise ValueError("zeta1 exceeds the support radius")
        if self.zeta2 > self.u2_max * (1 + 1e-12) + 1e-15:
            raise ValueError("zeta2 exceeds the squared support radius")

    @property
    def u1_max(self) -> float:
        return max(self.delta_max, -self.delta_min)

    @property
    def u2_max(self) -> float:
        return max(self.delta_min ** 2, self.delta_max ** 2)

    def scaled(self, factor: float) -> "HourAmbiguity":
        return HourAmbiguity(self.zeta1 * factor, self.zeta2 * factor,
                             self.delta_min * factor, self.delta_max * factor)

    def contains(self, point, tol: float = 1e-9) -> bool:
        d, u1, u2 = point
        return (self.delta_min - tol <= d <= self.delta_max + tol
                and abs(d) - tol <= u1 <= self.u1_max + tol
                and d * d - tol <= u2 <= self.u2_max + tol)

    def corners(self) -> list[tuple[float, float, float]]:
        """Extreme points of ``W`` at ``delta`` in {dmin, 0, dmax}."""
        pts = []
        for d in sorted({self.delta_min, 0.0, self.delta_max}):
            for u1 in sorted({abs(d), self.u1_max}):
                for u2 in sorted({d * d, self.u2_max}):
                    pts.append((d, u1, u2))
        return pts


ZERO_AMBIGUITY = HourAmbiguity(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class AmbiguitySet:
    hours: tuple[HourAmbiguity, ...]

    def __getitem__(self, t) -> HourAmbiguity:
        return self.hours[t]

    def __len__(self) -> int:
        return len(self.hours)

    def scaled(self, factor: float) -> "AmbiguitySet":
        return AmbiguitySet(tuple(h.scaled(factor) for h in self.hours))

    @classmethod
    def zero(cls, T: int) -> "AmbiguitySet":
        return cls((ZERO_AMBIGUITY,) * T)


def estimate_hour(samples: Sequence[float]) -> HourAmbiguity:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise EmptySamples("at least two samples per hour are required")
    x = x - x.mean()
    # centering leaves rounding noise around zero; keep the support straddling it
    return HourAmbiguity(float(np.mean(np.abs(x))), float(np.mean(x * x)),
                         min(float(x.min()), 0.0), max(float(x.max()), 0.0))


def estimate_ambiguity(samples: Iterable[Sequence[float]]) -> AmbiguitySet:
    """Moment bounds and support from per-hour samples (mean-centred first)."""
    hours = tuple(estimate_hour(s) for s in samples)
    if not hours:
        raise EmptySamples("no hours given")
    return AmbiguitySet(hours)


# -- worst-case expectation ----------------------------------------------------

def maximize_affine(a0: float, a1: float, a2: float, a3: float,
                    amb: HourAmbiguity) -> tuple[float, tuple[float, float, float]]:
    """Maximise ``a0 + a1 d + a2 u1 + a3 u2`` over ``W``.

    For fixed ``d`` the lifted coordinates sit at ``u1max`` or ``|d|`` (and
    ``u2max`` or ``d**2``) by the sign of their coefficient. What remains is a
    concave function of ``d`` on each side of zero, so the maximiser is an
    endpoint, zero, or a stationary point of the quadratic piece.
    """
    lo, hi = amb.delta_min, amb.delta_max
    a2n, a3n = min(a2, 0.0), min(a3, 0.0)
    cands = {lo, 0.0, hi}
    if a3n < 0.0:
        # stationary points; when they fall outside a side the endpoint already covers it
        if 0.0 <= a1 + a2n <= -2.0 * a3n * hi:
            cands.add(-(a1 + a2n) / (2.0 * a3n))
        if 0.0 <= a2n - a1 <= 2.0 * a3n * lo:
            cands.add((a2n - a1) / (2.0 * a3n))
    best_val, best_pt = -math.inf, (0.0, 0.0, 0.0)
    for d in sorted(cands):
        u1 = amb.u1_max if a2 > 0 else abs(d)
        u2 = amb.u2_max if a3 > 0 else d * d
        val = a0 + a1 * d + a2 * u1 + a3 * u2
        if val > best_val:
            best_val, best_pt = val, (d, u1, u2)
    return best_val, best_pt


def closed_form_worst_case(f, amb: HourAmbiguity) -> float:
    """``c0 + zeta1 max(c2, 0) + zeta2 max(c3, 0)``.

    ``E[delta] = 0`` removes ``c1``; the lifted coordinates can sit at their
    moment bounds under a point mass at ``delta = 0``, and nothing larger is
    possible since ``E[u1] <= zeta1`` and ``E[u2] <= zeta2``.
    """
    c0, _, c2, c3 = f
    return c0 + amb.zeta1 * max(c2, 0.0) + amb.zeta2 * max(c3, 0.0)


def _moment_dual(f, points, amb: HourAmbiguity):
    m = LinearModel("min", name="moment_dual")
    s0 = m.add_var("s0", -math.inf, math.inf, 1.0)
    sd = m.add_var("sd", -math.inf, math.inf, 0.0)
    s1 = m.add_var("s1", 0.0, math.inf, amb.zeta1)
    s2 = m.add_var("s2", 0.0, math.inf, amb.zeta2)
    c0, c1, c2, c3 = f
    for d, u1, u2 in points:
        m.add_row({s0: 1.0, sd: d, s1: u1, s2: u2}, ">=", c0 + c1 * d + c2 * u1 + c3 * u2)
    sol = solve_lp(m)
    if sol.status != Status.OPTIMAL:
        raise SeparationStalled(f"moment dual {sol.status.value}")
    return sol.objective, sol.x


def worst_case_expectation(f, amb: HourAmbiguity, tol: float = CG_TOL,
                           max_iter: int = MAX_CG_ITER, return_points: bool = False):
    """``sup E[f]`` over the ambiguity set for affine ``f = (c0, c1, c2, c3)``.

    Solved as the moment dual with cutting planes. The returned value is the
    restricted dual optimum plus the final violation, i.e. a certified upper
    bound that is within ``tol`` of the supremum.
    """
    points = list(dict.fromkeys(amb.corners()))
    last_violation = math.inf
    stalls = 0
    c0, c1, c2, c3 = (float(v) for v in f)
    for _ in range(max_iter):
        value, s = _moment_dual((c0, c1, c2, c3), points, amb)
        viol, pt = maximize_affine(c0 - s[0], c1 - s[1], c2 - s[2], c3 - s[3], amb)
        if viol <= tol:
            out = value + max(viol, 0.0)
            return (out, points) if return_points else out
        if pt in points or viol >= last_violation - 1e-15:
            stalls += 1
            if stalls >= 3:
                raise SeparationStalled(f"violation stuck at {viol:.3g}")
        last_violation = viol
        points.append(pt)
    raise SeparationStalled(f"no convergence in {max_iter} iterations")


def _lift(point):
    if np.ndim(point) == 0:
        d = float(point)
        return (d, abs(d), d * d)
    d, u1, u2 = point
    return (float(d), float(u1), float(u2))


def sample_support_oracle(f, amb: HourAmbiguity, points) -> float:
    """Worst-case expectation restricted to distributions on ``points``.

    Points are lifted triples or plain ``delta`` values (lifted to
    ``(delta, |delta|, delta**2)``). This is a lower bound on
    :func:`worst_case_expectation`.
    """
    pts = [_lift(p) for p in points]
    if not pts:
        raise InfeasibleMoments("no support points")
    for p in pts:
        if not amb.contains(p):
            raise ValueError(f"point {p} outside the lifted support set")
    c0, c1, c2, c3 = f
    m = LinearModel("max", name="sample_support")
    w = [m.add_var(f"w{i}", 0.0, math.inf, c0 + c1 * d + c2 * u1 + c3 * u2)
         for i, (d, u1, u2) in enumerate(pts)]
    m.add_row({j: 1.0 for j in w}, "=", 1.0, "mass")
    m.add_row({j: p[0] for j, p in zip(w, pts)}, "=", 0.0, "mean")
    m.add_row({j: p[1] for j, p in zip(w, pts)}, "<=", amb.zeta1, "abs_moment")
    m.add_row({j: p[2] for j, p in zip(w, pts)}, "<=", amb.zeta2, "second_moment")
    sol = solve_lp(m)
    if sol.status != Status.OPTIMAL:
        raise InfeasibleMoments("atoms cannot meet the moment constraints")
    return sol.objective


# -- decision rules --------------------------------------------------------------

@dataclass(frozen=True)
class HourPolicy:
    k: tuple[float, float, float, float]
    l: tuple[float, float, float, float]

    def plus(self, d, u1, u2):
        return self.k[0] + self.k[1] * d + self.k[2] * u1 + self.k[3] * u2

    def minus(self, d, u1, u2):
        return self.l[0] + self.l[1] * d + self.l[2] * u1 + self.l[3] * u2


@dataclass
class LdrPolicy:
    hours: list[HourPolicy]

    def __getitem__(self, t) -> HourPolicy:
        return self.hours[t]

    def __len__(self) -> int:
        return len(self.hours)


def write_policy(path, policy: LdrPolicy) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LDR_COLUMNS)
        for t, h in enumerate(policy.hours):
            w.writerow([t] + [repr(float(v)) for v in h.k + h.l])


def read_policy(path) -> LdrPolicy:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != LDR_COLUMNS:
            raise ValueError(f"{path}: expected columns {LDR_COLUMNS}")
        rows = sorted(reader, key=lambda r: int(r["hour"]))
    return LdrPolicy([HourPolicy(tuple(float(r[f"k{i}"]) for i in range(4)),
                                 tuple(float(r[f"l{i}"]) for i in range(4))) for r in rows])


@dataclass
class LdrVars:
    k: list[int]
    l: list[int]
    s: list[int]  # s0, s_delta, s1, s2 of the moment dual
    balance_rows: list[int]
    robust_points: list = field(default_factory=list)
    epigraph_points: list = field(default_factory=list)


def build_ldr_constraints(model: LinearModel, hv: HourVars, data: HourData,
                          amb: HourAmbiguity, points=None) -> LdrVars:
    """Add decision-rule coefficients, the almost-sure balance (coefficient
    matching) and robust nonnegativity at ``points`` (default: corners of W).

    Balance of realised surplus: ``E_das - E_dab + E+(w) - E-(w) = G + delta - L``
    for every ``w``, i.e. ``k0 - l0 = G - L - E_das + E_dab``, ``k1 - l1 = 1``,
    ``k2 = l2``, ``k3 = l3``.
    """
    t = data.hour
    k = [model.add_var(f"k{i}[{t}]", -math.inf, math.inf) for i in range(4)]
    l = [model.add_var(f"l{i}[{t}]", -math.inf, math.inf) for i in range(4)]
    rows = [model.add_row({k[0]: 1.0, l[0]: -1.0, hv.e_s: 1.0, hv.e_b: -1.0}, "=",
                          data.net, f"ldr_balance0[{t}]"),
            model.add_row({k[1]: 1.0, l[1]: -1.0}, "=", 1.0, f"ldr_balance1[{t}]"),
            model.add_row({k[2]: 1.0, l[2]: -1.0}, "=", 0.0, f"ldr_balance2[{t}]"),
            model.add_row({k[3]: 1.0, l[3]: -1.0}, "=", 0.0, f"ldr_balance3[{t}]")]
    s = [model.add_var(f"s0[{t}]", -math.inf, math.inf, 1.0),
         model.add_var(f"sd[{t}]", -math.inf, math.inf, 0.0),
         model.add_var(f"s1[{t}]", 0.0, math.inf, amb.zeta1),
         model.add_var(f"s2[{t}]", 0.0, math.inf, amb.zeta2)]
    lv = LdrVars(k, l, s, rows)
    for p in (points if points is not None else amb.corners()):
        add_robust_point(model, lv, p, t)
        add_epigraph_point(model, lv, data, p, t)
    return lv


def add_robust_point(model: LinearModel, lv: LdrVars, p, t: int = 0) -> None:
    w = (1.0,) + tuple(p)
    model.add_row(dict(zip(lv.k, w)), ">=", 0.0, f"plus_nonneg[{t}]")
    model.add_row(dict(zip(lv.l, w)), ">=", 0.0, f"minus_nonneg[{t}]")
    lv.robust_points.append(tuple(p))


def add_epigraph_point(model: LinearModel, lv: LdrVars, data: HourData, p, t: int = 0) -> None:
    """``s0 + sd d + s1 u1 + s2 u2 >= pr- E-(w) - pr+ E+(w)`` at one point."""
    w = (1.0,) + tuple(p)
    terms = dict(zip(lv.s, (1.0,) + tuple(p)))
    for i in range(4):
        terms[lv.k[i]] = terms.get(lv.k[i], 0.0) + data.pr_plus * w[i]
        terms[lv.l[i]] = terms.get(lv.l[i], 0.0) - data.pr_minus * w[i]
    model.add_row(terms, ">=", 0.0, f"epigraph[{t}]")
    lv.epigraph_points.append(tuple(p))


def recourse_affine(data: HourData, policy: HourPolicy):
    """Coefficients of ``pr- E-(w) - pr+ E+(w)`` as an affine function of w."""
    return tuple(data.pr_minus * li - data.pr_plus * ki for ki, li in zip(policy.k, policy.l))


def ldr_violation(policy: HourPolicy, net_sale: float, net_forecast: float,
                  amb: HourAmbiguity) -> float:
    """Largest violation of coefficient matching and robust nonnegativity."""
    k, l = policy.k, policy.l
    match = max(abs((k[0] - l[0]) - (net_forecast - net_sale)), abs(k[1] - l[1] - 1.0),
                abs(k[2] - l[2]), abs(k[3] - l[3]))
    neg_plus, _ = maximize_affine(*(-c for c in k), amb)
    neg_minus, _ = maximize_affine(*(-c for c in l), amb)
    return max(match, neg_plus, neg_minus, 0.0)


# -- robust day-ahead solve ----------------------------------------------------

@dataclass
class DroHourResult:
    decision: HourDecision
    policy: HourPolicy
    iterations: int
    points: list
    worst_case: float


def _separate(model: LinearModel, lv: LdrVars, data: HourData, amb: HourAmbiguity,
              x, tol: float):
    """Add the most violated epigraph and nonnegativity points at ``x``.

    Returns ``(added, v_epi, v_plus, v_minus)``.
    """
    k = [float(x[j]) for j in lv.k]
    l = [float(x[j]) for j in lv.l]
    s = [float(x[j]) for j in lv.s]
    f = tuple(data.pr_minus * li - data.pr_plus * ki for ki, li in zip(k, l))
    v_epi, p_epi = maximize_affine(*(fi - si for fi, si in zip(f, s)), amb)
    v_plus, p_plus = maximize_affine(*(-c for c in k), amb)
    v_minus, p_minus = maximize_affine(*(-c for c in l), amb)
    added = False
    if v_epi > tol and p_epi not in lv.epigraph_points:
        add_epigraph_point(model, lv, data, p_epi, data.hour)
        added = True
    for v, p in ((v_plus, p_plus), (v_minus, p_minus)):
        if v > tol and p not in lv.robust_points:
            add_robust_point(model, lv, p, data.hour)
            added = True
    return added, v_epi, v_plus, v_minus


def solve_hour_dro(data: HourData, amb: HourAmbiguity, gap: float = 1e-6,
                   tol: float = CG_TOL, max_iter: int = MAX_CG_ITER) -> DroHourResult:
    """Robust bid for one hour by constraint generation.

    Cuts are first generated on the LP with the binaries of the last MILP
    solution fixed; the MILP is re-solved once that loop settles, and the
    process stops when a MILP solution passes separation. Nonnegativity is
    then restored exactly by raising ``k0`` and ``l0`` by the remaining
    violation (at most ``tol``), which leaves the balance rows intact.
    """
    model = LinearModel("min", name=f"dro_hour_{data.hour}")
    hv = add_hour(model, data, [], recourse=False)
    lv = build_ldr_constraints(model, hv, data, amb)
    t = data.hour
    int_idx = np.flatnonzero(model.arrays()[6])
    it = 0
    while True:
        it += 1
        sol = solve_milp(model, gap=gap)
        if sol.status in (Status.INFEASIBLE, Status.UNBOUNDED):
            raise Infeasible(f"hour {t}: robust MILP {sol.status.value}")
        added, v_epi, v_plus, v_minus = _separate(model, lv, data, amb, sol.x, tol)
        if not added:
            if max(v_epi, v_plus, v_minus) > tol + 1e-6:
                raise SeparationStalled(f"hour {t}: separation repeats a point")
            break
        pattern = np.round(sol.x[int_idx])
        while added:
            it += 1
            if it > max_iter:
                raise SeparationStalled(f"hour {t}: no convergence in {max_iter} iterations")
            arrays = model.arrays()
            lb, ub = arrays[4].copy(), arrays[5].copy()
            lb[int_idx] = ub[int_idx] = pattern
            lp = relaxation(model, arrays, lb, ub)
            if lp.status != Status.OPTIMAL:
                break
            added = _separate(model, lv, data, amb, lp.x, tol)[0]
    x = sol.x
    k = [float(x[j]) for j in lv.k]
    l = [float(x[j]) for j in lv.l]
    shift = max(v_plus, v_minus, 0.0)
    k[0] += shift
    l[0] += shift
    policy = HourPolicy(tuple(k), tuple(l))
    s = [float(x[j]) for j in lv.s]
    first_stage = sol.objective - (s[0] + amb.zeta1 * s[2] + amb.zeta2 * s[3])
    wc = worst_case_expectation(recourse_affine(data, policy), amb, tol)
    dec = extract_hour(data, hv, x)
    dec.E_bm_plus, dec.E_bm_minus = k[0], l[0]
    dec.objective = first_stage + wc
    dec.bound = sol.bound
    dec.status = sol.status
    dec.max_violation = model.max_violation(x)
    return DroHourResult(dec, policy, it, list(lv.epigraph_points), wc)


def solve_da_dro(curves, forecast: DsoForecast, prices, ambiguity: AmbiguitySet,
                 gap: float = 1e-6) -> tuple[DaDecision, LdrPolicy]:
    """Robust day-ahead bid: clearing-consistent first stage plus decision-rule
    recourse minimising the worst-case expected balancing cost."""
    data = hour_data(curves, forecast, prices)
    if len(ambiguity) != len(data):
        raise BilevelError("ambiguity set and forecast differ in length")
    results = [solve_hour_dro(d, ambiguity[d.hour], gap) for d in data]
    return (DaDecision([r.decision for r in results]),
            LdrPolicy([r.policy for r in results]))
