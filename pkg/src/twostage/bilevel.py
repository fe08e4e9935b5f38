"""Deterministic day-ahead bidding of the DSO as a single-level MILP.

The clearing problem is replaced by its optimality conditions; each
complementarity pair gets one binary and two big-M rows, and the bilinear
revenue term is replaced by its strong-duality equivalent, which only involves
rival-block data. Hours share no constraint, so every hour is built and solved
as its own sub-model; :meth:`MilpModel.joint` stacks them when a single model
is wanted.

Sign convention of the balancing recourse: ``E_bm_plus`` is surplus sold at
``pr_plus`` and ``E_bm_minus`` is deficit bought at ``pr_minus``, so
``E_das - E_dab + E_bm_plus - E_bm_minus = G - L``.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clearing import ClearingInputs, ClearingResult, kkt_residuals, solve_clearing
from .market import BlockCurve, DsoForecast, ImbalancePriceModel, imbalance_prices
from .solver import BigMRecord, LinearModel, Solution, Status, solve_milp

ALPHA_MARGIN = 0.10
FEAS_TOL = 1e-6
NORMALISE_TOL = 1e-9

DECISION_COLUMNS = ["hour", "E_das_mwh", "E_dab_mwh", "E_das_max", "E_dab_max",
                    "alpha_s", "alpha_b", "lambda_da", "E_bm_plus", "E_bm_minus"]


class BilevelError(RuntimeError):
    pass


class EmptyCurve(BilevelError, ValueError):
    pass


class NonPositiveBigM(BilevelError, ValueError):
    pass


class Infeasible(BilevelError):
    pass


class GridTooLarge(BilevelError, ValueError):
    pass


# -- per-hour data --------------------------------------------------------------

@dataclass(frozen=True)
class HourData:
    hour: int
    supply: BlockCurve
    demand: BlockCurve
    net: float
    g_cap: float
    tr_max: float
    pr_plus: float
    pr_minus: float
    alpha_lo: float
    alpha_hi: float

    @property
    def cap_s_max(self) -> float:
        return self.g_cap

    @property
    def cap_b_max(self) -> float:
        return self.g_cap + self.tr_max

    @property
    def dual_m(self) -> float:
        return (self.alpha_hi - self.alpha_lo) + 1.0

    def recourse_cost(self, position: float) -> float:
        """Balancing cost of a DA net sale ``position`` against forecast ``net``."""
        surplus = self.net - position
        return -self.pr_plus * max(surplus, 0.0) + self.pr_minus * max(-surplus, 0.0)


def offer_price_bounds(supply: BlockCurve, demand: BlockCurve) -> tuple[float, float]:
    """Curve price range widened by 10% of the largest absolute price."""
    prices = supply.prices + demand.prices
    lo, hi = min(prices), max(prices)
    margin = ALPHA_MARGIN * max(abs(lo), abs(hi))
    return lo - margin, hi + margin


def reference_prices(curves: Mapping[int, tuple[BlockCurve, BlockCurve]]) -> dict[int, float]:
    """Clearing price of every hour without the DSO."""
    return {t: solve_clearing(s, d).lambda_da for t, (s, d) in curves.items()}


def balancing_prices(curves, prices) -> dict[int, tuple[float, float]]:
    """``{hour: (pr_plus, pr_minus)}`` from an :class:`ImbalancePriceModel` applied
    to the reference prices, or passed through if already a mapping."""
    if isinstance(prices, ImbalancePriceModel):
        ref = reference_prices(curves)
        return {t: imbalance_prices(prices, ref[t]) for t in curves}
    return {t: (float(prices[t][0]), float(prices[t][1])) for t in curves}


def hour_data(curves, forecast: DsoForecast, prices) -> list[HourData]:
    hours = sorted(curves)
    if hours != list(range(forecast.T)):
        raise EmptyCurve(f"curves cover hours {hours}, forecast has {forecast.T} hours")
    pr = balancing_prices(curves, prices)
    out = []
    for t in hours:
        s, d = curves[t]
        if len(s) == 0 or len(d) == 0:
            raise EmptyCurve(f"hour {t}: empty supply or demand curve")
        p_plus, p_minus = pr[t]
        if p_plus > p_minus:
            raise ValueError(f"hour {t}: pr_plus {p_plus} exceeds pr_minus {p_minus}")
        lo, hi = offer_price_bounds(s, d)
        out.append(HourData(t, s, d, forecast.net(t), forecast.g_cap, forecast.tr_max,
                            p_plus, p_minus, lo, hi))
    return out


# -- model ---------------------------------------------------------------------

@dataclass
class HourVars:
    """Column indices of one hour inside a :class:`LinearModel`."""
    hour: int
    e_s: int
    e_b: int
    cap_s: int
    cap_b: int
    alpha_s: int
    alpha_b: int
    lam: int
    bm_plus: int | None
    bm_minus: int | None
    e_o: list[int]
    e_d: list[int]
    mu_s_min: int
    mu_s_max: int
    mu_b_min: int
    mu_b_max: int
    mu_o_min: list[int]
    mu_o_max: list[int]
    mu_d_min: list[int]
    mu_d_max: list[int]
    balance_row: int | None = None
    binaries: list[int] = field(default_factory=list)

    def complementarity_pairs(self, data: HourData):
        """``(primal index or (cap, index), dual index)`` pairs; a tuple means the
        primal quantity is ``cap_var - index`` or ``cap - index``."""
        pairs = [(self.e_s, self.mu_s_min), (self.e_b, self.mu_b_min),
                 (("var", self.cap_s, self.e_s), self.mu_s_max),
                 (("var", self.cap_b, self.e_b), self.mu_b_max)]
        for j, b in enumerate(data.supply.blocks):
            pairs.append((self.e_o[j], self.mu_o_min[j]))
            pairs.append((("const", b.quantity, self.e_o[j]), self.mu_o_max[j]))
        for m, b in enumerate(data.demand.blocks):
            pairs.append((self.e_d[m], self.mu_d_min[m]))
            pairs.append((("const", b.quantity, self.e_d[m]), self.mu_d_max[m]))
        return pairs


def _complement(model: LinearModel, bigm: list, data: HourData, primal, dual,
                m_primal: float, label: str) -> int:
    """``0 <= primal <= m u`` and ``0 <= dual <= M (1 - u)`` with a new binary."""
    if m_primal <= 0 or data.dual_m <= 0:
        raise NonPositiveBigM(f"hour {data.hour}: non-positive big-M for {label}")
    u = model.add_binary(f"u_{label}")
    if isinstance(primal, tuple):
        kind, cap, j = primal
        if kind == "var":
            terms = {cap: 1.0, j: -1.0, u: -m_primal}
        else:
            terms = {j: -1.0, u: -m_primal}
        rhs = 0.0 if kind == "var" else -cap
    else:
        terms, rhs = {primal: 1.0, u: -m_primal}, 0.0
    r = model.add_row(terms, "<=", rhs, f"bigM_p_{label}")
    bigm.append(BigMRecord(r, m_primal, "quantity", label))
    r = model.add_row({dual: 1.0, u: data.dual_m}, "<=", data.dual_m, f"bigM_d_{label}")
    bigm.append(BigMRecord(r, data.dual_m, "dual", label))
    return u


def add_hour(model: LinearModel, data: HourData, bigm: list,
             recourse: bool = True, merit_cuts: bool = True) -> HourVars:
    """Append the variables and rows of one hour to ``model``.

    With ``recourse=False`` the scalar balancing variables and the DSO balance
    row are left out (the robust layer replaces them by decision rules).
    ``merit_cuts`` adds the valid inequalities of :func:`add_merit_order_cuts`.
    """
    t = data.hour
    dm = data.dual_m
    lo, hi = data.alpha_lo, data.alpha_hi
    v = model.add_var
    e_s = v(f"E_das[{t}]", 0.0, data.cap_s_max)
    e_b = v(f"E_dab[{t}]", 0.0, data.cap_b_max)
    cap_s = v(f"E_das_max[{t}]", 0.0, data.cap_s_max)
    cap_b = v(f"E_dab_max[{t}]", 0.0, data.cap_b_max)
    alpha_s = v(f"alpha_s[{t}]", lo, hi)
    alpha_b = v(f"alpha_b[{t}]", lo, hi)
    lam = v(f"lambda[{t}]", lo, hi)
    bm_plus = bm_minus = None
    if recourse:
        bm_plus = v(f"E_bm_plus[{t}]", 0.0, math.inf, -data.pr_plus)
        bm_minus = v(f"E_bm_minus[{t}]", 0.0, math.inf, data.pr_minus)
    e_o = [v(f"E_O[{t},{b.index}]", 0.0, b.quantity, b.price) for b in data.supply.blocks]
    e_d = [v(f"E_D[{t},{b.index}]", 0.0, b.quantity, -b.price) for b in data.demand.blocks]
    mu = {}
    for name in ("s_min", "s_max", "b_min", "b_max"):
        mu[name] = v(f"mu_{name}[{t}]", 0.0, dm)
    mu_o_min = [v(f"mu_O_min[{t},{b.index}]", 0.0, dm) for b in data.supply.blocks]
    mu_o_max = [v(f"mu_O_max[{t},{b.index}]", 0.0, dm, b.quantity) for b in data.supply.blocks]
    mu_d_min = [v(f"mu_D_min[{t},{b.index}]", 0.0, dm) for b in data.demand.blocks]
    mu_d_max = [v(f"mu_D_max[{t},{b.index}]", 0.0, dm, b.quantity) for b in data.demand.blocks]

    row = model.add_row
    balance_row = None
    if recourse:
        balance_row = row({e_s: 1.0, e_b: -1.0, bm_plus: 1.0, bm_minus: -1.0}, "=",
                          data.net, f"dso_balance[{t}]")
    row({cap_s: 1.0, cap_b: -1.0}, "<=", data.tr_max, f"tr_hi[{t}]")
    row({cap_s: 1.0, cap_b: -1.0}, ">=", -data.tr_max, f"tr_lo[{t}]")
    row({e_s: 1.0, cap_s: -1.0}, "<=", 0.0, f"cap_s[{t}]")
    row({e_b: 1.0, cap_b: -1.0}, "<=", 0.0, f"cap_b[{t}]")
    # stationarity
    row({alpha_s: 1.0, lam: -1.0, mu["s_max"]: 1.0, mu["s_min"]: -1.0}, "=", 0.0,
        f"stat_s[{t}]")
    row({alpha_b: -1.0, lam: 1.0, mu["b_max"]: 1.0, mu["b_min"]: -1.0}, "=", 0.0,
        f"stat_b[{t}]")
    for j, b in enumerate(data.supply.blocks):
        row({lam: -1.0, mu_o_max[j]: 1.0, mu_o_min[j]: -1.0}, "=", -b.price,
            f"stat_O[{t},{j}]")
    for m, b in enumerate(data.demand.blocks):
        row({lam: 1.0, mu_d_max[m]: 1.0, mu_d_min[m]: -1.0}, "=", b.price,
            f"stat_D[{t},{m}]")
    # market balance
    terms = {e_s: 1.0, e_b: -1.0}
    terms.update({j: 1.0 for j in e_o})
    terms.update({j: -1.0 for j in e_d})
    row(terms, "=", 0.0, f"market_balance[{t}]")

    hv = HourVars(t, e_s, e_b, cap_s, cap_b, alpha_s, alpha_b, lam, bm_plus, bm_minus,
                  e_o, e_d, mu["s_min"], mu["s_max"], mu["b_min"], mu["b_max"],
                  mu_o_min, mu_o_max, mu_d_min, mu_d_max, balance_row)
    m_s = data.cap_s_max + 1.0
    m_b = data.cap_b_max + 1.0
    hv.binaries.append(_complement(model, bigm, data, e_s, mu["s_min"], m_s, f"s_min[{t}]"))
    hv.binaries.append(_complement(model, bigm, data, e_b, mu["b_min"], m_b, f"b_min[{t}]"))
    hv.binaries.append(_complement(model, bigm, data, ("var", cap_s, e_s), mu["s_max"],
                                   m_s, f"s_max[{t}]"))
    hv.binaries.append(_complement(model, bigm, data, ("var", cap_b, e_b), mu["b_max"],
                                   m_b, f"b_max[{t}]"))
    for j, b in enumerate(data.supply.blocks):
        mq = b.quantity + 1.0
        hv.binaries.append(_complement(model, bigm, data, e_o[j], mu_o_min[j], mq,
                                       f"O_min[{t},{j}]"))
        hv.binaries.append(_complement(model, bigm, data, ("const", b.quantity, e_o[j]),
                                       mu_o_max[j], mq, f"O_max[{t},{j}]"))
    for m, b in enumerate(data.demand.blocks):
        mq = b.quantity + 1.0
        hv.binaries.append(_complement(model, bigm, data, e_d[m], mu_d_min[m], mq,
                                       f"D_min[{t},{m}]"))
        hv.binaries.append(_complement(model, bigm, data, ("const", b.quantity, e_d[m]),
                                       mu_d_max[m], mq, f"D_max[{t},{m}]"))
    if merit_cuts:
        add_merit_order_cuts(model, data, hv)
    return hv


def add_merit_order_cuts(model: LinearModel, data: HourData, hv: HourVars) -> int:
    """Valid inequalities linking the rival-block binaries through the price.

    A supply block's ``u_min`` is 1 only if ``lambda >= price`` and 0 only if
    ``lambda <= price`` (the block is then empty, so its upper bound is
    slack); ``u_max`` is the mirror image, and demand blocks swap the two.
    Every binary is therefore a threshold indicator of the clearing price,
    which gives, for strictly ordered prices ``a < b``:

    * ``ge(b) <= ge(a)`` and ``le(a) <= le(b)`` (chains),
    * ``ge(b) + le(a) <= 1`` and ``ge(a) + le(b) >= 1`` (cross links),

    plus ``u_min + u_max >= 1`` per block (a positive block cannot be both
    empty and full). Only the transitive reduction is added. Returns the
    number of rows.
    """
    ge, le = [], []
    nj = len(data.supply)
    blocks = list(data.supply.blocks) + list(data.demand.blocks)
    for i, b in enumerate(blocks):
        u_min, u_max = hv.binaries[4 + 2 * i], hv.binaries[5 + 2 * i]
        model.add_row({u_min: 1.0, u_max: 1.0}, ">=", 1.0, f"merit_block[{data.hour},{i}]")
        if i < nj:
            ge.append((b.price, u_min))
            le.append((b.price, u_max))
        else:
            ge.append((b.price, u_max))
            le.append((b.price, u_min))
    rows = len(blocks)
    ge.sort(key=lambda pu: pu[0])
    le.sort(key=lambda pu: pu[0])
    prices = sorted({p for p, _ in ge})
    by_price_ge = {p: [u for q, u in ge if q == p] for p in prices}
    by_price_le = {p: [u for q, u in le if q == p] for p in prices}
    t = data.hour
    for lo, hi in zip(prices, prices[1:]):
        for a in by_price_ge[hi]:
            for b in by_price_ge[lo]:
                model.add_row({a: 1.0, b: -1.0}, "<=", 0.0, f"merit_ge[{t}]")
                rows += 1
        for a in by_price_le[lo]:
            for b in by_price_le[hi]:
                model.add_row({a: 1.0, b: -1.0}, "<=", 0.0, f"merit_le[{t}]")
                rows += 1
        for a in by_price_ge[hi]:
            for b in by_price_le[lo]:
                model.add_row({a: 1.0, b: 1.0}, "<=", 1.0, f"merit_x[{t}]")
                rows += 1
        for a in by_price_ge[lo]:
            for b in by_price_le[hi]:
                model.add_row({a: 1.0, b: 1.0}, ">=", 1.0, f"merit_y[{t}]")
                rows += 1
    return rows


@dataclass
class HourModel:
    data: HourData
    model: LinearModel
    vars: HourVars
    bigm: list[BigMRecord]


@dataclass
class MilpModel:
    """Per-hour MILP sub-models of the day-ahead problem."""
    hours: list[HourModel]

    @property
    def T(self) -> int:
        return len(self.hours)

    @property
    def n_binaries(self) -> int:
        return sum(len(h.vars.binaries) for h in self.hours)

    @property
    def bigm(self) -> list[BigMRecord]:
        return [r for h in self.hours for r in h.bigm]

    def joint(self) -> tuple[LinearModel, list[HourVars]]:
        """All hours in one model; the objective is the sum over hours."""
        model = LinearModel("min", name="da_joint")
        hv = [add_hour(model, h.data, []) for h in self.hours]
        return model, hv


def build_milp(curves: Mapping[int, tuple[BlockCurve, BlockCurve]],
               forecast: DsoForecast, prices) -> MilpModel:
    """Build the day-ahead MILP.

    ``prices`` is either an :class:`ImbalancePriceModel` (applied to the
    clearing price of each hour without the DSO) or a mapping
    ``{hour: (pr_plus, pr_minus)}``.
    """
    hours = []
    for data in hour_data(curves, forecast, prices):
        model = LinearModel("min", name=f"da_hour_{data.hour}")
        bigm: list[BigMRecord] = []
        hv = add_hour(model, data, bigm)
        hours.append(HourModel(data, model, hv, bigm))
    return MilpModel(hours)


# -- decisions -----------------------------------------------------------------

@dataclass
class HourDecision:
    hour: int
    E_das: float
    E_dab: float
    E_das_max: float
    E_dab_max: float
    alpha_s: float
    alpha_b: float
    lambda_da: float
    E_bm_plus: float
    E_bm_minus: float
    objective: float = math.nan
    bound: float = math.nan
    status: Status = Status.OPTIMAL
    clearing: ClearingResult | None = None
    inputs: ClearingInputs | None = None
    max_violation: float = 0.0

    @property
    def net_sale(self) -> float:
        return self.E_das - self.E_dab

    def row(self) -> list[float]:
        return [self.hour, self.E_das, self.E_dab, self.E_das_max, self.E_dab_max,
                self.alpha_s, self.alpha_b, self.lambda_da, self.E_bm_plus,
                self.E_bm_minus]


@dataclass
class DaDecision:
    hours: list[HourDecision]

    @property
    def objective(self) -> float:
        return float(sum(h.objective for h in self.hours))

    @property
    def bound(self) -> float:
        return float(sum(h.bound for h in self.hours))

    @property
    def all_optimal(self) -> bool:
        return all(h.status == Status.OPTIMAL for h in self.hours)

    @property
    def offered_energy(self) -> float:
        return float(sum(h.E_das for h in self.hours))

    def __len__(self) -> int:
        return len(self.hours)

    def __getitem__(self, t) -> HourDecision:
        return self.hours[t]


def write_decision(path, decision: DaDecision) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DECISION_COLUMNS)
        for h in decision.hours:
            w.writerow([h.hour] + [repr(float(x)) for x in h.row()[1:]])


def read_decision(path) -> DaDecision:
    hours = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DECISION_COLUMNS:
            raise ValueError(f"{path}: expected columns {DECISION_COLUMNS}")
        for row in reader:
            vals = [float(row[c]) for c in DECISION_COLUMNS[1:]]
            hours.append(HourDecision(int(row["hour"]), *vals))
    return DaDecision(hours)


def extract_hour(data: HourData, hv: HourVars, x: np.ndarray) -> HourDecision:
    """Read an hour's decision off a solution vector and normalise the DSO
    offer prices (selling at the clearing price, buying at the price cap
    when the bid cap binds) and simultaneous sale and purchase. Normalisation
    keeps every optimality condition of the clearing problem satisfied and
    leaves the objective unchanged."""
    g = lambda j: float(x[j])
    lam = g(hv.lam)
    e_s, e_b = g(hv.e_s), g(hv.e_b)
    cap_s, cap_b = g(hv.cap_s), g(hv.cap_b)
    a_s, a_b = g(hv.alpha_s), g(hv.alpha_b)
    mu_s_min, mu_s_max = g(hv.mu_s_min), g(hv.mu_s_max)
    mu_b_min, mu_b_max = g(hv.mu_b_min), g(hv.mu_b_max)
    # selling and buying in the same hour clears at one price and is a wash:
    # shrink both quantities and both caps by the overlap
    wash = min(e_s, e_b)
    if wash > NORMALISE_TOL:
        e_s, e_b = e_s - wash, e_b - wash
        cap_s, cap_b = cap_s - wash, cap_b - wash
    if e_s > NORMALISE_TOL:
        a_s, mu_s_min, mu_s_max = lam, 0.0, 0.0
    if e_b > NORMALISE_TOL:
        if e_b >= cap_b - NORMALISE_TOL:
            a_b, mu_b_min, mu_b_max = data.alpha_hi, 0.0, data.alpha_hi - lam
        else:
            a_b, mu_b_min, mu_b_max = lam, 0.0, 0.0
    clearing = ClearingResult(
        lambda_da=lam, dso_supply=e_s, dso_demand=e_b,
        supply_dispatch=x[hv.e_o].copy(), demand_dispatch=x[hv.e_d].copy(),
        mu_s_min=mu_s_min, mu_s_max=mu_s_max, mu_b_min=mu_b_min, mu_b_max=mu_b_max,
        mu_o_min=x[hv.mu_o_min].copy(), mu_o_max=x[hv.mu_o_max].copy(),
        mu_d_min=x[hv.mu_d_min].copy(), mu_d_max=x[hv.mu_d_max].copy())
    inputs = ClearingInputs(data.supply, data.demand, a_s, cap_s, a_b, cap_b)
    bm_plus = g(hv.bm_plus) if hv.bm_plus is not None else math.nan
    bm_minus = g(hv.bm_minus) if hv.bm_minus is not None else math.nan
    return HourDecision(data.hour, e_s, e_b, cap_s, cap_b, a_s, a_b, lam,
                        bm_plus, bm_minus, clearing=clearing, inputs=inputs)


def solve_hour(hm: HourModel, gap: float = 1e-6) -> tuple[HourDecision, Solution]:
    sol = solve_milp(hm.model, gap=gap)
    if sol.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        raise Infeasible(f"hour {hm.data.hour}: MILP {sol.status.value}")
    dec = extract_hour(hm.data, hm.vars, sol.x)
    dec.objective = sol.objective
    dec.bound = sol.bound
    dec.status = sol.status
    dec.max_violation = hm.model.max_violation(sol.x)
    if dec.max_violation > FEAS_TOL:
        raise BilevelError(f"hour {hm.data.hour}: residual {dec.max_violation:.3g}")
    return dec, sol


def solve_da_deterministic(model: MilpModel, gap: float = 1e-6) -> DaDecision:
    """Solve every hour's MILP. Hours that hit the node limit keep their
    incumbent and carry status ``GapNotClosed``."""
    return DaDecision([solve_hour(hm, gap)[0] for hm in model.hours])


def solve_joint(model: MilpModel, gap: float = 1e-6) -> Solution:
    """Solve the stacked all-hours model (used to check hour decomposition)."""
    joint, _ = model.joint()
    return solve_milp(joint, gap=gap)


def decision_kkt(decision: HourDecision):
    return kkt_residuals(decision.clearing, decision.inputs)


def verify_duality_identity(decision: HourDecision, clearing: ClearingResult | None = None,
                            inputs: ClearingInputs | None = None,
                            dso_terms: bool = True) -> float:
    """Residual of the strong-duality identity that replaces the bilinear
    revenue ``lambda (E_dab - E_das)``.

    With ``dso_terms`` the DSO block terms
    ``mu_s_max E_das_max + mu_b_max E_dab_max - (alpha_b - lambda) E_dab
    + (alpha_s - lambda) E_das`` are included; they vanish at any point that
    satisfies the clearing optimality conditions.
    """
    c = clearing if clearing is not None else decision.clearing
    inp = inputs if inputs is not None else decision.inputs
    lam = c.lambda_da
    lhs = lam * (c.dso_demand - c.dso_supply)
    rhs = (float(np.dot(inp.supply.prices, c.supply_dispatch))
           + float(np.dot(c.mu_o_max, inp.supply.quantities))
           - float(np.dot(inp.demand.prices, c.demand_dispatch))
           + float(np.dot(c.mu_d_max, inp.demand.quantities)))
    if dso_terms:
        rhs += (c.mu_s_max * inp.cap_s + c.mu_b_max * inp.cap_b
                - (inp.alpha_b - lam) * c.dso_demand + (inp.alpha_s - lam) * c.dso_supply)
    return abs(lhs - rhs)


# -- brute-force oracle --------------------------------------------------------

MAX_ORACLE_BLOCKS = 8
MAX_GRID_POINTS = 50


@dataclass(frozen=True)
class OracleGrid:
    cap_s: tuple[float, ...]
    cap_b: tuple[float, ...]
    alpha_s: tuple[float, ...]
    alpha_b: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.cap_s) * len(self.cap_b) * len(self.alpha_s) * len(self.alpha_b)


def default_grid(data: HourData, resolution: int) -> OracleGrid:
    """Uniform caps and the curve price points (plus the offer bounds) as
    offer prices; every other offer price behaves like a neighbouring one."""
    prices = sorted(set(data.supply.prices + data.demand.prices
                        + [data.alpha_lo, data.alpha_hi]))
    return OracleGrid(tuple(np.linspace(0.0, data.cap_s_max, resolution)),
                      tuple(np.linspace(0.0, data.cap_b_max, resolution)),
                      tuple(prices), tuple(prices))


def _dispatch_range(price: float, cap: float, lam: float, side: int):
    """Range of a block's dispatch consistent with clearing price ``lam``.

    ``side`` is +1 for sellers (dispatched when cheaper than ``lam``) and -1 for
    buyers."""
    gap = side * (lam - price)
    if gap > 0:
        return cap, cap
    if gap < 0:
        return 0.0, 0.0
    return 0.0, cap


def optimistic_value(data: HourData, cap_s: float, cap_b: float, alpha_s: float,
                     alpha_b: float):
    """Best UL cost over every clearing outcome consistent with the offer.

    Candidate clearing prices are the price points; in between, every block
    dispatch is fixed and contained in the neighbouring point's range. For a
    fixed price the cost depends only on the DSO's net sale and is convex
    piecewise linear, so its minimum over the feasible interval sits at an end
    or at the kink ``n = G - L``. Returns ``(cost, lam, net_sale)``.
    """
    points = sorted(set(data.supply.prices + data.demand.prices + [alpha_s, alpha_b]))
    best = (math.inf, math.nan, math.nan)
    for lam in points:
        if not (data.alpha_lo - 1e-12 <= lam <= data.alpha_hi + 1e-12):
            continue
        s_lo, s_hi = _dispatch_range(alpha_s, cap_s, lam, 1)
        b_lo, b_hi = _dispatch_range(alpha_b, cap_b, lam, -1)
        r_lo = r_hi = 0.0
        for b in data.supply.blocks:
            lo, hi = _dispatch_range(b.price, b.quantity, lam, 1)
            r_lo += lo
            r_hi += hi
        for b in data.demand.blocks:
            lo, hi = _dispatch_range(b.price, b.quantity, lam, -1)
            r_lo -= hi
            r_hi -= lo
        # balance: net DSO sale n = -(rival supply - rival demand)
        n_lo = max(s_lo - b_hi, -r_hi)
        n_hi = min(s_hi - b_lo, -r_lo)
        if n_lo > n_hi + 1e-9:
            continue
        n_hi = max(n_hi, n_lo)
        cands = {n_lo, n_hi, min(max(data.net, n_lo), n_hi)}
        for n in sorted(cands):
            cost = -lam * n + data.recourse_cost(n)
            if cost < best[0] - 1e-12:
                best = (cost, lam, n)
    return best


def enumeration_oracle(curves, forecast: DsoForecast, prices, grid_resolution: int = 5,
                       grids: Mapping[int, OracleGrid] | None = None) -> DaDecision:
    """Brute-force the DSO's offer over a grid of caps and prices.

    Every candidate is cleared with :func:`solve_clearing` and then scored by
    :func:`optimistic_value`, which ties the clearing outcome the same way the
    MILP does (in the DSO's favour). The cleared point itself is always one
    of the outcomes considered, so its cost bounds the score from above.
    """
    decisions = []
    for data in hour_data(curves, forecast, prices):
        if len(data.supply) > MAX_ORACLE_BLOCKS or len(data.demand) > MAX_ORACLE_BLOCKS:
            raise GridTooLarge(f"hour {data.hour}: more than {MAX_ORACLE_BLOCKS} blocks per side")
        grid = grids[data.hour] if grids is not None else default_grid(data, grid_resolution)
        if max(len(grid.cap_s), len(grid.cap_b), len(grid.alpha_s),
               len(grid.alpha_b)) > MAX_GRID_POINTS:
            raise GridTooLarge(f"hour {data.hour}: more than {MAX_GRID_POINTS} points per decision")
        best = None
        for cs, cb, a_s, a_b in itertools.product(grid.cap_s, grid.cap_b,
                                                  grid.alpha_s, grid.alpha_b):
            if abs(cs - cb) > data.tr_max + 1e-12:
                continue
            cleared = solve_clearing(data.supply, data.demand, (a_s, cs), (a_b, cb))
            n_cleared = cleared.dso_supply - cleared.dso_demand
            cost_cleared = -cleared.lambda_da * n_cleared + data.recourse_cost(n_cleared)
            cost, lam, n = optimistic_value(data, cs, cb, a_s, a_b)
            if cost > cost_cleared + 1e-6:
                raise BilevelError("optimistic score above a cleared outcome")
            if best is None or cost < best[0] - 1e-12:
                best = (cost, cs, cb, a_s, a_b, lam, n)
        cost, cs, cb, a_s, a_b, lam, n = best
        surplus = data.net - n
        decisions.append(HourDecision(
            data.hour, max(n, 0.0), max(-n, 0.0), cs, cb, a_s, a_b, lam,
            max(surplus, 0.0), max(-surplus, 0.0), objective=cost, bound=cost))
    return DaDecision(decisions)
