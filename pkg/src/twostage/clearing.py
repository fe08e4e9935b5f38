"""Lower-level day-ahead clearing: welfare maximisation over block curves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import DEMAND, SUPPLY, BlockCurve
from .solver import LinearModel, Status, solve_lp

__all__ = ["ClearingInputs", "ClearingResult", "ResidualReport", "ClearingError",
           "DimensionMismatch", "solve_clearing", "kkt_residuals", "welfare"]

INTERIOR_TOL = 1e-9


class ClearingError(RuntimeError):
    pass


class DimensionMismatch(ValueError):
    pass


def _empty(side: str, hour: int = 0) -> BlockCurve:
    return BlockCurve(side, hour, ())


@dataclass(frozen=True)
class ClearingInputs:
    """Rival curves plus the DSO's price-quantity pairs, all as parameters."""
    supply: BlockCurve
    demand: BlockCurve
    alpha_s: float = 0.0
    cap_s: float = 0.0
    alpha_b: float = 0.0
    cap_b: float = 0.0

    @classmethod
    def of(cls, supply, demand, dso_offer=(0.0, 0.0), dso_bid=(0.0, 0.0)):
        supply = supply if supply is not None else _empty(SUPPLY)
        demand = demand if demand is not None else _empty(DEMAND)
        (a_s, c_s), (a_b, c_b) = dso_offer, dso_bid
        if c_s < 0 or c_b < 0:
            raise ValueError("DSO caps must be nonnegative")
        return cls(supply, demand, float(a_s), float(c_s), float(a_b), float(c_b))


@dataclass
class ClearingResult:
    lambda_da: float
    dso_supply: float
    dso_demand: float
    supply_dispatch: np.ndarray
    demand_dispatch: np.ndarray
    mu_s_min: float
    mu_s_max: float
    mu_b_min: float
    mu_b_max: float
    mu_o_min: np.ndarray
    mu_o_max: np.ndarray
    mu_d_min: np.ndarray
    mu_d_max: np.ndarray
    degenerate: bool = False

    @property
    def volume(self) -> float:
        return float(self.supply_dispatch.sum()) + self.dso_supply


@dataclass(frozen=True)
class ResidualReport:
    stationarity: float
    complementarity: float
    balance: float

    def worst(self) -> float:
        return max(self.stationarity, self.complementarity, self.balance)


def _split(price_gap):
    """Multipliers (mu_max, mu_min) with mu_max - mu_min = price_gap."""
    gap = np.asarray(price_gap, dtype=float)
    return np.maximum(gap, 0.0), np.maximum(-gap, 0.0)


def welfare(inputs: ClearingInputs, e_s, e_b, e_o, e_d) -> float:
    return (inputs.alpha_b * e_b + float(np.dot(inputs.demand.prices, e_d))
            - inputs.alpha_s * e_s - float(np.dot(inputs.supply.prices, e_o)))


def solve_clearing(supply: BlockCurve | None, demand: BlockCurve | None,
                   dso_offer=(0.0, 0.0), dso_bid=(0.0, 0.0)) -> ClearingResult:
    """Clear one hour.

    ``dso_offer`` and ``dso_bid`` are ``(price, cap)`` pairs; the DSO prices
    enter as fixed parameters. The clearing price is the dual of the balance
    row and the bound multipliers are recovered from it by stationarity.
    """
    inp = ClearingInputs.of(supply, demand, dso_offer, dso_bid)
    m = LinearModel("max", name="clearing")
    js = m.add_var("E_das", 0.0, inp.cap_s, -inp.alpha_s)
    jb = m.add_var("E_dab", 0.0, inp.cap_b, inp.alpha_b)
    jo = [m.add_var(f"O{b.index}", 0.0, b.quantity, -b.price) for b in inp.supply.blocks]
    jd = [m.add_var(f"D{b.index}", 0.0, b.quantity, b.price) for b in inp.demand.blocks]
    terms = {js: -1.0, jb: 1.0}
    terms.update({j: -1.0 for j in jo})
    terms.update({j: 1.0 for j in jd})
    m.add_row(terms, "=", 0.0, "balance")
    sol = solve_lp(m)
    if sol.status == Status.UNBOUNDED:
        raise ClearingError("clearing LP unbounded: malformed curves")
    if sol.status != Status.OPTIMAL:
        raise ClearingError(f"clearing LP {sol.status.value}")
    x = sol.x
    lam = float(sol.duals[0])
    if not math.isfinite(lam):
        raise ClearingError("non-finite clearing price")
    e_o = x[jo] if jo else np.zeros(0)
    e_d = x[jd] if jd else np.zeros(0)
    o_max, o_min = _split(lam - np.asarray(inp.supply.prices, dtype=float))
    d_max, d_min = _split(np.asarray(inp.demand.prices, dtype=float) - lam)
    s_max, s_min = _split(lam - inp.alpha_s)
    b_max, b_min = _split(inp.alpha_b - lam)
    caps = np.concatenate([[inp.cap_s, inp.cap_b], inp.supply.quantities,
                           inp.demand.quantities])
    interior = (x > INTERIOR_TOL) & (x < caps - INTERIOR_TOL)
    return ClearingResult(
        lambda_da=lam, dso_supply=float(x[js]), dso_demand=float(x[jb]),
        supply_dispatch=e_o, demand_dispatch=e_d,
        mu_s_min=float(s_min), mu_s_max=float(s_max),
        mu_b_min=float(b_min), mu_b_max=float(b_max),
        mu_o_min=o_min, mu_o_max=o_max, mu_d_min=d_min, mu_d_max=d_max,
        degenerate=bool(not interior.any()))


def kkt_residuals(result: ClearingResult, inputs: ClearingInputs) -> ResidualReport:
    """Stationarity, complementarity and balance residuals of the clearing
    optimality conditions.

    Primal bound violations and negative multipliers are folded into the
    complementarity figure.
    """
    nj, nm = len(inputs.supply), len(inputs.demand)
    arrays = (result.supply_dispatch, result.mu_o_min, result.mu_o_max)
    if any(len(a) != nj for a in arrays) or any(
            len(a) != nm for a in (result.demand_dispatch, result.mu_d_min, result.mu_d_max)):
        raise DimensionMismatch("result does not match curve sizes")
    lam = result.lambda_da
    po = np.asarray(inputs.supply.prices, dtype=float)
    pd = np.asarray(inputs.demand.prices, dtype=float)
    stat = [
        inputs.alpha_s - lam + result.mu_s_max - result.mu_s_min,
        -inputs.alpha_b + lam + result.mu_b_max - result.mu_b_min,
    ]
    stat.extend(po - lam + result.mu_o_max - result.mu_o_min)
    stat.extend(-pd + lam + result.mu_d_max - result.mu_d_min)

    qo = np.asarray(inputs.supply.quantities, dtype=float)
    qd = np.asarray(inputs.demand.quantities, dtype=float)
    prim = np.concatenate([[result.dso_supply, result.dso_demand],
                           result.supply_dispatch, result.demand_dispatch])
    caps = np.concatenate([[inputs.cap_s, inputs.cap_b], qo, qd])
    mu_lo = np.concatenate([[result.mu_s_min, result.mu_b_min],
                            result.mu_o_min, result.mu_d_min])
    mu_hi = np.concatenate([[result.mu_s_max, result.mu_b_max],
                            result.mu_o_max, result.mu_d_max])
    slack = caps - prim
    comp = np.concatenate([
        np.abs(prim * mu_lo), np.abs(slack * mu_hi),
        np.maximum(-prim, 0.0), np.maximum(-slack, 0.0),
        np.maximum(-mu_lo, 0.0), np.maximum(-mu_hi, 0.0)])
    bal = (result.dso_supply - result.dso_demand
           + float(result.supply_dispatch.sum()) - float(result.demand_dispatch.sum()))
    return ResidualReport(float(np.max(np.abs(stat))), float(comp.max()), abs(bal))
