"""Best-bound branch and bound over the dense simplex relaxation."""
from __future__ import annotations

import heapq
import itertools
import math

import numpy as np

from .lp import relaxation
from .model import LinearModel, Solution, Status

INT_TOL = 1e-6
GAP_TOL = 1e-6


def _gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return (incumbent - bound) / max(1.0, abs(incumbent))


def solve_milp(model: LinearModel, gap: float = GAP_TOL,
               node_limit: int = 200_000) -> Solution:
    """Minimise (or maximise) ``model`` with integrality on flagged variables.

    Nodes are explored best bound first, ties broken by creation order. The
    branching variable is the most fractional one, ties broken by index. On
    termination the integer variables are rounded and fixed and the LP is
    re-solved, so the returned point satisfies every row to simplex accuracy.
    If ``node_limit`` is reached the incumbent is returned with status
    ``GapNotClosed`` and the best open bound.
    """
    arrays = model.arrays()
    c, _, _, _, lb0, ub0, integer = arrays
    int_idx = np.flatnonzero(integer)
    # work in minimisation form: sign flips max models
    sgn = -1.0 if model.sense == "max" else 1.0
    counter = itertools.count()
    heap: list = [(-math.inf, next(counter), lb0.copy(), ub0.copy())]
    incumbent = math.inf
    best_x = None
    nodes = branches = 0
    status = Status.OPTIMAL
    while heap:
        parent_bound, _, lb, ub = heapq.heappop(heap)
        if parent_bound >= incumbent - gap * max(1.0, abs(incumbent)):
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (parent_bound, next(counter), lb, ub))
            status = Status.GAP_NOT_CLOSED
            break
        nodes += 1
        sol = relaxation(model, arrays, lb, ub)
        if sol.status == Status.INFEASIBLE:
            continue
        if sol.status == Status.UNBOUNDED:
            if nodes == 1:
                return Solution(Status.UNBOUNDED, nodes=nodes)
            continue
        value = sgn * (sol.objective - model.obj_constant)
        if value >= incumbent - gap * max(1.0, abs(incumbent)):
            continue
        xi = sol.x[int_idx]
        frac = np.abs(xi - np.round(xi))
        if int_idx.size == 0 or frac.max() <= INT_TOL:
            incumbent, best_x = value, sol.x
            continue
        # most fractional, lowest index on ties (argmax returns the first)
        k = int(np.argmax(np.round(frac, 12)))
        j = int(int_idx[k])
        v = sol.x[j]
        branches += 1
        down_ub = ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = lb.copy()
        up_lb[j] = math.ceil(v)
        heapq.heappush(heap, (value, next(counter), lb, down_ub))
        heapq.heappush(heap, (value, next(counter), up_lb, ub))
    if best_x is None:
        if status == Status.GAP_NOT_CLOSED:
            return Solution(Status.GAP_NOT_CLOSED, nodes=nodes, branches=branches,
                            bound=sgn * min(h[0] for h in heap) + model.obj_constant)
        return Solution(Status.INFEASIBLE, nodes=nodes, branches=branches)
    open_bound = min((h[0] for h in heap), default=incumbent)
    bound = min(open_bound, incumbent)
    if status == Status.OPTIMAL:
        bound = max(bound, incumbent - gap * max(1.0, abs(incumbent)))
    x = _polish(model, arrays, best_x, int_idx)
    obj = model.evaluate(x)
    return Solution(status, x=x, objective=obj,
                    bound=sgn * bound + model.obj_constant,
                    nodes=nodes, branches=branches)


def _polish(model, arrays, x, int_idx):
    """Fix the (rounded) integers and re-solve the LP over the continuous part."""
    lb = arrays[4].copy()
    ub = arrays[5].copy()
    fixed = np.round(x[int_idx])
    lb[int_idx] = fixed
    ub[int_idx] = fixed
    sol = relaxation(model, arrays, lb, ub)
    if sol.status != Status.OPTIMAL:
        return x
    return sol.x
