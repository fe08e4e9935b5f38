"""Dense bounded-variable revised simplex.

Rows are brought to equality form with one slack per row (bounds encode the
row sense), and a phase-one artificial is added only for rows whose slack
cannot absorb the initial residual. The basis inverse is kept explicitly and
updated with a rank-one eta step; it is refactorised every ``REFACTOR``
pivots. Pricing is Dantzig's rule; after ``BLAND_AFTER`` consecutive
degenerate pivots the solver switches to Bland's smallest-index rule until a
non-degenerate pivot occurs.
"""
from __future__ import annotations

import math

import numpy as np

from .model import LinearModel, ModelError, Solution, Status

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
FEAS_TOL = 1e-9
REFACTOR = 50
BLAND_AFTER = 10
HARRIS_TOL = 1e-9

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3


class SolverError(RuntimeError):
    """Numerical breakdown (iteration limit, singular basis)."""


class _Tableau:
    """Working state of one simplex run (standard form ``A x = b``)."""

    def __init__(self, c, A, senses, b, lb, ub):
        m, n = A.shape
        self.m, self.n = m, n
        slack_lb = np.array([0.0 if s == "<=" else (-math.inf if s == ">=" else 0.0)
                             for s in senses])
        slack_ub = np.array([math.inf if s == "<=" else 0.0 for s in senses])
        self.A = np.hstack([A, np.eye(m), np.zeros((m, m))])
        self.b = np.asarray(b, dtype=float)
        self.lb = np.concatenate([lb, slack_lb, np.zeros(m)])
        self.ub = np.concatenate([ub, slack_ub, np.zeros(m)])
        self.c = np.concatenate([c, np.zeros(2 * m)])
        ntot = n + 2 * m
        self.x = np.zeros(ntot)
        self.state = np.full(ntot, _LOWER, dtype=np.int8)
        for j in range(n + m):
            if math.isfinite(self.lb[j]):
                self.x[j], self.state[j] = self.lb[j], _LOWER
            elif math.isfinite(self.ub[j]):
                self.x[j], self.state[j] = self.ub[j], _UPPER
            else:
                self.x[j], self.state[j] = 0.0, _FREE
        resid = self.b - self.A[:, : n + m] @ self.x[: n + m]
        self.basis = np.empty(m, dtype=np.int64)
        diag = np.ones(m)
        self.n_art = 0
        for i in range(m):
            s = n + i
            val = self.x[s] + resid[i]
            if self.lb[s] - FEAS_TOL <= val <= self.ub[s] + FEAS_TOL:
                self.basis[i] = s
                self.x[s] = val
                self.state[s] = _BASIC
            else:
                a = n + m + i
                sign = 1.0 if resid[i] >= 0 else -1.0
                self.A[i, a] = sign
                diag[i] = sign
                self.ub[a] = math.inf
                self.x[a] = abs(resid[i])
                self.basis[i] = a
                self.state[a] = _BASIC
                self.n_art += 1
        self.Binv = np.diag(1.0 / diag)
        self.pivots = 0
        self.since_refactor = 0

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis") from exc
        nonbasic = self.state != _BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs
        self.since_refactor = 0

    def iterate(self, cost, max_iter):
        """Run primal simplex on ``cost``; returns a Status."""
        A, x, lb, ub, state = self.A, self.x, self.lb, self.ub, self.state
        fixed = lb == ub
        degenerate_run = 0
        for _ in range(max_iter):
            y = cost[self.basis] @ self.Binv
            d = cost - y @ A
            movable = (state != _BASIC) & ~fixed
            improve = movable & (
                ((state == _LOWER) & (d < -OPT_TOL))
                | ((state == _UPPER) & (d > OPT_TOL))
                | ((state == _FREE) & (np.abs(d) > OPT_TOL)))
            candidates = np.flatnonzero(improve)
            if candidates.size == 0:
                return Status.OPTIMAL
            bland = degenerate_run >= BLAND_AFTER
            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = -1.0 if d[q] > 0 else 1.0
            alpha = self.Binv @ A[:, q]
            da = direction * alpha
            xb = x[self.basis]
            lbb = lb[self.basis]
            ubb = ub[self.basis]
            # Harris two-pass ratio test: bound the step with relaxed bounds,
            # then take the largest pivot among rows blocking within it
            theta = np.full(self.m, math.inf)
            relaxed = np.full(self.m, math.inf)
            dec = da > PIVOT_TOL
            inc = da < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                theta[dec] = (xb[dec] - lbb[dec]) / da[dec]
                theta[inc] = (ubb[inc] - xb[inc]) / (-da[inc])
                relaxed[dec] = (xb[dec] - lbb[dec] + HARRIS_TOL) / da[dec]
                relaxed[inc] = (ubb[inc] - xb[inc] + HARRIS_TOL) / (-da[inc])
            theta[np.isnan(theta)] = math.inf
            relaxed[np.isnan(relaxed)] = math.inf
            np.maximum(theta, 0.0, out=theta)
            t_max = float(relaxed.min()) if self.m else math.inf
            t_flip = ub[q] - lb[q]
            if not math.isfinite(t_max) and not math.isfinite(t_flip):
                return Status.UNBOUNDED
            if t_flip <= t_max and t_flip <= float(theta.min(initial=math.inf)):
                step = t_flip
                x[q] = ub[q] if state[q] == _LOWER else lb[q]
                state[q] = _UPPER if state[q] == _LOWER else _LOWER
                x[self.basis] = xb - step * da
            else:
                ties = np.flatnonzero(theta <= t_max)
                if bland:
                    t_min = float(theta[ties].min())
                    ties = ties[theta[ties] <= t_min + 1e-12]
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                step = float(theta[r])
                leaving = int(self.basis[r])
                x[self.basis] = xb - step * da
                x[q] = x[q] + direction * step
                if da[r] > 0:
                    x[leaving], state[leaving] = lb[leaving], _LOWER
                else:
                    x[leaving], state[leaving] = ub[leaving], _UPPER
                if lb[leaving] == ub[leaving]:
                    state[leaving] = _LOWER
                self.basis[r] = q
                state[q] = _BASIC
                piv_row = self.Binv[r] / alpha[r]
                self.Binv -= np.outer(alpha, piv_row)
                self.Binv[r] = piv_row
                self.pivots += 1
                self.since_refactor += 1
                if self.since_refactor >= REFACTOR:
                    self.refactor()
            degenerate_run = degenerate_run + 1 if step <= 1e-12 else 0
        raise SolverError("simplex iteration limit reached")


def simplex(c, A, senses, b, lb, ub, max_iter=None):
    """Solve ``min c x`` s.t. rows and bounds. Returns ``(status, x, y, d, pivots)``
    with ``y`` the row duals (d objective / d rhs) and ``d`` reduced costs."""
    m, n = A.shape
    if max_iter is None:
        max_iter = 5000 + 50 * (m + n)
    tab = _Tableau(np.asarray(c, float), np.asarray(A, float), senses, b,
                   np.asarray(lb, float), np.asarray(ub, float))
    if tab.n_art:
        phase1 = np.zeros_like(tab.c)
        phase1[n + m:] = 1.0
        status = tab.iterate(phase1, max_iter)
        if status != Status.OPTIMAL:
            raise SolverError("phase one did not terminate")
        tab.refactor()
        infeas = float(np.sum(tab.x[n + m:]))
        if infeas > FEAS_TOL * (1.0 + float(np.max(np.abs(b), initial=0.0))) * max(1, m):
            return Status.INFEASIBLE, None, None, None, tab.pivots
        tab.ub[n + m:] = 0.0
        tab.x[n + m:] = np.where(tab.state[n + m:] == _BASIC, tab.x[n + m:], 0.0)
    status = tab.iterate(tab.c, max_iter)
    if status != Status.OPTIMAL:
        return status, None, None, None, tab.pivots
    tab.refactor()
    y = tab.c[tab.basis] @ tab.Binv
    d = tab.c - y @ tab.A
    return Status.OPTIMAL, tab.x[:n].copy(), y, d[:n], tab.pivots


def solve_lp(model: LinearModel) -> Solution:
    """Solve a continuous model.

    Duals are reported as sensitivities of the model objective to the row
    right-hand sides, in the model's own sense (for ``max x s.t. x <= 3`` the
    dual of the row is ``+1``).
    """
    if any(model.integer):
        raise ModelError("solve_lp called on a model with integrality flags")
    return relaxation(model, model.arrays())


def relaxation(model: LinearModel, arrays, lb=None, ub=None) -> Solution:
    """LP relaxation of ``model`` given its cached :meth:`arrays`, with
    optional bound overrides."""
    c, A, senses, b, mlb, mub, _ = arrays
    lb = mlb if lb is None else np.asarray(lb, dtype=float)
    ub = mub if ub is None else np.asarray(ub, dtype=float)
    if np.any(lb > ub):
        return Solution(Status.INFEASIBLE)
    status, x, y, d, pivots = simplex(c, A, senses, b, lb, ub)
    if status != Status.OPTIMAL:
        return Solution(status, iterations=pivots)
    x = np.clip(x, lb, ub)
    sign = -1.0 if model.sense == "max" else 1.0
    return Solution(Status.OPTIMAL, x=x, objective=model.evaluate(x),
                    duals=sign * y, reduced_costs=sign * d,
                    iterations=pivots)
