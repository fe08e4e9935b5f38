"""Linear model container shared by the LP and MILP backends."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

INF = math.inf


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    GAP_NOT_CLOSED = "GapNotClosed"


class ModelError(ValueError):
    """Raised for malformed models (non-finite data, inconsistent bounds)."""


@dataclass
class Solution:
    status: Status
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    bound: float = math.nan
    nodes: int = 0
    branches: int = 0
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


@dataclass
class Row:
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float
    name: str = ""


class LinearModel:
    """Sparse-built, dense-solved linear model.

    Variables carry bounds, an objective coefficient and an integrality flag.
    Rows are ``sum(coef * x[idx]) <sense> rhs`` with sense in ``<=``, ``=``,
    ``>=``.
    """

    SENSES = ("<=", "=", ">=")

    def __init__(self, sense: str = "min", name: str = ""):
        if sense not in ("min", "max"):
            raise ModelError(f"unknown objective sense {sense!r}")
        self.sense = sense
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.integer: list[bool] = []
        self.rows: list[Row] = []
        self.obj_constant = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name: str = "", lb: float = 0.0, ub: float = INF,
                obj: float = 0.0, integer: bool = False) -> int:
        if math.isnan(lb) or math.isnan(ub) or not math.isfinite(obj):
            raise ModelError(f"non-finite data for variable {name!r}")
        if lb > ub:
            raise ModelError(f"inconsistent bounds for {name!r}: {lb} > {ub}")
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        self.integer.append(bool(integer))
        return len(self.var_names) - 1

    def add_binary(self, name: str = "", obj: float = 0.0) -> int:
        return self.add_var(name, 0.0, 1.0, obj, integer=True)

    def add_row(self, terms, sense: str, rhs: float, name: str = "") -> int:
        """Add a row from ``{index: coef}`` or an iterable of ``(index, coef)``."""
        if sense not in self.SENSES:
            raise ModelError(f"unknown row sense {sense!r}")
        items = terms.items() if isinstance(terms, dict) else terms
        merged: dict[int, float] = {}
        for j, a in items:
            merged[int(j)] = merged.get(int(j), 0.0) + float(a)
        idx = np.fromiter(merged.keys(), dtype=np.int64, count=len(merged))
        coef = np.fromiter(merged.values(), dtype=float, count=len(merged))
        if not np.all(np.isfinite(coef)) or not math.isfinite(rhs):
            raise ModelError(f"non-finite data in row {name!r}")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise ModelError(f"row {name!r} references unknown variable")
        self.rows.append(Row(idx, coef, sense, float(rhs), name))
        return len(self.rows) - 1

    def set_obj(self, j: int, value: float) -> None:
        self.obj[j] = float(value)

    def arrays(self):
        """Dense ``(c, A, senses, b, lb, ub, integer)`` in minimisation form
        (the objective is negated for ``max`` models)."""
        n, m = self.n_vars, self.n_rows
        A = np.zeros((m, n))
        b = np.empty(m)
        senses = []
        for i, row in enumerate(self.rows):
            A[i, row.idx] = row.coef
            b[i] = row.rhs
            senses.append(row.sense)
        c = np.asarray(self.obj, dtype=float)
        if self.sense == "max":
            c = -c
        return (c, A, senses, b, np.asarray(self.lb, dtype=float),
                np.asarray(self.ub, dtype=float),
                np.asarray(self.integer, dtype=bool))

    def evaluate(self, x) -> float:
        return float(np.dot(self.obj, x)) + self.obj_constant

    def max_violation(self, x) -> float:
        """Largest primal infeasibility (rows and bounds) of ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for row in self.rows:
            lhs = float(np.dot(row.coef, x[row.idx]))
            if row.sense == "<=":
                worst = max(worst, lhs - row.rhs)
            elif row.sense == ">=":
                worst = max(worst, row.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - row.rhs))
        lb = np.asarray(self.lb)
        ub = np.asarray(self.ub)
        worst = max(worst, float(np.max(lb - x, initial=0.0)),
                    float(np.max(x - ub, initial=0.0)))
        return worst

    def copy(self) -> "LinearModel":
        other = LinearModel(self.sense, self.name)
        other.var_names = list(self.var_names)
        other.lb = list(self.lb)
        other.ub = list(self.ub)
        other.obj = list(self.obj)
        other.integer = list(self.integer)
        other.rows = [Row(r.idx.copy(), r.coef.copy(), r.sense, r.rhs, r.name) for r in self.rows]
        other.obj_constant = self.obj_constant
        return other


@dataclass
class BigMRecord:
    """A big-M constant together with the row it bounds."""
    row: int
    value: float
    kind: str
    label: str = field(default="")
