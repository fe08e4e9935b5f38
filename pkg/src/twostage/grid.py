"""Radial feeder model, linearised voltage sensitivities and a nonlinear
backward/forward sweep used to check them.

Everything inside a :class:`FeederModel` is per-unit on the feeder's own
bases; the CSV readers convert from ohm and kW/kVA.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels

SWEEP_TOL = 1e-10
SWEEP_MAX_ITER = 100

LINE_COLUMNS = ["from", "to", "r_ohm", "x_ohm"]
NODE_COLUMNS = ["node", "s_max_kva", "p_min_kw", "p_max_kw", "cost_a", "cost_b"]


class FeederError(ValueError):
    pass


class CycleDetected(FeederError):
    pass


class DisconnectedNode(FeederError):
    pass


class BadUnits(FeederError):
    pass


class SweepDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Line:
    frm: int
    to: int
    r: float
    x: float


@dataclass(frozen=True)
class DerRecord:
    """DER capability in per-unit; ``p_max`` is the nameplate active limit,
    the time-varying PV availability is applied on top by the controller."""
    node: int
    s_max: float
    p_min: float
    p_max: float
    cost_a: float
    cost_b: float

    def __post_init__(self):
        if self.s_max < 0 or self.p_min > self.p_max:
            raise FeederError(f"node {self.node}: inconsistent DER limits")


@dataclass(frozen=True)
class FeederModel:
    n_nodes: int  # including the substation
    lines: tuple[Line, ...]
    ders: tuple[DerRecord, ...]
    base_mva: float = 1.0
    base_kv: float = 4.8
    v0: float = 1.0

    @property
    def N(self) -> int:
        return self.n_nodes - 1

    @property
    def z_base(self) -> float:
        return self.base_kv ** 2 / self.base_mva

    @property
    def der_nodes(self) -> np.ndarray:
        return np.array([d.node for d in self.ders], dtype=int)

    def parents(self) -> np.ndarray:
        """``parent[i]`` for every node, ``-1`` at the root."""
        parent = np.full(self.n_nodes, -1, dtype=int)
        for ln in self.lines:
            parent[ln.to] = ln.frm
        return parent

    def path_matrix(self) -> np.ndarray:
        """``P[i-1, e-1] = 1`` when the line feeding node ``e`` lies on the
        path from the root to node ``i`` (lines are indexed by their child)."""
        parent = self.parents()
        P = np.zeros((self.N, self.N))
        for i in range(1, self.n_nodes):
            j = i
            while j > 0:
                P[i - 1, j - 1] = 1.0
                j = parent[j]
        return P

    @cached_property
    def sweep_data(self):
        """``(order, parent, r, x)`` for the sweep kernel: nodes parents
        first and line data indexed by node (zero at the root)."""
        parent = self.parents()
        children: dict[int, list[int]] = {}
        for ln in self.lines:
            children.setdefault(ln.frm, []).append(ln.to)
        order, stack = [], [0]
        while stack:
            j = stack.pop()
            order.append(j)
            stack.extend(sorted(children.get(j, []), reverse=True))
        r, x = self.impedances()
        return (np.array(order[1:], dtype=np.int64), parent.astype(np.int64),
                np.concatenate([[0.0], r]), np.concatenate([[0.0], x]))

    def impedances(self) -> tuple[np.ndarray, np.ndarray]:
        """Series ``r`` and ``x`` of the line feeding each node 1..N."""
        r = np.zeros(self.N)
        x = np.zeros(self.N)
        for ln in self.lines:
            r[ln.to - 1], x[ln.to - 1] = ln.r, ln.x
        return r, x


def build_feeder(n_nodes: int, lines, ders=(), base_mva=1.0, base_kv=4.8,
                 v0=1.0) -> FeederModel:
    """Validate topology and orient every line away from node 0."""
    if not (base_mva > 0 and base_kv > 0 and math.isfinite(base_mva * base_kv)):
        raise BadUnits("base power and voltage must be positive and finite")
    if not (v0 > 0):
        raise BadUnits("substation voltage must be positive")
    adj: dict[int, list] = {i: [] for i in range(n_nodes)}
    seen_pairs = set()
    for ln in lines:
        a, b = int(ln.frm), int(ln.to)
        if not (0 <= a < n_nodes and 0 <= b < n_nodes) or a == b:
            raise FeederError(f"line {a}-{b} has an invalid endpoint")
        if ln.r < 0 or ln.x < 0 or not math.isfinite(ln.r + ln.x):
            raise BadUnits(f"line {a}-{b}: negative or non-finite impedance")
        key = (min(a, b), max(a, b))
        if key in seen_pairs:
            raise CycleDetected(f"duplicate line {a}-{b}")
        seen_pairs.add(key)
        adj[a].append((b, ln))
        adj[b].append((a, ln))
    if len(lines) != n_nodes - 1:
        if len(lines) >= n_nodes:
            raise CycleDetected(f"{len(lines)} lines for {n_nodes} nodes")
    oriented, visited = [], {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, ln in adj[u]:
            if v in visited:
                continue
            visited.add(v)
            oriented.append(Line(u, v, float(ln.r), float(ln.x)))
            stack.append(v)
    if len(visited) != n_nodes:
        missing = sorted(set(range(n_nodes)) - visited)
        raise DisconnectedNode(f"nodes not reachable from the substation: {missing}")
    if len(oriented) != len(lines):
        raise CycleDetected("line set contains a cycle")
    for d in ders:
        if not (1 <= d.node < n_nodes):
            raise FeederError(f"DER at invalid node {d.node}")
    oriented.sort(key=lambda ln: ln.to)
    return FeederModel(n_nodes, tuple(oriented), tuple(sorted(ders, key=lambda d: d.node)),
                       float(base_mva), float(base_kv), float(v0))


def load_feeder(line_file, node_file=None, base_mva: float = 1.0, base_kv: float = 4.8,
                v0: float = 1.0, v_min: float = 0.95, v_max: float = 1.045) -> FeederModel:
    """Read line and DER CSVs, convert to per-unit and check the tree.

    Warns when the no-injection operating point ``v0`` lies outside
    ``[v_min, v_max]``: the voltage problem then has no interior point.
    """
    if not (base_mva > 0 and base_kv > 0):
        raise BadUnits("base power and voltage must be positive")
    z_base = base_kv ** 2 / base_mva
    s_base_kw = 1000.0 * base_mva
    lines, nodes = [], set()
    with Path(line_file).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(LINE_COLUMNS) - set(reader.fieldnames):
            raise FeederError(f"{line_file}: expected columns {LINE_COLUMNS}")
        for row in reader:
            a, b = int(row["from"]), int(row["to"])
            lines.append(Line(a, b, float(row["r_ohm"]) / z_base, float(row["x_ohm"]) / z_base))
            nodes.update((a, b))
    if not nodes:
        raise FeederError(f"{line_file}: no lines")
    n_nodes = max(nodes) + 1
    ders = []
    if node_file is not None:
        with Path(node_file).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(NODE_COLUMNS) - set(reader.fieldnames):
                raise FeederError(f"{node_file}: expected columns {NODE_COLUMNS}")
            for row in reader:
                s = float(row["s_max_kva"])
                if s > 100.0 * s_base_kw:
                    raise BadUnits(f"{node_file}: rating {s} kVA is implausible for "
                                   f"a {base_mva} MVA base")
                ders.append(DerRecord(int(row["node"]), s / s_base_kw,
                                      float(row["p_min_kw"]) / s_base_kw,
                                      float(row["p_max_kw"]) / s_base_kw,
                                      float(row["cost_a"]), float(row["cost_b"])))
    feeder = build_feeder(n_nodes, lines, ders, base_mva, base_kv, v0)
    if not (v_min <= v0 <= v_max):
        warnings.warn(f"no-injection voltage {v0} outside [{v_min}, {v_max}]: "
                      "no interior operating point", RuntimeWarning, stacklevel=2)
    return feeder


def write_feeder(feeder: FeederModel, line_file, node_file) -> None:
    zb = feeder.z_base
    kw = 1000.0 * feeder.base_mva
    with Path(line_file).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LINE_COLUMNS)
        for ln in feeder.lines:
            w.writerow([ln.frm, ln.to, repr(ln.r * zb), repr(ln.x * zb)])
    with Path(node_file).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NODE_COLUMNS)
        for d in feeder.ders:
            w.writerow([d.node, repr(d.s_max * kw), repr(d.p_min * kw), repr(d.p_max * kw),
                        repr(d.cost_a), repr(d.cost_b)])


def read_loads(path, feeder: FeederModel) -> tuple[np.ndarray, np.ndarray]:
    """Nominal spot loads (CSV ``node,p_kw,q_kvar``) as per-unit vectors over
    nodes 1..N."""
    kw = 1000.0 * feeder.base_mva
    p = np.zeros(feeder.N)
    q = np.zeros(feeder.N)
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(row["node"])
            if not (1 <= i <= feeder.N):
                raise FeederError(f"{path}: load at invalid node {i}")
            p[i - 1] += float(row["p_kw"]) / kw
            q[i - 1] += float(row["q_kvar"]) / kw
    return p, q


# -- linearisation --------------------------------------------------------------

@dataclass(frozen=True)
class Sensitivity:
    R: np.ndarray
    X: np.ndarray
    v_tilde: np.ndarray

    def voltages(self, p, q) -> np.ndarray:
        return self.R @ p + self.X @ q + self.v_tilde


def sensitivity_matrices(feeder: FeederModel) -> Sensitivity:
    """Common-path impedance sums divided by ``v0``.

    ``R[i, j]`` is the resistance shared by the root paths of ``i`` and ``j``;
    with injections ``p`` the voltage moves by ``R p`` to first order.
    """
    P = feeder.path_matrix()
    r, x = feeder.impedances()
    R = (P * r) @ P.T / feeder.v0
    X = (P * x) @ P.T / feeder.v0
    return Sensitivity(R, X, np.full(feeder.N, feeder.v0))


# -- nonlinear sweep --------------------------------------------------------------

@dataclass
class SweepResult:
    v: np.ndarray
    iterations: int
    voltages: np.ndarray  # complex


def ac_power_flow(feeder: FeederModel, p, q, tol: float = SWEEP_TOL,
                  max_iter: int = SWEEP_MAX_ITER, full: bool = False):
    """Voltage magnitudes at nodes 1..N for net injections ``p + jq``.

    Backward sweep: branch currents are subtree sums of the nodal current
    draws ``conj(-S / V)``. Forward sweep: voltages drop along each root path.
    Iterates until the largest voltage update is below ``tol``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != (feeder.N,) or q.shape != (feeder.N,):
        raise ValueError(f"expected {feeder.N} injections, got {p.shape}")
    order, parent, r, x = feeder.sweep_data
    vr, vi, it = kernels.bfs_sweep(order, parent, r, x, p, q, feeder.v0, tol, max_iter)
    if it == -2:
        raise SweepDiverged("sweep left the physical range")
    if it < 0:
        raise SweepDiverged(f"no convergence in {max_iter} iterations")
    V = vr + 1j * vi
    res = SweepResult(np.abs(V), it, V)
    return res if full else res.v


def ac_power_flow_dense(feeder: FeederModel, p, q, tol: float = SWEEP_TOL,
                        max_iter: int = SWEEP_MAX_ITER) -> SweepResult:
    """The same sweep written with the path matrix (slower; kept as a
    cross-check of the kernel)."""
    P = feeder.path_matrix()
    r, x = feeder.impedances()
    z = r + 1j * x
    s = np.asarray(p, dtype=float) + 1j * np.asarray(q, dtype=float)
    V = np.full(feeder.N, complex(feeder.v0))
    for it in range(1, max_iter + 1):
        draw = np.conj(-s / V)
        V_new = feeder.v0 - P @ (z * (P.T @ draw))
        step = float(np.max(np.abs(V_new - V), initial=0.0))
        V = V_new
        if not np.all(np.isfinite(V)) or np.min(np.abs(V), initial=1.0) < 1e-3:
            raise SweepDiverged(f"sweep left the physical range at iteration {it}")
        if step < tol:
            return SweepResult(np.abs(V), it, V)
    raise SweepDiverged(f"no convergence in {max_iter} iterations (last step {step:.3g})")
