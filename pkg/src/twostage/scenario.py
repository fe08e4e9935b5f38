"""Forecast-error sampling, trace ingestion and the day-ahead to real-time
reference coupling."""
from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import DsoForecast, TimeGrid

SAMPLE_COLUMNS = ["hour", "sample_index", "delta_mwh"]
TRACE_TIME = "timestamp_s"
LOAD_Q_RATIO = 0.5  # reactive load as a fixed fraction of active load


class MisalignedGrids(ValueError):
    pass


class TraceGap(ValueError):
    pass


class UnitMismatch(ValueError):
    pass


def sub_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream for ``label`` derived from the top-level seed."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


# -- forecast errors ---------------------------------------------------------------

@dataclass(frozen=True)
class ForecastSampleSet:
    samples: tuple[np.ndarray, ...]  # per hour, truncated, not centred
    seed: int
    sigma: float

    @property
    def T(self) -> int:
        return len(self.samples)

    def centered(self) -> list[np.ndarray]:
        return [s - s.mean() for s in self.samples]


def sample_forecast_errors(sigma_fraction: float, forecast: DsoForecast, n: int,
                           seed: int) -> ForecastSampleSet:
    """Gaussian errors with standard deviation ``sigma_fraction * G_cap``,
    clamped so that the realised generation stays within ``[0, G_cap]``."""
    if sigma_fraction < 0:
        raise ValueError("sigma_fraction must be nonnegative")
    if n < 1:
        raise ValueError("need at least one sample")
    rng = sub_rng(seed, "forecast-errors")
    std = sigma_fraction * forecast.g_cap
    draws = rng.standard_normal((forecast.T, n)) * std
    out = []
    for t in range(forecast.T):
        g = forecast.generation[t]
        out.append(np.clip(draws[t], -g, forecast.g_cap - g))
    return ForecastSampleSet(tuple(out), int(seed), float(sigma_fraction))


def write_samples(path, samples: ForecastSampleSet) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for t, s in enumerate(samples.samples):
            for i, d in enumerate(s):
                w.writerow([t, i, repr(float(d))])


def read_samples(path, seed: int = 0, sigma: float = float("nan")) -> ForecastSampleSet:
    rows: dict[int, list] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["hour"]), []).append(
                (int(row["sample_index"]), float(row["delta_mwh"])))
    hours = sorted(rows)
    if hours != list(range(len(hours))):
        raise ValueError(f"{path}: hours must be 0..T-1")
    return ForecastSampleSet(tuple(np.array([v for _, v in sorted(rows[t])]) for t in hours),
                             seed, sigma)


# -- day-ahead to real-time reference --------------------------------------------------

@dataclass(frozen=True)
class RtReferenceSeries:
    values: np.ndarray  # MWh per real-time step
    steps_per_slot: int

    def hour(self, t: int) -> np.ndarray:
        n = self.steps_per_slot
        return self.values[t * n:(t + 1) * n]

    def __len__(self) -> int:
        return len(self.values)


def rt_reference(decision, grid: TimeGrid) -> RtReferenceSeries:
    """Spread each hour's net day-ahead position evenly over its real-time
    steps."""
    if not grid.aligned:
        raise MisalignedGrids(f"DA slot {grid.dt_da} s is not a multiple of RT slot "
                              f"{grid.dt_rt} s")
    n = grid.steps_per_slot
    net = [h.E_das - h.E_dab for h in decision.hours]
    return RtReferenceSeries(np.repeat(np.array(net, dtype=float) / n, n), n)


# -- traces ----------------------------------------------------------------------

@dataclass(frozen=True)
class Traces:
    """Per-step, per-node series in per-unit over nodes 1..N."""
    t0: float
    dt: float
    pv: np.ndarray      # (K, N) PV availability, zero where there is no DER
    load_p: np.ndarray  # (K, N)
    load_q: np.ndarray  # (K, N)

    @property
    def K(self) -> int:
        return self.pv.shape[0]

    def window(self, start: int, steps: int) -> "Traces":
        if start < 0 or start + steps > self.K:
            raise TraceGap(f"steps {start}..{start + steps - 1} not covered "
                           f"(trace has {self.K} steps)")
        sl = slice(start, start + steps)
        return Traces(self.t0 + start * self.dt, self.dt, self.pv[sl], self.load_p[sl],
                      self.load_q[sl])


def _read_trace(path, n_nodes: int, unit: str, t0: float, dt: float, steps: int):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        value_cols = [f for f in fields if f.startswith("value_")]
        if TRACE_TIME not in fields or "node" not in fields or len(value_cols) != 1:
            raise ValueError(f"{path}: expected columns timestamp_s,node,value_<unit>")
        file_unit = value_cols[0][len("value_"):]
        if file_unit.lower() != unit.lower():
            raise UnitMismatch(f"{path}: trace is in {file_unit}, configuration expects {unit}")
        col = value_cols[0]
        table: dict[int, dict[int, float]] = {}
        for row in reader:
            ts = float(row[TRACE_TIME])
            k = (ts - t0) / dt
            kr = int(round(k))
            if abs(k - kr) > 1e-6:
                raise TraceGap(f"{path}: timestamp {ts} is off the {dt} s grid")
            node = int(row["node"])
            if not (1 <= node <= n_nodes):
                raise ValueError(f"{path}: invalid node {node}")
            table.setdefault(node, {})[kr] = float(row[col])
    out = np.zeros((steps, n_nodes))
    for node, series in table.items():
        for k in range(steps):
            if k not in series:
                raise TraceGap(f"{path}: node {node} has no value at timestamp "
                               f"{t0 + k * dt:g} s")
            out[k, node - 1] = series[k]
    return out


_UNIT_TO_MW = {"kw": 1e-3, "mw": 1.0}


def load_traces(pv_file, load_file, grid: TimeGrid, n_nodes: int, start_s: float,
                steps: int, base_mva: float = 1.0, unit: str = "kW") -> Traces:
    """Read PV availability and load traces (CSV ``timestamp_s,node,value_kw``)
    for ``steps`` real-time slots starting at ``start_s``.

    Every node listed in a file must have a value at every step. ``unit`` is
    the unit the configuration expects; a file in another unit is rejected.
    """
    if unit.lower() not in _UNIT_TO_MW:
        raise UnitMismatch(f"unsupported trace unit {unit!r}")
    scale = _UNIT_TO_MW[unit.lower()] / base_mva
    pv = _read_trace(pv_file, n_nodes, unit, start_s, grid.dt_rt, steps) * scale
    lp = _read_trace(load_file, n_nodes, unit, start_s, grid.dt_rt, steps) * scale
    return Traces(float(start_s), grid.dt_rt, pv, lp, lp * LOAD_Q_RATIO)


def write_trace(path, t0: float, dt: float, series: np.ndarray, nodes, unit: str = "kW",
                base_mva: float = 1.0) -> None:
    """Write per-unit ``series[k, j]`` for ``nodes[j]`` in ``unit``."""
    scale = base_mva / _UNIT_TO_MW[unit.lower()]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([TRACE_TIME, "node", f"value_{unit.lower()}"])
        for k in range(series.shape[0]):
            for j, node in enumerate(nodes):
                w.writerow([f"{t0 + k * dt:g}", node, f"{series[k, j] * scale:.6f}"])
