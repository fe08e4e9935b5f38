"""Market data types: price-quantity blocks, curves, time grid, forecasts and
the balancing-price model."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

SUPPLY = "supply"
DEMAND = "demand"


class CurveError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    price: float
    quantity: float
    index: int

    def __post_init__(self):
        if not math.isfinite(self.price):
            raise CurveError(f"non-finite block price {self.price!r}")
        if not (self.quantity >= 0):
            raise CurveError(f"negative block quantity {self.quantity!r}")


@dataclass(frozen=True)
class BlockCurve:
    side: str
    hour: int
    blocks: tuple[Block, ...]

    @property
    def prices(self) -> list[float]:
        return [b.price for b in self.blocks]

    @property
    def quantities(self) -> list[float]:
        return [b.quantity for b in self.blocks]

    @property
    def total_quantity(self) -> float:
        return sum(b.quantity for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def raw(self) -> list[tuple[float, float]]:
        return [(b.price, b.quantity) for b in self.blocks]


def build_curve(side: str, hour: int,
                raw_blocks: Iterable[tuple[float, float]]) -> BlockCurve:
    """Sort blocks in merit order and drop empty ones.

    Supply is sorted by nondecreasing price, demand by nonincreasing price;
    equal prices keep their input order.
    """
    if side not in (SUPPLY, DEMAND):
        raise CurveError(f"unknown curve side {side!r}")
    pairs = []
    for price, qty in raw_blocks:
        price, qty = float(price), float(qty)
        if not math.isfinite(price):
            raise CurveError(f"non-finite price in {side} curve, hour {hour}")
        if not math.isfinite(qty) or qty < 0:
            raise CurveError(f"invalid quantity {qty} in {side} curve, hour {hour}")
        if qty > 0:
            pairs.append((price, qty))
    if not pairs:
        raise CurveError(f"empty {side} curve for hour {hour}")
    pairs.sort(key=lambda pq: pq[0], reverse=(side == DEMAND))
    blocks = tuple(Block(p, q, i) for i, (p, q) in enumerate(pairs))
    return BlockCurve(side, int(hour), blocks)


@dataclass(frozen=True)
class TimeGrid:
    T: int = 24
    dt_da: float = 3600.0
    dt_rt: float = 5.0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("TimeGrid needs T >= 1")
        if self.dt_rt <= 0 or self.dt_da <= 0:
            raise ValueError("slot lengths must be positive")

    @property
    def aligned(self) -> bool:
        ratio = self.dt_da / self.dt_rt
        return abs(ratio - round(ratio)) < 1e-9

    @property
    def steps_per_slot(self) -> int:
        return int(round(self.dt_da / self.dt_rt))


@dataclass(frozen=True)
class ImbalancePriceModel:
    a1: float = 0.7
    a2: float = 1.7
    p1: float = 15.0
    p2: float = 20.0

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("imbalance multipliers must be nonnegative")


def imbalance_prices(model: ImbalancePriceModel, da_price: float) -> tuple[float, float]:
    """Balancing sell/buy prices ``(pr_plus, pr_minus)`` for a DA price.

    No flooring: ``pr_plus`` goes negative when ``da_price < p1``.
    """
    return model.a1 * (da_price - model.p1), model.a2 * (da_price + model.p2)


@dataclass(frozen=True)
class DsoForecast:
    """Per-hour aggregated generation and load forecasts of the DSO (MWh)."""
    generation: tuple[float, ...]
    load: tuple[float, ...]
    g_cap: float
    tr_max: float

    def __post_init__(self):
        if len(self.generation) != len(self.load):
            raise ValueError("generation and load forecasts differ in length")
        if self.tr_max <= 0:
            raise ValueError("transmission cap must be positive")
        for t, (g, l) in enumerate(zip(self.generation, self.load)):
            if not (0 <= g <= self.g_cap + 1e-12):
                raise ValueError(f"hour {t}: generation {g} outside [0, {self.g_cap}]")
            if l < 0:
                raise ValueError(f"hour {t}: negative load {l}")

    @property
    def T(self) -> int:
        return len(self.generation)

    def net(self, t: int) -> float:
        return self.generation[t] - self.load[t]

    def hours(self, selection: Sequence[int]) -> "DsoForecast":
        return DsoForecast(tuple(self.generation[t] for t in selection),
                           tuple(self.load[t] for t in selection),
                           self.g_cap, self.tr_max)


# -- CSV ----------------------------------------------------------------------

CURVE_COLUMNS = ["hour", "side", "price_eur_mwh", "quantity_mwh"]


def read_curves(path) -> dict[int, tuple[BlockCurve, BlockCurve]]:
    """Read a curve CSV into ``{hour: (supply, demand)}``."""
    path = Path(path)
    raw: dict[tuple[int, str], list] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(CURVE_COLUMNS) - set(reader.fieldnames):
            raise CurveError(f"{path}: expected columns {CURVE_COLUMNS}")
        for row in reader:
            side = row["side"].strip()
            raw.setdefault((int(row["hour"]), side), []).append(
                (float(row["price_eur_mwh"]), float(row["quantity_mwh"])))
    hours = sorted({h for h, _ in raw})
    curves = {}
    for h in hours:
        if (h, SUPPLY) not in raw or (h, DEMAND) not in raw:
            raise CurveError(f"{path}: hour {h} lacks a supply or demand curve")
        curves[h] = (build_curve(SUPPLY, h, raw[(h, SUPPLY)]),
                     build_curve(DEMAND, h, raw[(h, DEMAND)]))
    return curves


def write_curves(path, curves: dict[int, tuple[BlockCurve, BlockCurve]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for h in sorted(curves):
            for curve in curves[h]:
                for b in curve.blocks:
                    w.writerow([h, curve.side, repr(b.price), repr(b.quantity)])


def read_forecast(path, g_cap: float, tr_max: float) -> DsoForecast:
    """Forecast CSV with columns ``hour,generation_mwh,load_mwh``."""
    rows = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["hour"]), float(row["generation_mwh"]),
                         float(row["load_mwh"])))
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: hours must be 0..T-1 without gaps")
    return DsoForecast(tuple(r[1] for r in rows), tuple(r[2] for r in rows),
                       g_cap, tr_max)
