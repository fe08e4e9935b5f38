"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored; unknown keys are errors. Paths are
resolved against the directory of the configuration file.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .market import ImbalancePriceModel, TimeGrid
from .rtmarket import RtConfig


class ConfigError(ValueError):
    pass


PATH_KEYS = ("curves", "forecast", "feeder_lines", "feeder_nodes", "pv_trace", "load_trace")
OPTIONAL_PATH_KEYS = ("feeder_loads",)


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    return tuple(float(v) for v in text.split(",") if v.strip()) if text else ()


@dataclass(frozen=True)
class RunConfig:
    curves: Path
    forecast: Path
    feeder_lines: Path
    feeder_nodes: Path
    pv_trace: Path
    load_trace: Path
    feeder_loads: Path | None = None  # nominal spot loads, used by validation
    trace_unit: str = "kW"
    rt_hour: int = 12
    rt_steps: int = 720
    base_mva: float = 1.0
    base_kv: float = 4.8
    v0_pu: float = 1.0
    g_cap: float = 1.0
    tr_max: float = 1.0
    a1: float = 0.7
    a2: float = 1.7
    p1: float = 15.0
    p2: float = 20.0
    sigma: float = 0.0
    sigmas: tuple[float, ...] = (0.0, 0.1, 0.2)
    gammas: tuple[float, ...] = (5.0, 30.0)
    n_samples: int = 1000
    seed: int = 0
    gamma: float = 30.0
    eta: float = RtConfig.eta
    eps_p: float = RtConfig.eps_p
    eps_q: float = RtConfig.eps_q
    eps_lambda: float = RtConfig.eps_lambda
    v_min: float = 0.95
    v_max: float = 1.045
    dt_da: float = 3600.0
    dt_rt: float = 5.0
    feedback: str = "ac-sweep"
    mip_gap: float = 1e-6
    source: Path | None = field(default=None, compare=False)

    @property
    def prices(self) -> ImbalancePriceModel:
        return ImbalancePriceModel(self.a1, self.a2, self.p1, self.p2)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(24, self.dt_da, self.dt_rt)

    def rt(self, gamma: float | None = None) -> RtConfig:
        return RtConfig(self.gamma if gamma is None else gamma, self.eta, self.eps_p,
                        self.eps_q, self.eps_lambda, self.v_min, self.v_max, self.dt_rt,
                        self.feedback)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    known = {f.name: f for f in fields(RunConfig) if f.name != "source"}
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            if key in PATH_KEYS + OPTIONAL_PATH_KEYS:
                values[key] = (path.parent / val).resolve()
            elif key in ("sigmas", "gammas"):
                values[key] = _floats(val)
            else:
                typ = known[key].type
                cast = {"int": int, "float": float, "str": str}.get(typ, str)
                values[key] = cast(val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    missing = [k for k in PATH_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing keys {missing}")
    for k in PATH_KEYS + OPTIONAL_PATH_KEYS:
        if k in values and not values[k].is_file():
            raise ConfigError(f"{path}: {k} file not found: {values[k]}")
    cfg = RunConfig(source=path, **values)
    validate_ranges(cfg)
    return cfg


def validate_ranges(cfg: RunConfig) -> None:
    if cfg.g_cap <= 0 or cfg.tr_max <= 0:
        raise ConfigError("g_cap and tr_max must be positive")
    if cfg.n_samples < 2:
        raise ConfigError("n_samples must be at least 2")
    if cfg.sigma < 0 or any(s < 0 for s in cfg.sigmas):
        raise ConfigError("sigma values must be nonnegative")
    if not (0 <= cfg.rt_hour < 24) or cfg.rt_steps < 1:
        raise ConfigError("rt_hour must lie in 0..23 and rt_steps be positive")
    try:
        cfg.rt()
        cfg.prices
        cfg.grid
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
