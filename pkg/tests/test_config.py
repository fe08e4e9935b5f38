import pytest

from twostage.config import ConfigError, load_config
from twostage.validate import data_file


def test_shipped_config_resolves_paths():
    cfg = load_config(data_file("scenario.cfg"))
    assert cfg.curves.is_absolute() and cfg.curves.is_file()
    assert cfg.feeder_loads is not None and cfg.feeder_loads.is_file()
    assert cfg.sigmas == (0.0, 0.1, 0.2) and cfg.gammas == (5.0, 30.0)
    assert cfg.grid.steps_per_slot == 720
    assert cfg.rt(5.0).gamma == 5.0 and cfg.rt().gamma == cfg.gamma
    assert cfg.with_overrides(seed=3, sigma=None).seed == 3


def test_relative_paths_follow_the_file(tmp_path):
    text = data_file("scenario.cfg").read_text()
    for name in ("day_curves", "day_forecast", "feeder37_lines", "feeder37_nodes",
                 "feeder37_loads", "rt_pv", "rt_load"):
        (tmp_path / f"{name}.csv").write_bytes(data_file(f"{name}.csv").read_bytes())
    (tmp_path / "sub").mkdir()
    cfg_path = tmp_path / "sub" / "run.cfg"
    cfg_path.write_text(text.replace(" = day_", " = ../day_").replace(" = feeder37", " = ../feeder37")
                        .replace(" = rt_", " = ../rt_"))
    cfg = load_config(cfg_path)
    assert cfg.curves == (tmp_path / "day_curves.csv").resolve()


@pytest.mark.parametrize("extra, message", [
    ("seed = 1\nseed = 2", "duplicate key"),
    ("no equals sign", "expected 'key = value'"),
    ("g_cap = -1", "positive"),
    ("rt_hour = 30", "rt_hour"),
    ("feedback = telepathy", "feedback"),
])
def test_rejections(tmp_path, extra, message):
    base = data_file("scenario.cfg").read_text()
    body = "\n".join(line for line in base.splitlines()
                     if not line.startswith(("seed", "g_cap", "rt_hour")))
    path = tmp_path / "bad.cfg"
    lines = []
    for line in body.splitlines():
        if line.split("=")[0].strip() in ("curves", "forecast", "feeder_lines", "feeder_nodes",
                                          "feeder_loads", "pv_trace", "load_trace"):
            k, v = (s.strip() for s in line.split("="))
            line = f"{k} = {data_file(v)}"
        lines.append(line)
    path.write_text("\n".join(lines) + "\n" + extra + "\n")
    with pytest.raises(ConfigError, match=message):
        load_config(path)


def test_missing_required_key(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(f"curves = {data_file('day_curves.csv')}\n")
    with pytest.raises(ConfigError, match="missing keys"):
        load_config(path)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.cfg")
