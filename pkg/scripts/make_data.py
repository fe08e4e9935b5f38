"""Regenerate the shipped data under src/twostage/data.

The 37-node feeder is a single-phase equivalent of the IEEE 37-node test
feeder: node 799 is the substation (node 0), the remaining nodes are
numbered in ascending order of their IEEE names, segment impedances use the
self impedance of each cable configuration and the substation transformer
is replaced by its series impedance. Everything else (the market day, the
traces) is synthetic and seeded.
"""
from __future__ import annotations

import argparse
import csv
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "twostage" / "data"
SEED = 20220601

NAMES = [701, 702, 703, 704, 705, 706, 707, 708, 709, 710, 711, 712, 713, 714, 718,
         720, 722, 724, 725, 727, 728, 729, 730, 731, 732, 733, 734, 735, 736, 737,
         738, 740, 741, 742, 744, 775]
INDEX = {799: 0, **{n: i + 1 for i, n in enumerate(NAMES)}}

# ohm per mile
CONFIG = {721: (0.2926, 0.1973), 722: (0.4751, 0.2973), 723: (1.2936, 0.6713),
          724: (2.0952, 0.7758)}

# from, to, length in feet, configuration
SEGMENTS = [
    (799, 701, 1850, 721), (701, 702, 960, 722), (702, 705, 400, 724),
    (702, 713, 360, 723), (702, 703, 1320, 722), (703, 727, 240, 724),
    (703, 730, 600, 723), (704, 714, 80, 724), (704, 720, 800, 723),
    (705, 742, 320, 724), (705, 712, 240, 724), (706, 725, 280, 724),
    (707, 724, 760, 724), (707, 722, 120, 724), (708, 733, 320, 723),
    (708, 732, 320, 724), (709, 731, 600, 723), (709, 708, 320, 723),
    (710, 735, 200, 724), (710, 736, 1280, 724), (711, 741, 400, 723),
    (711, 740, 200, 724), (713, 704, 520, 723), (714, 718, 520, 724),
    (720, 707, 920, 724), (720, 706, 600, 723), (727, 744, 280, 723),
    (730, 709, 200, 723), (733, 734, 560, 723), (734, 737, 640, 723),
    (734, 710, 520, 724), (737, 738, 400, 723), (738, 711, 400, 723),
    (744, 728, 200, 724), (744, 729, 280, 724),
]
# 500 kVA, 4.8/0.48 kV, 0.09 % R and 1.81 % X on its own rating, referred to
# the 4.8 kV side
XFM = (709, 775, 0.0009 * 4.8 ** 2 / 0.5, 0.0181 * 4.8 ** 2 / 0.5)

# spot loads summed over phases, kW and kvar
LOADS = {701: (630, 315), 712: (85, 40), 713: (85, 40), 714: (38, 18), 718: (85, 40),
         720: (85, 40), 722: (161, 80), 724: (42, 21), 725: (42, 21), 727: (42, 21),
         728: (126, 63), 729: (42, 21), 730: (85, 40), 731: (85, 40), 732: (42, 21),
         733: (85, 40), 734: (42, 21), 735: (85, 40), 736: (42, 21), 737: (140, 70),
         738: (126, 62), 740: (85, 40), 741: (42, 21), 742: (93, 44), 744: (42, 21)}

DER_NODES = [3, 4, 5, 6, 7, 8, 9, 10, 11, 14, 16, 18, 19, 20, 23, 24, 26, 27]
DER_KVA = {3: 340.0}
DEFAULT_KVA = 200.0

G_CAP = sum(DER_KVA.get(n, DEFAULT_KVA) for n in DER_NODES) / 1000.0  # MWh per hour
TR_MAX = 5.0
RT_HOUR = 12
RT_STEPS = 720
REF_PRICE = 50.0


def rng(label):
    import zlib
    return np.random.default_rng([SEED, zlib.crc32(label.encode())])


def write_rows(path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def feeder_files():
    lines = []
    for a, b, ft, cfg in SEGMENTS:
        r, x = CONFIG[cfg]
        miles = ft / 5280.0
        lines.append((INDEX[a], INDEX[b], round(r * miles, 6), round(x * miles, 6)))
    lines.append((INDEX[XFM[0]], INDEX[XFM[1]], round(XFM[2], 6), round(XFM[3], 6)))
    write_rows(OUT / "feeder37_lines.csv", ["from", "to", "r_ohm", "x_ohm"], lines)
    nodes = [(n, DER_KVA.get(n, DEFAULT_KVA), 0.0, DER_KVA.get(n, DEFAULT_KVA), 3.0, 1.0)
             for n in DER_NODES]
    write_rows(OUT / "feeder37_nodes.csv",
               ["node", "s_max_kva", "p_min_kw", "p_max_kw", "cost_a", "cost_b"], nodes)
    write_rows(OUT / "feeder37_loads.csv", ["node", "p_kw", "q_kvar"],
               [(INDEX[n], p, q) for n, (p, q) in sorted(LOADS.items())])


def pv_shape(hour):
    """Clear-sky availability as a fraction of rating, centred on 12:30."""
    x = (hour + 0.5 - 12.5) / 6.5
    return max(0.0, math.cos(0.5 * math.pi * x)) ** 1.5 if abs(x) < 1 else 0.0


def load_shape(hour):
    return 0.55 + 0.2 * math.exp(-((hour - 8) / 2.5) ** 2) + 0.3 * math.exp(-((hour - 19) / 2.5) ** 2)


def market_day():
    """24 hours of rival curves whose reference clearing price is the same in
    every hour, inside wide marginal blocks that the DSO cannot move past."""
    r = rng("market-day")
    nominal_load = sum(p for p, _ in LOADS.values()) / 1000.0
    curves, forecast = [], []
    for t in range(24):
        sup = [(round(r.uniform(5, 20), 2), round(r.uniform(1, 3), 3)),
               (round(r.uniform(20, 35), 2), round(r.uniform(1, 3), 3)),
               (round(r.uniform(35, 48), 2), round(r.uniform(1, 3), 3)),
               (REF_PRICE, 12.0),
               (round(r.uniform(55, 70), 2), round(r.uniform(1, 3), 3)),
               (round(r.uniform(70, 95), 2), round(r.uniform(1, 3), 3))]
        below = sum(q for p, q in sup if p < REF_PRICE)
        dem = [(round(r.uniform(110, 150), 2), round(r.uniform(1, 3), 3)),
               (round(r.uniform(80, 110), 2), round(r.uniform(1, 3), 3)),
               (round(r.uniform(55, 80), 2), round(r.uniform(1, 3), 3)),
               (REF_PRICE, 12.0),
               (round(r.uniform(30, 45), 2), round(r.uniform(1, 3), 3)),
               (round(r.uniform(10, 30), 2), round(r.uniform(1, 3), 3))]
        above = sum(q for p, q in dem if p > REF_PRICE)
        # rival crossing sits strictly inside both price-50 blocks with at
        # least TR_MAX of slack on either side
        assert below + TR_MAX < above + 12.0 and above + TR_MAX < below + 12.0
        for p, q in sup:
            curves.append((t, "supply", p, q))
        for p, q in dem:
            curves.append((t, "demand", p, q))
        g = round(G_CAP * 0.9 * pv_shape(t), 4)
        l = round(nominal_load * load_shape(t), 4)
        forecast.append((t, g, l))
    write_rows(OUT / "day_curves.csv", ["hour", "side", "price_eur_mwh", "quantity_mwh"], curves)
    write_rows(OUT / "day_forecast.csv", ["hour", "generation_mwh", "load_mwh"], forecast)


def desk_instance():
    curves = [(0, "supply", 10.0, 5.0), (0, "supply", 30.0, 5.0), (0, "supply", 60.0, 5.0),
              (0, "demand", 90.0, 6.0), (0, "demand", 70.0, 4.0), (0, "demand", 20.0, 5.0)]
    write_rows(OUT / "desk_curves.csv", ["hour", "side", "price_eur_mwh", "quantity_mwh"], curves)
    write_rows(OUT / "desk_forecast.csv", ["hour", "generation_mwh", "load_mwh"], [(0, 12.0, 2.0)])


def rt_traces():
    """One hour of 5 s PV availability and load at hour RT_HOUR: high sun with
    passing thin clouds and light load, the condition that drives the feeder
    above its upper voltage limit."""
    r = rng("rt-traces")
    k = np.arange(RT_STEPS)
    t0 = RT_HOUR * 3600
    base = 0.97
    cloud = 0.03 * np.sin(2 * np.pi * k / 240.0) + 0.015 * np.sin(2 * np.pi * k / 67.0)
    rows = []
    for n in DER_NODES:
        kva = DER_KVA.get(n, DEFAULT_KVA)
        local = r.normal(0.0, 0.005, RT_STEPS)
        frac = np.clip(base + cloud + local, 0.0, 1.0)
        for j in k:
            rows.append((t0 + 5 * int(j), n, round(kva * float(frac[j]), 4)))
    rows.sort()
    write_rows(OUT / "rt_pv.csv", ["timestamp_s", "node", "value_kw"], rows)
    rows = []
    level = 0.5
    for name, (p, _) in sorted(LOADS.items()):
        noise = r.normal(0.0, 0.01, RT_STEPS)
        for j in k:
            rows.append((t0 + 5 * int(j), INDEX[name], round(p * level * (1 + float(noise[j])), 4)))
    rows.sort()
    write_rows(OUT / "rt_load.csv", ["timestamp_s", "node", "value_kw"], rows)


CONFIG_TEXT = f"""\
# Shipped scenario. Relative paths resolve against this file's directory.
curves = day_curves.csv
forecast = day_forecast.csv
feeder_lines = feeder37_lines.csv
feeder_nodes = feeder37_nodes.csv
feeder_loads = feeder37_loads.csv
pv_trace = rt_pv.csv
load_trace = rt_load.csv
trace_unit = kW
rt_hour = {RT_HOUR}
rt_steps = {RT_STEPS}
base_mva = 1.0
base_kv = 4.8
v0_pu = 1.02
g_cap = {G_CAP}
tr_max = {TR_MAX}
a1 = 0.7
a2 = 1.7
p1 = 15
p2 = 20
sigma = 0.2
sigmas = 0,0.1,0.2
gammas = 5,30
n_samples = 1000
seed = 7
gamma = 30
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    globals()["OUT"] = args.out
    OUT.mkdir(parents=True, exist_ok=True)
    feeder_files()
    market_day()
    desk_instance()
    rt_traces()
    (OUT / "scenario.cfg").write_text(CONFIG_TEXT)


if __name__ == "__main__":
    main()
