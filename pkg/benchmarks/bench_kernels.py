"""Compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times the box-disc projection over the shipped feeder's DERs and one AC
sweep of the shipped feeder at rated PV, and checks the two backends agree.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from twostage.grid import load_feeder, read_loads
from twostage.kernels import _pykernels
from twostage.validate import data_file

try:
    from twostage.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases():
    feeder = load_feeder(data_file("feeder37_lines.csv"), data_file("feeder37_nodes.csv"),
                         v0=1.02)
    lp, lq = read_loads(data_file("feeder37_loads.csv"), feeder)
    p = -0.5 * lp
    q = -0.5 * lq
    p[feeder.der_nodes - 1] += [d.s_max for d in feeder.ders]
    order, parent, r, x = feeder.sweep_data
    sweep = (order, parent, r, x, p, q, feeder.v0, 1e-10, 100)
    rng = np.random.default_rng(0)
    n = 1000
    s = rng.uniform(0.05, 1.0, n)
    proj = (rng.normal(size=n) * s, rng.normal(size=n) * s, np.zeros(n), 0.8 * s, s)
    return sweep, proj


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    sweep, proj = cases()
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {}
    for name, mod in backends:
        t_sweep = min(timeit.repeat(lambda: mod.bfs_sweep(*sweep), number=args.repeat // 10 or 1,
                                    repeat=3)) / (args.repeat // 10 or 1)
        t_proj = min(timeit.repeat(lambda: mod.project_box_disc(*proj), number=args.repeat // 10 or 1,
                                   repeat=3)) / (args.repeat // 10 or 1)
        results[name] = (t_sweep, t_proj, mod.bfs_sweep(*sweep), mod.project_box_disc(*proj))
        print(f"{name:7s} sweep {t_sweep * 1e6:10.1f} us   projection x1000 {t_proj * 1e6:10.1f} us")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speed-up: sweep {py[0] / cy[0]:.1f}x, projection {py[1] / cy[1]:.1f}x")
        dv = max(np.max(np.abs(py[2][0] - cy[2][0])), np.max(np.abs(py[2][1] - cy[2][1])))
        dp = max(np.max(np.abs(py[3][0] - cy[3][0])), np.max(np.abs(py[3][1] - cy[3][1])))
        print(f"max difference: sweep {dv:.1e} pu, projection {dp:.1e}")
    else:
        print("compiled kernels not built; only the fallback was timed")


if __name__ == "__main__":
    main()
