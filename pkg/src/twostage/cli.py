"""``twostage`` command line: day-ahead bid, real-time run, the combined
pipeline and the validation suites.

Exit codes: 0 success, 1 a solve or validation failed, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .bilevel import BilevelError, read_decision
from .config import ConfigError, RunConfig, load_config
from .grid import FeederError
from .market import CurveError, imbalance_prices
from .scenario import MisalignedGrids, TraceGap, UnitMismatch
from .validate import SUITES, data_file, run_suite
from .workflow import (da_summary, fmt, load_rt, run_rt, solve_day_ahead, write_da,
                       write_rt, write_summary)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

DA_COLUMNS = ["objective_eur", "offered_energy_mwh", "purchased_energy_mwh", "net_sale_mwh"]
RT_SUMMARY_COLUMNS = ["mean_abs_imbalance_mwh", "max_abs_imbalance_mwh", "controlled_max_voltage_pu",
              "controlled_max_voltage_settled_pu", "uncontrolled_max_voltage_pu",
              "controlled_steps_beyond_allowance", "incentive_magnitude_pu"]
COMPARISON_COLUMNS = ["sigma", "gamma"] + DA_COLUMNS + RT_SUMMARY_COLUMNS
SIGMA_COLUMNS = ["sigma"] + DA_COLUMNS + ["status"]

INPUT_ERRORS = (ConfigError, CurveError, FeederError, MisalignedGrids, TraceGap, UnitMismatch,
                FileNotFoundError, ValueError)


class UsageError(ValueError):
    pass


def default_config() -> Path:
    return data_file("scenario.cfg")


def tag(x: float) -> str:
    return f"{x:g}"


def _config(args) -> RunConfig:
    cfg = load_config(args.config or default_config())
    return cfg.with_overrides(seed=getattr(args, "seed", None),
                              sigma=getattr(args, "sigma", None),
                              gamma=getattr(args, "gamma", None))


def _report_hours(decision) -> bool:
    bad = [h for h in decision.hours if h.status.value != "Optimal"]
    for h in bad:
        print(f"hour {h.hour}: {h.status.value}", file=sys.stderr)
    return not bad


def _write_table(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- commands ----------------------------------------------------------------------

def cmd_da_bid(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    if args.sweep:
        if not cfg.sigmas:
            raise UsageError("sigmas is empty: nothing to sweep")
        rows, ok = [], True
        for sigma in cfg.sigmas:
            run = solve_day_ahead(cfg, sigma)
            s = write_da(out / f"sigma_{tag(sigma)}", run)
            ok &= _report_hours(run.decision)
            rows.append([s[c] for c in SIGMA_COLUMNS])
            print(f"sigma {tag(sigma)}: objective {s['objective_eur']}, "
                  f"offered {s['offered_energy_mwh']} MWh")
        _write_table(out / "comparison.csv", SIGMA_COLUMNS, rows)
        return EXIT_OK if ok else EXIT_FAIL
    run = solve_day_ahead(cfg)
    s = write_da(out, run)
    if any(imbalance_prices(cfg.prices, h.lambda_da)[0] < 0 for h in run.decision.hours):
        print("note: negative surplus price in some hours (prices are not floored)")
    print(f"objective {s['objective_eur']}, offered {s['offered_energy_mwh']} MWh, "
          f"{s['hours_optimal']}/{len(run.decision)} hours optimal")
    return EXIT_OK if _report_hours(run.decision) else EXIT_FAIL


def cmd_rt_run(args) -> int:
    cfg = _config(args)
    if not Path(args.da).is_file():
        raise FileNotFoundError(f"day-ahead decision not found: {args.da}")
    decision = read_decision(args.da)
    if len(decision) != cfg.grid.T:
        raise MisalignedGrids(f"{args.da}: {len(decision)} hours, expected {cfg.grid.T}")
    setup = load_rt(cfg)
    trace, E = run_rt(cfg, setup, decision, cfg.gamma)
    s = write_rt(Path(args.out), cfg, setup, trace, E, cfg.gamma)
    print(f"max voltage {s['controlled_max_voltage_pu']} pu (uncontrolled "
          f"{s['uncontrolled_max_voltage_pu']}), mean |imbalance| "
          f"{s['mean_abs_imbalance_mwh']} MWh")
    if s["voltage_violation"] == "yes":
        print(f"uncontrolled trajectory exceeds {cfg.v_max} pu in "
              f"{s['uncontrolled_violation_steps']} steps")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    sigmas = (cfg.sigma,) if args.sigma is not None else cfg.sigmas
    gammas = (cfg.gamma,) if args.gamma is not None else cfg.gammas
    if not sigmas or not gammas:
        raise UsageError("the (sigma, gamma) grid is empty; set sigmas and gammas")
    out = Path(args.out)
    setup = load_rt(cfg)
    rows, ok = [], True
    for sigma in sigmas:
        run = solve_day_ahead(cfg, sigma)
        ok &= _report_hours(run.decision)
        da = da_summary(run)
        for gamma in gammas:
            d = out / f"sigma_{tag(sigma)}_gamma_{tag(gamma)}"
            write_da(d, run)
            trace, E = run_rt(cfg, setup, run.decision, gamma)
            rt = write_rt(d, cfg, setup, trace, E, gamma)
            write_summary(d / "summary.txt", {**da, **rt})
            rows.append([fmt(sigma), fmt(gamma)] + [da[c] for c in DA_COLUMNS]
                        + [rt[c] for c in RT_SUMMARY_COLUMNS])
            print(f"sigma {tag(sigma)} gamma {tag(gamma)}: offered {da['offered_energy_mwh']} "
                  f"MWh, max voltage {rt['controlled_max_voltage_pu']} pu, mean |imbalance| "
                  f"{rt['mean_abs_imbalance_mwh']} MWh")
    _write_table(out / "comparison.csv", COMPARISON_COLUMNS, rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_validate(args) -> int:
    cfg = _config(args)
    suites = SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in suites:
        print(f"[{name}]")
        for check in run_suite(name, cfg):
            print("  " + check.line())
            ok &= check.passed
    print("all checks passed" if ok else "some checks failed")
    return EXIT_OK if ok else EXIT_FAIL


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twostage", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", type=Path, help="run configuration (default: shipped scenario)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        if out:
            p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("da-bid", help="solve the day-ahead bid")
    common(p)
    p.add_argument("--sigma", type=float, help="forecast error std as a fraction of G_cap")
    p.add_argument("--sweep", action="store_true", help="solve every configured sigma")
    p.set_defaults(func=cmd_da_bid)

    p = sub.add_parser("rt-run", help="run the real-time market for the configured hour")
    common(p)
    p.add_argument("--da", type=Path, required=True, help="day-ahead decision CSV")
    p.add_argument("--gamma", type=float, help="imbalance weight")
    p.set_defaults(func=cmd_rt_run)

    p = sub.add_parser("pipeline", help="day-ahead then real-time over the (sigma, gamma) grid")
    common(p)
    p.add_argument("--sigma", type=float, help="run only this sigma")
    p.add_argument("--gamma", type=float, help="run only this gamma")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("validate", help="run an oracle or invariant suite")
    common(p, out=False)
    p.add_argument("suite", choices=SUITES + ("all",))
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BilevelError, RuntimeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
