"""Command line entry point: ``python -m evcharge {run,report,validate,show-config}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import oracle, report, runner
from .kernel import ContractViolation
from .metrics import BIN_WIDTH_S, E_STAR_WS
from .protocol import HorizonError
from .scenario import ConfigError, ScenarioConfig, dump_config, load_config, sample_fleet
from .signals import WS_PER_KWH, SeriesError, load_series

log = logging.getLogger("evcharge")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_SIMULATION = 4
EXIT_VALIDATION = 5


def _base_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ScenarioConfig()
    changes = {}
    if getattr(args, "price_interval", None) is not None:
        changes["price_interval_s"] = args.price_interval
    if getattr(args, "horizon", None) is not None:
        changes["horizon_s"] = args.horizon
    return cfg.replace(**changes).validate() if changes else cfg


def cmd_run(args) -> int:
    base = _base_config(args)
    if args.matrix == "builtin":
        matrix = runner.builtin_matrix(args.reps, args.seed)
    else:
        matrix = runner.load_matrix(args.matrix, args.reps, args.seed)
    prices = pv = None
    if args.prices:
        if not Path(args.prices).exists():
            raise FileNotFoundError(f"price file not found: {args.prices}")
        prices = load_series(args.prices, "prices")
    if args.pv:
        if not Path(args.pv).exists():
            raise FileNotFoundError(f"PV file not found: {args.pv}")
        pv = load_series(args.pv, "pv")
    settings = runner.RunSettings(base=base, e_star_ws=args.e_star * WS_PER_KWH,
                                  bin_width_s=BIN_WIDTH_S, prices=prices)
    out = Path(args.out)
    results = runner.run_matrix(matrix, settings=settings, workers=args.workers)
    runner.write_results(results, out)
    runner.write_matrix(matrix, out / "matrix.csv")
    (out / "config.toml").write_text(dump_config(base), encoding="utf-8")
    for row in matrix.rows:
        reps = range(matrix.replications) if args.traces else [0]
        for k in reps:
            seed = runner.replication_seed(matrix.root_seed, row.exp_id, k)
            _, result = runner.run_experiment(row, None, seed, settings, keep_result=True)
            runner.write_run_detail(result, out / "runs" / f"exp{row.exp_id:02d}_rep{k}")
    if not args.no_plots:
        trace = label = None
        if prices is not None and pv is not None:
            trace, label = report.find_overlay_trace(out, args.overlay_exp)
        report.emit_report(runner.read_results(out), out / "figures", prices, pv, trace, label,
                           base.horizon_s)
    print(f"{matrix.total_runs} runs written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    results = runner.read_results(args.in_dir)
    prices = pv = trace = None
    label = ""
    if args.prices or args.pv:
        if not (args.prices and args.pv):
            raise ConfigError("the overlay needs both --prices and --pv")
        prices, pv = report.load_overlay_inputs(args.prices, args.pv)
        trace, label = report.find_overlay_trace(args.in_dir, args.overlay_exp)
    files = report.emit_report(results, args.out, prices, pv, trace, label, args.horizon)
    for f in files:
        print(f)
    return EXIT_OK


def cmd_validate(args) -> int:
    base = _base_config(args)
    cfg = base.replace(ev_count=args.evs, cc_count=args.columns, cc_kind=args.kind,
                       strategy=args.strategy).validate()
    fleet = sample_fleet(cfg, args.seed)
    rep = oracle.validate(cfg, fleet, args.dt, args.e_star * WS_PER_KWH)
    text = rep.text()
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rep.write_csv(out / "comparison.csv")
        (out / "report.txt").write_text(text, encoding="utf-8")
    ok = rep.max_energy_delta <= cfg.column_kinds()[0].rating_watts * args.dt and rep.max_ttr_delta <= args.dt
    return EXIT_OK if ok or not args.strict else EXIT_VALIDATION


def cmd_show_config(args) -> int:
    cfg = _base_config(args)
    print(dump_config(cfg), end="")
    print(f"# reference energy for TTR: {E_STAR_WS / WS_PER_KWH} kWh (--e-star)")
    print(f"# sandbox power bins: {BIN_WIDTH_S} s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evcharge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML file overriding scenario fields")
        sp.add_argument("--price-interval", type=float, dest="price_interval")
        sp.add_argument("--horizon", type=float)

    r = sub.add_parser("run", help="run an experiment matrix")
    r.add_argument("--matrix", default="builtin", help="'builtin' or a CSV exp_id,evs,fcc,scc,strategy")
    r.add_argument("--seed", type=int, default=20260101)
    r.add_argument("--reps", type=int, default=30)
    r.add_argument("--out", default="out")
    r.add_argument("--prices")
    r.add_argument("--pv")
    r.add_argument("--e-star", type=float, default=E_STAR_WS / WS_PER_KWH, dest="e_star",
                   help="reference energy in kWh")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--traces", action="store_true", help="write per-run traces for every replication")
    r.add_argument("--no-plots", action="store_true", dest="no_plots")
    r.add_argument("--overlay-exp", type=int, dest="overlay_exp")
    common(r)
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="regenerate figures from an output tree")
    rp.add_argument("--in", required=True, dest="in_dir")
    rp.add_argument("--out", required=True)
    rp.add_argument("--prices")
    rp.add_argument("--pv")
    rp.add_argument("--overlay-exp", type=int, dest="overlay_exp")
    rp.add_argument("--horizon", type=float, default=86_400.0)
    rp.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="compare against the fixed-step simulator")
    v.add_argument("--dt", type=float, required=True)
    v.add_argument("--evs", type=int, required=True)
    v.add_argument("--columns", type=int, default=3)
    v.add_argument("--kind", default="SCC", choices=["FCC", "SCC"])
    v.add_argument("--strategy", default="FCFS", choices=["FCFS", "SHRD"])
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--e-star", type=float, default=E_STAR_WS / WS_PER_KWH, dest="e_star")
    v.add_argument("--out")
    v.add_argument("--strict", action="store_true", help="exit nonzero if the one-step bounds fail")
    common(v)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("show-config", help="print the effective scenario defaults")
    common(s)
    s.set_defaults(func=cmd_show_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, oracle.AlignmentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, SeriesError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (HorizonError, ContractViolation) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
