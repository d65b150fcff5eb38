"""Figures and summaries regenerated from an output tree."""
from __future__ import annotations

import logging
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import plots
from .facility import read_es_trace
from .signals import TimeSeries, load_series

log = logging.getLogger(__name__)


def _exp_table(summary_rows):
    return {int(r["exp"]): r for r in summary_rows}


def emit_report(results: dict, out_dir, prices: TimeSeries | None = None,
                pv: TimeSeries | None = None, overlay_trace=None, overlay_label: str = "",
                horizon_s: float = 86_400.0) -> list[Path]:
    """Write SVG figures from CSV rows as returned by `runner.read_results`.

    Missing TTR samples for a group skip that group's curves with a warning
    rather than failing the report.
    """
    for name in ("ttr", "utilization", "es_power_bins", "summary"):
        if name not in results:
            raise FileNotFoundError(f"missing artifact: {name}.csv")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exps = _exp_table(results["summary"])
    written = []

    def label(e):
        r = exps[e]
        infra = "FCC" if int(r["fcc"]) and not int(r["scc"]) else ("SCC" if int(r["scc"]) and not int(r["fcc"]) else "MIX")
        return f"{r['evs']} EV {infra} {r['strategy']}", infra

    ttr = defaultdict(list)
    for row in results["ttr"]:
        if row["ttr_s"] != "NA":
            ttr[int(row["exp"])].append(float(row["ttr_s"]))

    by_infra = defaultdict(dict)
    for e in sorted(exps):
        name, infra = label(e)
        by_infra[infra][f"Exp {e}: {name}"] = ttr.get(e, [])
    for infra, series in sorted(by_infra.items()):
        nonempty = {k: v for k, v in series.items() if v}
        for k, v in series.items():
            if not v:
                log.warning("no EV reached the reference energy in %s; curve skipped", k)
        if not nonempty:
            log.warning("no TTR samples for %s configurations; CDF plot skipped", infra)
            continue
        p = out / f"ttr_cdf_{infra.lower()}.svg"
        plots.save(plots.cdf_figure(nonempty, f"TTR CDF, {infra} configurations"), p)
        written.append(p)
        p = out / f"ttr_density_{infra.lower()}.svg"
        plots.save(plots.density_figure(nonempty, f"TTR density, {infra} configurations"), p)
        written.append(p)

    util = defaultdict(list)
    for row in results["utilization"]:
        util[int(row["exp"])].append((float(row["charge"]), float(row["handshake"]), float(row["idle"])))
    bands = []
    for e in sorted(util):
        c, h, i = np.mean(np.array(util[e]), axis=0)
        bands.append((f"Exp {e}: {label(e)[0]}", float(c), float(h), float(i)))
    p = out / "utilization_bands.svg"
    plots.save(plots.utilization_figure(bands, "Charging column utilization profile"), p)
    written.append(p)

    bins = defaultdict(lambda: defaultdict(list))
    width = None
    for row in results["es_power_bins"]:
        e = int(row["exp"])
        b = float(row["bin_start_s"])
        bins[e][row["seed"]].append((b, float(row["mean_w"])))
        if width is None and b > 0:
            width = b
    width = width or 900.0
    by_evs = defaultdict(dict)
    for e in sorted(bins):
        runs = [np.array([v for _, v in sorted(vals)]) for vals in bins[e].values()]
        mat = np.vstack(runs)
        five = np.moveaxis(np.percentile(mat, [0, 25, 50, 75, 100], axis=0), 0, -1)
        by_evs[int(exps[e]["evs"])][f"Exp {e}: {label(e)[0]}"] = five
    for evs, groups in sorted(by_evs.items()):
        p = out / f"es_power_box_{evs}ev.svg"
        plots.save(plots.boxplot_figure(groups, width, f"Energy Sandbox power (15-min bins), {evs} EVs"), p)
        written.append(p)

    if prices is not None or pv is not None:
        if prices is None or pv is None:
            raise ValueError("the overlay needs both a price and a PV series")
        if overlay_trace is None:
            raise ValueError("the overlay needs a sandbox trace")
        p = out / "grid_pv_price.svg"
        plots.save(plots.overlay_figure(overlay_trace, pv, prices, horizon_s,
                                        f"Grid usage with PV and price {overlay_label}".strip()), p)
        written.append(p)
    return written


def load_overlay_inputs(prices_path, pv_path) -> tuple[TimeSeries, TimeSeries]:
    for path in (prices_path, pv_path):
        if not Path(path).exists():
            raise FileNotFoundError(f"overlay input not found: {path}")
    return load_series(prices_path, "prices"), load_series(pv_path, "pv")


def find_overlay_trace(in_dir, exp_id: int | None = None):
    """The saved sandbox trace of the first replication of ``exp_id`` (default: lowest FCFS)."""
    root = Path(in_dir) / "runs"
    cands = sorted(root.glob("exp*_rep0/es_trace.csv")) if root.exists() else []
    if exp_id is not None:
        cands = [c for c in cands if c.parent.name == f"exp{exp_id:02d}_rep0"]
    if not cands:
        raise FileNotFoundError(f"no saved sandbox trace under {root}")
    return read_es_trace(cands[0]), cands[0].parent.name
