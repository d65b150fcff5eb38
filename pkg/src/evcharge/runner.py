"""Experiment matrix, replicated runs and the CSV output tree."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import metrics
from .facility import write_es_trace, write_grant_log
from .kernel import derive_seed
from .metrics import BIN_WIDTH_S, E_STAR_WS, RunArtifacts, collect
from .protocol import ChargingSimulation, SimulationResult, write_event_log
from .scenario import ColumnKind, ConfigError, ScenarioConfig, Strategy, sample_fleet
from .signals import TimeSeries

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentRow:
    exp_id: int
    ev_count: int
    fcc_count: int
    scc_count: int
    strategy: Strategy

    @property
    def infra(self) -> str:
        if self.fcc_count and self.scc_count:
            return "MIX"
        return "FCC" if self.fcc_count else "SCC"


@dataclass
class ExperimentMatrix:
    rows: list[ExperimentRow]
    replications: int = 30
    root_seed: int = 20260101

    def __post_init__(self):
        ids = [r.exp_id for r in self.rows]
        if len(set(ids)) != len(ids):
            raise ConfigError("experiment ids must be unique")
        for r in self.rows:
            if min(r.ev_count, r.fcc_count, r.scc_count) < 0:
                raise ConfigError(f"experiment {r.exp_id}: counts must be nonnegative")
            if r.fcc_count + r.scc_count < 1:
                raise ConfigError(f"experiment {r.exp_id}: needs at least one column")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")

    def row(self, exp_id: int) -> ExperimentRow:
        for r in self.rows:
            if r.exp_id == exp_id:
                return r
        raise KeyError(exp_id)

    @property
    def total_runs(self) -> int:
        return len(self.rows) * self.replications


def builtin_matrix(replications: int = 30, root_seed: int = 20260101) -> ExperimentMatrix:
    """The twelve-configuration study: {30, 60, 120} EVs x {FCC, SCC} x {FCFS, SHRD}."""
    rows = []
    exp_id = 1
    for evs in (30, 60, 120):
        for fcc, scc in ((30, 0), (0, 30)):
            for strategy in (Strategy.FCFS, Strategy.SHRD):
                rows.append(ExperimentRow(exp_id, evs, fcc, scc, strategy))
                exp_id += 1
    return ExperimentMatrix(rows, replications, root_seed)


def load_matrix(path, replications: int = 30, root_seed: int = 20260101) -> ExperimentMatrix:
    """CSV with header ``exp_id,evs,fcc,scc,strategy``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"exp_id", "evs", "fcc", "scc", "strategy"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"{path}: header must contain {','.join(sorted(need))}")
        try:
            rows = [
                ExperimentRow(int(r["exp_id"]), int(r["evs"]), int(r["fcc"]), int(r["scc"]),
                              Strategy(r["strategy"].strip().upper()))
                for r in reader
            ]
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return ExperimentMatrix(rows, replications, root_seed)


def scenario_for(row: ExperimentRow, overrides: Mapping[str, Any] | None = None,
                 base: ScenarioConfig | None = None) -> ScenarioConfig:
    kinds = [ColumnKind.FCC] * row.fcc_count + [ColumnKind.SCC] * row.scc_count
    cfg = (base or ScenarioConfig()).replace(
        ev_count=row.ev_count,
        cc_count=len(kinds),
        cc_kind=kinds if row.fcc_count and row.scc_count else kinds[0],
        strategy=row.strategy,
    )
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg.validate()


@dataclass
class RunSettings:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    e_star_ws: float = E_STAR_WS
    bin_width_s: float = BIN_WIDTH_S
    prices: TimeSeries | None = None


def run_experiment(row: ExperimentRow, config_overrides: Mapping[str, Any] | None, seed: int,
                   settings: RunSettings | None = None,
                   keep_result: bool = False) -> RunArtifacts | tuple[RunArtifacts, SimulationResult]:
    """One replication: sample fleet, build facility, simulate, measure."""
    settings = settings or RunSettings()
    cfg = scenario_for(row, config_overrides, settings.base)
    fleet = sample_fleet(cfg, seed)
    sim = ChargingSimulation(cfg, fleet, prices=settings.prices, record_events=keep_result)
    result = sim.run()
    art = collect(result, row.exp_id, seed, settings.e_star_ws, settings.bin_width_s,
                  row.fcc_count, row.scc_count)
    return (art, result) if keep_result else art


def replication_seed(root_seed: int, exp_id: int, replication: int) -> int:
    return derive_seed(root_seed, "exp", exp_id, "rep", replication)


def _job(args):
    row, overrides, seed, settings, rep = args
    return rep, run_experiment(row, overrides, seed, settings)


def run_matrix(matrix: ExperimentMatrix, overrides: Mapping[str, Any] | None = None,
               settings: RunSettings | None = None, workers: int = 1,
               only: Iterable[int] | None = None) -> dict[int, list[RunArtifacts]]:
    """All replications of every row, grouped by experiment id in replication order.

    Each replication draws from its own seed, so results do not depend on
    ``workers``.
    """
    settings = settings or RunSettings()
    rows = [r for r in matrix.rows if only is None or r.exp_id in set(only)]
    jobs = [
        (row, overrides, replication_seed(matrix.root_seed, row.exp_id, k), settings, k)
        for row in rows
        for k in range(matrix.replications)
    ]
    out: dict[int, list[RunArtifacts]] = {r.exp_id: [None] * matrix.replications for r in rows}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        done = [_job(j) for j in jobs]
    for rep, art in done:
        out[art.exp_id][rep] = art
    return out


# -- CSV output -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def summary_rows(results: Mapping[int, Sequence[RunArtifacts]]):
    for exp_id in sorted(results):
        runs = results[exp_id]
        agg = metrics.aggregate_runs(runs)
        c, h, i = metrics.mean_utilization(runs)
        ttr = agg.ttr_pooled
        peak_mean = [float(r.es_mean.max()) for r in runs]
        peak_max = [float(r.es_max.max()) for r in runs]
        first = runs[0]
        evs = sum(r.ev_count for r in runs)
        yield [
            exp_id, first.ev_count, first.fcc_count, first.scc_count, first.strategy, len(runs),
            sum(r.served_count for r in runs) / evs if evs else 1.0,
            sum(r.completion_count for r in runs) / evs if evs else 1.0,
            len(ttr),
            float(ttr.mean()) if len(ttr) else None,
            float(np.median(ttr)) if len(ttr) else None,
            c, h, i,
            float(np.median(peak_mean)), float(np.median(peak_max)),
        ]


SUMMARY_HEADER = [
    "exp", "evs", "fcc", "scc", "strategy", "runs", "served_frac", "completion_frac",
    "ttr_n", "ttr_mean_s", "ttr_median_s", "charge", "handshake", "idle",
    "peak_bin_mean_w_median", "peak_bin_max_w_median",
]


def write_results(results: Mapping[int, Sequence[RunArtifacts]], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    order = [(e, r) for e in sorted(results) for r in results[e]]
    files = []
    path = out / "ttr.csv"
    _write(path, ["exp", "seed", "ev", "ttr_s"],
           ([e, r.seed, i, x] for e, r in order for i, x in enumerate(r.ttr_samples)))
    files.append(path)
    path = out / "utilization.csv"
    _write(path, ["exp", "seed", "column", "charge", "handshake", "idle"],
           ([e, r.seed, j, *u] for e, r in order for j, u in enumerate(r.utilization)))
    files.append(path)
    path = out / "es_power_bins.csv"
    _write(path, ["exp", "seed", "bin_start_s", "mean_w", "max_w"],
           ([e, r.seed, k * r.bin_width_s, m, x]
            for e, r in order for k, (m, x) in enumerate(zip(r.es_mean, r.es_max))))
    files.append(path)
    path = out / "runs.csv"
    _write(path, ["exp", "seed", "evs", "fcc", "scc", "strategy", "served", "completed",
                  "peak_alloc_w"],
           ([e, r.seed, r.ev_count, r.fcc_count, r.scc_count, r.strategy, r.served_count,
             r.completion_count, r.peak_alloc_w] for e, r in order))
    files.append(path)
    path = out / "summary.csv"
    _write(path, SUMMARY_HEADER, summary_rows(results))
    files.append(path)
    return files


def write_run_detail(result: SimulationResult, run_dir) -> None:
    """Per-run traces: sandbox allocation, grant log, event log and EV settlements."""
    d = Path(run_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_es_trace(result.es_trace, d / "es_trace.csv")
    write_grant_log(result.requests, d / "grants.csv")
    write_event_log(result.event_log, d / "events.csv")
    _write(d / "evs.csv",
           ["ev", "t_arr_s", "t_connect_s", "column", "energy_required_ws", "energy_delivered_ws",
            "t_complete_s", "t_leave_s", "served", "cost"],
           ([t.ev, t.t_arr, t.t_connect, t.column, t.energy_required_ws, t.energy_delivered_ws,
             t.t_complete, t.t_leave, int(t.served), t.cost] for t in result.traces))


def write_matrix(matrix: ExperimentMatrix, path) -> None:
    _write(Path(path), ["exp_id", "evs", "fcc", "scc", "strategy"],
           ([r.exp_id, r.ev_count, r.fcc_count, r.scc_count, r.strategy.value] for r in matrix.rows))


# -- reading back ---------------------------------------------------------------

def _num(s: str):
    return None if s == "NA" else float(s)


def read_results(in_dir) -> dict[str, list[dict[str, str]]]:
    """Load the metric CSVs of an output tree as lists of row dicts."""
    d = Path(in_dir)
    out = {}
    for name in ("ttr", "utilization", "es_power_bins", "runs", "summary"):
        path = d / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"missing artifact: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            out[name] = list(csv.DictReader(fh))
    return out


def tree_digest(root) -> dict[str, str]:
    """SHA-256 of every file under ``root`` keyed by relative path."""
    import hashlib

    root = Path(root)
    digests = {}
    for dirpath, _, files in os.walk(root):
        for f in sorted(files):
            p = Path(dirpath) / f
            digests[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return dict(sorted(digests.items()))
