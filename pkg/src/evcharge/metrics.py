"""Post-run analytics: time-to-receive, utilization, binned sandbox power."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .protocol import CHARGE, HANDSHAKE, IDLE, EVTrace, SimulationResult

E_STAR_WS = 33_696_000.0  # 9.36 kWh
BIN_WIDTH_S = 900.0


def ttr(trace: EVTrace, e_star_ws: float = E_STAR_WS) -> float | None:
    """Seconds from arrival until delivered energy first reaches ``e_star_ws``.

    Episodes are piecewise constant, so the crossing is found exactly by
    linear interpolation inside the episode where it happens.
    """
    if not e_star_ws > 0:
        raise ValueError("e_star_ws must be positive")
    cum = 0.0
    # tolerate last-ulp shortfall when demand equals the reference exactly
    tol = 1e-9 * e_star_ws
    for start, end, watts in sorted(trace.episodes):
        gain = watts * (end - start)
        if cum + gain >= e_star_ws - tol:
            need = max(e_star_ws - cum, 0.0)
            t_cross = min(start + need / watts, end) if watts > 0 else end
            return t_cross - trace.t_arr
        cum += gain
    return None


# -- distributions ------------------------------------------------------------

class ECDF:
    """Right-continuous empirical CDF ``F(t) = #{x <= t} / n``."""

    def __init__(self, samples):
        x = np.sort(np.asarray(samples, dtype=float))
        if x.size == 0:
            raise ValueError("ecdf needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("ecdf samples must be finite")
        self.x = x
        self.n = x.size

    def __call__(self, t):
        return np.searchsorted(self.x, t, side="right") / self.n

    def steps(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct jump locations and the CDF value just after each."""
        xs, counts = np.unique(self.x, return_counts=True)
        return xs, np.cumsum(counts) / self.n

    def quantile(self, q):
        """Left-continuous inverse: smallest x with F(x) >= q."""
        q = np.asarray(q, dtype=float)
        idx = np.clip(np.ceil(q * self.n).astype(int) - 1, 0, self.n - 1)
        return self.x[idx]


def ecdf(samples) -> ECDF:
    return ECDF(samples)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        return 1.0
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if spread <= 0:
        return 1.0
    return 0.9 * spread * n ** (-0.2)


def pdf_estimate(samples, grid, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density on ``grid``; Silverman's rule by default.

    Degenerate samples (zero spread) fall back to a 1 s bandwidth so a point
    mass still renders as a narrow peak.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("density needs at least one sample")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    g = np.asarray(grid, dtype=float)
    z = (g[:, None] - x[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    fa, fb = ECDF(a), ECDF(b)
    pts = np.concatenate([fa.x, fb.x])
    return float(np.max(np.abs(fa(pts) - fb(pts))))


# -- utilization --------------------------------------------------------------

def utilization(state_log: Sequence[tuple[float, str]], horizon_s: float) -> tuple[float, float, float]:
    """Fractions of ``[0, horizon]`` spent charging, in handshake, and idle.

    ``state_log`` lists ``(t, state)`` transitions; before the first entry
    the column is idle.
    """
    if horizon_s <= 0:
        raise ValueError("horizon must be positive")
    acc = {CHARGE: 0.0, HANDSHAKE: 0.0, IDLE: 0.0}
    prev_t, prev_s = 0.0, IDLE
    for t, s in state_log:
        if s not in acc:
            raise ValueError(f"unknown column state {s!r}")
        if t < prev_t:
            raise ValueError("state log times decrease (overlapping states)")
        a, b = min(prev_t, horizon_s), min(t, horizon_s)
        acc[prev_s] += b - a
        prev_t, prev_s = t, s
    if prev_t < horizon_s:
        acc[prev_s] += horizon_s - prev_t
    charge = acc[CHARGE] / horizon_s
    hs = acc[HANDSHAKE] / horizon_s
    return charge, hs, 1.0 - charge - hs


# -- binned sandbox power -----------------------------------------------------

def _segments(trace: Sequence[tuple[float, float]]):
    """Coalesce same-instant changes and equal neighbours into clean steps."""
    out: list[list[float]] = []
    for t, p in trace:
        if out and out[-1][0] == t:
            out[-1][1] = p
        else:
            out.append([t, p])
        if len(out) >= 2 and out[-1][1] == out[-2][1]:
            out.pop()
    return out


def bin_power(es_trace: Sequence[tuple[float, float]], bin_width_s: float = BIN_WIDTH_S,
              horizon_s: float = 86_400.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin time-weighted mean and maximum of the allocation step function.

    The function is 0 before the first change point. Zero-length excursions
    (release and re-grant at one instant) do not count towards the maximum.
    """
    nbins = int(math.ceil(horizon_s / bin_width_s - 1e-12))
    means = np.zeros(nbins)
    maxes = np.zeros(nbins)
    segs = _segments(es_trace)
    bounds = [(k * bin_width_s, min((k + 1) * bin_width_s, horizon_s)) for k in range(nbins)]
    if not segs:
        return means, maxes
    starts = [s[0] for s in segs]
    values = [s[1] for s in segs]
    ends = starts[1:] + [math.inf]
    if starts[0] > 0:
        starts.insert(0, 0.0)
        values.insert(0, 0.0)
        ends.insert(0, segs[0][0])
    i = 0
    for k, (lo, hi) in enumerate(bounds):
        while i < len(starts) and ends[i] <= lo:
            i += 1
        area = 0.0
        peak = 0.0
        m = i
        while m < len(starts) and starts[m] < hi:
            a, b = max(starts[m], lo), min(ends[m], hi)
            if b > a:
                area += values[m] * (b - a)
                peak = max(peak, values[m])
            m += 1
        means[k] = area / (hi - lo)
        maxes[k] = peak
    return means, maxes


def integral(es_trace: Sequence[tuple[float, float]], horizon_s: float) -> float:
    segs = _segments(es_trace)
    total = 0.0
    for n, (t, p) in enumerate(segs):
        end = segs[n + 1][0] if n + 1 < len(segs) else horizon_s
        total += p * (min(end, horizon_s) - min(t, horizon_s))
    return total


# -- run artifacts -----------------------------------------------------------

@dataclass
class RunArtifacts:
    exp_id: int
    seed: int
    ttr_samples: list[float | None]
    utilization: list[tuple[float, float, float]]
    es_mean: np.ndarray
    es_max: np.ndarray
    served_count: int
    completion_count: int
    ev_count: int
    bin_width_s: float = BIN_WIDTH_S
    strategy: str = ""
    fcc_count: int = 0
    scc_count: int = 0
    es_trace: list[tuple[float, float]] = field(default_factory=list, repr=False)
    peak_alloc_w: float = 0.0


def collect(result: SimulationResult, exp_id: int, seed: int, e_star_ws: float = E_STAR_WS,
            bin_width_s: float = BIN_WIDTH_S, fcc_count: int = 0, scc_count: int = 0) -> RunArtifacts:
    horizon = result.horizon_s
    means, maxes = bin_power(result.es_trace, bin_width_s, horizon)
    return RunArtifacts(
        exp_id=exp_id,
        seed=seed,
        ttr_samples=[ttr(tr, e_star_ws) for tr in result.traces],
        utilization=[utilization(log, horizon) for log in result.column_logs],
        es_mean=means,
        es_max=maxes,
        served_count=sum(tr.served for tr in result.traces),
        completion_count=sum(tr.completed for tr in result.traces),
        ev_count=len(result.traces),
        bin_width_s=bin_width_s,
        strategy=result.config.strategy.value,
        fcc_count=fcc_count,
        scc_count=scc_count,
        es_trace=list(result.es_trace),
        peak_alloc_w=max((p for _, p in result.es_trace), default=0.0),
    )


@dataclass
class Aggregate:
    exp_id: int
    runs: int
    five_number: np.ndarray  # shape (nbins, 5): min, Q1, median, Q3, max of bin means
    five_number_max: np.ndarray  # same for bin maxima
    ttr_pooled: np.ndarray
    bin_width_s: float


def five_number(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """min, Q1, median, Q3, max with linear interpolation between order statistics."""
    q = np.percentile(values, [0, 25, 50, 75, 100], axis=axis, method="linear")
    return np.moveaxis(q, 0, -1)


def aggregate_runs(runs: Sequence[RunArtifacts]) -> Aggregate:
    if not runs:
        raise ValueError("no runs to aggregate")
    ids = {r.exp_id for r in runs}
    if len(ids) != 1:
        raise ValueError(f"cannot aggregate mixed experiments {sorted(ids)}")
    widths = {(r.bin_width_s, len(r.es_mean)) for r in runs}
    if len(widths) != 1:
        raise ValueError("runs disagree on bin layout")
    means = np.vstack([r.es_mean for r in runs])
    maxes = np.vstack([r.es_max for r in runs])
    pooled = np.array([x for r in runs for x in r.ttr_samples if x is not None], dtype=float)
    return Aggregate(
        exp_id=runs[0].exp_id,
        runs=len(runs),
        five_number=five_number(means, axis=0),
        five_number_max=five_number(maxes, axis=0),
        ttr_pooled=pooled,
        bin_width_s=runs[0].bin_width_s,
    )


def mean_utilization(runs: Sequence[RunArtifacts]) -> tuple[float, float, float]:
    arr = np.array([u for r in runs for u in r.utilization], dtype=float)
    c, h, i = arr.mean(axis=0)
    return float(c), float(h), float(i)
