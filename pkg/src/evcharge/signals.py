"""Exogenous price and PV signals as right-open step functions."""
from __future__ import annotations

import csv
import io
import math
import os
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

WS_PER_KWH = 3_600_000.0


class SeriesError(ValueError):
    """Malformed series input or an out-of-domain query."""


@dataclass(frozen=True)
class TimeSeries:
    """``values[k]`` holds on ``[breakpoints[k], breakpoints[k+1])``; the last value holds forever."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        if not self.breakpoints:
            raise SeriesError("time series is empty")
        if len(self.breakpoints) != len(self.values):
            raise SeriesError("breakpoints and values differ in length")
        for k in range(1, len(self.breakpoints)):
            if not self.breakpoints[k] > self.breakpoints[k - 1]:
                raise SeriesError(f"breakpoints not strictly increasing at index {k}")

    @classmethod
    def constant(cls, value: float, start: float = 0.0, name: str = "") -> "TimeSeries":
        return cls((float(start),), (float(value),), name)

    @property
    def start(self) -> float:
        return self.breakpoints[0]

    def __len__(self) -> int:
        return len(self.breakpoints)

    def __call__(self, t: float) -> float:
        return value_at(self, t)


def _parse_rows(reader: Iterable[list[str]], name: str) -> TimeSeries:
    rows = iter(reader)
    try:
        header = next(rows)
    except StopIteration:
        raise SeriesError(f"{name}: empty file") from None
    header = [h.strip().lstrip("﻿") for h in header]
    if header != ["time_s", "value"]:
        raise SeriesError(f"{name}: expected header 'time_s,value', got {','.join(header)!r}")
    times: list[float] = []
    values: list[float] = []
    # row numbers count data rows from 1, header excluded
    for rownum, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise SeriesError(f"{name}: row {rownum} has {len(row)} cells, expected 2")
        try:
            t = float(row[0])
            v = float(row[1])
        except ValueError:
            raise SeriesError(f"{name}: non-numeric cell at row {rownum}") from None
        if not (math.isfinite(t) and math.isfinite(v)):
            raise SeriesError(f"{name}: non-finite cell at row {rownum}")
        if times and t == times[-1]:
            raise SeriesError(f"{name}: duplicate timestamp at row {rownum}")
        if times and t < times[-1]:
            raise SeriesError(f"{name}: unsorted at row {rownum}")
        times.append(t)
        values.append(v)
    if not times:
        raise SeriesError(f"{name}: no data rows")
    return TimeSeries(tuple(times), tuple(values), name)


def load_series(source, name: str | None = None) -> TimeSeries:
    """Read a ``time_s,value`` CSV from a path, a file object, or CSV text.

    Raises `SeriesError` naming the offending data row (1-based) for
    unsorted or duplicate timestamps and non-numeric cells, and for an
    empty file.
    """
    if isinstance(source, (str, os.PathLike)) and not (
        isinstance(source, str) and "\n" in source
    ):
        path = os.fspath(source)
        if not os.path.exists(path):
            raise FileNotFoundError(f"series file not found: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            return _parse_rows(csv.reader(fh), name or path)
    if isinstance(source, str):
        return _parse_rows(csv.reader(io.StringIO(source)), name or "<string>")
    return _parse_rows(csv.reader(source), name or getattr(source, "name", "<stream>"))


def value_at(series: TimeSeries, t: float) -> float:
    if t < series.breakpoints[0]:
        raise SeriesError(
            f"query t={t} precedes first breakpoint {series.breakpoints[0]}"
            + (f" of {series.name}" if series.name else "")
        )
    return series.values[bisect_right(series.breakpoints, t) - 1]


def interval_index(t: float, width_s: float) -> int:
    """Index ``k`` of the slot ``[k*width, (k+1)*width)`` containing ``t``."""
    if width_s <= 0:
        raise ValueError("interval width must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = math.floor(t / width_s)
    # division can land one ulp on the wrong side of a boundary
    if (k + 1) * width_s <= t:
        k += 1
    elif k * width_s > t:
        k -= 1
    return int(k)


def interval_start(k: int, width_s: float) -> float:
    return k * width_s


def energy_cost(episodes: Sequence[tuple[float, float, float]], prices: TimeSeries) -> float:
    """Cost of ``(start, end, watts)`` episodes under a currency/kWh price.

    Each episode is split at price breakpoints, so the result is exact for
    a step-function tariff.
    """
    bps = prices.breakpoints
    total = 0.0
    for start, end, watts in episodes:
        if end < start:
            raise SeriesError(f"episode ends before it starts: ({start}, {end})")
        if end == start or watts == 0:
            continue
        if start < bps[0]:
            raise SeriesError(f"episode starting at {start} precedes price series start {bps[0]}")
        k = bisect_right(bps, start) - 1
        t = start
        while t < end:
            seg_end = bps[k + 1] if k + 1 < len(bps) else math.inf
            stop = min(end, seg_end)
            total += watts * (stop - t) / WS_PER_KWH * prices.values[k]
            t = stop
            k += 1
    return total


def write_series(series: TimeSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "value"])
        for t, v in zip(series.breakpoints, series.values):
            w.writerow([repr(t), repr(v)])
