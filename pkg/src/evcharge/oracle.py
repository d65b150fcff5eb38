"""Fixed-step reference simulator used to cross-check the event-driven engine.

Time advances in steps of ``dt``. Arrivals, departures, reneges and SHRD
slot boundaries are only noticed at step boundaries. Two sub-step modes
exist:

``carry=True``
    Column-internal transitions (handshake end, demand met) happen at their
    exact instant inside a step and the rest of the step carries over to the
    next phase. Error against the exact engine stays within one step.
``carry=False``
    Every phase holds for whole steps, so energy is booked in ``watts*dt``
    chunks and the last chunk can overshoot the demand. This shows the
    classic step-size distortion.

Selection, request sizing and sandbox grants reuse the engine's functions.
"""
from __future__ import annotations

import csv
import heapq
import math
import time
from dataclasses import dataclass
from typing import Sequence

from .facility import EnergySandbox, Granted, PortLedger, requested_power
from .kernel import ContractViolation
from .metrics import E_STAR_WS, ttr
from .protocol import (
    CHARGE, HANDSHAKE, IDLE, EVTrace, SimulationResult, _Column, select_fcfs, select_shrd,
    settle, simulate,
)
from .scenario import EVSpec, ScenarioConfig, Strategy, build_facility
from .signals import TimeSeries

WAITING = "waiting"


class AlignmentError(ValueError):
    """``dt`` does not divide the handshake or price interval."""


@dataclass
class StepConfig:
    dt_s: float
    scenario: ScenarioConfig
    max_steps: int | None = None
    carry: bool = True
    exact: bool = True


def _steps(span: float, dt: float) -> int | None:
    n = round(span / dt)
    return n if abs(n * dt - span) <= 1e-9 * max(1.0, span) else None


class _StepColumn(_Column):
    __slots__ = ("hs_left", "clock", "dirty")

    def __init__(self, cid: int, rating: float):
        super().__init__(cid, rating)
        self.hs_left = 0.0
        self.clock = 0.0
        self.dirty = False


class _StepSim:
    def __init__(self, config: ScenarioConfig, fleet: Sequence[EVSpec], dt: float,
                 carry: bool, exact: bool, prices: TimeSeries | None, max_steps: int | None):
        if not dt > 0:
            raise ValueError("dt must be positive")
        config.validate()
        self.config = config
        self.fleet = list(fleet)
        self.dt = float(dt)
        self.carry = carry
        self.prices = prices
        self.max_steps = max_steps
        self.t_hs = float(config.handshake_s)
        self.strategy = Strategy(config.strategy)
        self.slot_steps = _steps(config.price_interval_s, dt)
        if exact:
            if self.slot_steps is None or _steps(self.t_hs, dt) is None:
                raise AlignmentError(
                    f"dt={dt} must divide price_interval_s={config.price_interval_s} "
                    f"and handshake_s={self.t_hs}"
                )
        elif self.strategy is Strategy.SHRD and self.slot_steps is None:
            raise AlignmentError("SHRD needs slot boundaries on the step grid")
        self.facility = build_facility(config)
        self.es = EnergySandbox(self.facility.es_cap_watts)
        self.ports = PortLedger.for_columns([c.ports for c in self.facility.columns])
        self.cols = [_StepColumn(c.id, c.rating_watts) for c in self.facility.columns]
        self._regranted = False
        self.traces = [EVTrace(e.id, e.arrival_s, e.energy_required_ws) for e in self.fleet]
        self.rem = [e.energy_required_ws for e in self.fleet]
        self.deps: list[tuple[float, int]] = []
        self.waiting: list[int] = []
        self.gone = 0

    # -- EV side --------------------------------------------------------------

    def _connect(self, ev: int, t: float) -> bool:
        placed = self.ports.connect(ev, t)
        if placed is None:
            return False
        j = placed[0]
        tr = self.traces[ev]
        tr.t_connect, tr.column, tr.served = t, j, True
        spec = self.fleet[ev]
        stay = spec.parking_duration_s
        if spec.leave_after_s is not None:
            stay = min(stay, spec.leave_after_s)
        heapq.heappush(self.deps, (t + stay, ev))
        self.cols[j].dirty = True
        return True

    def _renege(self, ev: int, t: float) -> None:
        tr = self.traces[ev]
        tr.t_leave, tr.served = t, False
        tr.cost = None if self.prices is None else 0.0
        self.gone += 1

    def _leave(self, ev: int, t: float) -> None:
        j = self.ports.where[ev]
        col = self.cols[j]
        grants = []
        if col.active == ev:
            if col.phase == WAITING:
                _, grants = self.es.cancel(col.request.id, t)
                self.traces[ev].failed_attempts += 1
                col.request = None
            elif col.phase == HANDSHAKE:
                _, grants = self.es.release(j, t)
            elif col.phase == CHARGE:
                self._close(col, t, done=self.rem[ev] <= 0)
                _, grants = self.es.release(j, t)
            col.active = None
            col.phase = IDLE
            col.set_state(t, IDLE)
        col.dirty = True
        self.ports.disconnect(ev)
        tr = self.traces[ev]
        tr.t_leave = t
        tr.energy_delivered_ws, tr.cost = settle(tr, self.prices)
        self.gone += 1
        self._grants(grants, t)

    # -- column side ----------------------------------------------------------

    def _dispatch(self, col, t: float) -> None:
        cands = [(ev, tc) for ev, tc in self.ports.connected[col.id].items() if self.rem[ev] > 0]
        if self.strategy is Strategy.FCFS:
            ev = select_fcfs(cands)
        else:
            ev, col.cursor = select_shrd(sorted((tc, e) for e, tc in cands), col.cursor)
        if ev is None:
            col.set_state(t, IDLE)
            return
        col.active = ev
        watts = requested_power(col.rating, self.fleet[ev].max_accept_watts)
        out = self.es.request(col.id, ev, watts, t)
        if isinstance(out, Granted):
            self._granted(col, out.request, t)
        else:
            col.phase = WAITING
            col.request = out.request
            col.set_state(t, IDLE)

    def _grants(self, grants, t: float) -> None:
        for req in grants:
            self._regranted = True
            col = self.cols[req.column]
            self._granted(col, req, t)
            col.clock = max(col.clock, t)

    def _granted(self, col, req, t: float) -> None:
        col.request = None
        col.watts = req.watts
        if col.active != col.last_engaged and self.t_hs > 0:
            col.phase = HANDSHAKE
            col.phase_start = t
            col.hs_left = self.t_hs
            col.set_state(t, HANDSHAKE)
        else:
            self._start(col, t)
        col.last_engaged = col.active

    def _start(self, col, t: float) -> None:
        col.phase = CHARGE
        col.phase_start = t
        col.set_state(t, CHARGE)

    def _close(self, col, t: float, done: bool) -> None:
        ev = col.active
        tr = self.traces[ev]
        if t > col.phase_start:
            tr.episodes.append((col.phase_start, t, col.watts))
        if done:
            self.rem[ev] = 0.0
            tr.t_complete = t

    def _finish(self, col, t: float) -> None:
        self._close(col, t, done=True)
        _, grants = self.es.release(col.id, t)
        col.active = None
        col.phase = IDLE
        col.set_state(t, IDLE)
        col.dirty = True
        self._grants(grants, t)

    def _slot_boundary(self, t: float) -> None:
        for col in self.cols:
            if col.phase == CHARGE:
                ev = col.active
                self._close(col, t, done=self.rem[ev] <= 1e-6)
                _, grants = self.es.release(col.id, t)
                col.active = None
                col.phase = IDLE
                col.set_state(t, IDLE)
                col.dirty = True
                self._grants(grants, t)

    def _next_event(self, c) -> float:
        if c.phase == IDLE:
            return c.clock if c.dirty else math.inf
        if c.phase == HANDSHAKE:
            return max(c.phase_start + self.t_hs, c.clock)
        if c.phase == CHARGE:
            return c.clock + self.rem[c.active] / c.watts
        return math.inf

    def _progress_carry(self, t: float, t_end: float) -> None:
        # columns act in order of their next internal event so sandbox times
        # never run backwards; charge accrues lazily from each column's clock
        self._regranted = False
        live = [c for c in self.cols if c.phase != IDLE or c.dirty]
        for c in live:
            c.clock = max(c.clock, t)
        while True:
            best, when = None, math.inf
            for c in live:
                nxt = self._next_event(c)
                if nxt <= t_end and nxt < when:
                    best, when = c, nxt
            if best is None:
                break
            c = best
            if c.phase == IDLE:
                c.dirty = False
                self._dispatch(c, when)
                c.clock = when
            elif c.phase == HANDSHAKE:
                c.clock = when
                self._start(c, when)
            else:
                c.clock = when
                self._finish(c, when)
            if self._regranted:
                # columns granted mid-step join the scan
                self._regranted = False
                live = [col for col in self.cols if col.phase != IDLE or col.dirty]
        for c in live:
            if c.phase == CHARGE:
                self.rem[c.active] -= c.watts * (t_end - c.clock)
            c.clock = t_end

    def _progress_hold(self, t: float) -> None:
        changed = True
        while changed:
            changed = False
            for c in self.cols:
                if c.phase == CHARGE and self.rem[c.active] <= 0:
                    self._finish(c, t)
                    changed = True
                if c.phase == HANDSHAKE and c.hs_left <= 1e-9:
                    self._start(c, t)
                    changed = True
                if c.phase == IDLE and c.dirty:
                    c.dirty = False
                    self._dispatch(c, t)
                    changed = True
        for c in self.cols:
            if c.phase == HANDSHAKE:
                c.hs_left -= self.dt
            elif c.phase == CHARGE:
                self.rem[c.active] -= c.watts * self.dt

    def run(self) -> SimulationResult:
        arrivals = sorted(self.fleet, key=lambda e: (e.arrival_s, e.id))
        ai, n = 0, len(arrivals)
        dt = self.dt
        k = 0
        last = 0.0
        while True:
            t = k * dt
            last = t
            while self.deps and self.deps[0][0] <= t:
                _, ev = heapq.heappop(self.deps)
                self._leave(ev, t)
            while self.waiting and self.ports.choose_column() is not None:
                self._connect(self.waiting.pop(0), t)
            for ev in [e for e in self.waiting
                       if self.fleet[e].arrival_s + self.fleet[e].waiting_tolerance_s < t]:
                self.waiting.remove(ev)
                self._renege(ev, t)
            while ai < n and arrivals[ai].arrival_s <= t:
                spec = arrivals[ai]
                ai += 1
                if not self._connect(spec.id, t):
                    if spec.waiting_tolerance_s <= 0:
                        self._renege(spec.id, t)
                    else:
                        self.waiting.append(spec.id)
            if self.strategy is Strategy.SHRD and k > 0 and k % self.slot_steps == 0:
                self._slot_boundary(t)
            if self.carry:
                self._progress_carry(t, (k + 1) * dt)
            else:
                self._progress_hold(t)
            if self.gone == len(self.fleet) and all(c.phase == IDLE for c in self.cols):
                break
            k += 1
            if self.max_steps is not None and k >= self.max_steps:
                break
        horizon = self.config.horizon_s
        for c in self.cols:
            if c.log[-1][0] > horizon:
                raise ContractViolation("time-stepped run overran the horizon")
        return SimulationResult(
            config=self.config,
            fleet=self.fleet,
            facility=self.facility,
            traces=self.traces,
            column_logs=[c.log for c in self.cols],
            es_trace=list(self.es.trace),
            requests=list(self.es.requests),
            event_log=[],
            end_time=last,
        )


def simulate_timestep(config: ScenarioConfig, fleet: Sequence[EVSpec], dt: float, *,
                      carry: bool = True, exact: bool = True,
                      prices: TimeSeries | None = None,
                      max_steps: int | None = None) -> SimulationResult:
    return _StepSim(config, fleet, dt, carry, exact, prices, max_steps).run()


# -- comparison -------------------------------------------------------------------

@dataclass
class EVDelta:
    ev: int
    energy_event: float
    energy_step: float
    ttr_event: float | None
    ttr_step: float | None

    @property
    def energy_delta(self) -> float:
        return abs(self.energy_event - self.energy_step)

    @property
    def ttr_delta(self) -> float | None:
        if self.ttr_event is None and self.ttr_step is None:
            return 0.0
        if self.ttr_event is None or self.ttr_step is None:
            return None  # reached in one engine only
        return abs(self.ttr_event - self.ttr_step)


@dataclass
class ComparisonReport:
    dt: float
    rows: list[EVDelta]
    peak_event_w: float
    peak_step_w: float
    wall_event_s: float | None = None
    wall_step_s: float | None = None

    @property
    def max_energy_delta(self) -> float:
        return max((r.energy_delta for r in self.rows), default=0.0)

    @property
    def max_ttr_delta(self) -> float:
        ds = [r.ttr_delta for r in self.rows]
        if any(d is None for d in ds):
            return math.inf
        return max(ds, default=0.0)

    @property
    def peak_delta(self) -> float:
        return abs(self.peak_event_w - self.peak_step_w)

    @property
    def speedup(self) -> float | None:
        if not self.wall_event_s or self.wall_step_s is None:
            return None
        return self.wall_step_s / self.wall_event_s

    def text(self) -> str:
        lines = [
            f"dt = {self.dt} s, {len(self.rows)} EVs",
            f"max per-EV energy delta: {self.max_energy_delta:.6g} Ws",
            f"max TTR delta: {self.max_ttr_delta:.6g} s",
            f"peak allocation: event {self.peak_event_w:.0f} W, stepped {self.peak_step_w:.0f} W",
        ]
        if self.speedup is not None:
            lines.append(
                f"wall clock: event {self.wall_event_s:.4f} s, stepped {self.wall_step_s:.4f} s "
                f"({self.speedup:.1f}x)"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ev", "energy_event_ws", "energy_step_ws", "energy_delta_ws",
                        "ttr_event_s", "ttr_step_s", "ttr_delta_s"])
            na = lambda v: "NA" if v is None else repr(v)  # noqa: E731
            for r in self.rows:
                w.writerow([r.ev, repr(r.energy_event), repr(r.energy_step), repr(r.energy_delta),
                            na(r.ttr_event), na(r.ttr_step), na(r.ttr_delta)])


def compare_traces(event_driven: SimulationResult, time_stepped: SimulationResult, dt: float,
                   e_star_ws: float = E_STAR_WS, wall_event_s: float | None = None,
                   wall_step_s: float | None = None) -> ComparisonReport:
    if event_driven.config != time_stepped.config or event_driven.fleet != time_stepped.fleet:
        raise ValueError("traces come from different scenarios")
    rows = []
    for a, b in zip(event_driven.traces, time_stepped.traces):
        rows.append(EVDelta(a.ev, settle(a, None)[0], settle(b, None)[0],
                            ttr(a, e_star_ws), ttr(b, e_star_ws)))
    peak = lambda tr: max((p for _, p in tr), default=0.0)  # noqa: E731
    return ComparisonReport(dt, rows, peak(event_driven.es_trace), peak(time_stepped.es_trace),
                            wall_event_s, wall_step_s)


def validate(config: ScenarioConfig, fleet: Sequence[EVSpec], dt: float,
             e_star_ws: float = E_STAR_WS, carry: bool = True) -> ComparisonReport:
    """Run both engines on one scenario, timing each, and compare."""
    t0 = time.perf_counter()
    ev = simulate(config, fleet, record_events=False)
    t1 = time.perf_counter()
    st = simulate_timestep(config, fleet, dt, carry=carry)
    t2 = time.perf_counter()
    return compare_traces(ev, st, dt, e_star_ws, t1 - t0, t2 - t1)
