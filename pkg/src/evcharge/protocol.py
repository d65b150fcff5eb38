"""EV lifecycle, column operation loop and the FCFS / SHRD selection rules.

A column charges at most one vehicle at a time. To charge it first picks a
vehicle, then asks the sandbox for ``min(column rating, vehicle limit)``.
Once the request is granted, a switch to a different vehicle costs one
handshake (no energy flows) before charging. FCFS keeps the chosen vehicle
until its demand is met or it leaves. SHRD hands the column to the next
connected vehicle at every price-interval boundary, re-requesting sandbox
power each slot.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .facility import EnergySandbox, Granted, PortLedger, PowerRequest, requested_power
from .kernel import Calendar, ContractViolation, EventHandle
from .scenario import EVSpec, FacilitySpec, ScenarioConfig, Strategy, build_facility
from .signals import TimeSeries, energy_cost, interval_index

IDLE = "idle"
HANDSHAKE = "handshake"
CHARGE = "charge"

# tolerance for energy bookkeeping in Ws, far below one second at 1 W
ENERGY_EPS = 1e-6


# -- selection rules ----------------------------------------------------------

def select_fcfs(connected: Iterable[tuple[int, float]]) -> int | None:
    """Earliest connection wins; lower EV id breaks ties."""
    best = None
    for ev, t_connect in connected:
        key = (t_connect, ev)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def select_shrd(cycle: Sequence[tuple[float, int]], cursor: tuple[float, int] | None):
    """Round-robin step over ``(t_connect, ev)`` keys sorted ascending.

    ``cursor`` is the key of the last vehicle served. The next vehicle is the
    first key after it, wrapping to the front; this still works when the
    cursor's own vehicle has since left the cycle. Returns ``(ev, cursor)``.
    """
    if not cycle:
        return None, cursor
    if cursor is None:
        nxt = cycle[0]
    else:
        k = bisect_right(cycle, cursor)
        nxt = cycle[k] if k < len(cycle) else cycle[0]
    return nxt[1], nxt


# -- traces -------------------------------------------------------------------

@dataclass
class EVTrace:
    ev: int
    t_arr: float
    energy_required_ws: float
    t_connect: float | None = None
    column: int | None = None
    episodes: list[tuple[float, float, float]] = field(default_factory=list)
    energy_delivered_ws: float = 0.0
    t_complete: float | None = None
    t_leave: float | None = None
    served: bool = False
    cost: float | None = None
    failed_attempts: int = 0

    @property
    def completed(self) -> bool:
        return self.t_complete is not None


def settle(trace: EVTrace, prices: TimeSeries | None) -> tuple[float, float | None]:
    energy = math.fsum(w * (b - a) for a, b, w in trace.episodes)
    cost = None if prices is None else energy_cost(trace.episodes, prices)
    return energy, cost


@dataclass
class SimulationResult:
    config: ScenarioConfig
    fleet: list[EVSpec]
    facility: FacilitySpec
    traces: list[EVTrace]
    column_logs: list[list[tuple[float, str]]]
    es_trace: list[tuple[float, float]]
    requests: list[PowerRequest]
    event_log: list[tuple[float, str, str, str]]
    end_time: float

    @property
    def horizon_s(self) -> float:
        return self.config.horizon_s


def write_event_log(events, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "entity", "kind", "detail"])
        for t, entity, kind, detail in events:
            w.writerow([repr(float(t)), entity, kind, detail])


# -- engine -------------------------------------------------------------------

class _Column:
    __slots__ = (
        "id", "rating", "phase", "active", "last_engaged", "request", "timer",
        "watts", "phase_start", "cursor", "log",
    )

    def __init__(self, cid: int, rating: float):
        self.id = cid
        self.rating = rating
        self.phase = IDLE  # idle | waiting | handshake | charge
        self.active: int | None = None
        self.last_engaged: int | None = None
        self.request: PowerRequest | None = None
        self.timer: EventHandle | None = None
        self.watts = 0.0
        self.phase_start = 0.0
        self.cursor = None
        self.log: list[tuple[float, str]] = [(0.0, IDLE)]

    def set_state(self, t: float, state: str) -> None:
        log = self.log
        if log[-1][1] == state:
            return
        if log[-1][0] == t:
            log.pop()
            if log and log[-1][1] == state:
                return
        log.append((t, state))


class ChargingSimulation:
    """One facility-day driven by a `Calendar`.

    Parameters
    ----------
    config : ScenarioConfig
    fleet : list of EVSpec
        Usually from `sample_fleet`; ids must be ``0..n-1``.
    facility : FacilitySpec, optional
        Defaults to `build_facility(config)`.
    prices : TimeSeries, optional
        Tariff for settlement; costs stay ``None`` without it.
    record_events : bool
        Keep the human-readable event log.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        fleet: Sequence[EVSpec],
        facility: FacilitySpec | None = None,
        prices: TimeSeries | None = None,
        record_events: bool = True,
    ):
        config.validate()
        self.config = config
        self.fleet = list(fleet)
        if [ev.id for ev in self.fleet] != list(range(len(self.fleet))):
            raise ContractViolation("fleet ids must be 0..n-1 in order")
        self.facility = facility or build_facility(config)
        self.prices = prices
        self.strategy = Strategy(config.strategy)
        self.t_hs = float(config.handshake_s)
        self.slot = float(config.price_interval_s)
        self.calendar = Calendar()
        self.es = EnergySandbox(self.facility.es_cap_watts)
        self.ports = PortLedger.for_columns([c.ports for c in self.facility.columns])
        self.columns = [_Column(c.id, c.rating_watts) for c in self.facility.columns]
        self.traces = [EVTrace(ev.id, ev.arrival_s, ev.energy_required_ws) for ev in self.fleet]
        self.remaining = [ev.energy_required_ws for ev in self.fleet]
        self.waitlist: list[int] = []
        self.renege_timers: dict[int, EventHandle] = {}
        self.record_events = record_events
        self.events: list[tuple[float, str, str, str]] = []
        self._done = False

    # -- helpers ------------------------------------------------------------

    def _log(self, t, entity, kind, detail=""):
        if self.record_events:
            self.events.append((t, entity, kind, detail))

    def _at(self, t, fn, *args):
        return self.calendar.schedule(t, (fn, args))

    # -- EV lifecycle -------------------------------------------------------

    def _on_arrival(self, t: float, ev: int) -> None:
        self._log(t, f"ev{ev}", "arrive")
        placed = self.ports.connect(ev, t)
        if placed is not None:
            self._on_connected(t, ev, placed[0])
            return
        tol = self.fleet[ev].waiting_tolerance_s
        if tol <= 0:
            self._renege(t, ev)
            return
        self.waitlist.append(ev)
        self._log(t, f"ev{ev}", "wait")
        if math.isfinite(tol):
            self.renege_timers[ev] = self._at(t + tol, self._on_renege, ev)

    def _on_renege(self, t: float, ev: int) -> None:
        self.renege_timers.pop(ev, None)
        self.waitlist.remove(ev)
        self._renege(t, ev)

    def _renege(self, t: float, ev: int) -> None:
        tr = self.traces[ev]
        tr.t_leave = t
        tr.served = False
        tr.energy_delivered_ws, tr.cost = 0.0, (None if self.prices is None else 0.0)
        self._log(t, f"ev{ev}", "renege")

    def _on_connected(self, t: float, ev: int, j: int) -> None:
        spec = self.fleet[ev]
        tr = self.traces[ev]
        tr.t_connect = t
        tr.column = j
        tr.served = True
        self._log(t, f"ev{ev}", "connect", f"cc{j}")
        stay = spec.parking_duration_s
        if spec.leave_after_s is not None:
            stay = min(stay, spec.leave_after_s)
        self._at(t + stay, self._on_leave, ev)
        self._dispatch(self.columns[j], t)

    def _on_leave(self, t: float, ev: int) -> None:
        j = self.ports.where[ev]
        col = self.columns[j]
        grants: list[PowerRequest] = []
        if col.active == ev:
            if col.phase == "waiting":
                _, grants = self.es.cancel(col.request.id, t)
                self.traces[ev].failed_attempts += 1
                self._log(t, f"cc{j}", "request_cancel", f"ev{ev}")
                col.request = None
            elif col.phase == HANDSHAKE:
                self.calendar.cancel(col.timer)
                self._log(t, f"cc{j}", "handshake_abort", f"ev{ev}")
                _, grants = self.es.release(j, t)
            elif col.phase == CHARGE:
                self.calendar.cancel(col.timer)
                self._close_episode(col, t, finished=False)
                _, grants = self.es.release(j, t)
            col.timer = None
            col.active = None
            col.phase = IDLE
            col.set_state(t, IDLE)
        self.ports.disconnect(ev)
        tr = self.traces[ev]
        tr.t_leave = t
        tr.energy_delivered_ws, tr.cost = settle(tr, self.prices)
        self._log(t, f"ev{ev}", "leave", f"cc{j}")
        self._log(t, f"ev{ev}", "settle", f"energy_ws={tr.energy_delivered_ws!r} cost={tr.cost!r}")
        self._apply_grants(grants, t)
        self._dispatch(col, t)
        self._admit_waiting(t)

    def _admit_waiting(self, t: float) -> None:
        while self.waitlist and self.ports.choose_column() is not None:
            ev = self.waitlist.pop(0)
            self.calendar.cancel(self.renege_timers.pop(ev, None))
            j, _ = self.ports.connect(ev, t)
            self._on_connected(t, ev, j)

    # -- column loop --------------------------------------------------------

    def _candidates(self, j: int):
        rem = self.remaining
        return [(ev, tc) for ev, tc in self.ports.connected[j].items() if rem[ev] > 0]

    def _dispatch(self, col: _Column, t: float) -> None:
        if col.phase != IDLE:
            return
        cands = self._candidates(col.id)
        if self.strategy is Strategy.FCFS:
            ev = select_fcfs(cands)
        else:
            cycle = sorted((tc, e) for e, tc in cands)
            ev, col.cursor = select_shrd(cycle, col.cursor)
        if ev is None:
            col.set_state(t, IDLE)
            return
        col.active = ev
        watts = requested_power(col.rating, self.fleet[ev].max_accept_watts)
        outcome = self.es.request(col.id, ev, watts, t)
        self._log(t, f"cc{col.id}", "request", f"ev{ev} watts={watts!r}")
        if isinstance(outcome, Granted):
            self._on_granted(col, outcome.request, t)
        else:
            col.phase = "waiting"
            col.request = outcome.request
            col.set_state(t, IDLE)
            self._log(t, f"cc{col.id}", "queued", f"ev{ev}")

    def _apply_grants(self, grants: list[PowerRequest], t: float) -> None:
        for req in grants:
            col = self.columns[req.column]
            if col.request is not req:
                raise ContractViolation(f"grant for column {req.column} does not match its request")
            self._on_granted(col, req, t)

    def _on_granted(self, col: _Column, req: PowerRequest, t: float) -> None:
        col.request = None
        col.watts = req.watts
        self._log(t, f"cc{col.id}", "grant", f"ev{req.ev} watts={req.watts!r}")
        if col.active != col.last_engaged and self.t_hs > 0:
            col.phase = HANDSHAKE
            col.last_engaged = col.active
            col.phase_start = t
            col.set_state(t, HANDSHAKE)
            self._log(t, f"cc{col.id}", "handshake_start", f"ev{col.active}")
            col.timer = self._at(t + self.t_hs, self._on_handshake_done, col.id)
        else:
            col.last_engaged = col.active
            self._start_charging(col, t)

    def _on_handshake_done(self, t: float, j: int) -> None:
        col = self.columns[j]
        col.timer = None
        self._log(t, f"cc{j}", "handshake_end", f"ev{col.active}")
        self._start_charging(col, t)

    def _start_charging(self, col: _Column, t: float) -> None:
        ev = col.active
        col.phase = CHARGE
        col.phase_start = t
        col.set_state(t, CHARGE)
        t_done = t + self.remaining[ev] / col.watts
        end, done = t_done, True
        if self.strategy is Strategy.SHRD:
            slot_end = (interval_index(t, self.slot) + 1) * self.slot
            if slot_end < t_done:
                end, done = slot_end, False
        self._log(t, f"cc{col.id}", "charge_start", f"ev{ev} watts={col.watts!r}")
        col.timer = self._at(end, self._on_charge_end, col.id, done)

    def _close_episode(self, col: _Column, t: float, finished: bool) -> None:
        ev = col.active
        tr = self.traces[ev]
        if t > col.phase_start:
            tr.episodes.append((col.phase_start, t, col.watts))
        if finished:
            self.remaining[ev] = 0.0
            tr.t_complete = t
        else:
            rem = self.remaining[ev] - col.watts * (t - col.phase_start)
            self.remaining[ev] = rem if rem > ENERGY_EPS else 0.0
            if self.remaining[ev] == 0.0:
                tr.t_complete = t
        self._log(t, f"cc{col.id}", "charge_end", f"ev{ev} {'done' if finished else 'interrupted'}")

    def _on_charge_end(self, t: float, j: int, done: bool) -> None:
        col = self.columns[j]
        col.timer = None
        self._close_episode(col, t, finished=done)
        _, grants = self.es.release(j, t)
        col.active = None
        col.phase = IDLE
        col.set_state(t, IDLE)
        self._apply_grants(grants, t)
        self._dispatch(col, t)

    # -- driver -------------------------------------------------------------

    def run(self) -> SimulationResult:
        if self._done:
            raise ContractViolation("simulation already ran")
        self._done = True
        order = sorted(self.fleet, key=lambda e: (e.arrival_s, e.id))
        for spec in order:
            self._at(spec.arrival_s, self._on_arrival, spec.id)
        cal = self.calendar
        last = 0.0
        while True:
            item = cal.advance()
            if item is None:
                break
            t, (fn, args) = item
            last = t
            fn(t, *args)
        horizon = self.config.horizon_s
        late = [tr.ev for tr in self.traces if tr.t_leave is None or tr.t_leave > horizon]
        if late:
            raise HorizonError(late, horizon)
        return SimulationResult(
            config=self.config,
            fleet=self.fleet,
            facility=self.facility,
            traces=self.traces,
            column_logs=[c.log for c in self.columns],
            es_trace=list(self.es.trace),
            requests=list(self.es.requests),
            event_log=self.events,
            end_time=last,
        )


class HorizonError(RuntimeError):
    def __init__(self, evs: list[int], horizon: float):
        self.evs = evs
        shown = ", ".join(map(str, evs[:20])) + (" ..." if len(evs) > 20 else "")
        super().__init__(f"horizon {horizon} s ends before {len(evs)} EV(s) departed: {shown}")


def simulate(config: ScenarioConfig, fleet: Sequence[EVSpec], prices: TimeSeries | None = None,
             record_events: bool = True) -> SimulationResult:
    return ChargingSimulation(config, fleet, prices=prices, record_events=record_events).run()
