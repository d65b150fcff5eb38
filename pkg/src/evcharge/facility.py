"""Energy Sandbox allocation protocol and port bookkeeping.

The sandbox holds a shared power cap. A column asks for its full request
``min(column rating, vehicle limit)``; the request is granted at once only
when nothing is queued and it fits under the cap, otherwise it joins a
strict first-come-first-served queue. Releases and cancellations drain the
queue from the head and stop at the first request that does not fit.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .kernel import ContractViolation


def requested_power(column_rating_watts: float, ev_accept_watts: float) -> float:
    if column_rating_watts <= 0 or ev_accept_watts <= 0:
        raise ContractViolation("power limits must be positive")
    return min(column_rating_watts, ev_accept_watts)


class RequestState(str, Enum):
    PENDING = "pending"
    GRANTED = "granted"
    CANCELLED = "cancelled"


@dataclass
class PowerRequest:
    id: int
    column: int
    ev: int
    watts: float
    t_req: float
    state: RequestState = RequestState.PENDING
    t_resolved: float | None = None  # grant or cancel time


@dataclass(frozen=True)
class Granted:
    request: PowerRequest


@dataclass(frozen=True)
class Queued:
    request: PowerRequest


class EnergySandbox:
    """Facility-level power cap with an FCFS pending queue.

    `request`, `release` and `cancel` return the requests granted as a side
    effect so the caller can start those columns at the same instant.
    """

    def __init__(self, cap_watts: float):
        if not cap_watts > 0:
            raise ContractViolation("sandbox cap must be positive")
        self.cap_watts = float(cap_watts)
        self.alloc: dict[int, float] = {}
        self._alloc_request: dict[int, PowerRequest] = {}
        self.pending: deque[PowerRequest] = deque()
        self.requests: list[PowerRequest] = []
        self.trace: list[tuple[float, float]] = []
        self.total = 0.0
        self._pending_columns: set[int] = set()

    # -- internals ----------------------------------------------------------

    def _fits(self, watts: float) -> bool:
        return self.total + watts <= self.cap_watts

    def _append_trace(self, t: float) -> None:
        if self.trace and t < self.trace[-1][0]:
            raise ContractViolation(f"trace time went backwards: {t} < {self.trace[-1][0]}")
        if not (0.0 <= self.total <= self.cap_watts):
            raise ContractViolation(f"allocation {self.total} W outside [0, {self.cap_watts}]")
        self.trace.append((t, self.total))

    def _recompute_total(self) -> None:
        # integer-valued ratings sum exactly; re-summing avoids drift otherwise
        self.total = math.fsum(self.alloc.values())

    def _grant(self, req: PowerRequest, t: float) -> None:
        req.state = RequestState.GRANTED
        req.t_resolved = t
        self.alloc[req.column] = req.watts
        self._alloc_request[req.column] = req
        self._recompute_total()
        self._append_trace(t)

    def _drain(self, t: float) -> list[PowerRequest]:
        granted = []
        while self.pending and self._fits(self.pending[0].watts):
            req = self.pending.popleft()
            self._pending_columns.discard(req.column)
            self._grant(req, t)
            granted.append(req)
        return granted

    # -- protocol -----------------------------------------------------------

    def request(self, column: int, ev: int, watts: float, t: float) -> Granted | Queued:
        if not watts > 0:
            raise ContractViolation("requested power must be positive")
        if column in self.alloc:
            raise ContractViolation(f"column {column} already holds an allocation")
        if column in self._pending_columns:
            raise ContractViolation(f"column {column} already has a pending request")
        req = PowerRequest(len(self.requests), column, ev, float(watts), float(t))
        self.requests.append(req)
        if not self.pending and self._fits(req.watts):
            self._grant(req, t)
            return Granted(req)
        self.pending.append(req)
        self._pending_columns.add(column)
        return Queued(req)

    def release(self, column: int, t: float) -> tuple[float, list[PowerRequest]]:
        """Free a column's allocation; returns the freed watts and new grants."""
        if column not in self.alloc:
            raise ContractViolation(f"column {column} has no allocation to release")
        freed = self.alloc.pop(column)
        self._alloc_request.pop(column)
        self._recompute_total()
        self._append_trace(t)
        return freed, self._drain(t)

    def cancel(self, request_id: int, t: float) -> tuple[bool, list[PowerRequest]]:
        """Withdraw a pending request; may unblock younger requests."""
        if not 0 <= request_id < len(self.requests):
            return False, []
        req = self.requests[request_id]
        if req.state is not RequestState.PENDING:
            return False, []
        self.pending.remove(req)
        self._pending_columns.discard(req.column)
        req.state = RequestState.CANCELLED
        req.t_resolved = float(t)
        return True, self._drain(t)

    def allocation_of(self, column: int) -> float:
        return self.alloc.get(column, 0.0)

    def grant_log(self) -> list[PowerRequest]:
        return [r for r in self.requests if r.state is RequestState.GRANTED]


def check_grant_order(requests) -> bool:
    """True if grants of never-cancelled requests follow request time order."""
    granted = sorted(
        (r for r in requests if r.state is RequestState.GRANTED),
        key=lambda r: (r.t_resolved, r.id),
    )
    return all(a.t_req <= b.t_req for a, b in zip(granted, granted[1:]))


# -- ports --------------------------------------------------------------------

@dataclass
class PortLedger:
    """Connected vehicles per column with a least-occupied placement rule."""

    capacity: list[int]
    connected: list[dict[int, float]] = field(default_factory=list)
    where: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if any(c < 1 for c in self.capacity):
            raise ContractViolation("every column needs at least one port")
        if not self.connected:
            self.connected = [{} for _ in self.capacity]

    @classmethod
    def for_columns(cls, ports: list[int]) -> "PortLedger":
        return cls(list(ports))

    def occupancy(self, column: int) -> int:
        return len(self.connected[column])

    def free_ports(self) -> int:
        return sum(c - len(v) for c, v in zip(self.capacity, self.connected))

    def choose_column(self) -> int | None:
        """Least-occupied column with a free port, lowest index on ties."""
        best = None
        best_occ = None
        for j, (cap, evs) in enumerate(zip(self.capacity, self.connected)):
            occ = len(evs)
            if occ < cap and (best_occ is None or occ < best_occ):
                best, best_occ = j, occ
        return best

    def connect(self, ev: int, t: float) -> tuple[int, float] | None:
        if ev in self.where:
            raise ContractViolation(f"EV {ev} is already connected")
        j = self.choose_column()
        if j is None:
            return None
        self.connected[j][ev] = t
        self.where[ev] = j
        return j, t

    def disconnect(self, ev: int) -> int:
        j = self.where.pop(ev)
        del self.connected[j][ev]
        return j


# -- exports ------------------------------------------------------------------

def write_es_trace(trace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "alloc_watts"])
        for t, p in trace:
            w.writerow([repr(float(t)), repr(float(p))])


def read_es_trace(path) -> list[tuple[float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [(float(r["time_s"]), float(r["alloc_watts"])) for r in rows]


def write_grant_log(requests, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["request_id", "column", "ev", "watts", "t_req", "t_grant_or_cancel", "state"])
        for r in requests:
            resolved = "NA" if r.t_resolved is None else repr(r.t_resolved)
            w.writerow([r.id, r.column, r.ev, repr(r.watts), repr(r.t_req), resolved, r.state.value])
