"""Event calendar and reproducible random streams.

The calendar is a binary heap of ``(fire_time, seq, payload)`` entries.
Simultaneous events are delivered in insertion order; cancellation marks
an entry dead and it is skipped when popped.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Hashable

import numpy as np


class ContractViolation(RuntimeError):
    """Raised when a caller breaks an operation's precondition."""


@dataclass(order=True)
class _Entry:
    fire_time: float
    seq: int
    payload: Any = field(compare=False)
    cancelled: bool = field(default=False, compare=False)
    fired: bool = field(default=False, compare=False)


class EventHandle:
    """Opaque reference to a scheduled event, usable with `Calendar.cancel`."""

    __slots__ = ("_entry",)

    def __init__(self, entry: _Entry):
        self._entry = entry

    @property
    def fire_time(self) -> float:
        return self._entry.fire_time

    @property
    def seq(self) -> int:
        return self._entry.seq

    @property
    def live(self) -> bool:
        return not (self._entry.cancelled or self._entry.fired)


class Calendar:
    """Future event list ordered by ``(fire_time, seq)``."""

    def __init__(self, start: float = 0.0):
        self._heap: list[_Entry] = []
        self._seq = 0
        self._now = float(start)
        self._live = 0

    @property
    def now(self) -> float:
        return self._now

    def __len__(self) -> int:
        return self._live

    def schedule(self, at: float, payload: Any) -> EventHandle:
        at = float(at)
        if not math.isfinite(at):
            raise ContractViolation(f"event time must be finite, got {at!r}")
        if at < self._now:
            raise ContractViolation(
                f"cannot schedule at t={at} in the past (clock={self._now})"
            )
        entry = _Entry(at, self._seq, payload)
        self._seq += 1
        heapq.heappush(self._heap, entry)
        self._live += 1
        return EventHandle(entry)

    def cancel(self, handle: EventHandle | None) -> bool:
        if handle is None:
            return False
        entry = handle._entry
        if entry.cancelled or entry.fired:
            return False
        entry.cancelled = True
        self._live -= 1
        return True

    def peek_time(self) -> float | None:
        while self._heap and self._heap[0].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0].fire_time if self._heap else None

    def advance(self) -> tuple[float, Any] | None:
        """Pop the next live event; ``None`` once the calendar is exhausted."""
        heap = self._heap
        while heap:
            entry = heapq.heappop(heap)
            if entry.cancelled:
                continue
            entry.fired = True
            self._live -= 1
            self._now = entry.fire_time
            return entry.fire_time, entry.payload
        return None


# -- random streams ---------------------------------------------------------

def _label_word(label: Hashable) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean stream labels are ambiguous")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be nonnegative")
        return int(label)
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"unsupported stream label {label!r}")


def stream_key(stream_id: tuple) -> tuple[int, ...]:
    """Map a structured label such as ``("ev", 3, "arrival")`` to integers."""
    if not isinstance(stream_id, tuple):
        stream_id = (stream_id,)
    return tuple(_label_word(part) for part in stream_id)


class RngStream:
    """Philox-backed sampler keyed by ``(root_seed, stream_id)``.

    Philox is counter based, so every stream is an independent key rather
    than an offset into a shared sequence; draws in one stream never shift
    another.
    """

    def __init__(self, root_seed: int, stream_id: tuple):
        if root_seed < 0:
            raise ValueError("root_seed must be nonnegative")
        self.root_seed = int(root_seed)
        self.stream_id = stream_id if isinstance(stream_id, tuple) else (stream_id,)
        seq = np.random.SeedSequence(self.root_seed, spawn_key=stream_key(self.stream_id))
        self._gen = np.random.Generator(np.random.Philox(seq))

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, a: float, b: float) -> float:
        """Uniform draw on ``[a, b)``; returns ``a`` when the interval is empty."""
        if b < a:
            raise ValueError(f"uniform bounds reversed: [{a}, {b}]")
        if a == b:
            return float(a)
        x = a + (b - a) * self.random()
        # guard the half-open bound against rounding up to b
        return x if x < b else math.nextafter(b, a)

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high)``."""
        return int(self._gen.integers(low, high))

    def __repr__(self) -> str:
        return f"RngStream(root_seed={self.root_seed}, stream_id={self.stream_id!r})"


def derive_stream(root_seed: int, stream_id: tuple) -> RngStream:
    return RngStream(root_seed, stream_id)


def derive_seed(root_seed: int, *labels: Hashable) -> int:
    """A 63-bit child seed for a labelled sub-experiment (e.g. one replication)."""
    seq = np.random.SeedSequence(int(root_seed), spawn_key=stream_key(tuple(labels)))
    lo, hi = (int(w) for w in seq.generate_state(2, np.uint32))
    return ((hi << 32) | lo) & ((1 << 63) - 1)
