"""Weighted three-class queue used at every control-plane stage."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Deque, Iterator, Optional


class Klass(IntEnum):
    HP = 0
    MP = 1
    LP = 2


@dataclass(frozen=True)
class SchedulerConfig:
    weights: tuple[int, int, int] = (6, 3, 1)
    service_us: int = 100
    fallback: bool = True
    queue_limit: Optional[int] = 2000

    def __post_init__(self) -> None:
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ValueError(f"weights must be three non-negative ints, got {self.weights}")
        if sum(self.weights) != 10:
            raise ValueError(f"weights must sum to 10, got {sum(self.weights)}")
        if self.service_us <= 0:
            raise ValueError("service_us must be positive")
        if self.queue_limit is not None and self.queue_limit < 1:
            raise ValueError("queue_limit must be >= 1 or None")

    @property
    def service_rate(self) -> float:
        """Messages per second one stage can serve."""
        return 1e6 / self.service_us


class QueueEmpty(Exception):
    """Raised by :meth:`WeightedQueues.dequeue` when every class queue is empty."""


class WeightedQueues:
    """Three FIFO queues served in a 10-slot cycle.

    Each cycle owns ``weights[c]`` slots for class ``c``, consumed in class order.
    A slot whose class has nothing queued is given to the next lower class, and
    an idle LP slot wraps to the highest non-empty class, so no slot is wasted
    while any message waits. With ``fallback`` disabled the scheduler degrades
    to plain weighted round robin: an empty class's slots are skipped.

    ``queue_limit`` bounds the number of messages held across all classes.  An
    arrival to a full stage pushes out the newest message of the lowest class
    strictly below its own; if there is none, the arrival itself is rejected.
    """

    def __init__(self, config: SchedulerConfig | None = None) -> None:
        self.config = config or SchedulerConfig()
        self._queues: tuple[Deque[Any], Deque[Any], Deque[Any]] = (deque(), deque(), deque())
        self._credits = list(self.config.weights)
        self.served = [0, 0, 0]
        self.rejected = [0, 0, 0]

    def __len__(self) -> int:
        q = self._queues
        return len(q[0]) + len(q[1]) + len(q[2])

    def qlen(self, klass: int) -> int:
        return len(self._queues[klass])

    def enqueue(self, item: Any, klass: int) -> Optional[Any]:
        """Queue ``item``; returns whichever message was dropped, if any."""
        limit = self.config.queue_limit
        q = self._queues
        if limit is not None and len(q[0]) + len(q[1]) + len(q[2]) >= limit:
            for victim in (2, 1):
                if victim > klass and q[victim]:
                    dropped = q[victim].pop()
                    self.rejected[victim] += 1
                    q[klass].append(item)
                    return dropped
            self.rejected[klass] += 1
            return item
        q[klass].append(item)
        return None

    def _slot_owner(self) -> int:
        credits = self._credits
        if credits[0] == 0 and credits[1] == 0 and credits[2] == 0:
            credits[:] = self.config.weights
        for c in (0, 1, 2):
            if credits[c] > 0:
                return c
        raise AssertionError("weights sum to 10")  # pragma: no cover

    def dequeue(self) -> tuple[Any, int]:
        """Serve one slot; returns ``(item, class_served)``."""
        q = self._queues
        if not (q[0] or q[1] or q[2]):
            raise QueueEmpty
        while True:
            owner = self._slot_owner()
            self._credits[owner] -= 1
            if not self.config.fallback:
                # plain weighted round robin: an empty class's slot is skipped
                if q[owner]:
                    self.served[owner] += 1
                    return q[owner].popleft(), owner
                continue
            for c in (owner, *range(owner + 1, 3), *range(0, owner)):
                if q[c]:
                    self.served[c] += 1
                    return q[c].popleft(), c

    def drain(self) -> Iterator[tuple[Any, int]]:
        while len(self):
            yield self.dequeue()


class FifoQueue:
    """Single-queue baseline with the same interface and drop-tail overflow."""

    def __init__(self, queue_limit: Optional[int] = None) -> None:
        self.queue_limit = queue_limit
        self._q: Deque[tuple[Any, int]] = deque()
        self.served = [0, 0, 0]
        self.rejected = [0, 0, 0]

    def __len__(self) -> int:
        return len(self._q)

    def qlen(self, klass: int) -> int:
        return sum(1 for _, k in self._q if k == klass)

    def enqueue(self, item: Any, klass: int) -> Optional[Any]:
        if self.queue_limit is not None and len(self._q) >= self.queue_limit:
            self.rejected[klass] += 1
            return item
        self._q.append((item, klass))
        return None

    def dequeue(self) -> tuple[Any, int]:
        if not self._q:
            raise QueueEmpty
        item, klass = self._q.popleft()
        self.served[klass] += 1
        return item, klass
