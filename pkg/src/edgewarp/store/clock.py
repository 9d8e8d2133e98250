from __future__ import annotations

import time


class WallClock:
    """Milliseconds since the epoch, as a float."""

    def __call__(self) -> float:
        return time.time() * 1000.0


class SimClock:
    """Manually advanced millisecond clock shared by simulated components."""

    def __init__(self, now: float = 0.0) -> None:
        self.now = float(now)

    def __call__(self) -> float:
        return self.now

    def advance_to(self, t: float) -> None:
        if t > self.now:
            self.now = float(t)

    def __repr__(self) -> str:
        return f"SimClock(now={self.now:.3f})"
