"""In-memory arrival-rate estimators used by the router."""

from __future__ import annotations

from collections import deque

from .errors import InvalidArgumentError, InvalidTimeError


class SlidingWindow:
    """Arrival timestamps from the last ``window`` seconds.

    An arrival exactly ``window`` seconds old is still counted.
    """

    def __init__(self, window: float = 1.0):
        if not window > 0:
            raise InvalidArgumentError(f"window must be > 0 (got {window})")
        self.window = window
        self.timestamps: deque[float] = deque()
        self._last = float("-inf")

    def __len__(self):
        return len(self.timestamps)

    def _advance(self, t_now: float) -> None:
        if t_now < self._last:
            raise InvalidTimeError(f"time went backwards: {t_now} < {self._last}")
        self._last = t_now
        q = self.timestamps
        while q and t_now - q[0] > self.window:
            q.popleft()

    def rate(self, t_now: float) -> int:
        """Count of arrivals in the window ending at ``t_now`` (no new arrival)."""
        self._advance(t_now)
        return len(self.timestamps)

    def record(self, t_now: float) -> int:
        """Evict stale arrivals, push ``t_now`` and return the new count."""
        self._advance(t_now)
        self.timestamps.append(t_now)
        return len(self.timestamps)


def sliding_rate(w: SlidingWindow, t_now: float) -> int:
    return w.record(t_now)


class EwmaRate:
    """Exponentially smoothed rate; ``weight`` is the share kept from the old value."""

    def __init__(self, weight: float, value: float = 0.0):
        if not 0 <= weight <= 1:
            raise InvalidArgumentError(f"EWMA weight must be in [0, 1] (got {weight})")
        self.weight = weight
        self.value = value

    def update(self, rate: float) -> float:
        if rate < 0:
            raise InvalidArgumentError(f"rate must be >= 0 (got {rate})")
        self.value = self.weight * self.value + (1.0 - self.weight) * rate
        return self.value

    def __repr__(self):
        return f"EwmaRate(weight={self.weight}, value={self.value:.6g})"


def ewma_update(e: EwmaRate, rate: float) -> float:
    return e.update(rate)
