"""Latency statistics for simulation runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidArgumentError, NoDataError


def percentile(samples, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if not 0 < p <= 100:
        raise InvalidArgumentError(f"percentile must be in (0, 100] (got {p})")
    s = sorted(samples)
    if not s:
        raise NoDataError("no samples")
    k = max(1, math.ceil(p / 100.0 * len(s) - 1e-9))
    return s[k - 1]


@dataclass
class RunMetrics:
    samples: list = field(default_factory=list)
    by_class: dict = field(default_factory=dict)
    arrivals: int = 0
    completions: int = 0
    in_flight: int = 0
    offloads: int = 0
    scale_events: int = 0
    replica_seconds: float = 0.0
    horizon: float = 0.0

    def _stat(self, fn):
        return fn(self.samples) if self.samples else math.nan

    @property
    def mean(self):
        return self._stat(lambda s: math.fsum(s) / len(s))

    @property
    def p50(self):
        return self._stat(lambda s: percentile(s, 50))

    @property
    def p95(self):
        return self._stat(lambda s: percentile(s, 95))

    @property
    def p99(self):
        return self._stat(lambda s: percentile(s, 99))

    @property
    def iqr(self):
        return self._stat(lambda s: percentile(s, 75) - percentile(s, 25))

    @property
    def max(self):
        return self._stat(max)

    @property
    def offload_frac(self):
        return self.offloads / self.arrivals if self.arrivals else 0.0

    @property
    def mean_replicas(self):
        return self.replica_seconds / self.horizon if self.horizon > 0 else 0.0
