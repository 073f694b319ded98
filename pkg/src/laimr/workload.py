"""Open-loop arrival generators: Poisson, bounded-Pareto bursts, traces.

Arrival epochs are built from unit-rate exponential gaps drawn in fixed-size
chunks and then scaled by the rate, so runs that share a seed but differ in
rate see the same underlying random numbers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .controller import Request
from .errors import ConfigError, InvalidArgumentError

_CHUNK = 1024


class WorkloadKind(str, enum.Enum):
    POISSON = "poisson"
    BOUNDED_PARETO = "bounded_pareto"
    TRACE = "trace"


@dataclass(frozen=True)
class Source:
    model: str
    accuracy_req: float = 0.0
    weight: float = 1.0
    slo: Optional[float] = None
    instance: Optional[str] = None


@dataclass(frozen=True)
class WorkloadSpec:
    """Arrival process description.

    For ``bounded_pareto``, burst epochs are Poisson and each burst injects
    floor(X) requests spread uniformly over ``burst_window`` seconds, with X
    bounded-Pareto(shape, lower, upper). Unless ``burst_rate`` is set it is
    chosen so the long-run request rate equals ``rate``.
    """

    kind: WorkloadKind = WorkloadKind.POISSON
    rate: float = 1.0
    duration: float = 60.0
    sources: tuple = ()
    shape: float = 1.5
    lower: float = 1.0
    upper: float = 20.0
    burst_rate: Optional[float] = None
    burst_window: float = 0.1
    trace: Optional[str] = None
    arrivals: Optional[tuple] = None  # in-memory trace: (time, model, accuracy_req)

    def __post_init__(self):
        problems = []
        try:
            object.__setattr__(self, "kind", WorkloadKind(self.kind))
        except ValueError:
            problems.append(f"kind: unknown workload kind {self.kind!r}")
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.rate >= 0:
            problems.append(f"rate: must be >= 0 (got {self.rate})")
        if not self.duration >= 0:
            problems.append(f"duration: must be >= 0 (got {self.duration})")
        if self.kind is WorkloadKind.BOUNDED_PARETO:
            if not self.shape > 0:
                problems.append(f"shape: must be > 0 (got {self.shape})")
            if not self.lower >= 1:
                problems.append(f"lower: must be >= 1 (got {self.lower})")
            if not self.lower < self.upper:
                problems.append(f"upper: must exceed lower (got {self.lower}, {self.upper})")
            if self.burst_rate is not None and not self.burst_rate >= 0:
                problems.append(f"burst_rate: must be >= 0 (got {self.burst_rate})")
            if not self.burst_window >= 0:
                problems.append(f"burst_window: must be >= 0 (got {self.burst_window})")
        if self.kind is WorkloadKind.TRACE and self.trace is None and self.arrivals is None:
            problems.append("trace: a trace file or in-memory arrivals are required")
        if self.kind is not WorkloadKind.TRACE and not self.sources:
            problems.append("sources: at least one request source is required")
        for s in self.sources:
            if not 0 <= s.accuracy_req <= 1:
                problems.append(f"sources.accuracy_req: must be in [0, 1] (got {s.accuracy_req})")
            if not s.weight > 0:
                problems.append(f"sources.weight: must be > 0 (got {s.weight})")
        if problems:
            err = InvalidArgumentError("; ".join(f"WorkloadSpec.{p}" for p in problems))
            err.problems = [f"WorkloadSpec.{p}" for p in problems]
            raise err

    def with_rate(self, rate: float) -> "WorkloadSpec":
        return replace(self, rate=rate)

    def mean_burst_size(self) -> float:
        return mean_floor_bounded_pareto(self.shape, self.lower, self.upper)


def bounded_pareto_cdf(x, shape, lower, upper):
    x = np.clip(np.asarray(x, dtype=float), lower, upper)
    return (1.0 - (lower / x) ** shape) / (1.0 - (lower / upper) ** shape)


def bounded_pareto_ppf(u, shape, lower, upper):
    u = np.asarray(u, dtype=float)
    return lower * (1.0 - u * (1.0 - (lower / upper) ** shape)) ** (-1.0 / shape)


def mean_floor_bounded_pareto(shape, lower, upper) -> float:
    """E[floor(X)] for X bounded-Pareto: sum over k >= 1 of P(X >= k)."""
    ks = np.arange(1, int(math.floor(upper)) + 1, dtype=float)
    return float(np.sum(1.0 - bounded_pareto_cdf(ks, shape, lower, upper) * (ks > lower)))


def _unit_epochs(rng, horizon):
    """Cumulative unit-rate exponential epochs up to ``horizon``."""
    parts, last = [], 0.0
    while last <= horizon:
        chunk = last + np.cumsum(rng.standard_exponential(_CHUNK))
        parts.append(chunk)
        last = chunk[-1]
    epochs = np.concatenate(parts) if parts else np.empty(0)
    return epochs[epochs <= horizon]


def arrival_times(spec: WorkloadSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind is WorkloadKind.POISSON:
        if spec.rate == 0 or spec.duration == 0:
            return np.empty(0)
        return _unit_epochs(rng, spec.rate * spec.duration) / spec.rate
    if spec.kind is WorkloadKind.BOUNDED_PARETO:
        burst_rate = spec.burst_rate
        if burst_rate is None:
            burst_rate = spec.rate / spec.mean_burst_size()
        if burst_rate == 0 or spec.duration == 0:
            return np.empty(0)
        epochs = _unit_epochs(rng, burst_rate * spec.duration) / burst_rate
        # one size draw and a fixed budget of offsets per burst keeps streams aligned
        sizes = np.floor(
            bounded_pareto_ppf(rng.random(len(epochs)), spec.shape, spec.lower, spec.upper)
        ).astype(int)
        offsets = rng.random((len(epochs), int(math.floor(spec.upper)))) * spec.burst_window
        times = [e + offsets[j, : sizes[j]] for j, e in enumerate(epochs)]
        t = np.sort(np.concatenate(times)) if times else np.empty(0)
        return t[t < spec.duration]
    raise InvalidArgumentError(f"no generator for {spec.kind}")


def read_trace(path) -> list:
    """Parse ``time_seconds,model_id,accuracy_req`` lines (header optional)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise ConfigError([f"line {lineno}: expected 3 fields, got {len(fields)}"], str(path))
        try:
            t, acc = float(fields[0]), float(fields[2])
        except ValueError:
            if not rows and lineno == 1:
                continue  # header
            raise ConfigError([f"line {lineno}: non-numeric time or accuracy"], str(path)) from None
        rows.append((t, fields[1], acc))
    times = [r[0] for r in rows]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ConfigError(["arrival times must be non-decreasing"], str(path))
    return rows


def generate(spec: WorkloadSpec, arrival_rng, source_rng) -> list:
    """Materialize the request list, ordered by arrival time."""
    if spec.kind is WorkloadKind.TRACE:
        rows = list(spec.arrivals) if spec.arrivals is not None else read_trace(spec.trace)
        return [
            Request(id=k, model=m, arrival=float(t), accuracy_req=float(a))
            for k, (t, m, a) in enumerate(rows)
        ]
    times = arrival_times(spec, arrival_rng)
    srcs = spec.sources
    if len(srcs) == 1:
        picks = np.zeros(len(times), dtype=int)
    else:
        w = np.array([s.weight for s in srcs], dtype=float)
        picks = source_rng.choice(len(srcs), size=len(times), p=w / w.sum())
    out = []
    for k, (t, j) in enumerate(zip(times, picks)):
        s = srcs[j]
        out.append(
            Request(
                id=k,
                model=s.model,
                arrival=float(t),
                accuracy_req=s.accuracy_req,
                slo=s.slo,
                instance=s.instance,
            )
        )
    return out
