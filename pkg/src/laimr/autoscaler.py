"""Replica lifecycle and reconciliation.

Two policies drive ``ReplicaPool.desired``:

* PM-HPA: the router's scale signals move ``desired`` by one replica; a
  periodic reconcile converges the pool to it.
* Reactive latency: every reconcile period the window P95 of measured
  latency is compared against a threshold (baseline for comparison).

Replicas become serving only after ``startup_delay``. Scale-in drains:
a draining replica takes no new work and is removed once idle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .controller import Scaling
from .errors import InvalidArgumentError, LaimrError
from .metrics import percentile


class PolicyKind(str, enum.Enum):
    PMHPA = "pmhpa"
    REACTIVE = "reactive"
    NONE = "none"


@dataclass(frozen=True)
class AutoscalerPolicy:
    kind: PolicyKind = PolicyKind.PMHPA
    reconcile_period: float = 5.0
    startup_delay: float = 1.8
    reactive_threshold: float = 1.8
    reactive_window: float = 10.0

    def __post_init__(self):
        problems = []
        try:
            object.__setattr__(self, "kind", PolicyKind(self.kind))
        except ValueError:
            problems.append(f"kind: unknown policy {self.kind!r}")
        if not self.reconcile_period > 0:
            problems.append(f"reconcile_period: must be > 0 (got {self.reconcile_period})")
        if not self.startup_delay >= 0:
            problems.append(f"startup_delay: must be >= 0 (got {self.startup_delay})")
        if not self.reactive_threshold > 0:
            problems.append(f"reactive_threshold: must be > 0 (got {self.reactive_threshold})")
        if not self.reactive_window > 0:
            problems.append(f"reactive_window: must be > 0 (got {self.reactive_window})")
        if problems:
            err = InvalidArgumentError("; ".join(f"AutoscalerPolicy.{p}" for p in problems))
            err.problems = [f"AutoscalerPolicy.{p}" for p in problems]
            raise err


class ReplicaState(str, enum.Enum):
    STARTING = "starting"
    READY = "ready"
    DRAINING = "draining"


@dataclass
class Replica:
    id: int
    state: ReplicaState
    ready_at: float
    in_flight: int = 0
    drain_mark: Optional[float] = None


class LifecycleError(LaimrError):
    pass


@dataclass(frozen=True)
class ScaleAction:
    """One change made by ``reconcile``.

    kind is 'start' (replica becomes ready at ``at``), 'cancel' (starting
    replica dropped), 'drain' (ready replica stops taking work) or 'remove'.
    """

    kind: str
    replica: int
    at: float


@dataclass
class ReplicaPool:
    model: str
    instance: str
    cap: int
    startup_delay: float = 1.8
    desired: int = 1
    replicas: dict = field(default_factory=dict)
    removed: list = field(default_factory=list)

    @classmethod
    def with_ready(cls, model, instance, n, cap, startup_delay=1.8, t=0.0):
        pool = cls(model, instance, cap, startup_delay, desired=n)
        for _ in range(n):
            pool._new(ReplicaState.READY, t)
        return pool

    def _new(self, state, ready_at):
        rid = len(self.replicas) + len(self.removed)
        rep = Replica(rid, state, ready_at)
        self.replicas[rid] = rep
        return rep

    @property
    def key(self):
        return (self.model, self.instance)

    def by_state(self, state) -> list:
        return [r for r in self.replicas.values() if r.state is state]

    @property
    def ready(self) -> int:
        return len(self.by_state(ReplicaState.READY))

    @property
    def current(self) -> int:
        return sum(r.state is not ReplicaState.DRAINING for r in self.replicas.values())

    @property
    def allocated(self) -> int:
        return len(self.replicas)

    def signal(self, scaling: Scaling) -> int:
        """Apply one router scale signal to ``desired`` (kept within [1, cap])."""
        if scaling is Scaling.SCALE_OUT:
            self.desired = min(self.cap, self.desired + 1)
        elif scaling is Scaling.SCALE_IN:
            self.desired = max(1, self.desired - 1)
        return self.desired

    def mark_ready(self, rid: int, t: float) -> bool:
        rep = self.replicas.get(rid)
        if rep is None or rep.state is not ReplicaState.STARTING:
            return False
        rep.state = ReplicaState.READY
        rep.ready_at = t
        return True

    def begin(self, rid: int) -> None:
        rep = self.replicas[rid]
        if rep.state is not ReplicaState.READY:
            raise LifecycleError(f"replica {rid} is {rep.state.value}; cannot take work")
        rep.in_flight += 1

    def finish(self, rid: int) -> bool:
        """Record one completion on ``rid``; True if the replica was removed."""
        rep = self.replicas[rid]
        if rep.in_flight < 1:
            raise LifecycleError(f"replica {rid} has no request in flight")
        rep.in_flight -= 1
        if rep.state is ReplicaState.DRAINING and rep.in_flight == 0:
            self._remove(rid)
            return True
        return False

    def _remove(self, rid):
        self.removed.append(self.replicas.pop(rid))


def reconcile(pool: ReplicaPool, t_now: float) -> list:
    """Move the pool toward ``desired`` by the exact difference, within the cap."""
    target = max(1, min(pool.desired, pool.cap))
    diff = target - pool.current
    actions = []
    if diff > 0:
        for _ in range(diff):
            rep = pool._new(ReplicaState.STARTING, t_now + pool.startup_delay)
            actions.append(ScaleAction("start", rep.id, rep.ready_at))
    elif diff < 0:
        # cheapest first: replicas still starting, then idle ones, then busy ones
        starting = sorted(pool.by_state(ReplicaState.STARTING), key=lambda r: -r.id)
        ready = sorted(pool.by_state(ReplicaState.READY), key=lambda r: (r.in_flight > 0, -r.id))
        for rep in (starting + ready)[: -diff]:
            if rep.state is ReplicaState.STARTING:
                pool._remove(rep.id)
                actions.append(ScaleAction("cancel", rep.id, t_now))
                continue
            rep.state = ReplicaState.DRAINING
            rep.drain_mark = t_now
            actions.append(ScaleAction("drain", rep.id, t_now))
            if rep.in_flight == 0:
                pool._remove(rep.id)
                actions.append(ScaleAction("remove", rep.id, t_now))
    return actions


def reactive_desired(latencies: Iterable[float], threshold: float, current: int) -> int:
    """Latency-threshold rule with a dead band between 0.5x and 1x threshold."""
    window = list(latencies)
    if not window:
        return current
    p95 = percentile(window, 95)
    if p95 > threshold:
        return current + 1
    if p95 < 0.5 * threshold and current > 1:
        return current - 1
    return current
