"""Deterministic discrete-event simulation of router, replica pools and tiers.

Each pool (model, instance) is one shared FIFO queue feeding its ready
replicas (an M/M/c station when service is exponential). A request's
latency is queue wait + service time + the serving instance's round-trip
delay. Service means follow the utilization model, evaluated when service
starts from the pools' 1-s arrival windows.

Events are ordered by (time, seq); seq is assigned when an event is
scheduled, so a (scenario, seed) pair always replays identically.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .autoscaler import (
    AutoscalerPolicy,
    PolicyKind,
    ReplicaPool,
    ReplicaState,
    reactive_desired,
    reconcile,
)
from .controller import (
    Action,
    ClusterState,
    ControllerConfig,
    PoolState,
    Request,
    Router,
    Scaling,
)
from .errors import ConfigError, InvalidArgumentError, RoutingFailureError
from .metrics import RunMetrics
from .qmodel import CalibrationParams, InstanceProfile, ModelProfile, infer_latency_util
from .telemetry import SlidingWindow
from .workload import WorkloadSpec, generate


class EventKind(enum.IntEnum):
    ARRIVAL = 0
    SERVICE_START = 1
    SERVICE_END = 2
    RECONCILE = 3
    REPLICA_READY = 4
    REPLICA_DRAINED = 5


class ControllerKind(str, enum.Enum):
    LAIMR = "laimr"
    REACTIVE = "reactive"
    NONE = "none"


_POLICY_FOR = {
    ControllerKind.LAIMR: PolicyKind.PMHPA,
    ControllerKind.REACTIVE: PolicyKind.REACTIVE,
    ControllerKind.NONE: PolicyKind.NONE,
}


@dataclass(frozen=True)
class PoolSpec:
    model: str
    instance: str
    initial: int = 1
    cap: Optional[int] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    models: dict
    instances: dict
    pools: tuple
    cal: CalibrationParams
    workload: WorkloadSpec
    controller_kind: ControllerKind = ControllerKind.LAIMR
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    autoscaler: AutoscalerPolicy = field(default_factory=AutoscalerPolicy)
    service_distribution: str = "exponential"
    load_dependent_service: bool = True

    def __post_init__(self):
        object.__setattr__(self, "controller_kind", ControllerKind(self.controller_kind))

    def problems(self) -> list:
        out = []
        if not self.pools:
            out.append("Scenario.pools: at least one replica pool is required")
        seen = set()
        for p in self.pools:
            key = (p.model, p.instance)
            if p.model not in self.models:
                out.append(f"Scenario.pools: unknown model {p.model!r}")
            if p.instance not in self.instances:
                out.append(f"Scenario.pools: unknown instance {p.instance!r}")
            if key in seen:
                out.append(f"Scenario.pools: duplicate pool {key}")
            seen.add(key)
            cap = self.cap_for(p)
            if cap is not None and not 1 <= p.initial <= cap:
                out.append(
                    f"Scenario.pools: initial replicas for {key} must be in [1, {cap}] (got {p.initial})"
                )
        for s in self.workload.sources:
            if s.model not in self.models:
                out.append(f"WorkloadSpec.sources: unknown model {s.model!r}")
            if s.instance is not None and (s.model, s.instance) not in seen:
                out.append(f"WorkloadSpec.sources: no pool {(s.model, s.instance)}")
        if self.service_distribution not in ("exponential", "deterministic"):
            out.append(
                "Scenario.service_distribution: must be 'exponential' or 'deterministic' "
                f"(got {self.service_distribution!r})"
            )
        return out

    def cap_for(self, p: PoolSpec):
        if p.cap is not None:
            return p.cap
        inst = self.instances.get(p.instance)
        return inst.cap_for(p.model) if inst is not None else None

    def with_controller(self, kind) -> "Scenario":
        kind = ControllerKind(kind)
        return replace(
            self,
            controller_kind=kind,
            autoscaler=replace(self.autoscaler, kind=_POLICY_FOR[kind]),
        )

    def with_rate(self, rate: float) -> "Scenario":
        return replace(self, workload=self.workload.with_rate(rate))


def sample_service_time(model, instance, U, gamma, distribution, rng) -> float:
    """Service time with mean (L_m / S_mi) * (1 + U**gamma)."""
    mean = infer_latency_util(model, instance, U, gamma)
    if distribution == "deterministic":
        return mean
    if distribution == "exponential":
        return mean * rng.standard_exponential()
    raise InvalidArgumentError(f"unknown service distribution {distribution!r}")


@dataclass
class ServiceRecord:
    request: int
    pool: tuple
    replica: int
    arrival: float
    start: float
    end: Optional[float] = None
    latency: Optional[float] = None
    offloaded: bool = False


class _Pool:
    def __init__(self, spec: PoolSpec, cap, model, instance, startup_delay, rate_window):
        self.key = (spec.model, spec.instance)
        self.model = model
        self.instance = instance
        self.rp = ReplicaPool.with_ready(
            spec.model, spec.instance, spec.initial, cap, startup_delay
        )
        self.queue = deque()
        self.idle = set(self.rp.replicas)
        self.window = SlidingWindow(rate_window)
        self.completed = deque()  # (t_end, latency) for the reactive policy
        self.view = PoolState(
            ready=spec.initial, current=spec.initial, cap=cap, cost=instance.cost_for(model.id)
        )

    def sync(self):
        self.view.ready = self.rp.ready
        self.view.current = self.rp.current


class Simulation:
    def __init__(self, scenario: Scenario, seed: int, event_log: bool = False, keep_records=False):
        problems = scenario.problems()
        if problems:
            raise ConfigError(problems, scenario.name)
        self.sc = scenario
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        arr, src, svc, route = (np.random.default_rng(s) for s in ss.spawn(4))
        self._service_rng = svc
        self._route_rng = route
        self.requests = generate(scenario.workload, arr, src)

        self.pools = {}
        for p in scenario.pools:
            self.pools[(p.model, p.instance)] = _Pool(
                p,
                scenario.cap_for(p),
                scenario.models[p.model],
                scenario.instances[p.instance],
                scenario.autoscaler.startup_delay,
                scenario.controller.rate_window,
            )
        self.state = ClusterState(
            scenario.models,
            scenario.instances,
            scenario.cal,
            {k: p.view for k, p in self.pools.items()},
        )
        self.router = Router(scenario.controller) if scenario.controller_kind is ControllerKind.LAIMR else None
        self.policy = scenario.autoscaler.kind
        self.log = [] if event_log else None
        self.records = {} if keep_records else None
        self.metrics = RunMetrics(by_class={})

        self._heap = []
        self._seq = 0
        self._t = 0.0
        self._last_t = 0.0

    # -- event plumbing --------------------------------------------------------

    def _push(self, t, kind, payload=None):
        heapq.heappush(self._heap, (t, self._seq, kind, payload))
        self._seq += 1

    def _emit(self, kind, **info):
        if self.log is not None:
            detail = " ".join(f"{k}={v}" for k, v in info.items())
            self.log.append(f"{self._t:.9f} {kind.name} {detail}")

    def _accrue(self, t):
        allocated = sum(p.rp.allocated for p in self.pools.values())
        self.metrics.replica_seconds += allocated * (t - self._last_t)
        self._last_t = t

    # -- service ----------------------------------------------------------------

    def _utilization(self, instance_id, t):
        inst = self.sc.instances[instance_id]
        load = inst.background
        for p in self.pools.values():
            if p.key[1] != instance_id:
                continue
            n = max(p.rp.ready, 1)
            load += p.window.rate(t) / n * p.model.demand
        return load / inst.capacity

    def _try_start(self, pool, t):
        while pool.queue and pool.idle:
            rid = min(pool.idle)
            pool.idle.discard(rid)
            req, offloaded = pool.queue.popleft()
            pool.rp.begin(rid)
            U = self._utilization(pool.key[1], t) if self.sc.load_dependent_service else 0.0
            s = sample_service_time(
                pool.model, pool.instance, U, self.sc.cal.gamma,
                self.sc.service_distribution, self._service_rng,
            )
            if self.records is not None:
                self.records[req.id] = ServiceRecord(
                    req.id, pool.key, rid, req.arrival, t, offloaded=offloaded
                )
            self._emit(EventKind.SERVICE_START, req=req.id, pool=_fmt(pool.key), replica=rid)
            self._push(t + s, EventKind.SERVICE_END, (pool.key, rid, req))

    # -- handlers ---------------------------------------------------------------

    def _home(self, req):
        m = self.state.resolve_model(req.model)
        home = self.state.home_pool(req, m)
        if home is None:
            raise RoutingFailureError(f"no pool serves model {m!r}")
        return home

    def _on_arrival(self, req, t):
        self.metrics.arrivals += 1
        offloaded = False
        if self.router is not None:
            d = self.router.on_request(req, self.state)
            if d.scaling is not Scaling.NONE:
                self.pools[d.scale_pool].rp.signal(d.scaling)
            target = d.target
            if d.action is Action.OFFLOAD_REQUEST:
                offloaded = True
            elif d.action is Action.OFFLOAD_FRACTION:
                if self._route_rng.random() < d.phi:
                    target, offloaded = d.upstream, True
            self._emit(
                EventKind.ARRIVAL, req=req.id, action=d.action.value, pool=_fmt(target),
                scaling=d.scaling.value,
            )
        else:
            target = self._home(req)
            self._emit(EventKind.ARRIVAL, req=req.id, action="route", pool=_fmt(target))
        if offloaded:
            self.metrics.offloads += 1
        pool = self.pools[target]
        pool.window.record(t)
        pool.queue.append((req, offloaded))
        self._try_start(pool, t)

    def _on_service_end(self, payload, t):
        key, rid, req = payload
        pool = self.pools[key]
        latency = t - req.arrival + pool.instance.net_rtt
        self.metrics.samples.append(latency)
        qc = pool.model.quality_class.value
        self.metrics.by_class.setdefault(qc, []).append(latency)
        self.metrics.completions += 1
        pool.completed.append((t, latency))
        if self.records is not None:
            rec = self.records[req.id]
            rec.end, rec.latency = t, latency
        self._emit(EventKind.SERVICE_END, req=req.id, pool=_fmt(key), replica=rid)
        if pool.rp.finish(rid):
            self._emit(EventKind.REPLICA_DRAINED, pool=_fmt(key), replica=rid)
        elif pool.rp.replicas[rid].state is ReplicaState.READY:
            pool.idle.add(rid)
        pool.sync()
        self._try_start(pool, t)

    def _on_reconcile(self, t):
        pol = self.sc.autoscaler
        for pool in self.pools.values():
            if self.policy is PolicyKind.REACTIVE:
                while pool.completed and pool.completed[0][0] <= t - pol.reactive_window:
                    pool.completed.popleft()
                want = reactive_desired(
                    (lat for _, lat in pool.completed), pol.reactive_threshold, pool.rp.current
                )
                pool.rp.desired = max(1, min(want, pool.rp.cap))
            actions = reconcile(pool.rp, t)
            for a in actions:
                if a.kind == "start":
                    self.metrics.scale_events += 1
                    self._push(a.at, EventKind.REPLICA_READY, (pool.key, a.replica))
                elif a.kind == "drain":
                    self.metrics.scale_events += 1
                    pool.idle.discard(a.replica)
                elif a.kind == "cancel":
                    self.metrics.scale_events += 1
                elif a.kind == "remove":
                    pool.idle.discard(a.replica)
                    self._emit(EventKind.REPLICA_DRAINED, pool=_fmt(pool.key), replica=a.replica)
                if a.kind != "remove":
                    self._emit(EventKind.RECONCILE, pool=_fmt(pool.key), action=a.kind, replica=a.replica)
            pool.sync()
        nxt = t + pol.reconcile_period
        if nxt <= self.sc.workload.duration:
            self._push(nxt, EventKind.RECONCILE)

    def _on_ready(self, payload, t):
        key, rid = payload
        pool = self.pools[key]
        if pool.rp.mark_ready(rid, t):
            pool.idle.add(rid)
            pool.sync()
            self._emit(EventKind.REPLICA_READY, pool=_fmt(key), replica=rid)
            self._try_start(pool, t)

    # -- driver -----------------------------------------------------------------

    def run(self, until: Optional[float] = None) -> RunMetrics:
        reqs = self.requests
        if reqs:
            self._push(reqs[0].arrival, EventKind.ARRIVAL, 0)
        if self.policy is not PolicyKind.NONE:
            period = self.sc.autoscaler.reconcile_period
            if period <= self.sc.workload.duration:
                self._push(period, EventKind.RECONCILE)
        heap = self._heap
        while heap:
            if until is not None and heap[0][0] > until:
                break
            t, _, kind, payload = heapq.heappop(heap)
            self._accrue(t)
            self._t = t
            if kind is EventKind.ARRIVAL:
                self._on_arrival(reqs[payload], t)
                if payload + 1 < len(reqs):
                    self._push(reqs[payload + 1].arrival, EventKind.ARRIVAL, payload + 1)
            elif kind is EventKind.SERVICE_END:
                self._on_service_end(payload, t)
            elif kind is EventKind.RECONCILE:
                self._on_reconcile(t)
            elif kind is EventKind.REPLICA_READY:
                self._on_ready(payload, t)
        if until is not None:
            self._accrue(max(until, self._last_t))
        m = self.metrics
        m.horizon = self._last_t
        m.in_flight = sum(
            len(p.queue) + sum(r.in_flight for r in p.rp.replicas.values())
            for p in self.pools.values()
        )
        return m

    def log_digest(self) -> str:
        if self.log is None:
            raise InvalidArgumentError("event log was not enabled")
        return hashlib.sha256("\n".join(self.log).encode()).hexdigest()


def _fmt(key):
    return f"{key[0]}@{key[1]}" if key else "-"


def run(scenario: Scenario, seed: int, event_log: bool = False) -> RunMetrics:
    return Simulation(scenario, seed, event_log=event_log).run()
