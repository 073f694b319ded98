"""Event-driven, SLO-aware router.

For every arriving request the router

1. updates the 1-s sliding arrival rate of the request's model,
2. derives the latency budget tau = x * L_m,
3. offloads the request if the instantaneous prediction breaches tau,
4. updates the EWMA rate and predicts latency under sustained demand
   (also for requests offloaded in step 3),
5. on a predicted breach asks for one more replica, or offloads a fraction
   phi of traffic when the pool is at its cap,
6. otherwise asks to drop a replica when utilization is below the floor,
7. routes to the feasible pool with the lowest predicted latency.

Scale requests are returned as signals; the autoscaler applies them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import InvalidArgumentError, RoutingFailureError, UnstableQueueError
from .qmodel import (
    CalibrationParams,
    InstanceProfile,
    ModelProfile,
    PoolKey,
    QualityClass,
    Tier,
    g_lambda,
    service_rate,
)
from .telemetry import EwmaRate, SlidingWindow


class Action(str, enum.Enum):
    ROUTE = "route"
    OFFLOAD_REQUEST = "offload_request"
    OFFLOAD_FRACTION = "offload_fraction"


class Scaling(str, enum.Enum):
    NONE = "none"
    SCALE_OUT = "scale_out"
    SCALE_IN = "scale_in"


@dataclass(frozen=True)
class ControllerConfig:
    slo_multiplier: float = 2.25
    ewma_weight: float = 0.8
    util_floor: float = 0.3
    cost_tradeoff: float = 2.5
    rate_window: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.slo_multiplier > 1:
            problems.append(f"slo_multiplier: must be > 1 (got {self.slo_multiplier})")
        if not 0 <= self.ewma_weight <= 1:
            problems.append(f"ewma_weight: must be in [0, 1] (got {self.ewma_weight})")
        if not 0 < self.util_floor < 1:
            problems.append(f"util_floor: must be in (0, 1) (got {self.util_floor})")
        if not self.cost_tradeoff >= 0:
            problems.append(f"cost_tradeoff: must be >= 0 (got {self.cost_tradeoff})")
        if not self.rate_window > 0:
            problems.append(f"rate_window: must be > 0 (got {self.rate_window})")
        if problems:
            err = InvalidArgumentError("; ".join(f"ControllerConfig.{p}" for p in problems))
            err.problems = [f"ControllerConfig.{p}" for p in problems]
            raise err


@dataclass(frozen=True)
class Request:
    id: int
    model: str
    arrival: float
    accuracy_req: float = 0.0
    slo: Optional[float] = None
    instance: Optional[str] = None
    payload_size: int = 0


@dataclass
class PoolState:
    """Router's view of one replica pool.

    ``ready`` replicas serve traffic; ``current`` also counts replicas that
    are still starting (draining ones are excluded from both).
    """

    ready: int
    current: int
    cap: int
    cost: float = 1.0


@dataclass
class ClusterState:
    models: Mapping[str, ModelProfile]
    instances: Mapping[str, InstanceProfile]
    cal: CalibrationParams
    pools: dict  # PoolKey -> PoolState, in configuration order

    def layout(self) -> dict:
        return {k: p.ready for k, p in self.pools.items()}

    def pools_on(self, instance_id: str):
        return [k for k in self.pools if k[1] == instance_id]

    def resolve_model(self, name: str) -> str:
        if name in self.models:
            return name
        try:
            qc = QualityClass(name)
        except ValueError:
            raise RoutingFailureError(f"unknown model or quality class {name!r}") from None
        for m in self.models.values():
            if m.quality_class is qc:
                return m.id
        raise RoutingFailureError(f"no model serves quality class {qc.value!r}")

    def home_pool(self, r: Request, model_id: str) -> Optional[PoolKey]:
        if r.instance is not None:
            key = (model_id, r.instance)
            return key if key in self.pools else None
        own = [k for k in self.pools if k[0] == model_id]
        if not own:
            return None
        return min(own, key=lambda k: (self.instances[k[1]].net_rtt, own.index(k)))

    def predict(self, pool: PoolKey, model_rates: Mapping[str, float]) -> float:
        """Predicted latency of ``pool``; +inf when it cannot serve the load."""
        m, i = pool
        inst = self.instances[i]
        if self.pools[pool].ready < 1:
            return math.inf
        rates = {k[0]: model_rates.get(k[0], 0.0) for k in self.pools_on(i)}
        try:
            return g_lambda(self.models[m], inst, self.cal, rates, self.layout(), self.models)
        except UnstableQueueError:
            return math.inf

    def utilization(self, pool: PoolKey, rate: float) -> float:
        p = self.pools[pool]
        if p.ready < 1:
            return math.inf
        m, i = pool
        return rate / (p.ready * service_rate(self.models[m], self.instances[i]))


@dataclass(frozen=True)
class RoutingDecision:
    action: Action
    target: Optional[PoolKey]
    phi: float = 0.0
    upstream: Optional[PoolKey] = None
    scaling: Scaling = Scaling.NONE
    scale_pool: Optional[PoolKey] = None
    # diagnostics
    rate: float = 0.0
    rate_accum: Optional[float] = None
    tau: float = 0.0
    g_inst: float = 0.0
    g_hat: Optional[float] = None


def slo_budget(model: ModelProfile, x: float) -> float:
    if not x > 1:
        raise InvalidArgumentError(f"latency multiplier must be > 1 (got {x})")
    return x * model.ref_latency


def offload_fraction(g_hat: float, tau: float) -> float:
    if not g_hat > 0:
        raise InvalidArgumentError(f"predicted latency must be > 0 (got {g_hat})")
    if math.isinf(g_hat):
        return 1.0
    return min(1.0, max(0.0, (g_hat - tau) / g_hat))


def _order_key(state, pool, g):
    return (g, state.pools[pool].cost, list(state.pools).index(pool))


def feasible_replicas(
    r: Request, state: ClusterState, tau: float, model_rates: Mapping[str, float]
) -> list:
    """Pools accurate enough for ``r`` whose predicted latency fits ``tau``.

    Sorted by predicted latency, then replica cost, then config order.
    """
    out = []
    for pool in state.pools:
        if state.models[pool[0]].accuracy < r.accuracy_req:
            continue
        g = state.predict(pool, model_rates)
        if g <= tau:
            out.append((pool, g))
    out.sort(key=lambda pg: _order_key(state, pg[0], pg[1]))
    return [p for p, _ in out]


def upstream_pool(
    r: Request,
    state: ClusterState,
    tau: float,
    model_rates: Mapping[str, float],
    exclude: Optional[PoolKey],
) -> Optional[PoolKey]:
    """Nearest pool that meets ``tau``; else the best cloud pool; else None."""
    cands = [
        p
        for p in state.pools
        if p != exclude and state.models[p[0]].accuracy >= r.accuracy_req
    ]
    g = {p: state.predict(p, model_rates) for p in cands}
    fits = [p for p in cands if g[p] <= tau]
    if fits:
        return min(fits, key=lambda p: (state.instances[p[1]].net_rtt,) + _order_key(state, p, g[p]))
    cloud = [p for p in cands if state.instances[p[1]].tier is Tier.CLOUD]
    if cloud:
        return min(cloud, key=lambda p: _order_key(state, p, g[p]))
    return None


class Router:
    """Owns per-model telemetry; one instance per simulated router."""

    def __init__(self, cfg: ControllerConfig):
        self.cfg = cfg
        self.windows: dict[str, SlidingWindow] = {}
        self.ewma: dict[str, EwmaRate] = {}

    def window(self, model_id: str) -> SlidingWindow:
        w = self.windows.get(model_id)
        if w is None:
            w = self.windows[model_id] = SlidingWindow(self.cfg.rate_window)
        return w

    def ewma_for(self, model_id: str) -> EwmaRate:
        e = self.ewma.get(model_id)
        if e is None:
            e = self.ewma[model_id] = EwmaRate(self.cfg.ewma_weight)
        return e

    def current_rates(self, state: ClusterState, t_now: float) -> dict:
        return {m: float(self.window(m).rate(t_now)) for m in state.models}

    def on_request(self, r: Request, state: ClusterState) -> RoutingDecision:
        m = state.resolve_model(r.model)
        lam = float(self.window(m).record(r.arrival))
        tau = r.slo if r.slo is not None else slo_budget(state.models[m], self.cfg.slo_multiplier)
        rates = self.current_rates(state, r.arrival)
        home = state.home_pool(r, m)

        g_inst = state.predict(home, rates) if home is not None else math.inf
        upstream = None
        if g_inst > tau:
            upstream = upstream_pool(r, state, tau, rates, exclude=home)

        # The EWMA path runs even when this request is offloaded, otherwise a
        # pool that keeps breaching per request would never be scaled out.
        scaling, phi, acc, g_hat = Scaling.NONE, 0.0, None, None
        if home is not None:
            pool = state.pools[home]
            rho = state.utilization(home, lam)
            acc = self.ewma_for(m).update(lam)
            g_hat = state.predict(home, {**rates, m: acc})
            if g_hat > tau:
                if pool.current < pool.cap:
                    scaling = Scaling.SCALE_OUT
                else:
                    phi = offload_fraction(g_hat, tau)
            elif rho < self.cfg.util_floor and pool.current > 1:
                scaling = Scaling.SCALE_IN
        scale_pool = home if scaling is not Scaling.NONE else None
        common = dict(
            scaling=scaling,
            scale_pool=scale_pool,
            rate=lam,
            rate_accum=acc,
            tau=tau,
            g_inst=g_inst,
            g_hat=g_hat,
        )
        if upstream is not None:
            return RoutingDecision(Action.OFFLOAD_REQUEST, upstream, **common)

        feasible = feasible_replicas(r, state, tau, rates)
        if not feasible:
            up = upstream_pool(r, state, tau, rates, exclude=home)
            if up is None:
                if home is None:
                    raise RoutingFailureError(f"no pool can serve request {r.id}")
                return RoutingDecision(Action.ROUTE, home, **common)
            return RoutingDecision(Action.OFFLOAD_REQUEST, up, **common)
        target = feasible[0]
        if phi > 0:
            up = upstream_pool(r, state, tau, rates, exclude=home)
            if up is not None:
                return RoutingDecision(
                    Action.OFFLOAD_FRACTION, target, phi=phi, upstream=up, **common
                )
        return RoutingDecision(Action.ROUTE, target, **common)
