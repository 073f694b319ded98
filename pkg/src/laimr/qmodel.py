"""Closed-form latency and queueing model.

Everything here is a pure function of immutable profiles. Latencies are in
seconds, rates in requests/second, resource demand in CPU-seconds.

End-to-end latency of a request served by pool (model m, instance i) is

    processing  (L_m / S_mi) * (1 + U_i ** gamma)
  + network     D_net of instance i
  + queueing    ErlangC(lambda/mu, N) / (N * mu - lambda),   mu = S_mi / L_m

where U_i is the utilization of one replica of instance i.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence, Tuple, Union

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidArgumentError,
    InvalidAssignmentError,
    UnstableQueueError,
)

PoolKey = Tuple[str, str]
PerModel = Union[float, Mapping[str, float]]


def _fail_if(problems, type_name):
    if problems:
        err = InvalidArgumentError("; ".join(f"{type_name}.{p}" for p in problems))
        err.problems = [f"{type_name}.{p}" for p in problems]
        raise err


class Tier(str, enum.Enum):
    EDGE = "edge"
    CLOUD = "cloud"


class QualityClass(str, enum.Enum):
    LOW_LATENCY = "low_latency"
    BALANCED = "balanced"
    PRECISE = "precise"


@dataclass(frozen=True)
class ModelProfile:
    id: str
    ref_latency: float
    demand: float
    accuracy: float
    quality_class: QualityClass = QualityClass.BALANCED

    def __post_init__(self):
        problems = []
        if not self.ref_latency > 0:
            problems.append(f"ref_latency: must be > 0 (got {self.ref_latency})")
        if not self.demand > 0:
            problems.append(f"demand: must be > 0 (got {self.demand})")
        if not 0 <= self.accuracy <= 1:
            problems.append(f"accuracy: must be in [0, 1] (got {self.accuracy})")
        _fail_if(problems, "ModelProfile")
        object.__setattr__(self, "quality_class", QualityClass(self.quality_class))


def _per_model(value, model_id, default):
    if isinstance(value, Mapping):
        return value.get(model_id, default)
    return value


def _per_model_values(value):
    return list(value.values()) if isinstance(value, Mapping) else [value]


@dataclass(frozen=True)
class InstanceProfile:
    """A node type hosting replicas.

    ``capacity`` and ``background`` are per replica (one replica owns one
    node's CPU budget). ``speedup``, ``replica_cost`` and ``replica_cap``
    may be scalars or per-model mappings.
    """

    id: str
    tier: Tier
    speedup: PerModel = 1.0
    capacity: float = 1.0
    background: float = 0.0
    net_rtt: float = 0.0
    replica_cost: PerModel = 1.0
    replica_cap: Union[int, Mapping[str, int]] = 1

    def __post_init__(self):
        problems = []
        try:
            object.__setattr__(self, "tier", Tier(self.tier))
        except ValueError:
            problems.append(f"tier: must be 'edge' or 'cloud' (got {self.tier!r})")
        if any(not s > 0 for s in _per_model_values(self.speedup)):
            problems.append(f"speedup: must be > 0 (got {self.speedup})")
        if not self.capacity > 0:
            problems.append(f"capacity: must be > 0 (got {self.capacity})")
        if not self.background >= 0:
            problems.append(f"background: must be >= 0 (got {self.background})")
        if not self.net_rtt >= 0:
            problems.append(f"net_rtt: must be >= 0 (got {self.net_rtt})")
        if any(not c >= 0 for c in _per_model_values(self.replica_cost)):
            problems.append(f"replica_cost: must be >= 0 (got {self.replica_cost})")
        caps = _per_model_values(self.replica_cap)
        if any(int(c) != c or c < 1 for c in caps):
            problems.append(f"replica_cap: must be an integer >= 1 (got {self.replica_cap})")
        _fail_if(problems, "InstanceProfile")

    def speedup_for(self, model_id: str) -> float:
        return float(_per_model(self.speedup, model_id, 1.0))

    def cost_for(self, model_id: str) -> float:
        return float(_per_model(self.replica_cost, model_id, 1.0))

    def cap_for(self, model_id: str) -> int:
        return int(_per_model(self.replica_cap, model_id, 1))


@dataclass(frozen=True)
class CalibrationParams:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        problems = []
        if not self.alpha >= 0:
            problems.append(f"alpha: must be >= 0 (got {self.alpha})")
        if not self.beta >= 0:
            problems.append(f"beta: must be >= 0 (got {self.beta})")
        if not self.gamma > 0:
            problems.append(f"gamma: must be > 0 (got {self.gamma})")
        _fail_if(problems, "CalibrationParams")


@dataclass(frozen=True)
class BatchLatencyParams:
    hw_const: float
    model_size: float
    batch_exp: float

    def __post_init__(self):
        problems = []
        if not self.hw_const > 0:
            problems.append(f"hw_const: must be > 0 (got {self.hw_const})")
        if not self.model_size > 0:
            problems.append(f"model_size: must be > 0 (got {self.model_size})")
        if not 0 < self.batch_exp < 1:
            problems.append(f"batch_exp: must be in (0, 1) (got {self.batch_exp})")
        _fail_if(problems, "BatchLatencyParams")


@dataclass(frozen=True)
class QueueParams:
    arrival: float
    servers: int
    service_rate: float

    def __post_init__(self):
        problems = []
        if not self.arrival >= 0:
            problems.append(f"arrival: must be >= 0 (got {self.arrival})")
        if int(self.servers) != self.servers or self.servers < 1:
            problems.append(f"servers: must be an integer >= 1 (got {self.servers})")
        if not self.service_rate > 0:
            problems.append(f"service_rate: must be > 0 (got {self.service_rate})")
        _fail_if(problems, "QueueParams")

    @property
    def offered_load(self) -> float:
        return self.arrival / self.service_rate

    @property
    def rho(self) -> float:
        return self.arrival / (self.servers * self.service_rate)

    @property
    def stable(self) -> bool:
        return self.rho < 1


# --- processing delay --------------------------------------------------------


def batch_latency(p: BatchLatencyParams, b: float) -> float:
    """Mean per-inference latency for batch size ``b`` (sub-linear in b)."""
    if b < 1:
        raise InvalidArgumentError(f"batch size must be >= 1 (got {b})")
    return p.hw_const * p.model_size * b**p.batch_exp


def utilization(
    instance: InstanceProfile,
    rates: Mapping[str, float],
    demands: Mapping[str, float],
) -> float:
    """Offered CPU load over capacity; values above 1 mean overload."""
    load = 0.0
    for m, lam in rates.items():
        if lam < 0:
            raise InvalidArgumentError(f"rate for {m!r} must be >= 0 (got {lam})")
        load += lam * demands[m]
    return (load + instance.background) / instance.capacity


def infer_latency_util(
    model: ModelProfile, instance: InstanceProfile, U: float, gamma: float
) -> float:
    if U < 0:
        raise InvalidArgumentError(f"utilization must be >= 0 (got {U})")
    return model.ref_latency / instance.speedup_for(model.id) * (1.0 + U**gamma)


def infer_latency_affine(cal: CalibrationParams, per_replica_rate: float) -> float:
    if per_replica_rate < 0:
        raise InvalidArgumentError(f"per-replica rate must be >= 0 (got {per_replica_rate})")
    return cal.alpha + cal.beta * per_replica_rate**cal.gamma


def affine_params(
    model: ModelProfile, instance: InstanceProfile, gamma: float
) -> CalibrationParams:
    """Baseline and slope implied by the profiles (single model on the node)."""
    base = model.ref_latency / instance.speedup_for(model.id)
    alpha = base * (1.0 + (instance.background / instance.capacity) ** gamma)
    beta = base * (model.demand / instance.capacity) ** gamma
    return CalibrationParams(alpha, beta, gamma)


def _ls_alpha_beta(t, y):
    """Least squares of y ~ alpha + beta*t with alpha >= 0, beta >= 0."""
    n = len(t)
    tm, ym = t.mean(), y.mean()
    stt = float(((t - tm) ** 2).sum())
    candidates = []
    if stt > 0:
        beta = float(((t - tm) * (y - ym)).sum()) / stt
        alpha = ym - beta * tm
        if alpha >= 0 and beta >= 0:
            candidates.append((alpha, beta))
    # boundary faces of the feasible quadrant
    candidates.append((max(float(ym), 0.0), 0.0))
    tt = float(t @ t)
    if tt > 0:
        candidates.append((0.0, max(float(t @ y) / tt, 0.0)))
    best = None
    for alpha, beta in candidates:
        sse = float(((alpha + beta * t - y) ** 2).sum())
        if best is None or sse < best[0] - 1e-15 * max(1.0, abs(best[0])):
            best = (sse, alpha, beta)
    assert n > 0
    return best


def calibrate(
    samples: Sequence[Tuple[float, float]],
    gamma_max: float = 3.0,
    grid: int = 301,
    rounds: int = 40,
) -> CalibrationParams:
    """Fit ``alpha + beta * rate**gamma`` to (per-replica rate, latency) pairs.

    gamma is searched on a grid over (0, gamma_max] that is repeatedly
    narrowed around the best point; alpha and beta come from a bounded
    linear least-squares solve at each gamma. Deterministic.
    """
    if len(samples) < 3:
        raise InsufficientDataError(f"need at least 3 samples (got {len(samples)})")
    x = np.array([float(s[0]) for s in samples])
    y = np.array([float(s[1]) for s in samples])
    if np.any(x < 0):
        raise InvalidArgumentError("per-replica rates must be >= 0")
    if len(np.unique(x)) < 2:
        raise InsufficientDataError("need at least 2 distinct rates")

    def fit(g):
        return _ls_alpha_beta(x**g, y)

    lo, hi = gamma_max / grid, gamma_max
    best_g, best = None, None
    for _ in range(rounds):
        gammas = np.linspace(lo, hi, grid)
        for g in gammas:
            res = fit(float(g))
            if best is None or res[0] < best[0]:
                best_g, best = float(g), res
        step = (hi - lo) / (grid - 1)
        lo = max(best_g - step, 1e-12)
        hi = min(best_g + step, gamma_max)
        if step < 1e-13:
            break
    _, alpha, beta = best
    return CalibrationParams(alpha=alpha, beta=beta, gamma=best_g)


# --- queueing ----------------------------------------------------------------


def erlang_c(a: float, c: int) -> float:
    """Probability that an arrival waits in an M/M/c queue with offered load a.

    Computed through the Erlang-B recurrence, stable for large c.
    """
    if int(c) != c or c < 1:
        raise InvalidArgumentError(f"servers must be an integer >= 1 (got {c})")
    if a < 0:
        raise InvalidArgumentError(f"offered load must be >= 0 (got {a})")
    c = int(c)
    rho = a / c
    if rho >= 1:
        raise UnstableQueueError(rho)
    if a == 0:
        return 0.0
    if c == 1:
        return a
    b = 1.0
    for k in range(1, c + 1):
        b = a * b / (k + a * b)
    return b / (1.0 - rho * (1.0 - b))


def service_rate(model: ModelProfile, instance: InstanceProfile) -> float:
    return instance.speedup_for(model.id) / model.ref_latency


def queue_delay(q: QueueParams) -> float:
    """Expected wait before service in an M/M/N pool."""
    if q.arrival == 0:
        return 0.0
    if q.rho >= 1:
        raise UnstableQueueError(q.rho)
    c = erlang_c(q.offered_load, q.servers)
    return c / (q.servers * q.service_rate - q.arrival)


def _replica_utilization(instance, models, rates, layout):
    """Per-replica utilization: each deployed model's rate split over its replicas."""
    load = instance.background
    for m, lam in rates.items():
        if lam < 0:
            raise InvalidArgumentError(f"rate for {m!r} must be >= 0 (got {lam})")
        n = layout.get((m, instance.id), 0)
        if n > 0 and lam > 0:
            load += lam / n * models[m].demand
    return load / instance.capacity


def _models_map(model, models):
    if models is None:
        return {model.id: model}
    if model.id not in models:
        return {**models, model.id: model}
    return models


def g_lambda(
    model: ModelProfile,
    instance: InstanceProfile,
    cal: CalibrationParams,
    rates: Mapping[str, float],
    layout: Mapping[PoolKey, int],
    models: Mapping[str, ModelProfile] | None = None,
) -> float:
    """Predicted latency of pool (model, instance) for a fixed replica layout.

    ``rates`` maps model id to the arrival rate at this instance; ``models``
    is needed only when other models share the instance.

    Raises UnstableQueueError when the pool cannot keep up.
    """
    models = _models_map(model, models)
    n = layout.get((model.id, instance.id), 0)
    if n < 1:
        raise InvalidArgumentError(f"pool {(model.id, instance.id)} has no replicas")
    U = _replica_utilization(instance, models, rates, layout)
    processing = infer_latency_util(model, instance, U, cal.gamma)
    q = QueueParams(rates.get(model.id, 0.0), n, service_rate(model, instance))
    return processing + instance.net_rtt + queue_delay(q)


def g_of_n(
    model: ModelProfile,
    instance: InstanceProfile,
    cal: CalibrationParams,
    rates: Mapping[str, float],
    N: int,
    layout: Mapping[PoolKey, int] | None = None,
    models: Mapping[str, ModelProfile] | None = None,
) -> float:
    """Predicted latency of pool (model, instance) as a function of its size N.

    The processing term is held fixed while N varies: utilization is taken
    from ``layout`` (default: one replica per model on this instance).
    Returns ``math.inf`` when the pool would be unstable at N.
    """
    if int(N) != N or N < 1:
        raise InvalidArgumentError(f"replica count must be an integer >= 1 (got {N})")
    models = _models_map(model, models)
    if layout is None:
        layout = {(m, instance.id): 1 for m in rates}
    U = _replica_utilization(instance, models, rates, layout)
    processing = infer_latency_util(model, instance, U, cal.gamma)
    q = QueueParams(rates.get(model.id, 0.0), int(N), service_rate(model, instance))
    if q.arrival > 0 and q.rho >= 1:
        return math.inf
    return processing + instance.net_rtt + queue_delay(q)


def task_latency(
    x: Mapping[Tuple[Hashable, str, str], int],
    tasks: Sequence[Hashable],
    models: Mapping[str, ModelProfile],
    instances: Mapping[str, InstanceProfile],
    cal: CalibrationParams,
    rates: Mapping[str, Mapping[str, float]],
    layout: Mapping[PoolKey, int],
) -> dict:
    """Per-task latency from a binary assignment x[(task, model, instance)].

    ``rates`` maps instance id to that instance's per-model arrival rates.
    """
    chosen = {t: [] for t in tasks}
    for (t, m, i), v in x.items():
        if v not in (0, 1):
            raise InvalidAssignmentError(f"x[{(t, m, i)}] must be 0 or 1 (got {v})")
        if t not in chosen:
            raise InvalidAssignmentError(f"unknown task {t!r}")
        if v:
            chosen[t].append((m, i))
    cache = {}
    out = {}
    for t, pairs in chosen.items():
        if len(pairs) != 1:
            raise InvalidAssignmentError(
                f"task {t!r} assigned {len(pairs)} times; must be exactly once"
            )
        pair = pairs[0]
        if pair not in cache:
            m, i = pair
            cache[pair] = g_lambda(
                models[m], instances[i], cal, rates.get(i, {}), layout, models
            )
        out[t] = cache[pair]
    return out
