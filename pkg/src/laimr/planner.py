"""Offline routing and capacity planning.

Stage A: with a fixed replica layout, assign every task to one (model,
instance) pair so the worst task latency is minimal, subject to accuracy,
the instance compute budget, pool stability and per-task SLOs.

Stage B: choose replica counts and the assignment together, minimizing the
worst task latency plus ``beta`` times total replica cost.

Pool rates come from the assignment: a pair's arrival rate is the sum of
the rates of tasks routed to it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import InvalidArgumentError, UnstableQueueError
from .qmodel import (
    CalibrationParams,
    InstanceProfile,
    ModelProfile,
    PoolKey,
    g_lambda,
    g_of_n,
)

EXACT_LIMIT = 10**6
_EPS = 1e-12

# constraint classes, in the order a search gets past them
ACCURACY, CAPACITY, STABILITY, SLO = "accuracy", "capacity", "stability", "slo"


@dataclass(frozen=True)
class Task:
    id: str
    rate: float
    accuracy_req: float = 0.0
    slo: Optional[float] = None

    def __post_init__(self):
        if not self.rate >= 0:
            raise InvalidArgumentError(f"Task.rate: must be >= 0 (got {self.rate})")
        if not 0 <= self.accuracy_req <= 1:
            raise InvalidArgumentError(f"Task.accuracy_req: must be in [0, 1] (got {self.accuracy_req})")
        if self.slo is not None and not self.slo > 0:
            raise InvalidArgumentError(f"Task.slo: must be > 0 (got {self.slo})")


@dataclass(frozen=True)
class PlanningInstance:
    """Tasks plus the candidate pairs they may be routed to.

    ``layout`` fixes replica counts for Stage A; pairs absent from it (or
    mapped to 0) are not deployed. Stage B searches N in 1..caps[pair],
    where caps default to the instance's replica cap.
    """

    tasks: tuple
    models: Mapping[str, ModelProfile]
    instances: Mapping[str, InstanceProfile]
    cal: CalibrationParams
    pairs: tuple = ()
    layout: Mapping[PoolKey, int] = field(default_factory=dict)
    caps: Mapping[PoolKey, int] = field(default_factory=dict)
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.pairs:
            pairs = tuple(self.layout) or tuple(
                itertools.product(self.models, self.instances)
            )
            object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        problems = []
        for m, i in self.pairs:
            if m not in self.models:
                problems.append(f"PlanningInstance.pairs: unknown model {m!r}")
            if i not in self.instances:
                problems.append(f"PlanningInstance.pairs: unknown instance {i!r}")
        if len({t.id for t in self.tasks}) != len(self.tasks):
            problems.append("PlanningInstance.tasks: task ids must be unique")
        if not self.beta >= 0:
            problems.append(f"PlanningInstance.beta: must be >= 0 (got {self.beta})")
        for p, n in self.caps.items():
            if int(n) != n or n < 1:
                problems.append(f"PlanningInstance.caps: cap for {p} must be an integer >= 1")
        if problems:
            err = InvalidArgumentError("; ".join(problems))
            err.problems = problems
            raise err

    def cap(self, pair: PoolKey) -> int:
        if pair in self.caps:
            return int(self.caps[pair])
        return self.instances[pair[1]].cap_for(pair[0])

    def cost(self, pair: PoolKey) -> float:
        return self.instances[pair[1]].cost_for(pair[0])

    def deployed(self) -> list:
        return [p for p in self.pairs if self.layout.get(p, 0) >= 1]

    def combinations(self, pairs=None) -> int:
        n = len(self.pairs if pairs is None else pairs)
        return n ** len(self.tasks)


@dataclass
class Plan:
    assignment: dict  # task id -> pair
    layout: dict  # pair -> replicas
    objective: float
    feasible: bool
    failed_constraint: Optional[str] = None
    latencies: dict = field(default_factory=dict)
    cost: float = 0.0
    method: str = "exact"

    @property
    def max_latency(self) -> float:
        return max(self.latencies.values()) if self.latencies else 0.0

    def to_dict(self) -> dict:
        def key(p):
            return f"{p[0]}@{p[1]}"

        return {
            "feasible": self.feasible,
            "failed_constraint": self.failed_constraint,
            "method": self.method,
            "objective": self.objective,
            "max_latency": self.max_latency,
            "cost": self.cost,
            "assignment": {t: key(p) for t, p in self.assignment.items()},
            "layout": {key(p): n for p, n in self.layout.items()},
            "latencies": dict(self.latencies),
        }


def _infeasible(reason, layout=None, method="exact"):
    return Plan({}, dict(layout or {}), math.inf, False, reason, method=method)


# --- shared evaluation ---------------------------------------------------------


def _instance_rates(inst, tasks, pairs_of):
    """instance id -> {model id -> aggregate rate} for a (partial) assignment."""
    rates = {}
    for t, p in zip(tasks, pairs_of):
        m, i = p
        r = rates.setdefault(i, {})
        r[m] = r.get(m, 0.0) + t.rate
    return rates


def _capacity_ok(inst, pairs_of) -> bool:
    used = {}
    for m, i in pairs_of:
        used[i] = used.get(i, 0.0) + inst.models[m].demand
    return all(u <= inst.instances[i].capacity + _EPS for i, u in used.items())


def _pair_latency_a(inst, pair, rates_i):
    """Stage-A pair latency; inf when the pool is unstable."""
    m, i = pair
    try:
        return g_lambda(inst.models[m], inst.instances[i], inst.cal, rates_i, inst.layout, inst.models)
    except UnstableQueueError:
        return math.inf


def _accuracy_options(inst, pairs):
    return [
        [j for j, p in enumerate(pairs) if inst.models[p[0]].accuracy >= t.accuracy_req]
        for t in inst.tasks
    ]


def evaluate_stage_a(inst: PlanningInstance, assignment: Mapping[str, PoolKey]):
    """(per-task latency, violated constraint or None) for a full assignment."""
    tasks = inst.tasks
    pairs_of = [tuple(assignment[t.id]) for t in tasks]
    for t, p in zip(tasks, pairs_of):
        if inst.layout.get(p, 0) < 1:
            return {}, "layout"
        if inst.models[p[0]].accuracy < t.accuracy_req:
            return {}, ACCURACY
    if not _capacity_ok(inst, pairs_of):
        return {}, CAPACITY
    rates = _instance_rates(inst, tasks, pairs_of)
    lat = {}
    for t, p in zip(tasks, pairs_of):
        lat[t.id] = _pair_latency_a(inst, p, rates[p[1]])
    if any(math.isinf(v) for v in lat.values()):
        return lat, STABILITY
    if any(t.slo is not None and lat[t.id] > t.slo for t in tasks):
        return lat, SLO
    return lat, None


# --- Stage A -------------------------------------------------------------------


def _stage_a_search(inst, pairs, options, enforce):
    """Branch and bound over assignments in lexicographic order.

    ``enforce`` is the set of constraint classes checked. Rates only grow as
    tasks are added and latency is non-decreasing in rates, so the worst
    latency of already-placed tasks bounds every completion from below.
    """
    tasks = inst.tasks
    n = len(tasks)
    best = [math.inf, None]
    chosen = []
    demand = {}

    def partial_latencies():
        placed = [pairs[j] for j in chosen]
        rates = _instance_rates(inst, tasks[: len(placed)], placed)
        cache = {}
        out = []
        for t, p in zip(tasks, placed):
            if p not in cache:
                cache[p] = _pair_latency_a(inst, p, rates[p[1]])
            out.append(cache[p])
        return out

    def ok(lats):
        if STABILITY in enforce and any(math.isinf(v) for v in lats):
            return False
        if SLO in enforce:
            for t, v in zip(tasks, lats):
                if t.slo is not None and v > t.slo:
                    return False
        return True

    def rec(k):
        if k == n:
            lats = partial_latencies()
            worst = max(lats) if lats else 0.0
            if not ok(lats):
                return
            if best[1] is None or worst < best[0] - _EPS * max(1.0, abs(best[0])):
                best[0], best[1] = worst, list(chosen)
            return
        for j in options[k]:
            m, i = pairs[j]
            d = inst.models[m].demand
            if CAPACITY in enforce:
                if demand.get(i, 0.0) + d > inst.instances[i].capacity + _EPS:
                    continue
            demand[i] = demand.get(i, 0.0) + d
            chosen.append(j)
            prune = False
            if STABILITY in enforce or SLO in enforce or best[1] is not None:
                lats = partial_latencies()
                if not ok(lats):
                    prune = True
                elif best[1] is not None and max(lats) >= best[0] - _EPS * max(1.0, abs(best[0])):
                    prune = True
            if not prune:
                rec(k + 1)
            chosen.pop()
            demand[i] -= d

    rec(0)
    return best


def solve_stage_a(inst: PlanningInstance, greedy: Optional[bool] = None) -> Plan:
    """Min-max latency routing for the fixed layout.

    Exact unless ``greedy`` is set; by default falls back to the greedy
    heuristic when the assignment space exceeds ``EXACT_LIMIT``.
    """
    pairs = inst.deployed()
    if greedy is None:
        greedy = inst.combinations(pairs) > EXACT_LIMIT
    if greedy:
        return greedy_route(inst)
    layout = {p: int(inst.layout[p]) for p in pairs}
    if not inst.tasks:
        return Plan({}, layout, 0.0, True)
    options = _accuracy_options(inst, pairs)
    if any(not o for o in options):
        return _infeasible(ACCURACY, layout)
    full = {CAPACITY, STABILITY, SLO}
    best = _stage_a_search(inst, pairs, options, full)
    if best[1] is None:
        for reason, enforce in ((CAPACITY, {CAPACITY}), (STABILITY, {CAPACITY, STABILITY})):
            if _stage_a_search(inst, pairs, options, enforce)[1] is None:
                return _infeasible(reason, layout)
        return _infeasible(SLO, layout)
    assignment = {t.id: pairs[j] for t, j in zip(inst.tasks, best[1])}
    lat, _ = evaluate_stage_a(inst, assignment)
    return Plan(assignment, layout, best[0], True, latencies=lat)


def greedy_route(inst: PlanningInstance) -> Plan:
    """Place tasks by descending rate, each on the pair that raises the
    current worst latency the least. Ties go to the earlier pair."""
    pairs = inst.deployed()
    layout = {p: int(inst.layout[p]) for p in pairs}
    order = sorted(range(len(inst.tasks)), key=lambda k: (-inst.tasks[k].rate, k))
    placed_tasks, placed_pairs = [], []
    options = _accuracy_options(inst, pairs)
    for k in order:
        t = inst.tasks[k]
        if not options[k]:
            return _infeasible(ACCURACY, layout, "greedy")
        best = None
        reason = CAPACITY
        for j in options[k]:
            trial = placed_pairs + [pairs[j]]
            if not _capacity_ok(inst, trial):
                continue
            tt = placed_tasks + [t]
            rates = _instance_rates(inst, tt, trial)
            lats = [_pair_latency_a(inst, p, rates[p[1]]) for p in trial]
            if any(math.isinf(v) for v in lats):
                reason = _later(reason, STABILITY)
                continue
            if any(x.slo is not None and v > x.slo for x, v in zip(tt, lats)):
                reason = _later(reason, SLO)
                continue
            worst = max(lats)
            if best is None or worst < best[0]:
                best = (worst, j)
        if best is None:
            return _infeasible(reason, layout, "greedy")
        placed_tasks.append(t)
        placed_pairs.append(pairs[best[1]])
    assignment = {t.id: p for t, p in zip(placed_tasks, placed_pairs)}
    assignment = {t.id: assignment[t.id] for t in inst.tasks}
    lat, _ = evaluate_stage_a(inst, assignment)
    worst = max(lat.values()) if lat else 0.0
    return Plan(assignment, layout, worst, True, latencies=lat, method="greedy")


_ORDER = {ACCURACY: 0, CAPACITY: 1, STABILITY: 2, SLO: 3}


def _later(a, b):
    return a if _ORDER[a] >= _ORDER[b] else b


# --- Stage B -------------------------------------------------------------------


def _pair_latency_b(inst, pair, rates_i, n):
    m, i = pair
    return g_of_n(inst.models[m], inst.instances[i], inst.cal, rates_i, n, models=inst.models)


def _curves(inst, pairs, tasks, pairs_of):
    """Latency of each used pair for N = 1..cap under this assignment."""
    rates = _instance_rates(inst, tasks, pairs_of)
    curves = {}
    for p in set(pairs_of):
        curves[p] = [_pair_latency_b(inst, p, rates[p[1]], n) for n in range(1, inst.cap(p) + 1)]
    return curves


def _size_pools(inst, pairs, tasks, pairs_of):
    """Cheapest layout for a fixed assignment; exact.

    An optimal layout has its worst latency equal to some curve value T, and
    for a given T the cheapest layout takes, per pair, the fewest replicas
    whose latency is <= T. Scanning every candidate T is therefore exact.
    Returns (objective, layout, reason) with reason set when infeasible.
    """
    curves = _curves(inst, pairs, tasks, pairs_of)
    slo = {}
    for t, p in zip(tasks, pairs_of):
        if t.slo is not None:
            slo[p] = min(slo.get(p, math.inf), t.slo)
    lo = {}
    for p, c in curves.items():
        stable = [n for n, v in enumerate(c, 1) if math.isfinite(v)]
        if not stable:
            return math.inf, None, STABILITY
        ok = [n for n in stable if c[n - 1] <= slo.get(p, math.inf)]
        if not ok:
            return math.inf, None, SLO
        lo[p] = ok[0]
    base_cost = sum(inst.cost(p) for p in pairs if p not in curves)
    thresholds = sorted({v for p, c in curves.items() for v in c[lo[p] - 1 :]})
    best = None
    for T in thresholds:
        layout, worst, cost = {}, 0.0, base_cost
        for p, c in curves.items():
            n = next((n for n in range(lo[p], len(c) + 1) if c[n - 1] <= T), None)
            if n is None:
                break
            layout[p] = n
            worst = max(worst, c[n - 1])
            cost += inst.cost(p) * n
        else:
            obj = worst + inst.beta * cost
            if best is None or obj < best[0] - _EPS * max(1.0, abs(best[0])):
                best = (obj, layout, worst, cost)
    if best is None:  # no used pairs
        return inst.beta * base_cost, {}, None
    obj, used, worst, cost = best
    full = {p: used.get(p, 1) for p in pairs}
    return obj, full, None


def evaluate_stage_b(inst: PlanningInstance, assignment, layout):
    """(per-task latency, objective, violated constraint or None)."""
    tasks = inst.tasks
    pairs_of = [tuple(assignment[t.id]) for t in tasks]
    pairs = list(inst.pairs)
    for p in pairs:
        n = layout.get(p, 0)
        if int(n) != n or n < 1 or n > inst.cap(p):
            return {}, math.inf, "integrality"
    for t, p in zip(tasks, pairs_of):
        if inst.models[p[0]].accuracy < t.accuracy_req:
            return {}, math.inf, ACCURACY
    if not _capacity_ok(inst, pairs_of):
        return {}, math.inf, CAPACITY
    rates = _instance_rates(inst, tasks, pairs_of)
    lat = {t.id: _pair_latency_b(inst, p, rates[p[1]], layout[p]) for t, p in zip(tasks, pairs_of)}
    cost = sum(inst.cost(p) * layout[p] for p in pairs)
    worst = max(lat.values()) if lat else 0.0
    if math.isinf(worst):
        return lat, math.inf, STABILITY
    if any(t.slo is not None and lat[t.id] > t.slo for t in tasks):
        return lat, math.inf, SLO
    return lat, worst + inst.beta * cost, None


def solve_stage_b(inst: PlanningInstance) -> Plan:
    """Joint replica sizing and routing by enumeration over assignments."""
    pairs = list(inst.pairs)
    if not inst.tasks:
        layout = {p: 1 for p in pairs}
        cost = sum(inst.cost(p) for p in pairs)
        return Plan({}, layout, inst.beta * cost, True, cost=cost)
    options = _accuracy_options(inst, pairs)
    if any(not o for o in options):
        return _infeasible(ACCURACY)
    if math.prod(len(o) for o in options) > EXACT_LIMIT:
        raise InvalidArgumentError(
            f"assignment space exceeds {EXACT_LIMIT}; reduce tasks or pairs"
        )
    best = None
    reason = CAPACITY
    for combo in itertools.product(*options):
        pairs_of = [pairs[j] for j in combo]
        if not _capacity_ok(inst, pairs_of):
            continue
        obj, layout, why = _size_pools(inst, pairs, inst.tasks, pairs_of)
        if why is not None:
            reason = _later(reason, why)
            continue
        if best is None or obj < best[0] - _EPS * max(1.0, abs(best[0])):
            best = (obj, combo, layout)
    if best is None:
        return _infeasible(reason)
    obj, combo, layout = best
    assignment = {t.id: pairs[j] for t, j in zip(inst.tasks, combo)}
    lat, _, _ = evaluate_stage_b(inst, assignment, layout)
    cost = sum(inst.cost(p) * layout[p] for p in pairs)
    return Plan(assignment, layout, obj, True, latencies=lat, cost=cost)


def check_plan(inst: PlanningInstance, plan: Plan, stage: str) -> list:
    """Re-validate a feasible plan's claims; returns a list of violations."""
    if not plan.feasible:
        return []
    out = []
    if set(plan.assignment) != {t.id for t in inst.tasks}:
        out.append("assignment: every task must be assigned exactly once")
        return out
    if stage == "a":
        lat, why = evaluate_stage_a(inst, plan.assignment)
        obj = max(lat.values()) if lat else 0.0
    else:
        lat, obj, why = evaluate_stage_b(inst, plan.assignment, plan.layout)
    if why is not None:
        out.append(f"constraint violated: {why}")
    elif not math.isclose(obj, plan.objective, rel_tol=1e-9, abs_tol=1e-12):
        out.append(f"objective mismatch: {plan.objective} vs recomputed {obj}")
    return out
