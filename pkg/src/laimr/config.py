"""JSON scenario configuration.

A file fully determines a run: profiles, pools, controller and autoscaler
settings, workload, seeds, the rate ramp and (optionally) a planning
problem. Loading validates everything and reports every problem found.
Shipped configs can be referenced by bare name, e.g. ``edge_cloud_tail``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from .autoscaler import AutoscalerPolicy
from .controller import ControllerConfig
from .errors import ConfigError, InvalidArgumentError
from .planner import PlanningInstance, Task
from .qmodel import CalibrationParams, InstanceProfile, ModelProfile
from .sim import ControllerKind, PoolSpec, Scenario
from .workload import Source, WorkloadKind, WorkloadSpec

DEFAULT_RAMP = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)


@dataclass
class ScenarioConfig:
    scenario: Scenario
    seeds: tuple = (0,)
    ramp: tuple = DEFAULT_RAMP
    output: Optional[str] = None
    planning: Optional[PlanningInstance] = None
    measurements: Optional[str] = None
    source: Optional[str] = None

    @property
    def name(self) -> str:
        return self.scenario.name


def shipped_configs() -> list:
    root = resources.files("laimr") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_path(ref) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    shipped = resources.files("laimr") / "configs" / f"{p.stem if p.suffix == '.json' else p.name}.json"
    if Path(str(shipped)).exists():
        return Path(str(shipped))
    raise ConfigError([f"no such config file or shipped config: {ref}"], str(ref))


class _Collector:
    def __init__(self):
        self.diagnostics = []

    def add(self, msg):
        self.diagnostics.append(msg)

    def build(self, cls, where, data, renames=None, drop=()):
        """Construct ``cls`` from a mapping, recording problems instead of raising."""
        if not isinstance(data, dict):
            self.add(f"{where}: expected an object")
            return None
        names = {f.name for f in fields(cls)}
        renames = renames or {}
        kwargs = {}
        for k, v in data.items():
            if k in drop:
                continue
            target = renames.get(k, k)
            if target not in names:
                self.add(f"{where}: unknown field {k!r}")
                continue
            kwargs[target] = v
        required = [
            f.name
            for f in fields(cls)
            if f.name not in kwargs
            and f.default is dataclasses.MISSING
            and f.default_factory is dataclasses.MISSING
        ]
        for r in required:
            self.add(f"{where}: missing required field {r!r} ({cls.__name__}.{r})")
        if required:
            return None
        try:
            return cls(**kwargs)
        except InvalidArgumentError as e:
            for p in getattr(e, "problems", [str(e)]):
                self.add(f"{where}: {p}")
        except (TypeError, ValueError) as e:
            self.add(f"{where}: {cls.__name__}: {e}")
        return None


def _list(c, data, key, where="config"):
    v = data.get(key, [])
    if not isinstance(v, list):
        c.add(f"{where}.{key}: expected a list")
        return []
    return v


def _pair(c, where, v):
    if isinstance(v, str) and "@" in v:
        m, i = v.split("@", 1)
        return (m, i)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return (str(v[0]), str(v[1]))
    if isinstance(v, dict) and "model" in v and "instance" in v:
        return (v["model"], v["instance"])
    c.add(f"{where}: expected 'model@instance' or [model, instance] (got {v!r})")
    return None


_TOP = {
    "name", "models", "instances", "calibration", "pools", "controller",
    "autoscaler", "workload", "service_distribution", "load_dependent_service",
    "seeds", "ramp", "output", "planning", "measurements", "description",
}


def parse_config(data, source: str = "<config>", base: Optional[Path] = None) -> ScenarioConfig:
    """Validate an already-parsed config mapping."""
    c = _Collector()
    base = base or Path(".")
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected an object"], source)
    for k in data:
        if k not in _TOP:
            c.add(f"config: unknown field {k!r}")

    models = {}
    for n, m in enumerate(_list(c, data, "models")):
        obj = c.build(ModelProfile, f"models[{n}]", m)
        if obj is not None:
            if obj.id in models:
                c.add(f"models[{n}]: duplicate model id {obj.id!r}")
            models[obj.id] = obj
    if not data.get("models"):
        c.add("config.models: at least one model is required")

    instances = {}
    for n, i in enumerate(_list(c, data, "instances")):
        obj = c.build(InstanceProfile, f"instances[{n}]", i)
        if obj is not None:
            if obj.id in instances:
                c.add(f"instances[{n}]: duplicate instance id {obj.id!r}")
            instances[obj.id] = obj
    if not data.get("instances"):
        c.add("config.instances: at least one instance is required")

    cal = c.build(CalibrationParams, "calibration", data.get("calibration", {}))

    pools = []
    for n, p in enumerate(_list(c, data, "pools")):
        obj = c.build(PoolSpec, f"pools[{n}]", p)
        if obj is None:
            continue
        if not isinstance(obj.initial, int) or obj.initial < 1:
            c.add(f"pools[{n}]: PoolSpec.initial must be an integer >= 1 (got {obj.initial})")
        if obj.cap is not None and (not isinstance(obj.cap, int) or obj.cap < 1):
            c.add(f"pools[{n}]: PoolSpec.cap must be an integer >= 1 (got {obj.cap})")
        pools.append(obj)

    ctl = dict(data.get("controller", {}))
    kind = ctl.pop("kind", "laimr")
    try:
        kind = ControllerKind(kind)
    except ValueError:
        c.add(f"controller.kind: must be one of laimr, reactive, none (got {kind!r})")
        kind = ControllerKind.LAIMR
    controller = c.build(ControllerConfig, "controller", ctl)
    auto = dict(data.get("autoscaler", {}))
    if "kind" in auto:
        c.add("autoscaler.kind: set by controller.kind; remove this field")
        auto.pop("kind")
    autoscaler = c.build(AutoscalerPolicy, "autoscaler", auto)

    workload = None
    wl = data.get("workload")
    if not isinstance(wl, dict):
        c.add("config.workload: an object is required")
    else:
        wl = dict(wl)
        srcs = []
        for n, s in enumerate(wl.pop("sources", [])):
            obj = c.build(Source, f"workload.sources[{n}]", s)
            if obj is not None:
                srcs.append(obj)
        if wl.get("trace") is not None:
            wl["trace"] = str(base / wl["trace"])
        if wl.get("kind") == WorkloadKind.TRACE.value and isinstance(wl.get("arrivals"), list):
            wl["arrivals"] = tuple(tuple(a) for a in wl["arrivals"])
        wl["sources"] = tuple(srcs)
        workload = c.build(WorkloadSpec, "workload", wl)

    dist = data.get("service_distribution", "exponential")
    lds = data.get("load_dependent_service", True)
    if not isinstance(lds, bool):
        c.add("config.load_dependent_service: expected true or false")

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        c.add("config.seeds: expected a non-empty list of non-negative integers")
        seeds = [0]
    ramp = data.get("ramp", list(DEFAULT_RAMP))
    if not isinstance(ramp, list) or not ramp or not all(
        isinstance(r, (int, float)) and not isinstance(r, bool) and r >= 0 for r in ramp
    ):
        c.add("config.ramp: expected a non-empty list of rates >= 0")
        ramp = list(DEFAULT_RAMP)

    scenario = None
    if None not in (cal, controller, autoscaler, workload):
        scenario = Scenario(
            name=str(data.get("name", Path(source).stem)),
            models=models,
            instances=instances,
            pools=tuple(pools),
            cal=cal,
            workload=workload,
            controller_kind=kind,
            controller=controller,
            autoscaler=autoscaler,
            service_distribution=dist,
            load_dependent_service=bool(lds),
        ).with_controller(kind)
        for p in scenario.problems():
            c.add(p)
    else:
        # other sections failed; still surface dangling pool references
        for n, p in enumerate(pools):
            if p.model not in models:
                c.add(f"pools[{n}]: unknown model {p.model!r}")
            if p.instance not in instances:
                c.add(f"pools[{n}]: unknown instance {p.instance!r}")

    planning = None
    if "planning" in data:
        planning = _parse_planning(c, data["planning"], models, instances, cal)

    measurements = data.get("measurements")
    if measurements is not None:
        measurements = str(base / measurements)

    if c.diagnostics:
        raise ConfigError(c.diagnostics, source)
    return ScenarioConfig(
        scenario=scenario,
        seeds=tuple(seeds),
        ramp=tuple(float(r) for r in ramp),
        output=data.get("output"),
        planning=planning,
        measurements=measurements,
        source=source,
    )


def _parse_planning(c, plan, models, instances, cal):
    if not isinstance(plan, dict):
        c.add("planning: expected an object")
        return None
    for k in plan:
        if k not in ("tasks", "pairs", "layout", "caps", "beta"):
            c.add(f"planning: unknown field {k!r}")
    tasks = []
    for n, t in enumerate(plan.get("tasks", [])):
        obj = c.build(Task, f"planning.tasks[{n}]", t)
        if obj is not None:
            tasks.append(obj)
    pairs = []
    for n, p in enumerate(plan.get("pairs", [])):
        pr = _pair(c, f"planning.pairs[{n}]", p)
        if pr is not None:
            pairs.append(pr)

    def counts(key):
        out = {}
        raw = plan.get(key, {})
        if not isinstance(raw, dict):
            c.add(f"planning.{key}: expected an object mapping 'model@instance' to an integer")
            return out
        for k, v in raw.items():
            pr = _pair(c, f"planning.{key}", k)
            if pr is None:
                continue
            if not isinstance(v, int) or v < 0:
                c.add(f"planning.{key}[{k}]: expected an integer >= 0 (got {v!r})")
                continue
            out[pr] = v
        return out

    layout, caps = counts("layout"), counts("caps")
    if cal is None:
        return None
    try:
        return PlanningInstance(
            tasks=tuple(tasks),
            models=models,
            instances=instances,
            cal=cal,
            pairs=tuple(pairs),
            layout=layout,
            caps=caps,
            beta=float(plan.get("beta", 0.0)),
        )
    except InvalidArgumentError as e:
        for p in getattr(e, "problems", [str(e)]):
            c.add(f"planning: {p}")
        return None


def load_config(path) -> ScenarioConfig:
    """Read and validate a config; raises ConfigError listing every problem."""
    p = resolve_path(path)
    text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"line {e.lineno}, column {e.colno}: {e.msg}"], str(p)) from None
    return parse_config(data, source=str(p), base=p.parent)
