"""Small builders shared by the test modules."""

from laimr.autoscaler import AutoscalerPolicy
from laimr.controller import ControllerConfig
from laimr.qmodel import CalibrationParams, InstanceProfile, ModelProfile
from laimr.sim import PoolSpec, Scenario
from laimr.workload import Source, WorkloadSpec


def mmc_scenario(N, lam, mu=1.0, duration=100.0, net=0.0, name="mmc"):
    """A single pool that is a plain M/M/N station."""
    model = ModelProfile("m", 1.0 / mu, 1.0, 1.0)
    inst = InstanceProfile("n", "edge", capacity=1.0, net_rtt=net, replica_cap=max(N, 1))
    wl = WorkloadSpec("poisson", rate=lam, duration=duration, sources=(Source("m"),))
    return Scenario(
        name, {"m": model}, {"n": inst}, (PoolSpec("m", "n", N),),
        CalibrationParams(1.0, 0.0, 1.0), wl, controller_kind="none",
        load_dependent_service=False,
    )


def edge_cloud_scenario(rate=3.0, duration=60.0, kind="laimr", edge_cap=4, edge_init=1,
                        cloud_n=2, util_floor=0.3, reconcile=5.0, x=3.0,
                        workload="bounded_pareto", dist="exponential"):
    models = {"y": ModelProfile("y", 0.8, 1.0, 0.641)}
    inst = {
        "edge": InstanceProfile("edge", "edge", 1.0, 3.0, 0.0, 1.0, 1.0, edge_cap),
        "cloud": InstanceProfile("cloud", "cloud", 1.0, 3.0, 0.0, 1.036, 1.5, cloud_n),
    }
    wl = WorkloadSpec(workload, rate=rate, duration=duration,
                      sources=(Source("y", 0.5),), shape=1.2, lower=1, upper=20)
    return Scenario(
        "edge_cloud", models, inst,
        (PoolSpec("y", "edge", edge_init), PoolSpec("y", "cloud", cloud_n)),
        CalibrationParams(0.73, 1.29, 0.9), wl, controller_kind=kind,
        controller=ControllerConfig(slo_multiplier=x, util_floor=util_floor),
        autoscaler=AutoscalerPolicy(reconcile_period=reconcile, reactive_threshold=x * 0.8),
        service_distribution=dist,
    ).with_controller(kind)


# --- randomized router cases ------------------------------------------------------

import math  # noqa: E402

from laimr.controller import ClusterState, PoolState, Request, Router  # noqa: E402


def random_router_case(rng):
    """A random cluster, arrival history and request, in both package and
    oracle form. Rates and replica counts are drawn so that every branch of
    the decision procedure is reachable."""
    n_models = int(rng.integers(1, 3))
    n_inst = int(rng.integers(1, 4))
    mids = ["m0", "m1"][:n_models]
    iids = [f"i{k}" for k in range(n_inst)]
    models = {}
    for m in mids:
        models[m] = dict(L=float(rng.uniform(0.05, 1.0)), R=float(rng.uniform(0.1, 1.5)),
                         acc=float(rng.choice([0.25, 0.5, 0.641, 0.9])))
    instances = {}
    for i in iids:
        instances[i] = dict(
            tier=str(rng.choice(["edge", "cloud"])), Rmax=float(rng.uniform(1.0, 4.0)),
            B=float(rng.choice([0.0, rng.uniform(0, 1.0)])), D=float(rng.choice([0.0, 0.036, 1.0, 1.036])),
            S={m: float(rng.choice([1.0, 2.0, rng.uniform(0.5, 3.0)])) for m in mids},
        )
    pool_keys = [(m, i) for m in mids for i in iids if rng.random() < 0.7]
    if not pool_keys:
        pool_keys = [(mids[0], iids[0])]
    rng.shuffle(pool_keys)
    pools = []
    for m, i in pool_keys:
        cap = int(rng.integers(1, 6))
        ready = int(rng.integers(0, cap + 1)) if rng.random() < 0.15 else int(rng.integers(1, cap + 1))
        current = min(cap, ready + int(rng.integers(0, 2)))
        pools.append(dict(model=m, instance=i, ready=ready, current=max(current, ready), cap=cap,
                          cost=float(rng.choice([1.0, 1.5, 2.0]))))
    now = float(rng.uniform(2.0, 10.0))
    history = {}
    for m in mids:
        k = int(rng.integers(0, 12))
        history[m] = sorted(float(now - rng.uniform(0, 1.6)) for _ in range(k))
    mreq = str(rng.choice(mids))
    inst_req = str(rng.choice(iids)) if rng.random() < 0.15 else None
    slo = float(rng.uniform(0.2, 4.0)) if rng.random() < 0.5 else None
    req = dict(model=mreq, t=now, acc=float(rng.choice([0.0, 0.3, 0.5, 0.7])), slo=slo, instance=inst_req)
    cfg = dict(gamma=float(rng.uniform(0.3, 2.0)), x=float(rng.uniform(1.1, 5.0)),
               ewma_w=float(rng.uniform(0, 1)), rho_low=float(rng.uniform(0.05, 0.95)))
    accum_old = float(rng.uniform(0, 15))
    return models, instances, pools, history, req, cfg, accum_old


def package_case(models, instances, pools, history, req, cfg, accum_old):
    """Build package objects mirroring an oracle case; returns (router, state, request)."""
    from laimr.controller import ControllerConfig

    mp = {m: ModelProfile(m, v["L"], v["R"], v["acc"]) for m, v in models.items()}
    ip = {
        i: InstanceProfile(i, v["tier"], speedup=dict(v["S"]), capacity=v["Rmax"],
                           background=v["B"], net_rtt=v["D"], replica_cost=1.0, replica_cap=8)
        for i, v in instances.items()
    }
    ps = {(p["model"], p["instance"]): PoolState(p["ready"], p["current"], p["cap"], p["cost"]) for p in pools}
    state = ClusterState(mp, ip, CalibrationParams(0.5, 1.0, cfg["gamma"]), ps)
    router = Router(ControllerConfig(slo_multiplier=cfg["x"], ewma_weight=cfg["ewma_w"],
                                     util_floor=cfg["rho_low"]))
    for m, times in history.items():
        w = router.window(m)
        for t in times:
            w.record(t)
    router.ewma_for(req["model"]).value = accum_old
    r = Request(0, req["model"], req["t"], req["acc"], req["slo"], req["instance"])
    return router, state, r


def random_planning_case(rng, n_tasks, n_models, n_inst, max_n=3, beta=None):
    """Random planning problem in oracle form plus the matching PlanningInstance."""
    from laimr.planner import PlanningInstance, Task

    mids = [f"m{k}" for k in range(n_models)]
    iids = [f"i{k}" for k in range(n_inst)]
    models = {m: dict(L=float(rng.uniform(0.1, 0.9)), R=float(rng.choice([0.1, 0.5, 1.0])),
                      acc=float(rng.choice([0.25, 0.641, 0.9]))) for m in mids}
    instances = {i: dict(tier="edge", Rmax=float(rng.choice([1.0, 2.0, 3.0])),
                         B=float(rng.choice([0.0, 0.3])), D=float(rng.choice([0.0, 0.036, 1.0])),
                         S={m: float(rng.choice([1.0, 2.0])) for m in mids}) for i in iids}
    pairs = [(m, i) for m in mids for i in iids]
    tasks = [dict(id=f"t{k}", rate=float(rng.uniform(0.2, 2.5)),
                  acc=float(rng.choice([0.0, 0.5, 0.7])),
                  slo=float(rng.uniform(1.0, 6.0)) if rng.random() < 0.5 else None)
             for k in range(n_tasks)]
    layout = {p: int(rng.integers(0 if rng.random() < 0.2 else 1, max_n + 1)) for p in pairs}
    caps = {p: int(rng.integers(1, max_n + 1)) for p in pairs}
    costs = {p: float(rng.choice([1.0, 1.5, 2.0])) for p in pairs}
    beta = float(rng.choice([0.0, 0.1, 2.5])) if beta is None else beta
    gamma = float(rng.uniform(0.5, 1.5))

    mp = {m: ModelProfile(m, v["L"], v["R"], v["acc"]) for m, v in models.items()}
    ip = {i: InstanceProfile(i, "edge", speedup=dict(v["S"]), capacity=v["Rmax"], background=v["B"],
                             net_rtt=v["D"], replica_cost={m: costs[(m, i)] for m in mids}, replica_cap=8)
          for i, v in instances.items()}
    inst = PlanningInstance(
        tasks=tuple(Task(t["id"], t["rate"], t["acc"], t["slo"]) for t in tasks),
        models=mp, instances=ip, cal=CalibrationParams(0.5, 1.0, gamma), pairs=tuple(pairs),
        layout=layout, caps=caps, beta=beta,
    )
    oracle = dict(tasks=tasks, pairs=pairs, layout=layout, caps=caps, costs=costs, beta=beta,
                  models=models, instances=instances, gamma=gamma)
    return inst, oracle
