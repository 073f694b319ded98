"""Experiment orchestration: single runs, rate ramps, controller A/B,
calibration from measurements and offline planning."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .config import ScenarioConfig
from .errors import ConfigError, LaimrError
from .planner import solve_stage_a, solve_stage_b
from .qmodel import calibrate, infer_latency_affine
from .sim import ControllerKind, Simulation

HEADER = (
    "scenario", "controller", "lambda", "seed", "mean", "p50", "p95", "p99",
    "iqr", "max", "offload_frac", "mean_replicas",
)
MEASUREMENT_HEADER = ("lambda_per_replica", "latency_seconds")


class Mode(str, enum.Enum):
    SINGLE = "single"
    RAMP = "ramp"
    AB_COMPARE = "ab_compare"
    CALIBRATE = "calibrate"
    PLAN = "plan"


@dataclass(frozen=True)
class Cell:
    scenario: str
    controller: ControllerKind
    step: int
    rate: float
    seed: int

    @property
    def sort_key(self):
        order = list(ControllerKind).index(self.controller)
        return (self.scenario, self.step, self.seed, order)

    def label(self) -> str:
        return f"{self.scenario} controller={self.controller.value} lambda={self.rate:g} seed={self.seed}"


@dataclass
class ReportRow:
    scenario: str
    controller: str
    rate: float
    seed: int
    mean: float
    p50: float
    p95: float
    p99: float
    iqr: float
    max: float
    offload_frac: float
    mean_replicas: float

    def values(self) -> list:
        return [
            self.scenario, self.controller, _num(self.rate), str(self.seed),
            *(_num(v) for v in (
                self.mean, self.p50, self.p95, self.p99, self.iqr, self.max,
                self.offload_frac, self.mean_replicas,
            )),
        ]


def _num(v: float) -> str:
    return "nan" if v is None or math.isnan(v) else f"{v:.6f}"


@dataclass
class SuiteResult:
    mode: Mode
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    report: Optional[dict] = None
    event_logs: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def csv_text(self) -> str:
        return format_csv(self.rows)


def format_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow(r.values())
    return buf.getvalue()


def read_csv_rows(text: str) -> list:
    """Parse a metrics CSV back into dicts (numbers as floats)."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = dict(rec)
        for k in HEADER[2:]:
            row[k] = float(row[k]) if k != "seed" else int(row[k])
        out.append(row)
    return out


def run_cell(cfg: ScenarioConfig, cell: Cell, event_log: bool = False):
    sc = cfg.scenario.with_controller(cell.controller).with_rate(cell.rate)
    sim = Simulation(sc, cell.seed, event_log=event_log)
    m = sim.run()
    row = ReportRow(
        cell.scenario, cell.controller.value, cell.rate, cell.seed,
        m.mean, m.p50, m.p95, m.p99, m.iqr, m.max, m.offload_frac, m.mean_replicas,
    )
    return row, (sim.log if event_log else None)


def _run_cell_safe(args):
    cfg, cell, event_log = args
    try:
        row, log = run_cell(cfg, cell, event_log)
        return cell, row, log, None
    except LaimrError as e:
        return cell, None, None, f"{cell.label()}: {e}"


def cells_for(cfg: ScenarioConfig, mode: Mode, seeds=None) -> list:
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    name = cfg.scenario.name
    own = cfg.scenario.controller_kind
    if mode is Mode.SINGLE:
        return [Cell(name, own, 0, cfg.scenario.workload.rate, s) for s in seeds]
    if mode is Mode.RAMP:
        return [Cell(name, own, k, r, s) for k, r in enumerate(cfg.ramp) for s in seeds]
    if mode is Mode.AB_COMPARE:
        kinds = (ControllerKind.LAIMR, ControllerKind.REACTIVE)
        return [
            Cell(name, kind, k, r, s)
            for k, r in enumerate(cfg.ramp)
            for s in seeds
            for kind in kinds
        ]
    raise ValueError(f"mode {mode.value} does not run simulations")


def read_measurements(path) -> list:
    """Read ``lambda_per_replica,latency_seconds`` rows."""
    text = Path(path).read_text()
    diagnostics, samples = [], []
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != MEASUREMENT_HEADER:
        raise ConfigError([f"line 1: expected header {','.join(MEASUREMENT_HEADER)}"], str(path))
    for lineno, rec in enumerate(reader, 2):
        if not rec or not "".join(rec).strip():
            continue
        if len(rec) != 2:
            diagnostics.append(f"line {lineno}: expected 2 fields, got {len(rec)}")
            continue
        try:
            samples.append((float(rec[0]), float(rec[1])))
        except ValueError:
            diagnostics.append(f"line {lineno}: non-numeric value")
    if diagnostics:
        raise ConfigError(diagnostics, str(path))
    return samples


def calibration_report(samples) -> dict:
    cal = calibrate(samples)
    fits = []
    for lam, y in samples:
        pred = infer_latency_affine(cal, lam)
        fits.append({
            "lambda_per_replica": lam,
            "latency_seconds": y,
            "predicted_seconds": pred,
            "rel_error": (pred - y) / y if y else math.nan,
        })
    return {"alpha": cal.alpha, "beta": cal.beta, "gamma": cal.gamma, "fit": fits}


def run_suite(
    cfg: ScenarioConfig,
    mode,
    seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
    event_log: bool = False,
    measurements=None,
) -> SuiteResult:
    """Run one experiment mode. Rows come back ordered by (scenario, step, seed)."""
    mode = Mode(mode)
    res = SuiteResult(mode)
    if mode is Mode.CALIBRATE:
        path = measurements or cfg.measurements
        if path is None:
            res.errors.append(f"{cfg.scenario.name}: no measurement CSV given")
            return res
        try:
            res.report = calibration_report(read_measurements(path))
        except LaimrError as e:
            res.errors.append(f"{cfg.scenario.name}: {e}")
        return res
    if mode is Mode.PLAN:
        if cfg.planning is None:
            res.errors.append(f"{cfg.scenario.name}: config has no planning section")
            return res
        try:
            res.report = {
                "scenario": cfg.scenario.name,
                "stage_a": solve_stage_a(cfg.planning).to_dict(),
                "stage_b": solve_stage_b(cfg.planning).to_dict(),
            }
        except LaimrError as e:
            res.errors.append(f"{cfg.scenario.name}: {e}")
        return res

    jobs = [(cfg, c, event_log) for c in cells_for(cfg, mode, seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_safe, jobs))
    else:
        results = [_run_cell_safe(j) for j in jobs]
    results.sort(key=lambda r: r[0].sort_key)
    for cell, row, log, err in results:
        if err is not None:
            res.errors.append(err)
            continue
        res.rows.append(row)
        if log is not None:
            res.event_logs.append((cell, log))
    return res


def format_event_logs(logs) -> str:
    lines = []
    for cell, log in logs:
        lines.append(f"# {cell.label()}")
        lines.extend(log)
    return "\n".join(lines) + ("\n" if lines else "")
