"""Scenario solving, flow-scale calibration, sweeps and report files."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import HubQueueError, ValidationError
from .instances import ParsedInstance, ScenarioConfig, ServerBank, apply_scenario, derive_arrivals
from .model import NetworkInstance
from .solver import (OPTIMAL, TIME_LIMIT, CapacityProfile, HubDesign, branch_and_bound,
                     capacity_profile, enumerate_exact)

log = logging.getLogger(__name__)

REPORT_FIELDS = ("alpha", "p", "b", "theta", "objective", "hubs", "transport_cost",
                 "hub_fixed_cost", "arc_fixed_cost", "status", "seconds")

SWEEP_ALPHAS = (0.2, 0.5, 0.8)
SWEEP_PS = (4, 8, 12)
SWEEP_BS = (5, 20)


@dataclass
class Scenario:
    """A fully resolved scenario, ready to hand to a solver."""

    cfg: ScenarioConfig
    inst: NetworkInstance
    bank: ServerBank
    gamma: float
    arrivals: object
    cap: CapacityProfile


def calibrate_gamma(parsed: ParsedInstance, cfg: ScenarioConfig) -> float:
    """Flow-to-arrival scale that puts the busiest server at the target load.

    The reference design is the uncapacitated optimum at
    ``(gamma_ref_alpha, gamma_ref_p)``.  With ``gamma_basis = "mu"`` the
    busiest server runs at ``lambda/mu = target_utilization``; with
    ``"lambda_max"`` (default) at ``target_utilization`` times its
    ``lambda_max`` for queue limit ``gamma_ref_b``.
    """
    # calibration is setup, not the scenario itself, so it gets the default time budget
    ref = cfg.replace(alpha=cfg.gamma_ref_alpha, p=cfg.gamma_ref_p, b=cfg.gamma_ref_b,
                      time_limit=max(cfg.time_limit, ScenarioConfig.time_limit))
    inst, bank = apply_scenario(parsed, ref)
    beta = tuple(tuple(s.beta for s in hub) for hub in bank.servers)
    free = CapacityProfile(tuple((math.inf,) * len(row) for row in beta), beta)
    design = branch_and_bound(inst, inst.W, free, ref.replace(strategy="bnb"))
    if design.status != OPTIMAL:
        raise HubQueueError(f"gamma calibration: reference solve ended {design.status}")
    if cfg.gamma_basis == "lambda_max":
        cap = capacity_profile(bank, cfg.epsilon, cfg.lambda_tol)
        denom = cap.lambda_max
    else:
        denom = tuple(tuple(s.mu for s in hub) for hub in bank.servers)
    load = max(design.server_arrivals[k][l] / denom[k][l]
               for k in design.hubs for l in range(len(bank.servers[k])))
    if not load > 0:
        raise HubQueueError("gamma calibration: reference design carries no flow")
    gamma = cfg.target_utilization / load
    log.info("calibrated gamma = %.6g (busiest server load %.6g per unit gamma, basis %s)",
             gamma, load, cfg.gamma_basis)
    return gamma


def prepare(parsed: ParsedInstance, cfg: ScenarioConfig, gamma: float | None = None) -> Scenario:
    inst, bank = apply_scenario(parsed, cfg)
    if gamma is None:
        gamma = cfg.gamma if cfg.gamma is not None else parsed.gamma
    if gamma is None:
        gamma = calibrate_gamma(parsed, cfg)
    a = derive_arrivals(inst, gamma)
    cap = capacity_profile(bank, cfg.epsilon, cfg.lambda_tol)
    resolved = cfg.replace(alpha=inst.alpha, p=inst.p, c=bank.c, gamma=gamma)
    return Scenario(resolved, inst, bank, gamma, a, cap)


def solve(sc: Scenario) -> HubDesign:
    if sc.cfg.strategy == "enum":
        return enumerate_exact(sc.inst, sc.arrivals, sc.cap, sc.cfg)
    return branch_and_bound(sc.inst, sc.arrivals, sc.cap, sc.cfg)


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepGrid:
    alphas: tuple[float, ...] = SWEEP_ALPHAS
    ps: tuple[int, ...] = SWEEP_PS
    bs: tuple[int, ...] = SWEEP_BS

    def __post_init__(self):
        for name in ("alphas", "ps", "bs"):
            if not getattr(self, name):
                raise ValidationError(f"sweep grid: {name} must not be empty")
        if any(not 0 <= a <= 1 for a in self.alphas):
            raise ValidationError("sweep grid: alphas must lie in [0, 1]")
        if any(p < 1 for p in self.ps) or any(b < 0 for b in self.bs):
            raise ValidationError("sweep grid: p must be >= 1 and b >= 0")

    def cells(self) -> list[tuple[float, int, int]]:
        return [(a, p, b) for a in self.alphas for p in self.ps for b in self.bs]


@dataclass
class SweepRow:
    alpha: float
    p: int
    b: int
    theta: float
    design: HubDesign | None
    error: str = ""

    @property
    def status(self) -> str:
        if self.error:
            return "Error"
        if self.design.status == TIME_LIMIT:
            return f"TimeLimitWithGap({self.design.gap:.6g})"
        return self.design.status

    @property
    def objective(self) -> float:
        return self.design.objective if self.design is not None else math.nan

    @property
    def lower_bound(self) -> float:
        return self.design.lower_bound if self.design is not None else math.nan


@dataclass
class SweepReport:
    rows: list[SweepRow]
    gamma: float
    base: ScenarioConfig
    grid: SweepGrid
    provenance: list[tuple[str, object]] = field(default_factory=list)

    def row(self, alpha, p, b) -> SweepRow:
        for r in self.rows:
            if (r.alpha, r.p, r.b) == (alpha, p, b):
                return r
        raise KeyError((alpha, p, b))


def _solve_cell(args):
    parsed, cfg, gamma = args
    try:
        sc = prepare(parsed, cfg, gamma)
        return solve(sc), ""
    except HubQueueError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_sweep(parsed: ParsedInstance, base: ScenarioConfig, grid: SweepGrid,
              jobs: int = 1) -> SweepReport:
    """Solve every grid cell; rows come back in grid order whatever the job count."""
    gamma = base.gamma if base.gamma is not None else parsed.gamma
    if gamma is None:
        gamma = calibrate_gamma(parsed, base)
    cells = grid.cells()
    tasks = [(parsed, base.replace(alpha=a, p=p, b=b), gamma) for a, p, b in cells]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_solve_cell, tasks))
    else:
        results = [_solve_cell(t) for t in tasks]
    rows = []
    for (a, p, b), (design, err) in zip(cells, results):
        theta = base.theta if base.theta is not None else parsed.bank.servers[0][0].theta
        rows.append(SweepRow(a, p, b, theta, design, err))
        log.info("cell alpha=%g p=%d b=%d -> %s %s", a, p, b, rows[-1].status,
                 f"{rows[-1].objective:.6g}")
    provenance = [("gamma_used", gamma), ("grid_alphas", grid.alphas), ("grid_ps", grid.ps),
                  ("grid_bs", grid.bs)] + base.items()
    return SweepReport(rows, gamma, base, grid, provenance)


# ---------------------------------------------------------------------------
# Report CSV


def _num(x) -> str:
    return repr(float(x))


def report_row(alpha, p, b, theta, design: HubDesign | None, status: str,
               timing: bool = True) -> dict:
    if design is None:
        vals = dict(objective="nan", hubs="", transport_cost="nan", hub_fixed_cost="nan",
                    arc_fixed_cost="nan", seconds="0.0")
    else:
        vals = dict(objective=_num(design.objective), hubs=" ".join(map(str, design.hubs)),
                    transport_cost=_num(design.transport_cost),
                    hub_fixed_cost=_num(design.hub_fixed_cost),
                    arc_fixed_cost=_num(design.arc_fixed_cost),
                    seconds=f"{design.seconds:.3f}" if timing else "0.0")
    return dict(alpha=_num(alpha), p=str(int(p)), b=str(int(b)), theta=_num(theta), status=status,
                **vals)


def format_report(rows: Sequence[dict], provenance: Sequence[tuple[str, object]] = ()) -> str:
    buf = io.StringIO()
    for key, val in provenance:
        if val is None:  # inherited from the instance file
            continue
        if isinstance(val, tuple):
            val = " ".join(map(str, val))
        buf.write(f"# {key} {val}\n")
    writer = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def sweep_report_text(report: SweepReport, timing: bool = True) -> str:
    rows = [report_row(r.alpha, r.p, r.b, r.theta, r.design, r.status, timing) for r in report.rows]
    return format_report(rows, report.provenance)


@dataclass
class ReportRecord:
    alpha: float
    p: int
    b: int
    theta: float
    objective: float
    hubs: tuple[int, ...]
    transport_cost: float
    hub_fixed_cost: float
    arc_fixed_cost: float
    status: str
    seconds: float


def parse_report(text: str) -> tuple[list[ReportRecord], dict[str, str]]:
    """Read a report CSV back; returns records and the ``# key value`` header."""
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(" ")
            header[key] = val
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
        raise ValidationError(f"report header {reader.fieldnames} does not match {REPORT_FIELDS}")
    records = []
    for row in reader:
        records.append(ReportRecord(
            alpha=float(row["alpha"]), p=int(row["p"]), b=int(row["b"]), theta=float(row["theta"]),
            objective=float(row["objective"]),
            hubs=tuple(int(h) for h in row["hubs"].split()),
            transport_cost=float(row["transport_cost"]), hub_fixed_cost=float(row["hub_fixed_cost"]),
            arc_fixed_cost=float(row["arc_fixed_cost"]), status=row["status"],
            seconds=float(row["seconds"])))
    return records, header


# ---------------------------------------------------------------------------
# Plot data


def write_nodes(path, inst: NetworkInstance) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("node", "name", "x", "y"))
        for k in range(inst.n):
            x, y = inst.coords[k] if inst.coords is not None else (math.nan, math.nan)
            w.writerow((k, inst.names[k], _num(x), _num(y)))


def design_edges(design: HubDesign, a) -> list[tuple[str, int, int, float]]:
    """Hubs, used hub-hub arcs and spoke-hub links with the arrivals they carry."""
    import numpy as np

    a = np.asarray(a, dtype=float)
    hub_arc: dict[tuple[int, int], float] = {}
    access: dict[tuple[int, int], float] = {}
    for q, x in design.routing.items():
        load = (a[q.i, q.j] + a[q.j, q.i]) * x
        if q.k != q.m:
            key = (min(q.k, q.m), max(q.k, q.m))
            hub_arc[key] = hub_arc.get(key, 0.0) + load
        for node, hub in ((q.i, q.k), (q.j, q.m)):
            if node != hub:
                access[(node, hub)] = access.get((node, hub), 0.0) + load
    edges = [("hub", k, k, float(design.hub_arrivals[k])) for k in design.hubs]
    edges += [("hub_arc", k, m, v) for (k, m), v in sorted(hub_arc.items())]
    edges += [("access", i, k, v) for (i, k), v in sorted(access.items())]
    return edges


def write_edges(path, design: HubDesign, a) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind", "from", "to", "arrivals"))
        for kind, u, v, load in design_edges(design, a):
            w.writerow((kind, u, v, _num(load)))


def write_plot_data(outdir, report: SweepReport, parsed: ParsedInstance) -> list[Path]:
    """``nodes.csv`` plus per cell ``cell_NN_hubs.txt`` and ``cell_NN_edges.csv``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "nodes.csv"]
    write_nodes(written[0], parsed.instance)
    for idx, row in enumerate(report.rows):
        stem = f"cell_{idx:02d}"
        hubs = outdir / f"{stem}_hubs.txt"
        d = row.design
        hubs.write_text(
            f"# alpha {row.alpha} p {row.p} b {row.b} status {row.status}\n"
            + ("\n".join(map(str, d.hubs)) + "\n" if d is not None and d.hubs else ""),
            encoding="utf-8")
        written.append(hubs)
        if d is not None and d.routing:
            edges = outdir / f"{stem}_edges.csv"
            write_edges(edges, d, derive_arrivals(parsed.instance, report.gamma))
            written.append(edges)
    return written
