"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdicts appear in the
"acceptance criteria" section at the end of the output.
"""

import math
import time
from importlib import resources

import numpy as np
import pytest
from scipy import stats

from conftest import record
from helpers import campbell_oracle, random_capacity, random_instance
from hubqueue.experiments import SWEEP_ALPHAS, SWEEP_BS, SWEEP_PS, SweepGrid, prepare, run_sweep
from hubqueue.instances import ScenarioConfig, load_bundled, parse_config_text
from hubqueue.queueing import QueueSpec, TailConstraint, lambda_max, steady_state
from hubqueue.simulate import SimConfig, run_sim, state_agreement, validate_design
from hubqueue.solver import (OPTIMAL, TIME_LIMIT, CapacityProfile, branch_and_bound,
                             enumerate_exact, verify_design)

SWEEP_TIME_LIMIT = 1800.0


def test_criterion_1_queue_closed_forms():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_geo = worst_poi = 0.0
    for _ in range(200):
        mu = float(rng.uniform(0.1, 20))
        rho = float(rng.uniform(0, 0.95))
        ss = steady_state(QueueSpec(rho * mu, mu, 0.0))
        n = np.arange(ss.M + 1)
        worst_geo = max(worst_geo, np.max(np.abs(ss.probs - (1 - rho) * rho**n)))

        rho = float(rng.uniform(0, 50))
        ss = steady_state(QueueSpec(rho * mu, mu, 1.0))
        n = np.arange(ss.M + 1)
        worst_poi = max(worst_poi, np.max(np.abs(ss.probs - stats.poisson.pmf(n, rho))))
    elapsed = time.perf_counter() - start
    ok = worst_geo <= 1e-10 and worst_poi <= 1e-8 and elapsed < 1.0
    record(1, ok, f"geometric max err {worst_geo:.2e} (<=1e-10), Poisson max err "
                  f"{worst_poi:.2e} (<=1e-8), {elapsed:.2f}s (<1s)")
    assert ok


def test_criterion_2_lambda_max():
    value = lambda_max(1.0, 0.0, TailConstraint(5, 0.95))
    closed = 0.95 ** (1 / 7)
    bs = (1, 3, 5, 10, 20)
    thetas = (0.05, 0.25, 0.5, 0.75, 0.95)
    mus = (0.5, 1.0, 2.0)
    grid = {(b, t, m): lambda_max(m, 0.2, TailConstraint(b, t)) for b in bs for t in thetas for m in mus}
    violations = []
    for (b, t, m), v in grid.items():
        tol = 1e-9 * m  # bisection resolution
        if b != bs[-1] and grid[(bs[bs.index(b) + 1], t, m)] < v - tol:
            violations.append(("b", b, t, m))
        if t != thetas[-1] and grid[(b, thetas[thetas.index(t) + 1], m)] < v - tol:
            violations.append(("theta", b, t, m))
        if m != mus[-1] and grid[(b, t, mus[mus.index(m) + 1])] < v:
            violations.append(("mu", b, t, m))
    ok = abs(value - closed) <= 1e-6 and not violations
    record(2, ok, f"lambda_max {value:.10f} vs 0.95^(1/7) {closed:.10f} "
                  f"(|diff| {abs(value - closed):.1e}); 5x5x3 monotonicity violations: {len(violations)}")
    assert ok, violations


def test_criterion_3_simulation_agreement():
    start = time.perf_counter()
    cells = []
    for c in (0.0, 0.2, 0.5, 1.0):
        for rho in (0.3, 0.6, 0.9):
            spec = QueueSpec(rho, 1.0, c)
            est = run_sim(SimConfig(spec, horizon=1e6, warmup=1e3, seed=17, stream=(int(c * 10), int(rho * 10))))
            ok, _ = state_agreement(est, spec)
            cells.append(((c, rho), ok))
    elapsed = time.perf_counter() - start
    agree = sum(ok for _, ok in cells)
    misses = [cell for cell, ok in cells if not ok]
    ok = agree >= 11 and elapsed < 60
    record(3, ok, f"{agree}/12 cells inside the 95% band (need >=11), misses {misses}, {elapsed:.1f}s (<60s)")
    assert ok


def test_criterion_4_oracle_equivalence():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst, mismatches, infeasible = 0.0, [], 0
    for seed in range(50):
        n = int(rng.integers(3, 9))
        p = int(rng.integers(1, min(3, n) + 1))
        inst = random_instance(rng, n, p)
        cap = random_capacity(rng, inst, low=0.3, high=1.2)
        cfg = ScenarioConfig(alpha=inst.alpha, p=p)
        enum = enumerate_exact(inst, inst.W, cap, cfg)
        bnb = branch_and_bound(inst, inst.W, cap, cfg)
        if enum.status != bnb.status:
            mismatches.append((seed, enum.status, bnb.status))
            continue
        if enum.status != OPTIMAL:
            infeasible += 1
            continue
        rel = abs(bnb.objective - enum.objective) / max(1.0, abs(enum.objective))
        worst = max(worst, rel)
        if rel > 1e-6:
            mismatches.append((seed, enum.objective, bnb.objective))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 120
    record(4, ok, f"50 instances ({infeasible} infeasible in both), max rel diff {worst:.1e} "
                  f"(<=1e-6), mismatches {len(mismatches)}, {elapsed:.1f}s (<120s)")
    assert ok, mismatches


def test_criterion_5_reduction():
    rng = np.random.default_rng(5)
    instances = [random_instance(rng, n, n, alpha=al, fixed=False)
                 for n, al in ((4, 0.2), (5, 0.5), (6, 1.0), (7, 0.8), (8, 0.0))]
    cab = load_bundled("cab25").instance
    instances.append(cab.replace(p=cab.n, F_hub=np.zeros(cab.n), F_arc=np.zeros((cab.n, cab.n))))
    results = []
    for inst in instances:
        free = CapacityProfile.unbounded(inst.n)
        design = branch_and_bound(inst, inst.W, free, ScenarioConfig(alpha=inst.alpha, p=inst.p))
        results.append((inst.n, inst.alpha, design.objective, campbell_oracle(inst)))
    bad = [r for r in results if r[2] != r[3]]
    record(5, not bad, f"{len(results) - len(bad)}/{len(results)} instances equal the per-pair "
                       f"argmin sum exactly (n up to 25)")
    assert not bad, bad


@pytest.fixture(scope="module")
def cab_sweep():
    parsed = load_bundled("cab25")
    text = resources.files("hubqueue").joinpath("data", "cab25_sweep.cfg").read_text(encoding="utf-8")
    base = parse_config_text(text).replace(time_limit=SWEEP_TIME_LIMIT)
    start = time.perf_counter()
    report = run_sweep(parsed, base, SweepGrid(SWEEP_ALPHAS, SWEEP_PS, SWEEP_BS))
    return parsed, base, report, time.perf_counter() - start


def test_criterion_6_table_trends(cab_sweep):
    parsed, base, report, elapsed = cab_sweep
    rel = base.opt_tol  # objectives are compared up to the solver's optimality tolerance
    rows = report.rows
    solved = {(r.alpha, r.p, r.b): r.objective for r in rows if r.status == OPTIMAL}
    timed = [r for r in rows if r.design is not None and r.design.status == TIME_LIMIT]
    errors = [r for r in rows if r.status not in (OPTIMAL, "Infeasible") and r not in timed]

    alpha_breaks, b_breaks = [], []
    for p in SWEEP_PS:
        for b in SWEEP_BS:
            seq = [solved.get((a, p, b)) for a in SWEEP_ALPHAS]
            seq = [v for v in seq if v is not None]
            for x, y in zip(seq, seq[1:]):
                if y < x * (1 - rel):
                    alpha_breaks.append((p, b, x, y))
    for a in SWEEP_ALPHAS:
        for p in SWEEP_PS:
            lo, hi = solved.get((a, p, 20)), solved.get((a, p, 5))
            if lo is not None and hi is not None and lo > hi * (1 + rel):
                b_breaks.append((a, p, lo, hi))
    bad_bounds = [r for r in timed if math.isfinite(r.objective) and r.objective < r.lower_bound]
    strict_b = sum(1 for a in SWEEP_ALPHAS for p in SWEEP_PS
                   if (a, p, 20) in solved and (a, p, 5) in solved
                   and solved[(a, p, 20)] < solved[(a, p, 5)] * (1 - rel))
    ok = (len(rows) == 18 and not alpha_breaks and not b_breaks and not bad_bounds and not errors)
    record(6, ok, f"18 cells: {len(solved)} Optimal, {len(timed)} TimeLimit, {len(errors)} errors; "
                  f"alpha-trend breaks {len(alpha_breaks)}, b-trend breaks {len(b_breaks)} "
                  f"(b=20 strictly cheaper in {strict_b} cells); gamma {report.gamma:.6g}; {elapsed:.0f}s")
    assert ok, (alpha_breaks, b_breaks, bad_bounds, errors)


def test_criterion_7_constraint_audit(cab_sweep):
    parsed, base, report, _ = cab_sweep
    audited, verify_fail, sim_fail = 0, [], []
    worst_margin = -math.inf
    for row in report.rows:
        if row.status != OPTIMAL:
            continue
        sc = prepare(parsed, base.replace(alpha=row.alpha, p=row.p, b=row.b), report.gamma)
        audited += 1
        rep = verify_design(row.design, sc.inst, sc.bank, sc.arrivals, sc.cfg.epsilon, sc.cap,
                            sc.cfg.feas_tol, sc.cfg.arrival_mode)
        if not rep.passed:
            verify_fail.append((row.alpha, row.p, row.b, rep.lines()))
        for r in validate_design(row.design, sc.bank, horizon=2e4, warmup=200, replications=10,
                                 seed=audited):
            worst_margin = max(worst_margin, r["sim_tail"] - (r["theta"] + 3 * r["half_width"]))
            if not r["within_theta"]:
                sim_fail.append((row.alpha, row.p, row.b, r["hub"], r["server"], r["sim_tail"]))
    ok = audited > 0 and not verify_fail and not sim_fail
    record(7, ok, f"{audited} Optimal designs audited; verify_design failures {len(verify_fail)}; "
                  f"servers over theta+3hw {len(sim_fail)} (worst margin {worst_margin:.3g})")
    assert ok, (verify_fail, sim_fail)
