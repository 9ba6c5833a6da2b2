"""Allocation subproblem for a fixed hub set, and exhaustive enumeration.

This path is the reference oracle for :mod:`hubqueue.solver.bnb`: it never
looks at the location variables, it simply solves one routing LP per hub
subset through :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from ..errors import TooLarge
from ..instances import ScenarioConfig
from ..model import FlowQuadruple, NetworkInstance, pair_cost_array
from .design import (INFEASIBLE, OPTIMAL, CapacityProfile, HubDesign, clean_routing,
                     evaluate_design, pair_arrivals)


@dataclass
class AllocationResult:
    status: str
    routing: dict
    value: float  # transport + arc fixed cost


def _paths(hubs):
    return [(k, m) for k in hubs for m in hubs]


def allocation_lp(inst: NetworkInstance, a, hubs, cap: CapacityProfile, costs: dict | None = None,
                  arrival_mode: str = "once", arc_cost_mode: str = "literal") -> AllocationResult:
    """Cheapest routing of every O-D pair through the open ``hubs``.

    Minimises transport plus arc fixed cost subject to one normalisation
    row per pair and ``beta_kl * lambda_k <= lambda_max_kl`` per server.
    In ``binary`` arc mode the arc indicators make this a small MILP.
    """
    hubs = sorted(set(int(h) for h in hubs))
    if not hubs:
        raise ValueError("at least one hub is required")
    n = inst.n
    Wp = inst.W_pairs
    ap = pair_arrivals(a)
    paths = _paths(hubs)
    pairs = list(inst.pairs())
    P = len(paths)
    nx = len(pairs) * P

    c = np.empty(nx)
    quads = []
    for t, (i, j) in enumerate(pairs):
        C = pair_cost_array(inst, i, j)
        for s, (k, m) in enumerate(paths):
            q = FlowQuadruple(i, j, k, m)
            quads.append(q)
            unit = costs[q] if costs is not None else C[k, m]
            coef = unit * Wp[i, j]
            if arc_cost_mode == "literal" and k == i and m == j:
                coef += 0.5 * inst.F_arc[k, m]
            c[t * P + s] = coef

    eq_rows = np.repeat(np.arange(len(pairs)), P)
    A_eq = sparse.csr_matrix((np.ones(nx), (eq_rows, np.arange(nx))), shape=(len(pairs), nx))
    b_eq = np.ones(len(pairs))

    # visits of hub h by path s
    visits = np.zeros((n, P))
    for s, (k, m) in enumerate(paths):
        visits[k, s] += 1
        visits[m, s] += 1
        if k == m and arrival_mode == "once":
            visits[k, s] = 1
    ub_rows, ub_rhs = [], []
    pair_load = np.array([ap[i, j] for i, j in pairs])
    for k in hubs:
        load_k = np.kron(pair_load, visits[k])  # per-variable arrivals at k
        for lmax, beta in zip(cap.lambda_max[k], cap.beta[k]):
            if beta > 0 and math.isfinite(lmax):
                ub_rows.append(beta * load_k)
                ub_rhs.append(lmax)

    if arc_cost_mode == "binary":
        return _allocation_milp(inst, hubs, pairs, paths, quads, c, A_eq, b_eq, ub_rows, ub_rhs)

    A_ub = sparse.csr_matrix(np.array(ub_rows)) if ub_rows else None
    res = linprog(c, A_ub=A_ub, b_ub=np.array(ub_rhs) if ub_rows else None, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs-ds")
    if res.status == 4:  # dual simplex gave up numerically; interior point usually settles it
        res = linprog(c, A_ub=A_ub, b_ub=np.array(ub_rhs) if ub_rows else None, A_eq=A_eq,
                      b_eq=b_eq, bounds=(0, None), method="highs-ipm")
    if res.status == 2:
        return AllocationResult(INFEASIBLE, {}, math.inf)
    if res.status != 0:
        raise RuntimeError(f"allocation LP failed: {res.message}")
    routing = clean_routing({q: float(x) for q, x in zip(quads, res.x)})
    return AllocationResult(OPTIMAL, routing, float(res.fun))


def _allocation_milp(inst, hubs, pairs, paths, quads, c, A_eq, b_eq, ub_rows, ub_rhs):
    arcs = [(k, m) for k, m in itertools.combinations(hubs, 2)]
    nx, nz = len(c), len(arcs)
    P = len(paths)
    arc_index = {arc: r for r, arc in enumerate(arcs)}
    rows, cols, vals = [], [], []
    r = 0
    for t in range(len(pairs)):
        for arc in arcs:
            k, m = arc
            for s in (paths.index((k, m)), paths.index((m, k))):
                rows.append(r)
                cols.append(t * P + s)
                vals.append(1.0)
            rows.append(r)
            cols.append(nx + arc_index[arc])
            vals.append(-1.0)
            r += 1
    link = sparse.csr_matrix((vals, (rows, cols)), shape=(r, nx + nz))
    cost = np.concatenate([c, [0.5 * inst.F_arc[k, m] for k, m in arcs]])
    constraints = [LinearConstraint(sparse.hstack([A_eq, sparse.csr_matrix((A_eq.shape[0], nz))]),
                                    b_eq, b_eq)]
    if r:
        constraints.append(LinearConstraint(link, -np.inf, 0.0))
    if ub_rows:
        ub = np.hstack([np.array(ub_rows), np.zeros((len(ub_rows), nz))])
        constraints.append(LinearConstraint(sparse.csr_matrix(ub), -np.inf, np.array(ub_rhs)))
    integrality = np.concatenate([np.zeros(nx), np.ones(nz)])
    upper = np.concatenate([np.full(nx, np.inf), np.ones(nz)])
    res = milp(cost, constraints=constraints, integrality=integrality,
               bounds=Bounds(np.zeros(nx + nz), upper), options={"mip_rel_gap": 1e-12})
    if res.status == 2 or res.x is None:
        return AllocationResult(INFEASIBLE, {}, math.inf)
    if res.status != 0:
        raise RuntimeError(f"allocation MILP failed: {res.message}")
    routing = clean_routing({q: float(x) for q, x in zip(quads, res.x[:nx])})
    return AllocationResult(OPTIMAL, routing, float(res.fun))


def _evaluate_subset(args):
    inst, a, cap, cfg, hubs = args
    res = allocation_lp(inst, a, hubs, cap, arrival_mode=cfg.arrival_mode,
                        arc_cost_mode=cfg.arc_cost_mode)
    if res.status != OPTIMAL:
        return hubs, math.inf, res
    return hubs, math.fsum([res.value] + [inst.F_hub[k] for k in hubs]), res


def enumerate_exact(inst: NetworkInstance, a, cap: CapacityProfile,
                    cfg: ScenarioConfig | None = None) -> HubDesign:
    """Optimal design by solving the allocation problem for every p-subset.

    Subsets are visited in lexicographic order and a later subset only
    replaces the incumbent if it is strictly better (beyond ``opt_tol``), so
    ties go to the lexicographically smallest hub set.  With ``jobs > 1``
    subsets are evaluated in worker processes but reduced in the same order.
    """
    cfg = cfg or ScenarioConfig(alpha=inst.alpha, p=inst.p)
    start = time.perf_counter()
    n, p = inst.n, inst.p
    count = math.comb(n, p)
    if count > cfg.enum_cap:
        raise TooLarge(f"C({n},{p}) = {count} subsets exceeds the enumeration cap {cfg.enum_cap}")
    tasks = ((inst, a, cap, cfg, hubs) for hubs in itertools.combinations(range(n), p))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_evaluate_subset, tasks, chunksize=max(1, count // (4 * cfg.jobs))))
    else:
        results = map(_evaluate_subset, tasks)

    best = None
    for hubs, total, res in results:
        if not math.isfinite(total):
            continue
        if best is None or total < best[1] - cfg.opt_tol * max(1.0, abs(best[1])):
            best = (hubs, total, res)
    seconds = time.perf_counter() - start
    if best is None:
        return HubDesign.infeasible(n, nodes=count, seconds=seconds)
    hubs, total, res = best
    beta = [row for row in cap.beta]
    design = evaluate_design(inst, beta, a, hubs, res.routing, cfg.arrival_mode, cfg.arc_cost_mode,
                             status=OPTIMAL, nodes=count, seconds=seconds)
    design.lower_bound = design.objective
    return design
