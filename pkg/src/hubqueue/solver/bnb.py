"""Branch-and-bound over the hub indicators, using the LP relaxation as bound.

The relaxation keeps every routing variable and constraint of the model and
relaxes ``Y_k in {0, 1}`` to ``0 <= Y_k <= 1``.  Two exact reductions keep it
small:

* a path ``k -> m`` (``k != m``) is dropped when ``k -> k`` or ``m -> m`` is
  no more expensive for the same pair, because the single-hub path uses a
  subset of the hubs and no more capacity (only valid when a single-hub path
  counts its hub once);
* of ``k -> m`` and ``m -> k`` only the cheaper one is kept (ties keep
  ``k < m``), since both load the same hubs identically.

Capacity rows are written as ``beta_kl * lambda_k <= lambda_max_kl * Y_k``,
which is implied by the original rows at integral points and tightens the
bound at fractional ones.

Search order is depth first, diving towards the rounded value of the
branching variable; whenever a dive ends the open node with the smallest
bound is resumed.  The HiGHS model is modified in place, so every node LP is
hot-started from the previous basis.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import highspy
import numpy as np
from scipy import sparse

from ..instances import ScenarioConfig
from ..model import FlowQuadruple, NetworkInstance, pair_cost_array
from .design import (INFEASIBLE, OPTIMAL, TIME_LIMIT, CapacityProfile, HubDesign, clean_routing,
                     evaluate_design, pair_arrivals)

INT_TOL = 1e-6
_UNSETTLED = (highspy.HighsModelStatus.kUnknown, highspy.HighsModelStatus.kUnboundedOrInfeasible)
_DEFAULT_OPTIONS = {"simplex_strategy": 1, "solver": "choose"}


@dataclass
class Relaxation:
    """Column layout of the relaxation model."""

    quads: list[FlowQuadruple]
    n_x: int
    y0: int  # first Y column
    z0: int  # first Z column (binary arc mode)
    arcs: list[tuple[int, int]]
    cost: np.ndarray
    matrix: sparse.csc_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray


def _candidate_paths(inst, i, j, arrival_mode, arc_cost_mode):
    n = inst.n
    Q = pair_cost_array(inst, i, j) * inst.W_pairs[i, j]
    if arc_cost_mode == "literal":
        Q[i, j] += 0.5 * inst.F_arc[i, j]
    keep = np.ones((n, n), dtype=bool)
    lower = np.tril(np.ones((n, n), dtype=bool), -1)
    # k->m versus m->k: same hubs, same load
    keep &= (Q < Q.T) | ((Q == Q.T) & ~lower)
    if arrival_mode == "once":
        diag = np.diag(Q)
        keep &= (Q < diag[:, None]) & (Q < diag[None, :])
    np.fill_diagonal(keep, True)
    ks, ms = np.nonzero(keep)
    return ks, ms, Q[ks, ms]


def build_relaxation(inst: NetworkInstance, a, cap: CapacityProfile,
                     arrival_mode: str = "once", arc_cost_mode: str = "literal") -> Relaxation:
    n, p = inst.n, inst.p
    ap = pair_arrivals(a)
    quads, costs = [], []
    rows, cols, vals = [], [], []
    row_lower, row_upper = [], []
    r = 0
    cap_terms: dict[int, list] = {k: [] for k in range(n)}  # hub -> [(col, load)]
    arc_links: dict[tuple[int, int], list] = {}
    pairs = list(inst.pairs())

    # Y columns come after all X columns; collect X first.
    pair_paths = []
    for i, j in pairs:
        ks, ms, q = _candidate_paths(inst, i, j, arrival_mode, arc_cost_mode)
        pair_paths.append((i, j, ks, ms, q))
    n_x = sum(len(pp[2]) for pp in pair_paths)
    y0 = n_x
    arcs = list(itertools.combinations(range(n), 2)) if arc_cost_mode == "binary" else []
    z0 = y0 + n
    z_index = {arc: z0 + t for t, arc in enumerate(arcs)}

    col = 0
    for i, j, ks, ms, q in pair_paths:
        first = col
        m_cols = np.arange(first, first + len(ks))
        # normalisation
        rows.extend([r] * len(ks))
        cols.extend(m_cols)
        vals.extend([1.0] * len(ks))
        row_lower.append(1.0)
        row_upper.append(1.0)
        r += 1
        # hub access: flow of this pair through h <= Y_h
        for h in np.union1d(ks, ms):
            sel = m_cols[(ks == h) | (ms == h)]
            rows.extend([r] * (len(sel) + 1))
            cols.extend(list(sel) + [y0 + h])
            vals.extend([1.0] * len(sel) + [-1.0])
            row_lower.append(-math.inf)
            row_upper.append(0.0)
            r += 1
        load = ap[i, j]
        for t, (k, m) in enumerate(zip(ks, ms)):
            c_ = first + t
            quads.append(FlowQuadruple(i, j, int(k), int(m)))
            costs.append(q[t])
            if load > 0:
                if k == m:
                    cap_terms[k].append((c_, load * (1 if arrival_mode == "once" else 2)))
                else:
                    cap_terms[k].append((c_, load))
                    cap_terms[m].append((c_, load))
            if arcs and k != m:
                arc_links.setdefault((i, j, min(k, m), max(k, m)), []).append(c_)
        col += len(ks)

    # sum Y = p
    rows.extend([r] * n)
    cols.extend(range(y0, y0 + n))
    vals.extend([1.0] * n)
    row_lower.append(p)
    row_upper.append(p)
    r += 1

    for k in range(n):
        terms = cap_terms[k]
        for lmax, beta in zip(cap.lambda_max[k], cap.beta[k]):
            if beta <= 0 or not math.isfinite(lmax) or not terms:
                continue
            rows.extend([r] * (len(terms) + 1))
            cols.extend([c_ for c_, _ in terms] + [y0 + k])
            vals.extend([beta * ld for _, ld in terms] + [-lmax])
            row_lower.append(-math.inf)
            row_upper.append(0.0)
            r += 1

    for (i, j, k, m), link_cols in arc_links.items():
        rows.extend([r] * (len(link_cols) + 1))
        cols.extend(link_cols + [z_index[(k, m)]])
        vals.extend([1.0] * len(link_cols) + [-1.0])
        row_lower.append(-math.inf)
        row_upper.append(0.0)
        r += 1
    for (k, m), zc in z_index.items():
        for h in (k, m):
            rows.extend([r, r])
            cols.extend([zc, y0 + h])
            vals.extend([1.0, -1.0])
            row_lower.append(-math.inf)
            row_upper.append(0.0)
            r += 1

    n_col = z0 + len(arcs)
    cost = np.concatenate([np.array(costs, dtype=float), inst.F_hub,
                           [0.5 * inst.F_arc[k, m] for k, m in arcs]])
    matrix = sparse.csc_matrix((vals, (rows, cols)), shape=(r, n_col))
    return Relaxation(quads, n_x, y0, z0, arcs, cost, matrix,
                      np.array(row_lower, dtype=float), np.array(row_upper, dtype=float))


class _LP:
    """Thin wrapper around a HiGHS instance holding the relaxation."""

    def __init__(self, rel: Relaxation, cfg: ScenarioConfig):
        self.rel = rel
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("primal_feasibility_tolerance", cfg.feas_tol)
        h.setOptionValue("dual_feasibility_tolerance", cfg.feas_tol)
        lp = highspy.HighsLp()
        n_col = len(rel.cost)
        lp.num_col_ = n_col
        lp.num_row_ = rel.matrix.shape[0]
        lp.col_cost_ = rel.cost
        lp.col_lower_ = np.zeros(n_col)
        upper = np.full(n_col, math.inf)
        upper[rel.y0:] = 1.0
        lp.col_upper_ = upper
        lp.row_lower_ = rel.row_lower
        lp.row_upper_ = rel.row_upper
        m = rel.matrix
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = m.indptr.astype(np.int32)
        lp.a_matrix_.index_ = m.indices.astype(np.int32)
        lp.a_matrix_.value_ = m.data.astype(float)
        h.passModel(lp)
        self.h = h
        self.int_cols = np.arange(rel.y0, n_col, dtype=np.int32)
        self.iterations = 0

    def solve(self, lower: np.ndarray, upper: np.ndarray, time_left: float):
        """Solve with integer-column bounds; returns ``(status, value, x)``."""
        h = self.h
        h.changeColsBounds(len(self.int_cols), self.int_cols, lower, upper)
        h.setOptionValue("time_limit", max(time_left, 1e-3))
        h.run()
        self.iterations += h.getInfo().simplex_iteration_count
        st = h.getModelStatus()
        if st in _UNSETTLED:
            st = self._retry()
        if st == highspy.HighsModelStatus.kOptimal:
            return OPTIMAL, h.getInfo().objective_function_value, np.array(h.getSolution().col_value)
        if st in (highspy.HighsModelStatus.kInfeasible, highspy.HighsModelStatus.kUnboundedOrInfeasible):
            # costs and variables are nonnegative, so the LP cannot be unbounded
            return INFEASIBLE, math.inf, None
        if st == highspy.HighsModelStatus.kTimeLimit:
            return TIME_LIMIT, math.nan, None
        raise RuntimeError(f"relaxation LP ended with status {h.modelStatusToString(st)}")

    def _retry(self):
        # Hot-started dual simplex occasionally stalls on infeasible nodes without a
        # verdict.  Re-solve cold with primal simplex, then with interior point.
        h = self.h
        st = h.getModelStatus()
        for option, value in (("simplex_strategy", 4), ("solver", "ipm")):
            h.clearSolver()
            h.setOptionValue(option, value)
            h.run()
            st = h.getModelStatus()
            h.setOptionValue(option, _DEFAULT_OPTIONS[option])
            if st not in _UNSETTLED:
                break
        return st


def branch_and_bound(inst: NetworkInstance, a, cap: CapacityProfile,
                     cfg: ScenarioConfig | None = None, trace: list | None = None) -> HubDesign:
    """Exact optimum of the location-allocation model, or incumbent plus gap.

    ``trace`` (if given) receives ``(depth, lp_value)`` for every node LP
    solved, which is handy for checking the bounding logic.
    """
    cfg = cfg or ScenarioConfig(alpha=inst.alpha, p=inst.p)
    start = time.perf_counter()
    deadline = start + cfg.time_limit
    n, p = inst.n, inst.p
    rel = build_relaxation(inst, a, cap, cfg.arrival_mode, cfg.arc_cost_mode)
    lp = _LP(rel, cfg)
    n_int = len(lp.int_cols)
    beta = list(cap.beta)

    incumbent = None  # (value, x)
    nodes = 0
    timed_out = False

    def tol(v):
        return cfg.opt_tol * max(1.0, abs(v))

    def consider(value, x):
        nonlocal incumbent
        if incumbent is None or value < incumbent[0] - tol(incumbent[0]):
            incumbent = (value, x)

    def rounding_heuristic(x):
        y = x[rel.y0:rel.y0 + n]
        order = sorted(range(n), key=lambda k: (-round(y[k], 9), k))[:p]
        lo = np.zeros(n_int)
        hi = np.zeros(n_int)
        lo[order] = hi[order] = 1.0
        for t, (k, m) in enumerate(rel.arcs):
            if k in order and m in order:
                lo[n + t] = hi[n + t] = 1.0
        st, val, xs = lp.solve(lo, hi, deadline - time.perf_counter())
        if st == OPTIMAL:
            consider(val, xs)

    root_lo, root_hi = np.zeros(n_int), np.ones(n_int)
    counter = itertools.count()
    open_nodes = [(-math.inf, next(counter), 0, root_lo, root_hi)]
    root_bound = None

    while open_nodes:
        bound, _, depth, lo, hi = heapq.heappop(open_nodes)
        if incumbent is not None and bound >= incumbent[0] - tol(incumbent[0]):
            continue
        # dive
        while True:
            left = deadline - time.perf_counter()
            if left <= 0:
                timed_out = True
                break
            st, val, x = lp.solve(lo, hi, left)
            nodes += 1
            if st == TIME_LIMIT:
                timed_out = True
                break
            if trace is not None:
                trace.append((depth, val))
            if root_bound is None:
                root_bound = val
                if st == OPTIMAL:
                    rounding_heuristic(x)
                    st, val, x = lp.solve(lo, hi, deadline - time.perf_counter())
            if st != OPTIMAL:
                break
            if incumbent is not None and val >= incumbent[0] - tol(incumbent[0]):
                break
            v = x[rel.y0:]
            frac = np.minimum(v - np.floor(v), np.ceil(v) - v)
            b = int(np.argmax(frac))
            if frac[b] <= INT_TOL:
                consider(val, x)
                break
            up_first = v[b] >= 0.5
            up_lo, up_hi = lo.copy(), hi.copy()
            up_lo[b] = 1.0
            dn_lo, dn_hi = lo.copy(), hi.copy()
            dn_hi[b] = 0.0
            if up_first:
                heapq.heappush(open_nodes, (val, next(counter), depth + 1, dn_lo, dn_hi))
                lo, hi = up_lo, up_hi
            else:
                heapq.heappush(open_nodes, (val, next(counter), depth + 1, up_lo, up_hi))
                lo, hi = dn_lo, dn_hi
            depth += 1
        if timed_out:
            heapq.heappush(open_nodes, (bound, next(counter), depth, lo, hi))
            break

    seconds = time.perf_counter() - start
    extras = dict(root_bound=root_bound, lp_iterations=lp.iterations, columns=len(rel.cost))
    if timed_out:
        lower = min([b for b, *_ in open_nodes] + ([incumbent[0]] if incumbent else []))
        lower = max(lower, root_bound if root_bound is not None else -math.inf)
    else:
        lower = incumbent[0] if incumbent else math.inf

    if incumbent is None:
        if timed_out:
            d = HubDesign.infeasible(n, lower_bound=lower, nodes=nodes, seconds=seconds, extras=extras)
            d.status = TIME_LIMIT
            return d
        return HubDesign.infeasible(n, nodes=nodes, seconds=seconds, extras=extras)

    value, x = incumbent
    y = x[rel.y0:rel.y0 + n]
    hubs = [k for k in range(n) if y[k] > 0.5]
    routing = clean_routing({q: float(v) for q, v in zip(rel.quads, x[:rel.n_x]) if v > 0})
    design = evaluate_design(inst, beta, a, hubs, routing, cfg.arrival_mode, cfg.arc_cost_mode,
                             nodes=nodes, seconds=seconds, extras=extras)
    design.extras["lp_value"] = value
    if timed_out:
        design.status = TIME_LIMIT
        design.lower_bound = min(lower, design.objective)
        design.gap = (design.objective - design.lower_bound) / max(abs(design.objective), 1e-12)
    else:
        design.status = OPTIMAL
        design.lower_bound = design.objective
        design.gap = 0.0
    return design
