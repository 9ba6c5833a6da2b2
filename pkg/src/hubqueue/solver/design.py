"""Capacity profiles, hub designs and the arithmetic shared by all solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import Unbounded
from ..instances import ServerBank
from ..model import FlowQuadruple, NetworkInstance, path_cost, symmetrize_flows
from ..queueing import DEFAULT_EPSILON, TailConstraint, lambda_max

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
TIME_LIMIT = "TimeLimit"

# Routing fractions closer than this to 0 or 1 are snapped.
SNAP_TOL = 1e-9


@dataclass(frozen=True)
class CapacityProfile:
    """Largest admissible arrival rate per server, and the implied hub limit.

    ``hub_cap[k] = min_l lambda_max[k][l] / beta[k][l]`` over servers with
    a positive routing fraction; ``inf`` means the hub is uncapacitated.
    """

    lambda_max: tuple[tuple[float, ...], ...]
    beta: tuple[tuple[float, ...], ...]

    @property
    def n(self) -> int:
        return len(self.lambda_max)

    @property
    def hub_cap(self) -> np.ndarray:
        out = np.full(self.n, math.inf)
        for k, (lm, bt) in enumerate(zip(self.lambda_max, self.beta)):
            for lmax, beta in zip(lm, bt):
                if beta > 0:
                    out[k] = min(out[k], lmax / beta)
        return out

    @classmethod
    def unbounded(cls, n: int, beta=(1.0,)) -> "CapacityProfile":
        return cls(tuple((math.inf,) * len(beta) for _ in range(n)), (tuple(beta),) * n)

    @classmethod
    def from_hub_caps(cls, caps) -> "CapacityProfile":
        """Single-server profile with the given per-hub limits."""
        return cls(tuple((float(c),) for c in caps), tuple((1.0,) for _ in caps))

    def scaled(self, factor: float) -> "CapacityProfile":
        return CapacityProfile(tuple(tuple(v * factor for v in row) for row in self.lambda_max),
                               self.beta)


def capacity_profile(bank: ServerBank, epsilon: float = DEFAULT_EPSILON,
                     tol: float | None = None) -> CapacityProfile:
    rows = []
    for hub in bank.servers:
        row = []
        for s in hub:
            try:
                row.append(lambda_max(s.mu, bank.c, TailConstraint(s.b, s.theta), epsilon, tol))
            except Unbounded:
                row.append(math.inf)
        rows.append(tuple(row))
    return CapacityProfile(tuple(rows), tuple(tuple(s.beta for s in hub) for hub in bank.servers))


def pair_arrivals(a) -> np.ndarray:
    """Aggregate arrivals onto ``i < j``; idempotent on already aggregated input."""
    return symmetrize_flows(a)


def hub_arrival(routing: dict, a, k: int, mode: str = "once") -> float:
    """Arrival rate at hub ``k`` implied by ``routing``.

    ``a`` may be directional or already aggregated onto the upper triangle.
    A path that uses ``k`` as both first and second hub visits it once in
    ``"once"`` mode and twice in ``"literal"`` mode.
    """
    a = np.asarray(a, dtype=float)
    terms = []
    for q, x in routing.items():
        hits = (q.k == k) + (q.m == k)
        if hits == 2 and mode == "once":
            hits = 1
        if hits:
            terms.append(hits * (a[q.i, q.j] + a[q.j, q.i]) * x)
    return math.fsum(terms)


def hub_arrivals(routing: dict, a, n: int, mode: str = "once") -> np.ndarray:
    return np.array([hub_arrival(routing, a, k, mode) for k in range(n)])


@dataclass
class HubDesign:
    hubs: tuple[int, ...]
    routing: dict[FlowQuadruple, float]
    objective: float
    transport_cost: float
    hub_fixed_cost: float
    arc_fixed_cost: float
    hub_arrivals: np.ndarray
    server_arrivals: tuple[tuple[float, ...], ...]
    status: str = OPTIMAL
    gap: float = 0.0
    lower_bound: float = math.nan
    nodes: int = 0
    seconds: float = 0.0
    extras: dict = field(default_factory=dict)

    @classmethod
    def infeasible(cls, n: int, lower_bound: float = math.inf, **kw) -> "HubDesign":
        return cls(hubs=(), routing={}, objective=math.inf, transport_cost=math.nan,
                   hub_fixed_cost=math.nan, arc_fixed_cost=math.nan,
                   hub_arrivals=np.zeros(n), server_arrivals=(), status=INFEASIBLE,
                   gap=math.inf, lower_bound=lower_bound, **kw)

    def utilization(self, cap: CapacityProfile) -> list[tuple[int, int, float, float]]:
        """``(k, l, lambda_kl, lambda_kl / lambda_max_kl)`` for every open server."""
        out = []
        for k in self.hubs:
            for l, lam in enumerate(self.server_arrivals[k]):
                lmax = cap.lambda_max[k][l]
                out.append((k, l, lam, lam / lmax if lmax > 0 else math.inf))
        return out


def clean_routing(routing: dict) -> dict:
    """Snap near-integral fractions and renormalise each pair to sum to one."""
    by_pair: dict[tuple[int, int], list] = {}
    for q, x in routing.items():
        if x <= SNAP_TOL:
            continue
        if x >= 1.0 - SNAP_TOL:
            x = 1.0
        by_pair.setdefault((q.i, q.j), []).append([q, x])
    out = {}
    for entries in by_pair.values():
        total = math.fsum(x for _, x in entries)
        for q, x in entries:
            out[q] = x if total == 1.0 else x / total
    return dict(sorted(out.items()))


def evaluate_design(inst: NetworkInstance, bank_beta, a, hubs, routing: dict,
                    arrival_mode: str = "once", arc_cost_mode: str = "literal",
                    **extra) -> HubDesign:
    """Recompute every cost term and load of a routing from scratch.

    ``bank_beta[k][l]`` are the server routing fractions of hub ``k``.
    """
    n = inst.n
    Wp = inst.W_pairs
    transport = math.fsum(path_cost(inst, q) * Wp[q.i, q.j] * x for q, x in routing.items())
    if arc_cost_mode == "literal":
        arc = math.fsum(0.5 * inst.F_arc[q.k, q.m] * x for q, x in routing.items()
                        if q.k == q.i and q.m == q.j)
    else:
        arcs = sorted({(min(q.k, q.m), max(q.k, q.m)) for q in routing if q.k != q.m})
        arc = math.fsum(0.5 * inst.F_arc[k, m] for k, m in arcs)
    hubs = tuple(sorted(int(h) for h in hubs))
    hub_fixed = math.fsum(inst.F_hub[k] for k in hubs)
    lam = hub_arrivals(routing, a, n, arrival_mode)
    server = tuple(tuple(b * lam[k] for b in bank_beta[k]) for k in range(n))
    return HubDesign(hubs=hubs, routing=routing, objective=math.fsum((transport, hub_fixed, arc)),
                     transport_cost=transport, hub_fixed_cost=hub_fixed, arc_fixed_cost=arc,
                     hub_arrivals=lam, server_arrivals=server, **extra)
