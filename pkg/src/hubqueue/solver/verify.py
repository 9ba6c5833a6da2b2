"""Independent re-check of a solved design against the original model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..instances import ServerBank
from ..model import NetworkInstance
from ..queueing import DEFAULT_EPSILON, QueueSpec, TailConstraint, tail_ok
from .design import CapacityProfile, HubDesign, capacity_profile, hub_arrivals

NORMALIZATION_TOL = 1e-6


@dataclass
class Check:
    name: str
    passed: bool
    worst_slack: float
    failures: list = field(default_factory=list)


@dataclass
class VerificationReport:
    checks: dict[str, Check]
    servers: list[dict]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def lines(self) -> list[str]:
        return [f"{c.name:<14} {'PASS' if c.passed else 'FAIL'}  worst slack {c.worst_slack:.3g}"
                for c in self.checks.values()]


def verify_design(design: HubDesign, inst: NetworkInstance, bank: ServerBank, a,
                  epsilon: float = DEFAULT_EPSILON, cap: CapacityProfile | None = None,
                  feas_tol: float = 1e-7, arrival_mode: str = "once") -> VerificationReport:
    """Re-evaluate hub count, normalisation, hub access and both capacity views.

    Server loads are recomputed from the routing.  Each server is checked
    twice: against ``lambda_max`` (the linear row the solver used) and
    directly through the tail probability of its queue.  The ``agreement``
    check fails if the two verdicts ever differ.
    """
    cap = cap or capacity_profile(bank, epsilon)
    hubs = set(design.hubs)
    checks = {}

    checks["hub_count"] = Check("hub_count", len(hubs) == inst.p, inst.p - len(hubs))

    sums: dict[tuple[int, int], float] = {pair: 0.0 for pair in inst.pairs()}
    neg, closed = [], []
    for q, x in design.routing.items():
        sums[(q.i, q.j)] = sums.get((q.i, q.j), 0.0) + x
        if x < 0:
            neg.append((q, x))
        if x > 0 and (q.k not in hubs or q.m not in hubs):
            closed.append(q)
    dev = {pair: abs(s - 1.0) for pair, s in sums.items()}
    bad = [pair for pair, d in dev.items() if d > NORMALIZATION_TOL]
    checks["normalization"] = Check("normalization", not bad, -max(dev.values(), default=0.0), bad)
    checks["nonnegativity"] = Check("nonnegativity", not neg, min((x for _, x in neg), default=0.0), neg)
    checks["hub_access"] = Check("hub_access", not closed, -float(len(closed)), closed)

    lam = hub_arrivals(design.routing, a, inst.n, arrival_mode)
    servers = []
    cap_fail, tail_fail, disagree = [], [], []
    worst_cap = math.inf
    for k in range(inst.n):
        for l, s in enumerate(bank.servers[k]):
            lam_kl = s.beta * lam[k]
            if k not in hubs and lam_kl == 0:
                continue
            lmax = cap.lambda_max[k][l]
            slack = lmax - lam_kl
            cap_ok = slack >= -feas_tol
            tail = tail_ok(QueueSpec(max(lam_kl - feas_tol, 0.0), s.mu, bank.c),
                           TailConstraint(s.b, s.theta), epsilon)
            worst_cap = min(worst_cap, slack)
            if not cap_ok:
                cap_fail.append((k, l))
            if not tail:
                tail_fail.append((k, l))
            if cap_ok != tail:
                disagree.append((k, l))
            servers.append(dict(hub=k, server=l, lam=lam_kl, lambda_max=lmax, slack=slack,
                                capacity_ok=cap_ok, tail_ok=tail))
    worst_cap = worst_cap if math.isfinite(worst_cap) else 0.0
    checks["capacity"] = Check("capacity", not cap_fail, worst_cap, cap_fail)
    checks["tail"] = Check("tail", not tail_fail, worst_cap, tail_fail)
    checks["agreement"] = Check("agreement", not disagree, -float(len(disagree)), disagree)
    return VerificationReport(checks, servers)
