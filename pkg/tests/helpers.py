"""Random instances and small oracles shared by the test modules."""

import itertools
import math

import numpy as np

from hubqueue.model import NetworkInstance
from hubqueue.solver import CapacityProfile

BETA = (0.5, 0.2, 0.3)


def random_instance(rng, n, p, alpha=None, fixed=True):
    pts = rng.uniform(0, 100, size=(n, 2))
    dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    dist = np.round(dist, 3)
    W = rng.integers(1, 40, size=(n, n)).astype(float)
    np.fill_diagonal(W, 0)
    if fixed:
        F_hub = rng.uniform(0, 2000, n).round(1)
        F_arc = rng.uniform(0, 300, (n, n)).round(1)
        F_arc = np.triu(F_arc, 1) + np.triu(F_arc, 1).T
    else:
        F_hub, F_arc = np.zeros(n), np.zeros((n, n))
    return NetworkInstance(dist=dist, W=W, F_hub=F_hub, F_arc=F_arc,
                           alpha=float(rng.uniform(0.1, 1.0)) if alpha is None else alpha, p=p,
                           coords=pts)


def random_capacity(rng, inst, beta=BETA, low=0.15, high=1.0):
    """Per-server limits between ``low`` and ``high`` times the total network arrivals."""
    total = inst.W.sum()
    rows = []
    for _ in range(inst.n):
        rows.append(tuple(float(b * total * rng.uniform(low, high)) for b in beta))
    return CapacityProfile(tuple(rows), (tuple(beta),) * inst.n)


def campbell_oracle(inst):
    """sum_ij W_ij * min_km C_ijkm by an explicit loop over every hub pair."""
    total = []
    n, d, alpha = inst.n, inst.dist, inst.alpha
    for i in range(n):
        for j in range(i + 1, n):
            w = inst.W[i][j] + inst.W[j][i]
            if w == 0:
                continue
            best = math.inf
            for k, m in itertools.product(range(n), repeat=2):
                best = min(best, d[i][k] + alpha * d[k][m] + d[m][j])
            total.append(w * best)
    return math.fsum(total)
