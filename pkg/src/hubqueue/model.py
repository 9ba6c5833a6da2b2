"""Network instance, path costs and the feasible quadruple set.

A path for origin-destination pair ``(i, j)`` visits first hub ``k`` and
second hub ``m``; its unit cost is ``d[i,k] + alpha*d[k,m] + d[m,j]``.
Only pairs with ``i < j`` carry variables, so directional flows are
aggregated onto the upper triangle before use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ValidationError


class FlowQuadruple(NamedTuple):
    i: int
    j: int
    k: int
    m: int


def _frozen(a, shape, name) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Immutable description of a hub location instance.

    ``W`` is the raw O-D flow matrix as given (directional or not); use
    :attr:`W_pairs` for the aggregated upper-triangular flows.
    """

    dist: np.ndarray
    W: np.ndarray
    F_hub: np.ndarray
    F_arc: np.ndarray
    alpha: float
    p: int
    names: tuple[str, ...] = ()
    coords: np.ndarray | None = None
    W_pairs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 1:
            raise ValidationError(f"dist must be a square matrix, got shape {dist.shape}")
        n = dist.shape[0]
        set_ = object.__setattr__
        set_(self, "dist", _frozen(dist, (n, n), "dist"))
        set_(self, "W", _frozen(self.W, (n, n), "W"))
        set_(self, "F_hub", _frozen(self.F_hub, (n,), "F_hub"))
        set_(self, "F_arc", _frozen(self.F_arc, (n, n), "F_arc"))
        set_(self, "alpha", float(self.alpha))
        if int(self.p) != self.p:
            raise ValidationError(f"p must be an integer, got {self.p!r}")
        set_(self, "p", int(self.p))
        set_(self, "names", tuple(self.names) if self.names else tuple(str(i + 1) for i in range(n)))
        if len(self.names) != n:
            raise ValidationError(f"expected {n} node names, got {len(self.names)}")
        if self.coords is not None:
            set_(self, "coords", _frozen(self.coords, (n, 2), "coords"))
        self._validate()
        set_(self, "W_pairs", symmetrize_flows(self.W))
        self.W_pairs.setflags(write=False)

    def _validate(self):
        d = self.dist
        if np.any(np.diag(d) != 0):
            raise ValidationError("dist[i][i] must be 0 for all i")
        if not np.array_equal(d, d.T):
            raise ValidationError("dist must be symmetric")
        if np.any(d < 0):
            raise ValidationError("dist entries must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 1 <= self.p <= self.n:
            raise ValidationError(f"p must satisfy 1 <= p <= n={self.n}, got {self.p}")
        if np.any(self.W < 0):
            raise ValidationError("flow entries must be >= 0")
        if np.any(self.F_hub < 0) or np.any(self.F_arc < 0):
            raise ValidationError("fixed costs must be >= 0")
        if not np.array_equal(self.F_arc, self.F_arc.T):
            raise ValidationError("F_arc must be symmetric")

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def replace(self, **changes) -> "NetworkInstance":
        kw = dict(dist=self.dist, W=self.W, F_hub=self.F_hub, F_arc=self.F_arc,
                  alpha=self.alpha, p=self.p, names=self.names, coords=self.coords)
        kw.update(changes)
        return NetworkInstance(**kw)

    def pairs(self) -> Iterator[tuple[int, int]]:
        n = self.n
        for i in range(n - 1):
            for j in range(i + 1, n):
                yield i, j


def path_cost(inst: NetworkInstance, q: FlowQuadruple) -> float:
    d = inst.dist
    i, j, k, m = q
    return float(d[i, k] + inst.alpha * d[k, m] + d[m, j])


def cost_tensor(inst: NetworkInstance) -> dict[FlowQuadruple, float]:
    """Unit cost of every quadruple with ``i < j``; n(n-1)/2 * n^2 entries."""
    n = inst.n
    out: dict[FlowQuadruple, float] = {}
    for i, j in inst.pairs():
        for k in range(n):
            for m in range(n):
                q = FlowQuadruple(i, j, k, m)
                out[q] = path_cost(inst, q)
    return out


def pair_cost_array(inst: NetworkInstance, i: int, j: int) -> np.ndarray:
    """``C[k, m]`` for one O-D pair, same arithmetic as :func:`path_cost`."""
    d = inst.dist
    return (d[i, :, None] + inst.alpha * d) + d[None, :, j]


def symmetrize_flows(W_raw) -> np.ndarray:
    W_raw = np.asarray(W_raw, dtype=float)
    if np.any(W_raw < 0):
        raise ValidationError("flow entries must be >= 0")
    return np.triu(W_raw + W_raw.T, k=1)
