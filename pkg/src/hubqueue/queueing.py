"""Single-server birth-death queue with state-dependent service.

Arrivals are Poisson with constant rate ``lam``; in state ``n`` the server
completes work at total rate ``n**c * mu``.  The stationary distribution is

    p_n = p_0 * rho**n / (n!)**c,    rho = lam / mu,

which is geometric (M/M/1) for ``c = 0`` and Poisson (M/M/inf) for ``c = 1``.
All series work is done in log space so that large ``rho`` or large
truncation indices never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import CapExceeded, DivergentSeries, TruncationTooShort, Unbounded, ValidationError

DEFAULT_EPSILON = 1e-10
DEFAULT_M_CAP = 10**6
# lambda_max gives up (Unbounded) once the bracket exceeds mu * 2**40.
_BRACKET_DOUBLINGS = 40


@dataclass(frozen=True)
class QueueSpec:
    lam: float
    mu: float
    c: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"mu must be > 0, got {self.mu}")
        if not self.lam >= 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if not self.c >= 0:
            raise ValidationError(f"c must be >= 0, got {self.c}")

    @property
    def rho(self) -> float:
        return self.lam / self.mu


@dataclass(frozen=True)
class SteadyState:
    p0: float
    M: int
    probs: np.ndarray
    epsilon: float


@dataclass(frozen=True)
class TailConstraint:
    """``b`` is the queue-length bound; ``theta`` the allowed violation probability."""

    b: int
    theta: float

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 0:
            raise ValidationError(f"b must be a non-negative integer, got {self.b}")
        if not 0 < self.theta < 1:
            raise ValidationError(f"theta must lie in (0, 1), got {self.theta}")


def _log_terms(log_rho: float, c: float, start: int, stop: int) -> np.ndarray:
    n = np.arange(start, stop, dtype=float)
    return n * log_rho - c * gammaln(n + 1.0)


def _check_convergent(spec: QueueSpec):
    if spec.c == 0 and spec.rho >= 1:
        raise DivergentSeries(
            f"rho = {spec.rho:g} >= 1 with c = 0: the geometric series diverges (p0 = 0)")


def truncation_index(spec: QueueSpec, epsilon: float = DEFAULT_EPSILON,
                     M_cap: int = DEFAULT_M_CAP) -> int:
    """Smallest state index ``s`` at which the truncated normaliser has settled.

    Two conditions must hold at ``s``:

    * successive estimates of ``p0`` (truncating at ``s-1`` and ``s``)
      differ by less than ``epsilon``;
    * the remaining tail ``sum_{n>s} t_n`` is below ``epsilon`` relative to
      the partial sum.  The term ratio ``rho/(n+1)**c`` is nonincreasing, so
      once it drops below one the tail is bounded by a geometric series.

    The first condition alone stops too early when the terms are still
    growing or decay slowly (e.g. ``c = 0``, ``rho`` near one).
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    if spec.lam == 0:
        return 1
    _check_convergent(spec)
    log_eps = math.log(epsilon)
    log_rho = math.log(spec.rho)
    c = spec.c

    log_S_prev = 0.0  # log of t_0 = 1
    start = 1
    chunk = 256
    while start <= M_cap:
        stop = min(start + chunk, M_cap + 1)
        lt = _log_terms(log_rho, c, start, stop)
        log_S = np.logaddexp.accumulate(np.concatenate(([log_S_prev], lt)))[1:]
        log_S_before = np.concatenate(([log_S_prev], log_S[:-1]))
        settled = lt - log_S_before - log_S < log_eps

        n = np.arange(start, stop, dtype=float)
        ratio = np.exp(log_rho - c * np.log(n + 1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_tail = np.where(ratio < 1, lt + np.log(ratio) - np.log1p(-ratio), np.inf)
        small_tail = log_tail - log_S < log_eps

        hit = np.flatnonzero(settled & small_tail)
        if hit.size:
            return int(start + hit[0])
        log_S_prev = float(log_S[-1])
        start = stop
        chunk *= 2
    raise CapExceeded(f"no truncation index <= {M_cap} meets epsilon={epsilon:g} "
                      f"for rho={spec.rho:g}, c={c:g}")


def steady_state(spec: QueueSpec, epsilon: float = DEFAULT_EPSILON,
                 M_cap: int = DEFAULT_M_CAP, min_states: int = 0) -> SteadyState:
    """Truncated stationary distribution ``p_0 .. p_M``.

    ``min_states`` forces ``M >= min_states`` so callers can read the head
    of the distribution up to a fixed index.
    """
    M = max(truncation_index(spec, epsilon, M_cap), int(min_states))
    if spec.lam == 0:
        probs = np.zeros(M + 1)
        probs[0] = 1.0
        return SteadyState(1.0, M, probs, epsilon)
    lt = _log_terms(math.log(spec.rho), spec.c, 0, M + 1)
    log_S = np.logaddexp.reduce(lt)
    probs = np.exp(lt - log_S)
    probs.setflags(write=False)
    return SteadyState(float(np.exp(-log_S)), M, probs, epsilon)


def head_probability(ss: SteadyState, b: int) -> float:
    """``P[n <= b + 1]``, the complement of the tail that starts at ``b + 2``."""
    if b + 1 > ss.M:
        raise TruncationTooShort(f"head up to state {b + 1} requested but M = {ss.M}")
    return min(1.0, math.fsum(ss.probs[: b + 2]))


def _head_upper_bound(spec: QueueSpec, b: int, n_states: int) -> float:
    # Partial normaliser underestimates the full one, so this bounds the head from above.
    lt = _log_terms(math.log(spec.rho), spec.c, 0, n_states + 1)
    return float(np.exp(np.logaddexp.reduce(lt[: b + 2]) - np.logaddexp.reduce(lt)))


def tail_ok(spec: QueueSpec, tc: TailConstraint, epsilon: float = DEFAULT_EPSILON,
            M_cap: int = DEFAULT_M_CAP) -> bool:
    """True iff ``sum_{n=0}^{b+1} p_n >= 1 - theta``.

    A divergent chain has all its mass at infinity, so it fails.
    """
    try:
        ss = steady_state(spec, epsilon, M_cap, min_states=tc.b + 1)
    except DivergentSeries:
        return False
    except CapExceeded:
        if _head_upper_bound(spec, tc.b, M_cap) < 1.0 - tc.theta:
            return False
        raise
    return head_probability(ss, tc.b) >= 1.0 - tc.theta


def lambda_max(mu: float, c: float, tc: TailConstraint, epsilon: float = DEFAULT_EPSILON,
               tol: float | None = None) -> float:
    """Largest arrival rate for which :func:`tail_ok` holds.

    The head probability is nonincreasing in the arrival rate, so the
    feasible set is an interval ``[0, lambda*]``.  It is bracketed by
    doubling from ``mu`` and then bisected; the returned value is the
    feasible end of the final bracket.

    Raises:
        Unbounded: the constraint still holds at ``mu * 2**40``.
    """
    if tol is None:
        tol = 1e-9 * mu
    if not tol > 0:
        raise ValidationError(f"tol must be > 0, got {tol}")
    QueueSpec(0.0, mu, c)  # validates mu and c
    return _lambda_max(float(mu), float(c), int(tc.b), float(tc.theta), float(epsilon), float(tol))


@lru_cache(maxsize=4096)
def _lambda_max(mu, c, b, theta, epsilon, tol):
    tc = TailConstraint(b, theta)

    def ok(lam):
        return tail_ok(QueueSpec(lam, mu, c), tc, epsilon)

    lo, hi = 0.0, mu
    doublings = 0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > _BRACKET_DOUBLINGS:
            raise Unbounded(f"tail constraint still holds at lambda = {lo:g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
