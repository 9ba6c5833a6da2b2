"""Discrete-event simulation of one state-dependent server.

The server is simulated as the continuous-time birth-death chain it
defines: in state ``n`` the next event is an arrival (rate ``lam``) or a
completion (rate ``n**c * mu``).  Exponential service is memoryless, so a
state change only swaps the completion rate; nothing restarts.

Random numbers come from numpy's Philox counter-based generator.  Stream
``(seed, *stream, replication)`` is seeded through ``SeedSequence`` with
exactly that entropy tuple, so replications are independent and any single
replication can be regenerated on its own.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from .instances import ServerBank
from .queueing import DEFAULT_EPSILON, QueueSpec, steady_state
from .errors import DivergentSeries, ValidationError

CHUNK = 1 << 18


@dataclass(frozen=True)
class SimConfig:
    spec: QueueSpec
    horizon: float = 1e6
    warmup: float = 1e3
    seed: int = 0
    replications: int = 10
    stream: tuple[int, ...] = ()
    jobs: int = 1

    def __post_init__(self):
        if not self.horizon > self.warmup >= 0:
            raise ValidationError("need horizon > warmup >= 0")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")


@dataclass
class SimEstimate:
    """Replication means and 95% half-widths of the time-average state occupancy.

    ``per_replication[r, n]`` is the fraction of post-warmup time that
    replication ``r`` spent in state ``n``.
    """

    per_replication: np.ndarray
    events: int

    @property
    def replications(self) -> int:
        return self.per_replication.shape[0]

    @property
    def state_fractions(self) -> np.ndarray:
        return self.per_replication.mean(axis=0)

    @property
    def half_width(self) -> np.ndarray:
        return self._half_width(self.per_replication)

    def _half_width(self, samples, level=0.95):
        r = samples.shape[0]
        if r < 2:
            return np.full(samples.shape[1:], np.inf)
        q = stats.t.ppf(0.5 + level / 2, r - 1)
        return q * samples.std(axis=0, ddof=1) / math.sqrt(r)

    def interval_half_width(self, level: float) -> np.ndarray:
        return self._half_width(self.per_replication, level)

    def tail_at(self, b: int) -> tuple[float, float]:
        """Estimated ``P[n >= b + 2]`` and its 95% half-width."""
        tails = self.per_replication[:, b + 2:].sum(axis=1)
        hw = self._half_width(tails[:, None])[0]
        return float(tails.mean()), float(hw)


@numba.njit(cache=True, nogil=True)
def _advance(lam, mu, c, warmup, horizon, t, n, occ, u_time, u_jump):
    """Consume uniforms until the horizon, the chunk end or the occupancy array end.

    Returns ``(t, n, used, done)``.
    """
    size = occ.shape[0]
    used = 0
    for e in range(u_time.shape[0]):
        if n + 1 >= size:
            return t, n, used, False
        down = mu * n**c if n > 0 else 0.0
        rate = lam + down
        if rate <= 0.0:
            lo = max(t, warmup)
            if horizon > lo:
                occ[n] += horizon - lo
            return horizon, n, used, True
        dt = -math.log(1.0 - u_time[e]) / rate
        t_next = t + dt
        lo = max(t, warmup)
        hi = min(t_next, horizon)
        if hi > lo:
            occ[n] += hi - lo
        used += 1
        if t_next >= horizon:
            return horizon, n, used, True
        t = t_next
        if u_jump[e] * rate < lam:
            n += 1
        else:
            n -= 1
    return t, n, used, False


def _one_replication(cfg: SimConfig, rep: int) -> tuple[np.ndarray, int]:
    spec = cfg.spec
    ss = np.random.SeedSequence([cfg.seed, *cfg.stream, rep])
    rng = np.random.Generator(np.random.Philox(ss))
    occ = np.zeros(256)
    t, n, events = 0.0, 0, 0
    done = False
    while not done:
        u = rng.random((2, CHUNK))
        offset = 0
        while offset < CHUNK and not done:
            t, n, used, done = _advance(spec.lam, spec.mu, spec.c, cfg.warmup, cfg.horizon, t, n,
                                        occ, u[0, offset:], u[1, offset:])
            offset += used
            events += used
            if not done and n + 1 >= occ.shape[0]:
                occ = np.concatenate([occ, np.zeros_like(occ)])
    return occ / occ.sum(), events


def run_sim(cfg: SimConfig) -> SimEstimate:
    reps = range(cfg.replications)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(lambda r: _one_replication(cfg, r), reps))
    else:
        results = [_one_replication(cfg, r) for r in reps]
    width = max(len(f) for f, _ in results)
    out = np.zeros((cfg.replications, width))
    for r, (frac, _) in enumerate(results):
        out[r, :len(frac)] = frac
    return SimEstimate(out, sum(e for _, e in results))


def analytic_tail(spec: QueueSpec, b: int, epsilon: float = DEFAULT_EPSILON) -> float:
    """``P[n >= b + 2]`` from the truncated steady state; 1 for a divergent chain."""
    try:
        ss = steady_state(spec, epsilon, min_states=b + 1)
    except DivergentSeries:
        return 1.0
    return max(0.0, 1.0 - math.fsum(ss.probs[: b + 2]))


def validate_design(design, bank: ServerBank, horizon: float = 2e4, warmup: float = 200.0,
                    replications: int = 10, seed: int = 0, epsilon: float = DEFAULT_EPSILON,
                    jobs: int = 1) -> list[dict]:
    """Simulate every open server at its designed load and compare tails.

    Each row reports the simulated ``P[n >= b+2]`` with its half-width, the
    analytic value, and two verdicts: ``within_theta`` (simulated tail at
    most ``theta`` plus three half-widths) and ``agrees`` (simulated and
    analytic tails within three half-widths of each other).
    """
    rows = []
    for k in design.hubs:
        for l, s in enumerate(bank.servers[k]):
            lam = float(design.server_arrivals[k][l])
            spec = QueueSpec(lam, s.mu, bank.c)
            # Horizon is measured in mean service times so slow servers get the same precision.
            scale = 1.0 / s.mu
            est = run_sim(SimConfig(spec, horizon * scale, warmup * scale, seed, replications,
                                    stream=(k, l), jobs=jobs))
            tail, hw = est.tail_at(s.b)
            exact = analytic_tail(spec, s.b, epsilon)
            rows.append(dict(hub=k, server=l, lam=lam, mu=s.mu, b=s.b, theta=s.theta,
                             sim_tail=tail, half_width=hw, analytic_tail=exact,
                             within_theta=tail <= s.theta + 3 * hw,
                             agrees=abs(tail - exact) <= 3 * hw))
    return rows


VALIDATION_FIELDS = ("hub", "server", "lam", "mu", "b", "theta", "sim_tail", "half_width",
                     "analytic_tail", "within_theta", "agrees")


def state_agreement(est: SimEstimate, spec: QueueSpec, min_prob: float = 1e-3,
                    level: float = 0.95, epsilon: float = DEFAULT_EPSILON) -> tuple[bool, dict]:
    """Whether every state with analytic mass >= ``min_prob`` lies inside the band.

    The band is a simultaneous ``level`` confidence band over those states
    (Bonferroni-adjusted per-state t intervals).
    """
    ss = steady_state(spec, epsilon)
    probs = ss.probs
    states = np.flatnonzero(probs >= min_prob)
    per_state_level = 1 - (1 - level) / len(states)
    hw = est.interval_half_width(per_state_level)
    frac = est.state_fractions
    width = len(frac)
    sim = np.array([frac[n] if n < width else 0.0 for n in states])
    half = np.array([hw[n] if n < width else 0.0 for n in states])
    diff = np.abs(sim - probs[states])
    inside = diff <= half
    return bool(inside.all()), dict(states=states, analytic=probs[states], simulated=sim,
                                    half_width=half, inside=inside)
