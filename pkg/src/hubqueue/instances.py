"""Instance files, server banks, scenario configuration and bundled data.

Instance file grammar (UTF-8 text, one statement per line)::

    # comment                     '#' to end of line is ignored
    n 25                          must precede every block
    alpha 0.2                     scalars: alpha, p, c, gamma (any order)
    names                         optional block: n lines, one node name each
    coords                        optional block: n rows "x y"
    distance                      required block: n rows of n reals
    flow                          required block: n rows of n reals
    fixed_hub                     optional block: 1 row of n reals
    fixed_arc                     optional block: n rows of n reals
    servers S                     required block: S rows "hub mu beta b theta"

Hub indices in ``servers`` are 0-based; the rows for one hub give its
servers in order.  Reals are written with ``repr`` so a write/parse round
trip is lossless.  A config file uses the same ``key value`` scalar syntax
for any :class:`ScenarioConfig` field.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .model import NetworkInstance
from .queueing import DEFAULT_EPSILON

BETA_DEFAULT = (0.5, 0.2, 0.3)
BETA_SUM_TOL = 1e-9


class Server(NamedTuple):
    mu: float
    beta: float
    b: int
    theta: float


@dataclass(frozen=True)
class ServerBank:
    """Servers of every candidate hub plus the shared service exponent ``c``.

    ``servers[k]`` lists hub ``k``'s servers; the routing fractions of one
    hub sum to one.
    """

    servers: tuple[tuple[Server, ...], ...]
    c: float

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(
            tuple(Server(float(s.mu), float(s.beta), _as_int(s.b, "b"), float(s.theta)) for s in hub)
            for hub in self.servers))
        object.__setattr__(self, "c", float(self.c))
        if not self.c >= 0:
            raise ValidationError(f"c must be >= 0, got {self.c}")
        for k, hub in enumerate(self.servers):
            if not hub:
                raise ValidationError(f"hub {k} has no servers")
            for l, s in enumerate(hub):
                if not s.mu > 0:
                    raise ValidationError(f"server ({k},{l}): mu must be > 0, got {s.mu}")
                if s.beta < 0:
                    raise ValidationError(f"server ({k},{l}): beta must be >= 0, got {s.beta}")
                if s.b < 0:
                    raise ValidationError(f"server ({k},{l}): b must be >= 0, got {s.b}")
                if not 0 < s.theta < 1:
                    raise ValidationError(f"server ({k},{l}): theta must lie in (0, 1), got {s.theta}")
            total = math.fsum(s.beta for s in hub)
            if abs(total - 1.0) > BETA_SUM_TOL:
                raise ValidationError(
                    f"hub {k}: server routing fractions sum to {total:g}, must sum to 1")

    @property
    def n(self) -> int:
        return len(self.servers)

    @classmethod
    def uniform(cls, n: int, mu: Sequence[float] = (1.0, 1.0, 1.0),
                beta: Sequence[float] = BETA_DEFAULT, b: int = 5, theta: float = 0.95,
                c: float = 0.2) -> "ServerBank":
        if len(mu) != len(beta):
            raise ValidationError(f"mu has {len(mu)} entries but beta has {len(beta)}")
        hub = tuple(Server(m, bt, b, theta) for m, bt in zip(mu, beta))
        return cls((hub,) * n, c)

    def with_tail(self, b: int | None = None, theta: float | None = None,
                  c: float | None = None) -> "ServerBank":
        """Copy with ``b``/``theta`` applied uniformly to every server."""
        servers = tuple(
            tuple(s._replace(b=s.b if b is None else b, theta=s.theta if theta is None else theta)
                  for s in hub)
            for hub in self.servers)
        return ServerBank(servers, self.c if c is None else c)


def _as_int(v, name) -> int:
    if isinstance(v, float) and not v.is_integer():
        raise ValidationError(f"{name} must be an integer, got {v}")
    return int(v)


@dataclass(frozen=True)
class ScenarioConfig:
    """Every knob of one scenario; config files may override any field.

    Fields left at ``None`` among ``alpha, p, b, theta, c, mu, beta, f_hub,
    f_arc`` inherit the value stored in the instance file.  ``gamma = None``
    means "use the instance's gamma, else calibrate" (see
    :func:`hubqueue.experiments.calibrate_gamma`).
    """

    alpha: float | None = None
    p: int | None = None
    b: int | None = None
    theta: float | None = None
    c: float | None = None
    gamma: float | None = None
    target_utilization: float = 0.9
    gamma_basis: str = "lambda_max"
    gamma_ref_alpha: float = 0.2
    gamma_ref_p: int = 4
    gamma_ref_b: int = 20
    f_hub: float | None = None
    f_arc: float | None = None
    mu: tuple[float, ...] | None = None
    beta: tuple[float, ...] | None = None
    epsilon: float = DEFAULT_EPSILON
    lambda_tol: float | None = None
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    strategy: str = "bnb"
    time_limit: float = 1800.0
    enum_cap: int = 200_000
    arrival_mode: str = "once"
    arc_cost_mode: str = "literal"
    jobs: int = 1

    def __post_init__(self):
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.p is not None and self.p < 1:
            raise ValidationError(f"p must be >= 1, got {self.p}")
        if self.b is not None and self.b < 0:
            raise ValidationError(f"b must be >= 0, got {self.b}")
        if self.theta is not None and not 0 < self.theta < 1:
            raise ValidationError(f"theta must lie in (0, 1), got {self.theta}")
        if self.c is not None and self.c < 0:
            raise ValidationError(f"c must be >= 0, got {self.c}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if not self.target_utilization > 0:
            raise ValidationError("target_utilization must be > 0")
        if (self.f_hub or 0) < 0 or (self.f_arc or 0) < 0:
            raise ValidationError("fixed cost parameters must be >= 0")
        if (self.mu is None) != (self.beta is None):
            raise ValidationError("mu and beta must be given together")
        if self.mu is not None:
            if len(self.mu) != len(self.beta):
                raise ValidationError("mu and beta must have the same number of servers")
            if abs(math.fsum(self.beta) - 1) > BETA_SUM_TOL:
                raise ValidationError(f"beta must sum to 1, got {math.fsum(self.beta):g}")
        if self.gamma_basis not in ("lambda_max", "mu"):
            raise ValidationError(f"gamma_basis must be 'lambda_max' or 'mu', got {self.gamma_basis!r}")
        if self.strategy not in ("bnb", "enum"):
            raise ValidationError(f"strategy must be 'bnb' or 'enum', got {self.strategy!r}")
        if self.arrival_mode not in ("once", "literal"):
            raise ValidationError(f"arrival_mode must be 'once' or 'literal', got {self.arrival_mode!r}")
        if self.arc_cost_mode not in ("literal", "binary"):
            raise ValidationError(f"arc_cost_mode must be 'literal' or 'binary', got {self.arc_cost_mode!r}")
        if not self.time_limit > 0 or not self.epsilon > 0 or self.jobs < 1:
            raise ValidationError("time_limit and epsilon must be > 0, jobs >= 1")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def items(self) -> list[tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self)]


# ---------------------------------------------------------------------------
# Instance file I/O


class _Lines:
    def __init__(self, text: str):
        self.rows = []
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                self.rows.append((no, line))
        self.pos = 0

    def next(self, what: str):
        if self.pos >= len(self.rows):
            raise ParseError(f"unexpected end of file while reading {what}", field=what)
        row = self.rows[self.pos]
        self.pos += 1
        return row

    def __bool__(self):
        return self.pos < len(self.rows)


def _reals(line: str, no: int, what: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(tok) for tok in line.split()]
    except ValueError as exc:
        raise ParseError(f"expected real numbers: {exc}", no, what) from None
    if count is not None and len(vals) != count:
        raise ParseError(f"expected {count} values, got {len(vals)}", no, what)
    return vals


def _matrix(lines: _Lines, rows: int, cols: int, what: str) -> np.ndarray:
    out = []
    for _ in range(rows):
        no, line = lines.next(what)
        out.append(_reals(line, no, what, cols))
    return np.array(out, dtype=float).reshape(rows, cols)


_SCALARS = {"alpha": float, "p": int, "c": float, "gamma": float}


@dataclass
class ParsedInstance:
    """Everything an instance file carries."""

    instance: NetworkInstance
    bank: ServerBank
    gamma: float | None = None
    extras: dict = field(default_factory=dict)


def parse_instance_text(text: str) -> ParsedInstance:
    lines = _Lines(text)
    n = None
    scalars: dict[str, float | int] = {}
    blocks: dict[str, object] = {}
    while lines:
        no, line = lines.next("statement")
        key, *rest = line.split(maxsplit=1)
        arg = rest[0] if rest else None
        if key in blocks or key in scalars or (key == "n" and n is not None):
            raise ParseError(f"duplicate field {key!r}", no, key)
        if key == "n":
            try:
                n = int(arg)
            except (TypeError, ValueError):
                raise ParseError(f"n must be an integer, got {arg!r}", no, "n") from None
            if n < 1:
                raise ParseError("n must be >= 1", no, "n")
            continue
        if key in _SCALARS:
            if arg is None:
                raise ParseError("missing value", no, key)
            try:
                scalars[key] = _SCALARS[key](arg)
            except ValueError:
                raise ParseError(f"invalid value {arg!r}", no, key) from None
            continue
        if n is None:
            raise ParseError(f"{key!r} appears before 'n'", no, key)
        if key == "names":
            blocks[key] = tuple(lines.next(key)[1] for _ in range(n))
        elif key == "coords":
            blocks[key] = _matrix(lines, n, 2, key)
        elif key in ("distance", "flow", "fixed_arc"):
            blocks[key] = _matrix(lines, n, n, key)
        elif key == "fixed_hub":
            hno, hline = lines.next(key)
            blocks[key] = np.array(_reals(hline, hno, key, n))
        elif key == "servers":
            try:
                count = int(arg)
            except (TypeError, ValueError):
                raise ParseError(f"'servers' needs a row count, got {arg!r}", no, key) from None
            hubs: list[list[Server]] = [[] for _ in range(n)]
            for _ in range(count):
                sno, sline = lines.next(key)
                toks = sline.split()
                if len(toks) != 5:
                    raise ParseError(f"expected 'hub mu beta b theta', got {len(toks)} fields", sno, key)
                try:
                    k = int(toks[0])
                    srv = Server(float(toks[1]), float(toks[2]), int(toks[3]), float(toks[4]))
                except ValueError as exc:
                    raise ParseError(str(exc), sno, key) from None
                if not 0 <= k < n:
                    raise ParseError(f"hub index {k} out of range [0, {n})", sno, key)
                hubs[k].append(srv)
            blocks[key] = hubs
        else:
            raise ParseError(f"unknown field {key!r}", no, key)

    if n is None:
        raise ParseError("missing field 'n'", field="n")
    for req in ("distance", "flow", "servers"):
        if req not in blocks:
            raise ParseError(f"missing block {req!r}", field=req)
    for req in ("alpha", "p", "c"):
        if req not in scalars:
            raise ParseError(f"missing scalar {req!r}", field=req)

    inst = NetworkInstance(
        dist=blocks["distance"], W=blocks["flow"],
        F_hub=blocks.get("fixed_hub", np.zeros(n)),
        F_arc=blocks.get("fixed_arc", np.zeros((n, n))),
        alpha=scalars["alpha"], p=scalars["p"],
        names=blocks.get("names", ()), coords=blocks.get("coords"))
    bank = ServerBank(tuple(tuple(h) for h in blocks["servers"]), scalars["c"])
    gamma = scalars.get("gamma")
    if gamma is not None and not gamma > 0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    return ParsedInstance(inst, bank, gamma)


def parse_instance(path) -> ParsedInstance:
    return parse_instance_text(Path(path).read_text(encoding="utf-8"))


def _fmt(x) -> str:
    return repr(float(x))


def format_instance(inst: NetworkInstance, bank: ServerBank, gamma: float | None = None,
                    header: str | None = None) -> str:
    n = inst.n
    if bank.n != n:
        raise ValidationError(f"server bank covers {bank.n} hubs, instance has {n} nodes")
    out = []
    if header:
        out.extend(f"# {h}" for h in header.splitlines())
    out.append(f"n {n}")
    out.append(f"alpha {_fmt(inst.alpha)}")
    out.append(f"p {inst.p}")
    out.append(f"c {_fmt(bank.c)}")
    if gamma is not None:
        out.append(f"gamma {_fmt(gamma)}")
    out.append("names")
    out.extend(inst.names)
    if inst.coords is not None:
        out.append("coords")
        out.extend(" ".join(map(_fmt, row)) for row in inst.coords)
    for key, mat in (("distance", inst.dist), ("flow", inst.W)):
        out.append(key)
        out.extend(" ".join(map(_fmt, row)) for row in mat)
    out.append("fixed_hub")
    out.append(" ".join(map(_fmt, inst.F_hub)))
    out.append("fixed_arc")
    out.extend(" ".join(map(_fmt, row)) for row in inst.F_arc)
    rows = [f"{k} {_fmt(s.mu)} {_fmt(s.beta)} {s.b} {_fmt(s.theta)}"
            for k, hub in enumerate(bank.servers) for s in hub]
    out.append(f"servers {len(rows)}")
    out.extend(rows)
    return "\n".join(out) + "\n"


def write_instance(path, inst: NetworkInstance, bank: ServerBank, gamma: float | None = None,
                   header: str | None = None) -> None:
    Path(path).write_text(format_instance(inst, bank, gamma, header), encoding="utf-8")


def read_matrix(path) -> np.ndarray:
    """Read a raw square matrix; an optional leading token equal to ``n`` is skipped."""
    toks = Path(path).read_text(encoding="utf-8").split()
    try:
        vals = [float(t) for t in toks]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    for skip in (0, 1):
        k = math.isqrt(len(vals) - skip) if len(vals) > skip else 0
        if k > 0 and k * k == len(vals) - skip and (skip == 0 or vals[0] == k):
            return np.array(vals[skip:]).reshape(k, k)
    raise ParseError(f"{path}: {len(vals)} numbers do not form a square matrix")


# ---------------------------------------------------------------------------
# Config files


_INT_KEYS = {"p", "b", "gamma_ref_p", "gamma_ref_b", "enum_cap", "jobs"}
_STR_KEYS = {"gamma_basis", "strategy", "arrival_mode", "arc_cost_mode"}


def _parse_value(raw: str, no: int, key: str):
    try:
        if raw.lower() in ("auto", "none"):
            return None
        if key in ("mu", "beta"):
            return tuple(float(t) for t in raw.replace(",", " ").split())
        if key in _INT_KEYS:
            return int(raw)
        if key in _STR_KEYS:
            return raw
        return float(raw)
    except ValueError:
        raise ParseError(f"invalid value {raw!r}", no, key) from None


def parse_config_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = base or ScenarioConfig()
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    changes = {}
    for no, line in _Lines(text).rows:
        key, *rest = line.split(maxsplit=1)
        if key not in names:
            raise ParseError(f"unknown config key {key!r}", no, key)
        if not rest:
            raise ParseError("missing value", no, key)
        changes[key] = _parse_value(rest[0], no, key)
    return base.replace(**changes)


def parse_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def format_config(cfg: ScenarioConfig) -> str:
    out = []
    for key, val in cfg.items():
        if isinstance(val, tuple):
            val = " ".join(map(repr, val))
        elif val is None:
            val = "auto"
        out.append(f"{key} {val}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Derived data


def derive_arrivals(inst: NetworkInstance, gamma: float) -> np.ndarray:
    """Peak-hour arrivals ``a = gamma * W`` (directional, before aggregation)."""
    if not gamma > 0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    return gamma * np.asarray(inst.W, dtype=float)


def synth_costs(cfg: ScenarioConfig, n: int, hub: Sequence[float] | None = None,
                arc=None) -> tuple[np.ndarray, np.ndarray]:
    """Hub and hub-arc fixed costs.

    Uniform ``cfg.f_hub`` / ``cfg.f_arc`` unless explicit values are given.
    The arc matrix has a zero diagonal.
    """
    if hub is None:
        F_hub = np.full(n, float(cfg.f_hub or 0.0))
    else:
        F_hub = np.asarray(hub, dtype=float)
        if F_hub.shape != (n,):
            raise ValidationError(f"hub fixed costs need {n} entries, got shape {F_hub.shape}")
    if arc is None:
        F_arc = np.full((n, n), float(cfg.f_arc or 0.0))
        np.fill_diagonal(F_arc, 0.0)
    else:
        F_arc = np.asarray(arc, dtype=float)
        if F_arc.shape != (n, n):
            raise ValidationError(f"arc fixed costs need shape {(n, n)}, got {F_arc.shape}")
        if not np.array_equal(F_arc, F_arc.T):
            raise ValidationError("arc fixed costs must be symmetric")
    if np.any(F_hub < 0) or np.any(F_arc < 0):
        raise ValidationError("fixed costs must be >= 0")
    return F_hub, F_arc


def apply_scenario(parsed: ParsedInstance, cfg: ScenarioConfig) -> tuple[NetworkInstance, ServerBank]:
    """Instance and server bank with the scenario's overrides applied."""
    inst = parsed.instance
    changes = {}
    if cfg.alpha is not None:
        changes["alpha"] = cfg.alpha
    if cfg.p is not None:
        changes["p"] = cfg.p
    if cfg.f_hub is not None or cfg.f_arc is not None:
        F_hub, F_arc = synth_costs(cfg, inst.n)
        if cfg.f_hub is not None:
            changes["F_hub"] = F_hub
        if cfg.f_arc is not None:
            changes["F_arc"] = F_arc
    if changes:
        inst = inst.replace(**changes)
    bank = parsed.bank
    if cfg.mu is not None:
        # new server layout; queue limits carry over from the file (last server repeats)
        hubs = []
        for old in bank.servers:
            hubs.append(tuple(Server(mu, beta, old[min(l, len(old) - 1)].b, old[min(l, len(old) - 1)].theta)
                              for l, (mu, beta) in enumerate(zip(cfg.mu, cfg.beta))))
        bank = ServerBank(tuple(hubs), bank.c)
    bank = bank.with_tail(b=cfg.b, theta=cfg.theta, c=cfg.c)
    return inst, bank


# ---------------------------------------------------------------------------
# Bundled data


def load_bundled(name: str) -> ParsedInstance:
    """Load a fixture shipped in ``hubqueue/data`` (``cab25`` or ``toy5``)."""
    text = resources.files("hubqueue").joinpath("data", f"{name}.txt").read_text(encoding="utf-8")
    return parse_instance_text(text)


# Surrogate for the 25-city CAB benchmark: the cities are the CAB cities,
# distances are great-circle miles, flows come from a gravity model on
# 1970 metropolitan populations (thousands).
CAB_CITIES = (
    ("Atlanta", 33.749, -84.388, 1390),
    ("Baltimore", 39.290, -76.612, 2071),
    ("Boston", 42.360, -71.058, 2754),
    ("Chicago", 41.878, -87.630, 6975),
    ("Cincinnati", 39.103, -84.512, 1385),
    ("Cleveland", 41.499, -81.694, 2064),
    ("Dallas-Fort Worth", 32.777, -96.797, 2378),
    ("Denver", 39.739, -104.990, 1228),
    ("Detroit", 42.331, -83.046, 4200),
    ("Houston", 29.760, -95.370, 1985),
    ("Kansas City", 39.100, -94.579, 1254),
    ("Los Angeles", 34.052, -118.244, 7032),
    ("Memphis", 35.150, -90.049, 770),
    ("Miami", 25.762, -80.192, 1268),
    ("Minneapolis", 44.978, -93.265, 1814),
    ("New Orleans", 29.951, -90.072, 1046),
    ("New York", 40.713, -74.006, 11572),
    ("Philadelphia", 39.953, -75.165, 4818),
    ("Phoenix", 33.448, -112.074, 968),
    ("Pittsburgh", 40.441, -79.996, 2401),
    ("St. Louis", 38.627, -90.199, 2363),
    ("San Francisco", 37.775, -122.419, 3110),
    ("Seattle", 47.606, -122.332, 1422),
    ("Tampa", 27.951, -82.457, 1013),
    ("Washington DC", 38.907, -77.037, 2861),
)
EARTH_RADIUS_MILES = 3958.8
GRAVITY_DECAY = 0.5
GRAVITY_MEAN_FLOW = 5000.0


def build_cab_surrogate() -> tuple[NetworkInstance, ServerBank]:
    names = tuple(c[0] for c in CAB_CITIES)
    lat = np.radians([c[1] for c in CAB_CITIES])
    lon = np.radians([c[2] for c in CAB_CITIES])
    pop = np.array([c[3] for c in CAB_CITIES], dtype=float)
    n = len(names)

    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    h = np.sin(dlat / 2) ** 2 + np.cos(lat[:, None]) * np.cos(lat[None, :]) * np.sin(dlon / 2) ** 2
    dist = np.round(2 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(h)), 1)
    dist = np.triu(dist, 1)
    dist = dist + dist.T

    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore"):
        raw = np.where(off, np.outer(pop, pop) / dist**GRAVITY_DECAY, 0.0)
    W = np.round(raw * GRAVITY_MEAN_FLOW / raw[off].mean())

    coords = np.column_stack([[c[2] for c in CAB_CITIES], [c[1] for c in CAB_CITIES]])
    inst = NetworkInstance(dist=dist, W=W, F_hub=np.zeros(n), F_arc=np.zeros((n, n)),
                           alpha=0.2, p=4, names=names, coords=coords)
    return inst, ServerBank.uniform(n)
