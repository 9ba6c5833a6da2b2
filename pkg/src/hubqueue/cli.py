"""Command-line entry point: ``hubqueue <command> [options]``.

Exit codes: 0 success (``solve``: optimal), 1 input/validation error,
2 usage error or infeasible scenario, 3 time limit reached.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .errors import DivergentSeries, HubQueueError, Unbounded
from .experiments import (SweepGrid, format_report, prepare, report_row, run_sweep,
                          solve, sweep_report_text, write_edges, write_plot_data)
from .instances import (ScenarioConfig, ServerBank, format_instance, load_bundled, parse_config,
                        parse_instance, read_matrix)
from .model import NetworkInstance
from .queueing import (DEFAULT_EPSILON, QueueSpec, TailConstraint, head_probability, lambda_max,
                       steady_state)
from .simulate import VALIDATION_FIELDS, SimConfig, analytic_tail, run_sim, validate_design
from .solver import INFEASIBLE, OPTIMAL, TIME_LIMIT, verify_design

log = logging.getLogger("hubqueue")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_TIME_LIMIT = 0, 1, 2, 3
BUNDLED = ("cab25", "toy5")


def _load_instance(ref: str):
    if ref in BUNDLED and not Path(ref).exists():
        return load_bundled(ref)
    return parse_instance(ref)


def _load_config(ref: str | None) -> ScenarioConfig:
    if ref is None:
        return ScenarioConfig()
    if ref == "cab25_sweep" and not Path(ref).exists():
        ref = resources.files("hubqueue").joinpath("data", "cab25_sweep.cfg")
    return parse_config(ref)


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _scenario_flags(p: argparse.ArgumentParser):
    p.add_argument("--instance", required=True, help="instance file, or 'cab25' / 'toy5'")
    p.add_argument("--config", help="config file (or 'cab25_sweep'); flags override it")
    p.add_argument("--p", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--b", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--strategy", choices=("enum", "bnb"))
    p.add_argument("--time-limit", type=float)


def _scenario_config(args) -> ScenarioConfig:
    cfg = _load_config(args.config)
    changes = {k: getattr(args, k) for k in ("p", "alpha", "b", "theta", "c", "gamma", "strategy")
               if getattr(args, k, None) is not None}
    if getattr(args, "time_limit", None) is not None:
        changes["time_limit"] = args.time_limit
    return cfg.replace(**changes)


# ---------------------------------------------------------------------------


def cmd_queue(args) -> int:
    spec = QueueSpec(args.lam, args.mu, args.c)
    try:
        ss = steady_state(spec, args.epsilon, min_states=(args.b + 1) if args.b is not None else 0)
    except DivergentSeries as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"rho      {spec.rho:.10g}")
    print(f"p0       {ss.p0:.10g}")
    print(f"M        {ss.M}")
    print(f"epsilon  {ss.epsilon:g}")
    if args.b is not None:
        head = head_probability(ss, args.b)
        print(f"b        {args.b}")
        print(f"head     {head:.10g}   P[n <= b+1]")
        print(f"tail     {max(0.0, 1 - head):.10g}   P[n >= b+2]")
        if args.theta is not None:
            print(f"tail_ok  {head >= 1 - args.theta}   (theta {args.theta:g})")
    if args.states:
        print("n,p_n")
        for n, pn in enumerate(ss.probs[: args.states]):
            print(f"{n},{pn:.10g}")
    return EXIT_OK


def cmd_lambda_max(args) -> int:
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.servers:
        bank = _load_instance(args.servers).bank
        if args.c is not None:
            bank = ServerBank(bank.servers, args.c)
        w.writerow(("hub", "server", "mu", "beta", "b", "theta", "c", "lambda_max"))
        for k, hub in enumerate(bank.servers):
            for l, s in enumerate(hub):
                w.writerow((k, l, s.mu, s.beta, s.b, s.theta, bank.c,
                            _lmax(s.mu, bank.c, s.b, s.theta, args)))
        return EXIT_OK
    if args.mu is None or args.b is None or args.theta is None:
        print("error: --mu, --b and --theta are required without --servers", file=sys.stderr)
        return EXIT_INFEASIBLE
    c = 0.0 if args.c is None else args.c
    w.writerow(("mu", "c", "b", "theta", "lambda_max"))
    w.writerow((args.mu, c, args.b, args.theta, _lmax(args.mu, c, args.b, args.theta, args)))
    return EXIT_OK


def _lmax(mu, c, b, theta, args) -> str:
    try:
        return f"{lambda_max(mu, c, TailConstraint(b, theta), args.epsilon, args.tol):.10g}"
    except Unbounded:
        return "inf"


def _summary(sc, design) -> str:
    inst = sc.inst
    lines = [f"status          {design.status}"]
    if design.status == INFEASIBLE:
        return "\n".join(lines) + "\n"
    if design.status == TIME_LIMIT:
        lines.append(f"gap             {design.gap:.6g}  (lower bound {design.lower_bound:.10g})")
        if not design.hubs:
            lines.append("no incumbent found before the time limit")
            return "\n".join(lines) + "\n"
    lines += [
        f"hubs            {', '.join(f'{k} {inst.names[k]}' for k in design.hubs)}",
        f"objective       {design.objective:.10g}",
        f"  transport     {design.transport_cost:.10g}",
        f"  hub fixed     {design.hub_fixed_cost:.10g}",
        f"  arc fixed     {design.arc_fixed_cost:.10g}",
        f"gamma           {sc.gamma:.10g}",
        "server utilization (lambda_kl / lambda_max_kl):",
    ]
    for k, l, lam, util in design.utilization(sc.cap):
        lines.append(f"  hub {k:>3} server {l}  lambda {lam:.6g}  lambda_max "
                     f"{sc.cap.lambda_max[k][l]:.6g}  util {util:.4f}")
    return "\n".join(lines) + "\n"


def _exit_for(status: str) -> int:
    return {OPTIMAL: EXIT_OK, INFEASIBLE: EXIT_INFEASIBLE, TIME_LIMIT: EXIT_TIME_LIMIT}[status]


def cmd_solve(args) -> int:
    parsed = _load_instance(args.instance)
    cfg = _scenario_config(args)
    sc = prepare(parsed, cfg)
    design = solve(sc)
    status = design.status
    if status == TIME_LIMIT:
        status = f"TimeLimitWithGap({design.gap:.6g})"
    theta = sc.bank.servers[0][0].theta
    b = sc.bank.servers[0][0].b
    row = report_row(sc.inst.alpha, sc.inst.p, b, theta, design, status, timing=not args.no_timing)
    provenance = [("instance", args.instance), ("gamma_used", sc.gamma)] + sc.cfg.items()
    text = format_report([row], provenance)
    summary = _summary(sc, design)
    if args.verify and design.status == OPTIMAL:
        rep = verify_design(design, sc.inst, sc.bank, sc.arrivals, sc.cfg.epsilon, sc.cap,
                            sc.cfg.feas_tol, sc.cfg.arrival_mode)
        summary += "verification:\n" + "\n".join("  " + ln for ln in rep.lines()) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    sys.stdout.write(summary)
    if args.edges and design.routing:
        write_edges(args.edges, design, sc.arrivals)
    return _exit_for(design.status)


def cmd_sweep(args) -> int:
    parsed = _load_instance(args.instance)
    cfg = _load_config(args.config)
    changes = {}
    if args.theta is not None:
        changes["theta"] = args.theta
    if args.c is not None:
        changes["c"] = args.c
    if args.gamma is not None:
        changes["gamma"] = args.gamma
    if args.time_limit is not None:
        changes["time_limit"] = args.time_limit
    if args.strategy is not None:
        changes["strategy"] = args.strategy
    cfg = cfg.replace(**changes)
    grid = SweepGrid(args.alphas, args.ps, args.bs)
    report = run_sweep(parsed, cfg, grid, jobs=args.jobs)
    report.provenance.insert(0, ("instance", args.instance))
    text = sweep_report_text(report, timing=not args.no_timing)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.plot_dir:
        files = write_plot_data(args.plot_dir, report, parsed)
        log.info("wrote %d plot-data files to %s", len(files), args.plot_dir)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.instance:
        parsed = _load_instance(args.instance)
        sc = prepare(parsed, _scenario_config(args))
        design = solve(sc)
        if design.status != OPTIMAL:
            print(f"error: scenario solve ended {design.status}; nothing to simulate", file=sys.stderr)
            return _exit_for(design.status)
        rows = validate_design(design, sc.bank, args.horizon, args.warmup, args.replications,
                               args.seed, sc.cfg.epsilon)
        fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
        try:
            w = csv.DictWriter(fh, fieldnames=VALIDATION_FIELDS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        finally:
            if args.out:
                fh.close()
        return EXIT_OK if all(r["within_theta"] for r in rows) else EXIT_INFEASIBLE

    if args.lam is None or args.mu is None:
        print("error: give --lambda and --mu, or --instance", file=sys.stderr)
        return EXIT_INFEASIBLE
    spec = QueueSpec(args.lam, args.mu, 0.0 if args.c is None else args.c)
    est = run_sim(SimConfig(spec, args.horizon, args.warmup, args.seed, args.replications))
    try:
        exact = steady_state(spec).probs
    except DivergentSeries:
        exact = []
    out = [f"events {est.events}"]
    if args.b is not None:
        tail, hw = est.tail_at(args.b)
        out.append(f"tail P[n>=b+2] {tail:.6g} +- {hw:.3g}  analytic {analytic_tail(spec, args.b):.6g}")
    out.append("n,simulated,half_width,analytic")
    frac, hw = est.state_fractions, est.half_width
    for n in range(min(len(frac), args.states)):
        ana = f"{exact[n]:.6g}" if n < len(exact) else ""
        out.append(f"{n},{frac[n]:.6g},{hw[n]:.3g},{ana}")
    print("\n".join(out))
    return EXIT_OK


def cmd_convert_cab(args) -> int:
    dist = read_matrix(args.distance)
    flow = read_matrix(args.flow)
    n = dist.shape[0]
    names = ()
    if args.names:
        names = tuple(ln.strip() for ln in Path(args.names).read_text(encoding="utf-8").splitlines()
                      if ln.strip())
    import numpy as np

    dist = (dist + dist.T) / 2 if args.symmetrize else dist
    inst = NetworkInstance(dist=dist, W=flow, F_hub=np.zeros(n), F_arc=np.zeros((n, n)),
                           alpha=args.alpha, p=args.p, names=names)
    text = format_instance(inst, ServerBank.uniform(n), header=f"converted from {args.distance}, {args.flow}")
    Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hubqueue", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("queue", help="steady state of one state-dependent server")
    q.add_argument("--lambda", dest="lam", type=float, required=True)
    q.add_argument("--mu", type=float, required=True)
    q.add_argument("--c", type=float, default=0.0)
    q.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    q.add_argument("--b", type=int)
    q.add_argument("--theta", type=float)
    q.add_argument("--states", type=int, default=0, help="print the first N probabilities")
    q.set_defaults(func=cmd_queue)

    lm = sub.add_parser("lambda-max", help="largest admissible arrival rate per server")
    lm.add_argument("--mu", type=float)
    lm.add_argument("--c", type=float)
    lm.add_argument("--b", type=int)
    lm.add_argument("--theta", type=float)
    lm.add_argument("--servers", help="instance file (or bundled name): one row per server")
    lm.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    lm.add_argument("--tol", type=float)
    lm.set_defaults(func=cmd_lambda_max)

    s = sub.add_parser("solve", help="solve one scenario")
    _scenario_flags(s)
    s.add_argument("--out", help="write the report CSV here instead of stdout")
    s.add_argument("--edges", help="write hub/arc/access plot data here")
    s.add_argument("--verify", action="store_true", help="re-check the design against the model")
    s.add_argument("--no-timing", action="store_true", help="write seconds as 0 (byte-stable output)")
    s.set_defaults(func=cmd_solve)

    sw = sub.add_parser("sweep", help="solve a grid of (alpha, p, b) scenarios")
    sw.add_argument("--instance", required=True)
    sw.add_argument("--config")
    sw.add_argument("--alphas", type=_float_list, default=(0.2, 0.5, 0.8))
    sw.add_argument("--ps", type=_int_list, default=(4, 8, 12))
    sw.add_argument("--bs", type=_int_list, default=(5, 20))
    sw.add_argument("--theta", type=float)
    sw.add_argument("--c", type=float)
    sw.add_argument("--gamma", type=float)
    sw.add_argument("--strategy", choices=("enum", "bnb"))
    sw.add_argument("--time-limit", type=float)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out")
    sw.add_argument("--plot-dir")
    sw.add_argument("--no-timing", action="store_true")
    sw.set_defaults(func=cmd_sweep)

    sim = sub.add_parser("simulate", help="simulate one queue, or replay a solved design")
    sim.add_argument("--lambda", dest="lam", type=float)
    sim.add_argument("--mu", type=float)
    sim.add_argument("--instance")
    sim.add_argument("--config")
    for flag, typ in (("--p", int), ("--alpha", float), ("--b", int), ("--theta", float),
                      ("--c", float), ("--gamma", float), ("--time-limit", float)):
        sim.add_argument(flag, type=typ)
    sim.add_argument("--strategy", choices=("enum", "bnb"))
    sim.add_argument("--horizon", type=float, default=1e6)
    sim.add_argument("--warmup", type=float, default=1e3)
    sim.add_argument("--replications", type=int, default=10)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--states", type=int, default=15)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    cv = sub.add_parser("convert-cab", help="build an instance file from raw CAB matrices")
    cv.add_argument("--distance", required=True)
    cv.add_argument("--flow", required=True)
    cv.add_argument("--names")
    cv.add_argument("--alpha", type=float, default=0.2)
    cv.add_argument("--p", type=int, default=4)
    cv.add_argument("--symmetrize", action="store_true", help="average d and d^T first")
    cv.add_argument("--out", required=True)
    cv.set_defaults(func=cmd_convert_cab)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep":
        for name in ("alphas", "ps", "bs"):
            if not getattr(args, name):
                parser.error(f"--{name} must not be empty")
    try:
        return args.func(args)
    except HubQueueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
