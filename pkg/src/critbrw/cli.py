"""Command line entry point: ``critbrw <group> <command> [flags]``.

Every command accepts ``--config FILE`` (see :mod:`critbrw.config`) and the
shared flags below, which override the file.  Output is CSV (default) or JSON
with numbers at ``precision`` significant digits, written to ``--out`` or
stdout.

Exit status: 0 success, 1 runtime error (JSON payload on stderr), 2 usage
error.  ``CRITBRW_THREADS`` sets the default thread count.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import cluster_stats as cs
from . import gw_analytics as gw
from . import lattice_kernel as lk
from . import mc_simulator as mc
from . import moment_engine as me
from .config import RunConfig, parse_config
from .errors import BRWError, UnknownSubcommand

COMMANDS = {
    "kernel": ("p", "green"),
    "gw": ("pmf", "tail"),
    "moments": ("m1", "m2", "cond-m2"),
    "simulate": ("subpop", "field"),
    "clusters": ("gaps", "cells", "profile"),
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _point(text):
    try:
        return tuple(int(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _shared():
    p = _Parser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--config", help="run configuration file")
    g.add_argument("--dim", type=int, help="lattice dimension")
    g.add_argument("--kappa", type=float, help="jump rate")
    g.add_argument("--beta", type=float, help="split rate (= death rate)")
    g.add_argument("--horizon", "--t", dest="horizon", type=float, help="time horizon T")
    g.add_argument("--window", type=int, help="window radius")
    g.add_argument("--replicas", type=int, help="number of replicas")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--cap", type=int, help="per-subpopulation event cap")
    g.add_argument("--threads", type=int, help="worker threads (default $CRITBRW_THREADS or 1)")
    g.add_argument("--format", choices=("csv", "json"), help="output format")
    g.add_argument("--precision", type=int, help="significant digits")
    g.add_argument("--out", help="output file (default stdout)")
    return p


def build_parser():
    shared = _shared()
    root = _Parser(prog="critbrw", description="Critical branching random walks on Z^d.")
    groups = root.add_subparsers(dest="group", metavar="group", required=True)

    def leaf(sub, name, help_):
        return sub.add_parser(name, parents=[shared], help=help_, description=help_)

    sub = groups.add_parser("kernel", help="free-walk transition kernel").add_subparsers(
        dest="command", metavar="command", required=True)
    p = leaf(sub, "p", "p(t, z) on the window |z| <= window")
    p.add_argument("--grid", type=int, help="torus points per axis")
    leaf(sub, "green", "Green function G_0(0, 0)").add_argument(
        "--tol", type=float, default=1e-6, help="quadrature tolerance")

    sub = groups.add_parser("gw", help="law of the total subpopulation size").add_subparsers(
        dest="command", metavar="command", required=True)
    leaf(sub, "pmf", "P{n_x(t) = k}, k = 0..kmax").add_argument("--kmax", type=int, default=10)
    p = leaf(sub, "tail", "P{n_x(t)/(beta t + 1) > s | n_x(t) > 0}")
    p.add_argument("--s", type=float, action="append", help="threshold (repeatable)")
    p.add_argument("--mode", choices=("exact", "limit"), default="exact")

    sub = groups.add_parser("moments", help="analytic moments").add_subparsers(
        dest="command", metavar="command", required=True)
    p = leaf(sub, "m1", "E n(t, x, y), optionally conditioned")
    p.add_argument("--x", type=_point)
    p.add_argument("--y", type=_point)
    p.add_argument("--level", type=int, help="condition on n_x(t) = level")
    p.add_argument("--survival", action="store_true", help="condition on n_x(t) > 0")
    p = leaf(sub, "m2", "sum_x E n(n-1) at a point")
    p.add_argument("--y", type=_point)
    p = leaf(sub, "cond-m2", "E[n(t,x,y)(n(t,x,y)-1) | n_x(t) = m]")
    p.add_argument("--x", type=_point)
    p.add_argument("--y", type=_point)
    p.add_argument("--m", type=int, help="conditioning level (default round(t))")
    p.add_argument("--rtol", type=float, default=5e-3)

    sub = groups.add_parser("simulate", help="Monte Carlo").add_subparsers(
        dest="command", metavar="command", required=True)
    p = leaf(sub, "subpop", "sizes of independent subpopulations from the origin")
    p.add_argument("--first-stream", type=int, default=0)
    p = leaf(sub, "field", "full field started from one particle per window site")
    p.add_argument("--first-stream", type=int, default=0)

    sub = groups.add_parser("clusters", help="clustering statistics").add_subparsers(
        dest="command", metavar="command", required=True)
    for name, help_ in (("gaps", "gaps between surviving origins (d = 1)"),
                        ("cells", "empty-cell census (d = 2)"),
                        ("profile", "mean occupation around surviving origins")):
        p = leaf(sub, name, help_)
        if name != "profile":
            p.add_argument("--source", choices=("bernoulli", "simulation"), default="bernoulli")
        p.add_argument("--first-stream", type=int, default=0)
        if name == "cells":
            p.add_argument("--side", type=int, help="explicit cell side (default: round(sqrt(t beta ln t)))")
        if name == "profile":
            p.add_argument("--radius", type=int, help="profile radius")
    return root


# -- output ---------------------------------------------------------------------------

class _Formatter:
    def __init__(self, precision):
        self.precision = precision

    def num(self, v):
        if isinstance(v, (bool, np.bool_)):
            return int(v)
        if isinstance(v, (int, np.integer)):
            return int(v)
        if isinstance(v, (float, np.floating)):
            v = float(v)
            if not math.isfinite(v):
                return repr(v)
            return float(f"{v:.{self.precision}g}")
        return v

    def cell(self, v):
        v = self.num(v)
        if isinstance(v, float):
            return f"{v:.{self.precision}g}"
        return str(v)

    def deep(self, obj):
        if isinstance(obj, dict):
            return {k: self.deep(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [self.deep(v) for v in obj]
        return self.num(obj)


def _emit(cfg, args, header, rows, summary=None):
    fmt = _Formatter(cfg.precision)
    if cfg.format == "json":
        payload = {"columns": header, "rows": [list(r) for r in rows]}
        if summary:
            payload["summary"] = summary
        text = json.dumps(fmt.deep(payload), sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt.cell(v) for v in r])
        text = buf.getvalue()
    path = args.out or cfg.path
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _xcols(prefix, d):
    return [f"{prefix}{i + 1}" for i in range(d)]


# -- commands -------------------------------------------------------------------------

def _kernel_p(cfg, args):
    jd = cfg.jump_distribution()
    R = cfg.window
    t = cfg.horizon
    grid = lk.heat_kernel(jd, t, R, args.grid)
    rows = [(t, *z, p) for z, p in zip(grid.coordinates(), grid.values.reshape(-1))]
    _emit(cfg, args, lk.kernel_csv_header(jd.dim), rows)


def _kernel_green(cfg, args):
    jd = cfg.jump_distribution()
    g = lk.green_value(jd, quad_tol=args.tol)
    _emit(cfg, args, ["kind", "value", "error_estimate"],
          [(g.kind.value, g.value, g.quadrature_error_estimate)])


def _gw_pmf(cfg, args):
    law = gw.GWLaw(cfg.branching(), cfg.horizon)
    _emit(cfg, args, ["k", "pmf"], [(k, gw.pmf_total(law, k)) for k in range(args.kmax + 1)])


def _gw_tail(cfg, args):
    law = gw.GWLaw(cfg.branching(), cfg.horizon)
    ss = args.s or [0.5, 1.0, 2.0]
    _emit(cfg, args, ["s", "tail"], [(s, gw.conditional_tail(law, s, args.mode)) for s in ss])


def _origin(pt, d):
    return pt if pt is not None else (0,) * d


def _moments_m1(cfg, args):
    jd = cfg.jump_distribution()
    x, y = _origin(args.x, jd.dim), _origin(args.y, jd.dim)
    if args.level is not None:
        est = me.conditional_first_moment(jd, cfg.branching(), cfg.horizon, x, y, me.Level(args.level))
    elif args.survival:
        est = me.conditional_first_moment(jd, cfg.branching(), cfg.horizon, x, y, me.Survival())
    else:
        est = me.first_moment(jd, cfg.horizon, x, y)
    _emit(cfg, args, ["t", *_xcols("x", jd.dim), *_xcols("y", jd.dim), "value"],
          [(est.t, *est.x, *est.y, est.value)])


def _moments_m2(cfg, args):
    jd = cfg.jump_distribution()
    y = _origin(args.y, jd.dim)
    est = me.second_moment_total(jd, cfg.branching(), cfg.horizon, me.Point(y))
    _emit(cfg, args, ["t", *_xcols("y", jd.dim), "value"], [(est.t, *y, est.value)])


def _moments_cond_m2(cfg, args):
    jd = cfg.jump_distribution()
    x, y = _origin(args.x, jd.dim), _origin(args.y, jd.dim)
    m = args.m if args.m is not None else int(round(cfg.horizon))
    est = me.conditional_second_moment(jd, cfg.branching(), cfg.horizon, x, y, m, rtol=args.rtol)
    _emit(cfg, args, ["t", *_xcols("x", jd.dim), *_xcols("y", jd.dim), "m", "value"],
          [(est.t, *est.x, *est.y, m, est.value)])


def _sim_config(cfg, window=None):
    return mc.SimConfig(cfg.jump_distribution(), cfg.branching(), cfg.horizon,
                        initial_window_radius=cfg.window if window is None else window,
                        particle_cap=cfg.cap, master_seed=cfg.seed)


def _threads(cfg):
    return cfg.threads if cfg.threads is not None else mc.default_threads()


def _simulate_subpop(cfg, args):
    sc = _sim_config(cfg)
    batch = mc.simulate_replicas(sc, cfg.replicas, first_stream=args.first_stream,
                                 threads=_threads(cfg))
    rows = [(args.first_stream + i, int(n), int(c))
            for i, (n, c) in enumerate(zip(batch.counts, batch.capped))]
    surv = batch.counts[~batch.capped] > 0
    _emit(cfg, args, ["stream", "size", "capped"], rows,
          {"replicas": len(rows), "survivors": int(surv.sum()),
           "capped": int(batch.capped.sum())})


def _fields(cfg, args):
    sc = _sim_config(cfg)
    for r in range(cfg.replicas):
        yield args.first_stream + r, mc.simulate_field(sc, args.first_stream + r, threads=_threads(cfg))


def _simulate_field(cfg, args):
    d = cfg.dim
    rows, capped = [], []
    for sid, snap in _fields(cfg, args):
        rows.extend((sid, *row) for row in snap.csv_rows())
        capped.extend([sid, *lab] for lab in snap.capped_labels)
    header = ["replica", *_xcols("origin", d), *_xcols("position", d), "count"]
    _emit(cfg, args, header, rows, {"capped_origins": capped})


def _origin_field(cfg, args, first_stream):
    if args.source == "bernoulli":
        return cs.surviving_origins(cs.BernoulliExact(cfg.dim, cfg.window, cfg.beta, cfg.horizon,
                                                      seed=cfg.seed, stream_id=first_stream))
    snap = mc.simulate_field(_sim_config(cfg), first_stream, threads=_threads(cfg))
    return cs.surviving_origins(snap)


def _clusters_gaps(cfg, args):
    f = _origin_field(cfg, args, args.first_stream)
    g = cs.gap_statistics_1d(f, p=1.0 / (1.0 + cfg.beta * cfg.horizon))
    _emit(cfg, args, ["gap", "count"], g.histogram_rows(),
          {"survivors": len(f), "mean": g.mean, "stderr": g.stderr, "p_value": g.p_value,
           "reference_mean": 1.0 / g.reference_p})


def _clusters_cells(cfg, args):
    f = _origin_field(cfg, args, args.first_stream)
    rule = cs.Explicit(args.side) if args.side else cs.LogRule()
    c = cs.empty_cell_census_2d(f, cfg.horizon, cfg.beta, rule)
    _emit(cfg, args, ["cell_x", "cell_y", "occupied"], list(c.rows()),
          {"cell_side": c.cell_side, "total_cells": c.total_cells, "empty_cells": c.empty_cells,
           "predicted_mean": c.predicted_mean, "exact_mean": c.exact_mean,
           "asymptotic_mean": c.asymptotic_mean})


def _clusters_profile(cfg, args):
    snaps = [s for _, s in _fields(cfg, args)]
    jd = cfg.jump_distribution()
    prof = cs.cluster_profile(snaps, jd, cfg.branching(), cfg.horizon, radius=args.radius)
    _emit(cfg, args, [*_xcols("r", jd.dim), "observed", "predicted"], list(prof.rows()),
          {"survivors": prof.survivors, "total_mean": prof.total_mean})


HANDLERS = {
    ("kernel", "p"): _kernel_p,
    ("kernel", "green"): _kernel_green,
    ("gw", "pmf"): _gw_pmf,
    ("gw", "tail"): _gw_tail,
    ("moments", "m1"): _moments_m1,
    ("moments", "m2"): _moments_m2,
    ("moments", "cond-m2"): _moments_cond_m2,
    ("simulate", "subpop"): _simulate_subpop,
    ("simulate", "field"): _simulate_field,
    ("clusters", "gaps"): _clusters_gaps,
    ("clusters", "cells"): _clusters_cells,
    ("clusters", "profile"): _clusters_profile,
}


def dispatch(cfg, group, command, args):
    handler = HANDLERS.get((group, command))
    if handler is None:
        raise UnknownSubcommand(f"unknown subcommand {group} {command}")
    handler(cfg, args)


def _load_config(args):
    if args.config:
        with open(args.config) as fh:
            base = parse_config(fh.read())
    else:
        base = RunConfig()
    return base.with_overrides(dim=args.dim, kappa=args.kappa, beta=args.beta,
                               horizon=args.horizon, window=args.window,
                               replicas=args.replicas, seed=args.seed, cap=args.cap,
                               threads=args.threads, format=args.format,
                               precision=args.precision)


def _error_payload(exc):
    payload = {"error": getattr(exc, "code", "runtime_error"), "type": type(exc).__name__,
               "message": str(exc)}
    for attr in ("line", "field", "kind"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    if getattr(exc, "labels", None):
        payload["labels"] = [list(lab) for lab in exc.labels]
    return json.dumps(payload, sort_keys=True)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        msg = str(exc)
        if "invalid choice" in msg:
            sys.stderr.write(_error_payload(UnknownSubcommand(msg)) + "\n")
        else:
            sys.stderr.write(msg + "\n")
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        cfg = _load_config(args)
        dispatch(cfg, args.group, args.command, args)
    except BRWError as exc:
        sys.stderr.write(_error_payload(exc) + "\n")
        return 1
    except (ValueError, ArithmeticError, OSError, TypeError) as exc:
        sys.stderr.write(_error_payload(exc) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
