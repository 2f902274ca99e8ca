"""Command line interface.

Exit codes: 0 success, 2 infeasible or falsified, 3 numerical failure,
4 configuration error.
"""

import argparse
import json
import os
import sys

from .config import config_from_dict, load_config
from .controller import SolveOptions
from .errors import ConfigError, DampcError, NumericalFailureError
from .outputs import (emit_outputs, parse_traces_csv, write_offline_json,
                      write_parameter_sets_svg, write_trajectories_svg)
from .runner import (closed_loop_cost, compare, offline_artifacts,
                     run_closed_loop)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


def _parse_seeds(text):
    """'A..B' inclusive range, or comma-separated integers."""
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s != ""]


def _write_meta(outdir, doc, extra=None):
    meta = {"config": doc}
    if extra:
        meta.update(extra)
    path = os.path.join(outdir, "run_meta.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    return path


def _load(config_path):
    with open(config_path) as f:
        doc = json.load(f)
    return load_config(config_path), doc


def cmd_offline(args):
    cfg, doc = _load(args.config)
    art = offline_artifacts(cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "offline.json")
    write_offline_json(art, path)
    g = art.gain
    print(f"alpha_bar = {art.tube.alpha_bar:.6f}")
    print(f"gain: spectral radius {g.max_radius:.4f} over {g.n_vertices} vertices "
          f"+ {g.n_samples} samples (stable={g.stable})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args):
    cfg, doc = _load(args.config)
    if args.controller == "dampc" and args.nhat is None:
        raise ConfigError("--nhat is required with --controller dampc")
    n_hat = args.nhat or 0
    art = offline_artifacts(cfg)
    trace = run_closed_loop(cfg, args.controller, args.seed, n_hat=n_hat,
                            artifacts=art, opts=SolveOptions())
    cost = closed_loop_cost(trace, cfg.Q, cfg.R)
    os.makedirs(args.out, exist_ok=True)
    _write_meta(args.out, doc,
                {"command": "simulate", "controller": args.controller,
                 "n_hat": n_hat, "seed": args.seed})
    written, notes = emit_outputs(trace, args.out, cfg)
    print(f"{args.controller}{n_hat if args.controller == 'dampc' else ''} "
          f"seed {args.seed}: closed-loop cost {cost:.6f} over {cfg.T} steps")
    for p in written.values():
        print(f"wrote {p}")
    for note in notes:
        print(note)
    return EXIT_OK


def cmd_compare(args):
    cfg, doc = _load(args.config)
    seeds = _parse_seeds(args.seeds) if args.seeds else None
    if args.jobs != 1:
        print("note: --jobs is reserved; running single-process", file=sys.stderr)
    art = offline_artifacts(cfg)
    progress = (lambda s: print(s, file=sys.stderr)) if not args.quiet else None
    report = compare(cfg, seeds=seeds, artifacts=art, progress=progress)
    os.makedirs(args.out, exist_ok=True)
    _write_meta(args.out, doc, {"command": "compare",
                                "seeds": list(report.seeds)})
    written, notes = emit_outputs(report, args.out, cfg)
    print(f"{'controller':<10} {'mean':>10} {'median':>10} {'reduction%':>11} {'runs':>5}")
    for label in report.labels:
        ok = sum(1 for r in report.results(label) if r.feasible)
        print(f"{label:<10} {report.mean_cost[label]:>10.4f} "
              f"{report.median_cost[label]:>10.4f} "
              f"{report.reduction_vs_passive[label]:>11.2f} "
              f"{ok:>3}/{len(report.seeds)}")
    for p in written.values():
        print(f"wrote {p}")
    for note in notes:
        print(note)
    if any(not r.feasible for r in report.runs):
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_plot(args):
    meta_path = os.path.join(args.indir, "run_meta.json")
    traces_path = os.path.join(args.indir, "traces.csv")
    for p in (meta_path, traces_path):
        if not os.path.exists(p):
            raise ConfigError(f"missing {p}")
    with open(meta_path) as f:
        meta = json.load(f)
    cfg = config_from_dict(meta["config"])
    traces = parse_traces_csv(traces_path)
    wrote = []
    ppath = os.path.join(args.indir, "parameter_sets.svg")
    if write_parameter_sets_svg(traces, cfg, ppath):
        wrote.append(ppath)
    jpath = os.path.join(args.indir, "trajectories.svg")
    if write_trajectories_svg(traces, cfg, jpath):
        wrote.append(jpath)
    for p in wrote:
        print(f"wrote {p}")
    if not wrote:
        print("nothing to plot (need 2 states / 2 parameters)")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="dampc",
                                 description="tube MPC with active exploration")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="tightening constants, terminal scaling, gain report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_offline)

    p = sub.add_parser("simulate", help="one closed-loop run")
    p.add_argument("--config", required=True)
    p.add_argument("--controller", required=True, choices=["pampc", "dampc"])
    p.add_argument("--nhat", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("compare", help="all controllers over a seed batch")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", default=None, help="'A..B' or comma list; default from config")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1, help="reserved")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("plot", help="re-render SVGs from a run directory")
    p.add_argument("--in", dest="indir", required=True)
    p.set_defaults(fn=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DampcError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
