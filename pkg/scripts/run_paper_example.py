#!/usr/bin/env python3
"""Benchmark comparison on the bundled two-state example.

Computes the offline tube constants, then runs the passive controller and the
dual controllers (exploration horizons from the config) over a batch of seeds
with shared disturbance sequences, and writes traces.csv / summary.csv plus
SVG views of the trajectories and final parameter sets.

    python3 scripts/run_paper_example.py --out results/paper_example
    python3 scripts/run_paper_example.py --seeds 0..4      # quick look
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dampc.cli import _parse_seeds  # noqa: E402
from dampc.config import load_config  # noqa: E402
from dampc.outputs import emit_outputs, write_offline_json  # noqa: E402
from dampc.runner import compare, offline_artifacts  # noqa: E402

DEFAULT_CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs",
                              "paper_example.json")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=DEFAULT_CONFIG)
    ap.add_argument("--out", default="results/paper_example")
    ap.add_argument("--seeds", default=None,
                    help="'A..B' or comma list; default: the config's batch")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args()

    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds) if args.seeds else None

    t0 = time.time()
    art = offline_artifacts(cfg)
    print(f"offline: alpha_bar = {art.tube.alpha_bar:.6f}, "
          f"gain spectral radius <= {art.gain.max_radius:.4f} "
          f"({time.time() - t0:.2f}s)")

    progress = None if args.quiet else (lambda s: print(s, file=sys.stderr))
    t0 = time.time()
    report = compare(cfg, seeds=seeds, artifacts=art, progress=progress)
    wall = time.time() - t0

    # per-seed costs, one line per seed
    print(f"\n{'seed':>4}  " + "  ".join(f"{l:>10}" for l in report.labels))
    for seed in report.seeds:
        row = [f"{seed:>4}"]
        for label in report.labels:
            run = next(r for r in report.runs
                       if r.label == label and r.seed == seed)
            row.append(f"{run.cost:>10.4f}" if run.feasible else
                       f"{'infeas':>10}")
        print("  ".join(row))

    print(f"\n{'controller':<10} {'mean':>10} {'median':>10} {'reduction%':>11}")
    for label in report.labels:
        print(f"{label:<10} {report.mean_cost[label]:>10.4f} "
              f"{report.median_cost[label]:>10.4f} "
              f"{report.reduction_vs_passive[label]:>11.2f}")
    print(f"\nbatch wall time: {wall / 60.0:.1f} min")

    os.makedirs(args.out, exist_ok=True)
    write_offline_json(art, os.path.join(args.out, "offline.json"))
    written, notes = emit_outputs(report, args.out, cfg)
    for p in written.values():
        print(f"wrote {p}")
    for note in notes:
        print(note)
    return 0


if __name__ == "__main__":
    sys.exit(main())
