"""File outputs: lossless CSV logs and SVG views of runs and comparisons.

Floats are written with repr(), which round-trips exactly; wall times are
deliberately left out of the CSVs so repeated runs with the same seed produce
byte-identical files.
"""

import csv
import json
import os
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .identify import initial_parameter_set
from .polytopes import HPolytope, vertices_2d
from .runner import ClosedLoopTrace, ComparisonReport, StepRecord


def _fmt(x) -> str:
    return repr(float(x))


def _trace_header(n, m, p, n_theta, N) -> list:
    cols = ["controller", "n_hat", "seed", "k"]
    cols += [f"x_{i}" for i in range(n)]
    cols += [f"u_{i}" for i in range(m)]
    cols += [f"w_{i}" for i in range(n)]
    cols += [f"theta_hat_{i}" for i in range(p)]
    cols += [f"h_theta_{i}" for i in range(n_theta)]
    cols += [f"z_{l}_{i}" for l in range(N + 1) for i in range(n)]
    cols += [f"alpha_{l}" for l in range(N + 1)]
    cols += ["stage_cost", "status", "outer_iterations", "objective",
             "passive_objective"]
    return cols


def write_traces_csv(traces, path) -> None:
    """One row per applied step plus one final-state row per run (only the
    state columns filled).  Header dimensions follow the first nonempty run."""
    sized = next((t for t in traces if t.records), None)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        if sized is None:
            # nothing ran: emit the identifying columns only
            w.writerow(["controller", "n_hat", "seed", "k"])
            return
        r0 = sized.records[0]
        n, m, p = r0.x.size, r0.u.size, r0.theta_hat.size
        n_theta, N = r0.h_theta.size, r0.alpha.size - 1
        header = _trace_header(n, m, p, n_theta, N)
        w.writerow(header)
        pad = len(header) - 4 - n
        for t in traces:
            ident = [t.controller, t.n_hat, t.seed]
            for r in t.records:
                row = ident + [r.k]
                row += [_fmt(v) for v in r.x]
                row += [_fmt(v) for v in r.u]
                row += [_fmt(v) for v in r.w]
                row += [_fmt(v) for v in r.theta_hat]
                row += [_fmt(v) for v in r.h_theta]
                row += [_fmt(v) for v in r.z.ravel()]
                row += [_fmt(v) for v in r.alpha]
                row += [_fmt(r.stage_cost), r.status, r.outer_iterations,
                        _fmt(r.objective), _fmt(r.passive_objective)]
                w.writerow(row)
            if t.x_final is not None:
                row = ident + [len(t.records)]
                row += [_fmt(v) for v in t.x_final]
                row += [""] * pad
                w.writerow(row)


def parse_traces_csv(path) -> list:
    """Inverse of write_traces_csv up to wall times (not logged, read as 0)."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or len(rows) == 1:
        return []
    header = rows[0]

    def span(prefix):
        return [i for i, c in enumerate(header) if c.startswith(prefix)]

    ix, iu, iw = span("x_"), span("u_"), span("w_")
    ith, ih = span("theta_hat_"), span("h_theta_")
    iz, ia = span("z_"), span("alpha_")
    fixed = {c: header.index(c) for c in
             ("controller", "n_hat", "seed", "k", "stage_cost", "status",
              "outer_iterations", "objective", "passive_objective")}
    n = len(ix)

    traces, current, key = [], None, None
    for row in rows[1:]:
        ident = (row[fixed["controller"]], int(row[fixed["n_hat"]]),
                 int(row[fixed["seed"]]))
        if ident != key:
            current = ClosedLoopTrace(ident[0], ident[1], ident[2],
                                      x0=np.full(n, np.nan))
            traces.append(current)
            key = ident
        x = np.array([float(row[i]) for i in ix])
        if row[iu[0]] == "":
            current.x_final = x
            continue
        rec = StepRecord(
            k=int(row[fixed["k"]]), x=x,
            u=np.array([float(row[i]) for i in iu]),
            w=np.array([float(row[i]) for i in iw]),
            h_theta=np.array([float(row[i]) for i in ih]),
            theta_hat=np.array([float(row[i]) for i in ith]),
            z=np.array([float(row[i]) for i in iz]).reshape(len(ia), n),
            alpha=np.array([float(row[i]) for i in ia]),
            stage_cost=float(row[fixed["stage_cost"]]),
            status=row[fixed["status"]],
            outer_iterations=int(row[fixed["outer_iterations"]]),
            objective=float(row[fixed["objective"]]),
            passive_objective=float(row[fixed["passive_objective"]]),
            wall_time=0.0)
        current.records.append(rec)
        if not np.any(np.isfinite(current.x0)):
            current.x0 = rec.x.copy()
    return traces


def write_summary_csv(report: ComparisonReport, path) -> None:
    """Per-run rows followed by one aggregate row per controller (seed empty)."""
    cols = ["controller", "seed", "cost", "feasible", "final_support_max",
            "final_support_mean", "mean_cost", "median_cost",
            "reduction_vs_pampc_pct"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in report.runs:
            hmax = _fmt(np.max(r.final_h_theta)) if r.final_h_theta is not None else ""
            hmean = _fmt(np.mean(r.final_h_theta)) if r.final_h_theta is not None else ""
            w.writerow([r.label, r.seed,
                        _fmt(r.cost) if np.isfinite(r.cost) else "nan",
                        int(r.feasible), hmax, hmean, "", "", ""])
        for label in report.labels:
            w.writerow([label, "", "", "", "", "",
                        _fmt(report.mean_cost[label]),
                        _fmt(report.median_cost[label]),
                        _fmt(report.reduction_vs_passive[label])])


def _agg():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _final_polytopes(report_or_traces, cfg):
    """(label, final parameter polytope) for the first completed run of each
    controller."""
    base = initial_parameter_set(cfg.system.Theta, n_theta=cfg.n_theta,
                                 H_explicit=cfg.H_theta)
    out, seen = [], set()
    if isinstance(report_or_traces, ComparisonReport):
        runs = [(r.label, r.trace) for r in report_or_traces.runs if r.feasible]
    else:
        runs = [(f"{t.controller}{t.n_hat if t.controller != 'pampc' else ''}", t)
                for t in report_or_traces if t.complete]
    for label, trace in runs:
        if label in seen or not trace.records:
            continue
        seen.add(label)
        out.append((label, HPolytope(base.H, trace.records[-1].h_theta)))
    return out


def write_parameter_sets_svg(report_or_traces, cfg: ExperimentConfig, path):
    """Final 2-D parameter polygons per controller with the true parameter
    marked; requires a 2-parameter system."""
    if cfg.system.p != 2:
        return False
    plt = _agg()
    fig, ax = plt.subplots(figsize=(5, 5))
    init = vertices_2d(cfg.system.Theta)
    ring = np.vstack([init, init[:1]])
    ax.plot(ring[:, 0], ring[:, 1], "k--", lw=0.8, label="initial set")
    for label, P in _final_polytopes(report_or_traces, cfg):
        V = vertices_2d(P)
        ring = np.vstack([V, V[:1]])
        ax.plot(ring[:, 0], ring[:, 1], lw=1.4, label=label)
    ax.plot([cfg.theta_star[0]], [cfg.theta_star[1]], "r*", ms=10,
            label="true parameter")
    ax.set_xlabel("theta_1")
    ax.set_ylabel("theta_2")
    ax.set_title("final parameter sets")
    ax.legend(fontsize=8)
    ax.set_aspect("equal")
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return True


def write_trajectories_svg(traces, cfg: ExperimentConfig, path):
    """Closed-loop state paths in the plane, one color per controller."""
    if cfg.system.n != 2:
        return False
    plt = _agg()
    fig, ax = plt.subplots(figsize=(5, 5))
    colors = {}
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for t in traces:
        if not t.records:
            continue
        label = t.controller if t.controller == "pampc" else f"dampc{t.n_hat}"
        if label not in colors:
            colors[label] = cycle[len(colors) % len(cycle)]
        xs = t.states()
        ax.plot(xs[:, 0], xs[:, 1], color=colors[label], lw=1.0, alpha=0.6,
                label=label if label not in ax.get_legend_handles_labels()[1] else None)
    ax.plot([cfg.x0[0]], [cfg.x0[1]], "ks", ms=6, label="x0")
    ax.plot([0], [0], "k+", ms=10)
    ax.set_xlabel("x_1")
    ax.set_ylabel("x_2")
    ax.set_title("closed-loop trajectories")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return True


def emit_outputs(obj, outdir, cfg: ExperimentConfig):
    """Write traces.csv, summary.csv (comparisons only) and the SVG views.

    Returns (written, notes): paths written and human-readable skip notices.
    """
    os.makedirs(outdir, exist_ok=True)
    written, notes = {}, []
    if isinstance(obj, ComparisonReport):
        traces = [r.trace for r in obj.runs]
        spath = os.path.join(outdir, "summary.csv")
        write_summary_csv(obj, spath)
        written["summary"] = spath
    elif isinstance(obj, ClosedLoopTrace):
        traces = [obj]
    else:
        traces = list(obj)

    tpath = os.path.join(outdir, "traces.csv")
    write_traces_csv(traces, tpath)
    written["traces"] = tpath

    ppath = os.path.join(outdir, "parameter_sets.svg")
    if write_parameter_sets_svg(obj if isinstance(obj, ComparisonReport) else traces,
                                cfg, ppath):
        written["parameter_sets"] = ppath
    else:
        notes.append(f"parameter_sets.svg skipped: {cfg.system.p} parameters (need 2)")

    jpath = os.path.join(outdir, "trajectories.svg")
    if write_trajectories_svg(traces, cfg, jpath):
        written["trajectories"] = jpath
    else:
        notes.append(f"trajectories.svg skipped: {cfg.system.n} states (need 2)")
    return written, notes


def write_offline_json(artifacts, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(artifacts.as_dict(), f, indent=2)
        f.write("\n")
