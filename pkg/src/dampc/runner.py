"""Closed-loop experiments: identify -> solve -> apply -> step the plant.

One run = one controller, one seed.  The comparison harness replays the same
disturbance substream for every controller at a given seed, so cost
differences come from the inputs alone (common random numbers).
"""

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .controller import INFEASIBLE, SolveOptions, solve_dampc, solve_pampc
from .errors import (DampcError, FalsifiedError, InfeasibleRunError,
                     InfeasibleStartError, NumericalFailureError)
from .identify import (PointEstimate, build_nonfalsified,
                       initial_parameter_set, lms_update, update_parameter_set)
from .rng import substream
from .system import SequenceDisturbance, TruthModel, UniformDisturbance, step_truth
from .tube import (GainReport, TubeConfig, compute_offline,
                   compute_terminal_alpha, verify_gain)


@dataclass(frozen=True)
class OfflineArtifacts:
    tube: TubeConfig
    gain: GainReport

    def as_dict(self) -> dict:
        return {
            "f_bar": self.tube.f_bar.tolist(),
            "w_bar": self.tube.w_bar.tolist(),
            "alpha_bar": self.tube.alpha_bar,
            "gain": {
                "max_radius": self.gain.max_radius,
                "worst_theta": self.gain.worst_theta.tolist(),
                "n_vertices": self.gain.n_vertices,
                "n_samples": self.gain.n_samples,
                "vertex_enumeration": self.gain.vertex_enumeration,
                "stable": self.gain.stable,
            },
        }


def offline_artifacts(cfg: ExperimentConfig, backend=None) -> OfflineArtifacts:
    """Everything computed once per experiment: tightening constants, the
    terminal scaling, and the gain's spectral-radius report."""
    gain = verify_gain(cfg.system, cfg.K)
    f_bar, w_bar = compute_offline(cfg.system, cfg.X0, cfg.vertices, cfg.K,
                                   backend=backend)
    alpha_bar = compute_terminal_alpha(cfg.system, cfg.X0, cfg.vertices, cfg.K,
                                       tol=cfg.bisection_tol, backend=backend)
    tube = TubeConfig(cfg.X0, cfg.vertices, cfg.K, cfg.N, f_bar, w_bar, alpha_bar)
    return OfflineArtifacts(tube, gain)


@dataclass
class StepRecord:
    k: int
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray              # realized disturbance taking x to the next state
    h_theta: np.ndarray        # parameter-set offsets in force at this step
    theta_hat: np.ndarray
    z: np.ndarray              # tube centers, (N+1, n)
    alpha: np.ndarray          # tube scalings, (N+1,)
    stage_cost: float
    status: str
    outer_iterations: int
    objective: float
    passive_objective: float
    wall_time: float           # excluded from CSV output (nondeterministic)


@dataclass
class ClosedLoopTrace:
    controller: str            # "pampc" or "dampc"
    n_hat: int
    seed: int
    x0: np.ndarray
    records: list = field(default_factory=list)
    x_final: Optional[np.ndarray] = None
    failure: Optional[str] = None

    @property
    def complete(self):
        return self.failure is None and self.x_final is not None

    def states(self) -> np.ndarray:
        xs = [r.x for r in self.records]
        if self.x_final is not None:
            xs = xs + [self.x_final]
        elif not xs:
            xs = [self.x0]
        return np.asarray(xs)

    def inputs(self) -> np.ndarray:
        return np.asarray([r.u for r in self.records]).reshape(len(self.records), -1)


def controller_label(kind: str, n_hat: int) -> str:
    return "pampc" if kind == "pampc" else f"dampc{n_hat}"


def _disturbance_law(cfg: ExperimentConfig, seed: int):
    if cfg.disturbance == "zero":
        return SequenceDisturbance([np.zeros(cfg.system.n)] * cfg.T)
    return UniformDisturbance(cfg.system.W, substream(seed, "disturbance"))


def run_closed_loop(cfg: ExperimentConfig, kind: str, seed: int,
                    n_hat: int = 0, artifacts: Optional[OfflineArtifacts] = None,
                    opts: SolveOptions = SolveOptions()) -> ClosedLoopTrace:
    """Receding-horizon loop with set-membership identification.

    Identification starts at k = 1 (the first transition is observed then);
    k = 0 solves on the initial parameter set.  Infeasibility at k = 0 raises
    InfeasibleStartError, later steps InfeasibleRunError; identification
    inconsistency raises FalsifiedError.  All carry the partial trace.
    """
    if kind not in ("pampc", "dampc"):
        raise ValueError(f"unknown controller kind {kind!r}")
    if kind == "pampc":
        n_hat = 0
    if artifacts is None:
        artifacts = offline_artifacts(cfg)
    sys, tube = cfg.system, artifacts.tube

    ps = initial_parameter_set(sys.Theta, n_theta=cfg.n_theta,
                               H_explicit=cfg.H_theta)
    est = PointEstimate(cfg.theta_hat0.copy(), cfg.mu0)
    truth = TruthModel(sys, cfg.theta_star, _disturbance_law(cfg, seed))
    ms_rng = substream(seed, "multistart")
    trace = ClosedLoopTrace(kind, n_hat, seed, cfg.x0.copy())
    data = deque(maxlen=cfg.window)
    x = cfg.x0.copy()

    for k in range(cfg.T):
        try:
            if k >= 1:
                delta = build_nonfalsified(sys, list(data))
                ps = update_parameter_set(ps, delta, backend=opts.lp_backend)
                est = lms_update(est, ps, sys, *data[-1])
            t0 = time.perf_counter()
            if n_hat == 0:
                rep = solve_pampc(sys, tube, ps, cfg.Q, cfg.R, x, opts)
            else:
                rep = solve_dampc(sys, tube, ps, est, cfg.Q, cfg.R, x, n_hat,
                                  opts, rng=ms_rng)
            wall = time.perf_counter() - t0
        except (FalsifiedError, NumericalFailureError) as e:
            trace.failure = f"{type(e).__name__} at k={k}: {e}"
            e.trace = trace
            raise
        if rep.status == INFEASIBLE:
            trace.failure = f"Infeasible at k={k}"
            cls = InfeasibleStartError if k == 0 else InfeasibleRunError
            raise cls(f"optimization infeasible at step {k}", trace=trace)

        u = tube.K @ x + rep.v0
        x_next, w = step_truth(truth, x, u)
        stage = float(np.max(np.abs(cfg.Q @ x)) + np.max(np.abs(cfg.R @ u)))
        trace.records.append(StepRecord(
            k=k, x=x.copy(), u=np.asarray(u, dtype=float), w=w.copy(),
            h_theta=ps.h.copy(), theta_hat=est.theta_hat.copy(),
            z=rep.decision.z.copy(), alpha=rep.decision.alpha.copy(),
            stage_cost=stage, status=rep.status,
            outer_iterations=rep.outer_iterations,
            objective=float(rep.objective),
            passive_objective=float(rep.passive_objective), wall_time=wall))
        data.append((x, u, x_next))
        x = x_next

    trace.x_final = x.copy()
    return trace


def closed_loop_cost(trace: ClosedLoopTrace, Q, R) -> float:
    """Realized cost sum_k ||Q x_k||_inf + ||R u_k||_inf over applied steps."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    return float(sum(np.max(np.abs(Q @ r.x)) + np.max(np.abs(R @ r.u))
                     for r in trace.records))


@dataclass
class RunResult:
    label: str
    kind: str
    n_hat: int
    seed: int
    trace: ClosedLoopTrace
    cost: float                # nan when the run failed
    feasible: bool
    final_h_theta: Optional[np.ndarray]


@dataclass
class ComparisonReport:
    labels: list               # controller labels in run order
    seeds: list
    runs: list                 # RunResult, ordered (seed-major, label-minor)
    mean_cost: dict
    median_cost: dict
    reduction_vs_passive: dict  # percent, positive = cheaper than passive

    def results(self, label: str) -> list:
        return [r for r in self.runs if r.label == label]


def compare(cfg: ExperimentConfig, seeds=None,
            opts: SolveOptions = SolveOptions(),
            artifacts: Optional[OfflineArtifacts] = None,
            progress=None) -> ComparisonReport:
    """Run every controller on every seed with shared disturbance streams.

    Per-run failures are recorded in the report, not raised; the batch always
    completes.
    """
    seeds = list(cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    if artifacts is None:
        artifacts = offline_artifacts(cfg)
    controllers = [("pampc", 0)] + [("dampc", nh) for nh in cfg.n_hat]
    labels = [controller_label(k, nh) for k, nh in controllers]

    runs = []
    for seed in seeds:
        for (kind, nh), label in zip(controllers, labels):
            if progress:
                progress(f"run {label} seed={seed}")
            try:
                trace = run_closed_loop(cfg, kind, seed, n_hat=nh,
                                        artifacts=artifacts, opts=opts)
                cost = closed_loop_cost(trace, cfg.Q, cfg.R)
                final_h = trace.records[-1].h_theta if trace.records else None
                runs.append(RunResult(label, kind, nh, seed, trace, cost,
                                      True, final_h))
            except (DampcError,) as e:
                partial = getattr(e, "trace", None) or ClosedLoopTrace(
                    kind, nh, seed, cfg.x0.copy(), failure=str(e))
                if progress:
                    progress(f"  failed: {partial.failure}")
                runs.append(RunResult(label, kind, nh, seed, partial,
                                      float("nan"), False, None))

    mean_cost, median_cost = {}, {}
    for label in labels:
        costs = [r.cost for r in runs if r.label == label and r.feasible]
        mean_cost[label] = float(np.mean(costs)) if costs else float("nan")
        median_cost[label] = float(np.median(costs)) if costs else float("nan")
    passive = mean_cost.get("pampc", float("nan"))
    reduction = {}
    for label in labels:
        reduction[label] = float(100.0 * (passive - mean_cost[label]) / passive) \
            if passive and np.isfinite(passive) else float("nan")
    return ComparisonReport(labels, seeds, runs, mean_cost, median_cost,
                            reduction)
