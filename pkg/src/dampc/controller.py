"""Dual MPC over the robust tube: predicted parameter set, predicted tube,
worst-case epigraph cost, and the alternating-LP solver for the bilinear
program.  The passive controller is the prediction-free special case.

The predicted parameter set appends to the current set {Ht theta <= ht} the
rows that the next measurement would add if the plant behaved exactly like
the point estimate:

    H_app(v0) = -Hw D_k(v0),      h_app(v0) = hw - Hw D_k(v0) theta_hat,

with D_k(v0) the regressor at (x_k, K x_k + v0).  Both pieces are affine in
v0, so the predicted-tube containment rows contain products of the predicted
multipliers with affine functions of v0 -- the bilinearity that the
alternating solver splits:

    step A: v0 frozen (variable bounds), everything else free -> one LP;
    step B: predicted multipliers frozen at their step-A values, all tube
            variables and every input correction (v0 included) free -> one LP.

Each step restricts to a set containing the previous iterate, so the
objective trace is nonincreasing start by start.  The passive optimum, padded
with copied predicted variables and zero columns on the appended rows, is
feasible for the dual program, which keeps the dual objective at or below the
passive one and provides the fallback if every start fails.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import NumericalFailureError
from .identify import ParameterSet, PointEstimate
from .lp import EQ, LEQ, LinearProgram, LpStatus, solve_lp
from .polytopes import HPolytope
from .system import UncertainSystem, matrices_at, regressor
from .rng import SplitMix64
from .tube import ConstraintBlock, DecisionLayout, TubeConfig, build_layout, robust_blocks

SOLVED = "Solved"
INFEASIBLE = "Infeasible"
STALLED = "Stalled"


def predict_state(sys: UncertainSystem, est: PointEstimate, x_k, u_k) -> np.ndarray:
    """One-step state prediction at the point estimate."""
    A, B = matrices_at(sys, est.theta_hat)
    return A @ np.asarray(x_k, dtype=float) + B @ np.asarray(u_k, dtype=float)


@dataclass(frozen=True)
class PredictedParameterForm:
    """Current parameter rows plus the measurement rows anticipated for the
    upcoming step, the latter affine in the first input correction v0."""
    H_theta: np.ndarray
    h_theta: np.ndarray
    H_w: np.ndarray
    h_w: np.ndarray
    theta_hat: np.ndarray
    x_k: np.ndarray
    K: np.ndarray
    D_const: np.ndarray          # column i: (A_i + B_i K) x_k
    B_cols: tuple                # B_1..B_p, the v0-linear parts of each column

    @property
    def n_theta(self):
        return self.H_theta.shape[0]

    @property
    def n_w(self):
        return self.H_w.shape[0]

    def regressor_at(self, v0) -> np.ndarray:
        v0 = np.asarray(v0, dtype=float)
        return self.D_const + np.column_stack([B @ v0 for B in self.B_cols])

    def appended_at(self, v0):
        """(H_app, h_app) evaluated at a fixed v0."""
        D = self.regressor_at(v0)
        return -self.H_w @ D, self.h_w - self.H_w @ (D @ self.theta_hat)

    def stacked_at(self, v0):
        """(H, h) of the predicted set at a fixed v0."""
        H_app, h_app = self.appended_at(v0)
        return np.vstack([self.H_theta, H_app]), np.concatenate([self.h_theta, h_app])


def predicted_form(sys: UncertainSystem, ps: ParameterSet, est: PointEstimate,
                   x_k, K) -> PredictedParameterForm:
    x_k = np.asarray(x_k, dtype=float)
    K = np.asarray(K, dtype=float)
    D_const = np.column_stack([(Ai + Bi @ K) @ x_k
                               for Ai, Bi in zip(sys.A[1:], sys.B[1:])])
    return PredictedParameterForm(
        H_theta=ps.H, h_theta=ps.h, H_w=sys.W.H, h_w=sys.W.h,
        theta_hat=np.asarray(est.theta_hat, dtype=float), x_k=x_k, K=K,
        D_const=D_const, B_cols=tuple(sys.B[1:]))


def predicted_set_at(form: PredictedParameterForm, v0) -> HPolytope:
    H, h = form.stacked_at(v0)
    return HPolytope(H, h)


def predicted_anchor_rows(block: ConstraintBlock, tube: TubeConfig, x_k):
    """The predicted tube starts at the same measured state as the robust one."""
    lay = block.layout
    Hx = tube.X0.H
    z_idx = np.arange(lay.start(("zhat", 0)), lay.start(("zhat", 0)) + Hx.shape[1])
    a_pos = lay.start(("ahat", 0))
    rhs = -Hx @ np.asarray(x_k, dtype=float)
    for r in range(tube.n_x):
        block.add_row(np.concatenate([z_idx, [a_pos]]),
                      np.concatenate([-Hx[r], [-1.0]]), LEQ, rhs[r])


def predicted_blocks(sys: UncertainSystem, tube: TubeConfig, form: PredictedParameterForm,
                     n_hat: int, layout: DecisionLayout, v0) -> ConstraintBlock:
    """Predicted-tube containment rows with v0 frozen: the appended parameter
    rows are numeric, so the block is linear in the remaining variables.
    n_hat = 0 yields an empty block."""
    from .tube import _tube_dynamic_rows
    block = ConstraintBlock(layout)
    if n_hat == 0:
        return block
    Ht, ht = form.stacked_at(v0)
    for l in range(n_hat):
        _tube_dynamic_rows(block, sys, tube, Ht, ht, "lamhat",
                           ("zhat", l), ("ahat", l), ("zhat", l + 1), ("ahat", l + 1),
                           ("v", l), l, -tube.w_bar)
    return block


def predicted_blocks_fixed_multipliers(sys: UncertainSystem, tube: TubeConfig,
                                       form: PredictedParameterForm, n_hat: int,
                                       layout: DecisionLayout, lam_hat) -> ConstraintBlock:
    """Predicted-tube rows with the multipliers frozen numerically: products
    with the v0-affine appended rows turn into linear terms on v0, so the
    block is linear in all tube variables and inputs.  lam_hat[(l, j)] is the
    n_x-by-(n_theta + n_w) multiplier from the preceding v0-frozen solve."""
    block = ConstraintBlock(layout)
    if n_hat == 0:
        return block
    Hx = tube.X0.H
    K = tube.K
    n_th = form.n_theta
    M = [Ai + Bi @ K for Ai, Bi in zip(sys.A, sys.B)]
    HxM0, HxB0 = Hx @ M[0], Hx @ sys.B[0]
    M_hat = sum(th * B for th, B in zip(form.theta_hat, form.B_cols))
    c_hat = form.D_const @ form.theta_hat
    v0_idx = np.arange(layout.start(("v", 0)), layout.start(("v", 0)) + sys.m)
    for l in range(n_hat):
        z_sl = layout.sl(("zhat", l))
        zn_sl = layout.sl(("zhat", l + 1))
        a_pos = layout.start(("ahat", l))
        an_pos = layout.start(("ahat", l + 1))
        v_idx = np.arange(layout.start(("v", l)), layout.start(("v", l)) + sys.m)
        z_idx = np.arange(z_sl.start, z_sl.stop)
        zn_idx = np.arange(zn_sl.start, zn_sl.stop)
        for j in range(tube.v):
            xj = tube.vertices[j]
            lam = np.asarray(lam_hat[(l, j)], dtype=float)
            for r in range(tube.n_x):
                lam_th, lam_w = lam[r, :n_th], lam[r, n_th:]
                yw = lam_w @ form.H_w
                # multiplier-weighted offset: constant part plus v0-linear part
                const = lam_th @ form.h_theta + lam_w @ form.h_w - yw @ c_hat
                cols = np.concatenate([z_idx, [a_pos], v_idx, zn_idx, [an_pos], v0_idx])
                vals = np.concatenate([HxM0[r], [HxM0[r] @ xj], HxB0[r],
                                       -Hx[r], [-1.0], -(yw @ M_hat)])
                block.add_row(cols, vals, LEQ, -tube.w_bar[r] - const)
                for c in range(1, len(sys.A)):
                    HxMc, HxBc = Hx @ M[c], Hx @ sys.B[c]
                    rhs = lam_th @ form.H_theta[:, c - 1] - yw @ form.D_const[:, c - 1]
                    cols = np.concatenate([z_idx, [a_pos], v_idx, v0_idx])
                    vals = np.concatenate([HxMc[r], [HxMc[r] @ xj], HxBc[r],
                                           yw @ sys.B[c]])
                    block.add_row(cols, vals, EQ, rhs)
    return block


def _check_positive_definite(Mname, Mmat):
    Mmat = np.asarray(Mmat, dtype=float)
    if Mmat.ndim != 2 or Mmat.shape[0] != Mmat.shape[1]:
        raise ValueError(f"{Mname} must be square, got {Mmat.shape}")
    for k in range(1, Mmat.shape[0] + 1):
        if np.linalg.det(Mmat[:k, :k]) <= 0:
            raise ValueError(f"{Mname} is not positive definite "
                             f"(leading {k}x{k} minor nonpositive)")


def cost_epigraph(sys: UncertainSystem, tube: TubeConfig, Q, R, n_hat: int,
                  layout: DecisionLayout):
    """Worst-case stage-cost epigraph.  Stage l bounds, for each cross-section
    vertex, the state term a >= |[Q x]_r| and the input term
    b >= |[R (K x + v)]_r|, then t_l >= a + b.  Stages 0..n_hat read the
    predicted cross-sections, later stages the robust ones; the terminal stage
    has no input correction.  Returns (objective vector, block); the objective
    maximizes -sum(t), i.e. minimizes the summed worst-case cost."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    _check_positive_definite("Q", Q)
    _check_positive_definite("R", R)
    block = ConstraintBlock(layout)
    N = tube.N
    RK = R @ tube.K
    for l in range(N + 1):
        predicted = 1 <= n_hat and l <= n_hat
        z_key = ("zhat", l) if predicted else ("z", l)
        a_key = ("ahat", l) if predicted else ("alpha", l)
        z_idx = np.arange(layout.start(z_key), layout.start(z_key) + sys.n)
        a_pos = layout.start(a_key)
        has_v = l < N
        if has_v:
            v_idx = np.arange(layout.start(("v", l)), layout.start(("v", l)) + sys.m)
        t_pos = layout.start(("t", l))
        for j in range(tube.v):
            xj = tube.vertices[j]
            caux = layout.start(("caux", l, j))
            a_var, b_var = caux, caux + 1
            for r in range(sys.n):
                for sgn in (1.0, -1.0):
                    block.add_row(np.concatenate([z_idx, [a_pos], [a_var]]),
                                  np.concatenate([sgn * Q[r], [sgn * (Q[r] @ xj)], [-1.0]]),
                                  LEQ, 0.0)
            for r in range(sys.m):
                for sgn in (1.0, -1.0):
                    cols = np.concatenate([z_idx, [a_pos], [b_var]])
                    vals = np.concatenate([sgn * RK[r], [sgn * (RK[r] @ xj)], [-1.0]])
                    if has_v:
                        cols = np.concatenate([cols, v_idx])
                        vals = np.concatenate([vals, sgn * R[r]])
                    block.add_row(cols, vals, LEQ, 0.0)
            block.add_row([a_var, b_var, t_pos], [1.0, 1.0, -1.0], LEQ, 0.0)
    objective = np.zeros(layout.n)
    for l in range(N + 1):
        objective[layout.start(("t", l))] = -1.0
    return objective, block


@dataclass
class DualDecision:
    """Everything the optimizer chose, unpacked from the stacked LP point."""
    z: np.ndarray                  # (N+1, n)
    alpha: np.ndarray              # (N+1,)
    v: np.ndarray                  # (N, m)
    lam: dict                      # (l, j) -> (n_x, n_theta)
    z_hat: Optional[np.ndarray]    # (n_hat+1, n) or None
    alpha_hat: Optional[np.ndarray]
    lam_hat: Optional[dict]        # (l, j) -> (n_x, n_theta + n_w)
    t: np.ndarray                  # (N+1,)
    point: np.ndarray              # raw stacked vector


def _unpack(layout: DecisionLayout, point, sys, tube, ps, n_hat) -> DualDecision:
    point = np.asarray(point, dtype=float)
    N, n, m, n_x, n_th = tube.N, sys.n, sys.m, tube.n_x, ps.n_rows
    z = np.array([point[layout.sl(("z", l))] for l in range(N + 1)])
    alpha = np.array([point[layout.start(("alpha", l))] for l in range(N + 1)])
    v = np.array([point[layout.sl(("v", l))] for l in range(N)]).reshape(N, m)
    lam = {(l, j): point[layout.sl(("lam", l, j))].reshape(n_x, n_th)
           for l in range(N) for j in range(tube.v)}
    z_hat = alpha_hat = lam_hat = None
    if n_hat >= 1:
        z_hat = np.array([point[layout.sl(("zhat", l))] for l in range(n_hat + 1)])
        alpha_hat = np.array([point[layout.start(("ahat", l))] for l in range(n_hat + 1)])
        lam_hat = {(l, j): point[layout.sl(("lamhat", l, j))].reshape(n_x, n_th + sys.n_w)
                   for l in range(n_hat) for j in range(tube.v)}
    t = np.array([point[layout.start(("t", l))] for l in range(N + 1)])
    return DualDecision(z, alpha, v, lam, z_hat, alpha_hat, lam_hat, t, point)


@dataclass
class SolveReport:
    status: str
    v0: Optional[np.ndarray]
    decision: Optional[DualDecision]
    objective: float
    outer_iterations: int
    trace: list
    passive_objective: Optional[float] = None
    n_starts: int = 1
    audit_violation: float = 0.0

    @property
    def solved(self):
        return self.status in (SOLVED, STALLED)


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-6
    max_outer: int = 30
    multistarts: int = 4   # perturbed starts carried through the alternation
    lp_backend: str = "highs"
    audit_tol: float = 1e-6
    # optional external refiner: (x_k, incumbent v0) -> candidate v0 to try as
    # one extra start; lets a nonlinear solver cross-check the alternation
    refiner: Optional[Callable] = None


def _violation(block: ConstraintBlock, point) -> float:
    mat, senses, rhs = block.matrix()
    if not senses:
        return 0.0
    lhs = mat @ point
    worst = 0.0
    for i, s in enumerate(senses):
        gap = lhs[i] - rhs[i] if s == LEQ else abs(lhs[i] - rhs[i])
        worst = max(worst, gap)
    return float(worst)


def _solve_block_lp(objective, block: ConstraintBlock, lb, ub, backend):
    mat, senses, rhs = block.matrix()
    prob = LinearProgram(objective, mat, senses, rhs, lb=lb, ub=ub)
    out = solve_lp(prob, backend=backend)
    if out.status == LpStatus.NUMERICAL_FAILURE:
        raise NumericalFailureError("controller LP did not solve cleanly")
    return out


def solve_pampc(sys: UncertainSystem, tube: TubeConfig, ps: ParameterSet, Q, R,
                x_k, opts: SolveOptions = SolveOptions()) -> SolveReport:
    """Passive solve: one LP, robust tube plus epigraph cost, no prediction."""
    x_k = np.asarray(x_k, dtype=float)
    layout = build_layout(sys, tube, ps, n_hat=0, cost=True)
    block = robust_blocks(sys, tube, ps, x_k, layout=layout)
    objective, cost_block = cost_epigraph(sys, tube, Q, R, 0, layout)
    block.extend(cost_block)
    out = _solve_block_lp(objective, block, layout.lower_bounds(), None, opts.lp_backend)
    if out.status == LpStatus.INFEASIBLE:
        return SolveReport(INFEASIBLE, None, None, np.inf, 1, [])
    if out.status != LpStatus.OPTIMAL:
        raise NumericalFailureError(f"passive solve ended {out.status}")
    decision = _unpack(layout, out.point, sys, tube, ps, 0)
    obj = -out.value
    return SolveReport(SOLVED, decision.v[0].copy(), decision, obj, 1, [obj],
                       passive_objective=obj)


def _input_box(sys: UncertainSystem, x_k, K, backend):
    """Per-coordinate bounds of the input corrections v admissible at x_k
    (bounding box of {u : G u <= 1 - F x_k}, shifted by -K x_k).  Used only to
    seed multistarts, so the box over-approximation is harmless."""
    x_k = np.asarray(x_k, dtype=float)
    rhs = 1.0 - sys.F @ x_k
    lo, hi = np.empty(sys.m), np.empty(sys.m)
    for i in range(sys.m):
        e = np.zeros(sys.m)
        e[i] = 1.0
        for sign, dest in ((1.0, hi), (-1.0, lo)):
            out = solve_lp(LinearProgram(sign * e, sys.G, [LEQ] * sys.n_c, rhs),
                           backend=backend)
            if out.status != LpStatus.OPTIMAL:
                # unbounded or empty input set: fall back to a unit box
                dest[i] = sign
            else:
                dest[i] = sign * out.value
    shift = np.asarray(K, dtype=float) @ x_k
    return lo - shift, hi - shift


def _padded_passive_point(passive: SolveReport, sys, tube, ps, n_hat,
                          layout: DecisionLayout, p_layout: DecisionLayout) -> np.ndarray:
    """Embed the passive optimum in the dual layout: predicted tube copies the
    robust one and the appended multiplier columns are zero, which satisfies
    the predicted rows at any v0."""
    point = np.zeros(layout.n)
    src = passive.decision.point
    for l in range(tube.N + 1):
        point[layout.sl(("z", l))] = src[p_layout.sl(("z", l))]
        point[layout.start(("alpha", l))] = src[p_layout.start(("alpha", l))]
    for l in range(tube.N):
        point[layout.sl(("v", l))] = src[p_layout.sl(("v", l))]
        for j in range(tube.v):
            point[layout.sl(("lam", l, j))] = src[p_layout.sl(("lam", l, j))]
    n_th = ps.n_rows
    for l in range(n_hat + 1):
        point[layout.sl(("zhat", l))] = src[p_layout.sl(("z", l))]
        point[layout.start(("ahat", l))] = src[p_layout.start(("alpha", l))]
    for l in range(n_hat):
        for j in range(tube.v):
            lam = src[p_layout.sl(("lam", l, j))].reshape(tube.n_x, n_th)
            padded = np.hstack([lam, np.zeros((tube.n_x, sys.n_w))])
            point[layout.sl(("lamhat", l, j))] = padded.reshape(-1)
    for l in range(tube.N + 1):
        point[layout.start(("t", l))] = src[p_layout.start(("t", l))]
        for j in range(tube.v):
            point[layout.sl(("caux", l, j))] = src[p_layout.sl(("caux", l, j))]
    return point


def solve_dampc(sys: UncertainSystem, tube: TubeConfig, ps: ParameterSet,
                est: PointEstimate, Q, R, x_k, n_hat: int,
                opts: SolveOptions = SolveOptions(),
                rng: Optional[SplitMix64] = None) -> SolveReport:
    """Dual solve by alternating LPs with multistart over v0.

    n_hat = 0 is exactly the passive problem and delegates to solve_pampc so
    the two paths cannot drift apart.
    """
    if n_hat == 0:
        return solve_pampc(sys, tube, ps, Q, R, x_k, opts)
    if n_hat > tube.N:
        raise ValueError(f"prediction horizon {n_hat} exceeds tube horizon {tube.N}")
    x_k = np.asarray(x_k, dtype=float)
    rng = rng if rng is not None else SplitMix64(0)

    passive = solve_pampc(sys, tube, ps, Q, R, x_k, opts)
    if passive.status != SOLVED:
        return passive

    form = predicted_form(sys, ps, est, x_k, tube.K)
    layout = build_layout(sys, tube, ps, n_hat=n_hat, cost=True)
    p_layout = build_layout(sys, tube, ps, n_hat=0, cost=True)

    base = robust_blocks(sys, tube, ps, x_k, layout=layout)
    predicted_anchor_rows(base, tube, x_k)
    objective, cost_block = cost_epigraph(sys, tube, Q, R, n_hat, layout)
    base.extend(cost_block)
    lb0 = layout.lower_bounds()
    v0_sl = layout.sl(("v", 0))

    lo, hi = _input_box(sys, x_k, tube.K, opts.lp_backend)
    # Perturbation ladder: one input coordinate at a time, both signs, three
    # magnitude rungs toward the admissible-input bound.  Full-box samples
    # almost never satisfy the tube rows, and a single random magnitude
    # either hugs the passive point (where the alternation cannot escape its
    # own fixed point) or overshoots moderate probing levels entirely.  Each
    # rung is priced with one frozen-v0 LP; only the best few starts pay for
    # the full alternation.
    samples = []
    for c in range(sys.m):
        for bound in (hi[c], lo[c]):
            for frac in (0.2, 0.45, 0.9):
                v0 = passive.v0.copy()
                v0[c] += (frac + 0.05 * rng.uniform()) * (bound - v0[c])
                samples.append(((c, bound), v0))

    def solve_fixed_v0(v0, probe=False):
        blk = ConstraintBlock(layout).extend(base)
        blk.extend(predicted_blocks(sys, tube, form, n_hat, layout, v0))
        lb = lb0.copy()
        ub = np.full(layout.n, np.inf)
        lb[v0_sl] = v0
        ub[v0_sl] = v0
        obj = np.zeros(layout.n) if probe else objective
        return blk, _solve_block_lp(obj, blk, lb, ub, opts.lp_backend)

    def repair(sample):
        """Pull an infeasible perturbation toward the passive v0 until the
        frozen-v0 program admits it; keeps the perturbation direction so
        exploring samples stay exploring."""
        if solve_fixed_v0(sample, probe=True)[1].status == LpStatus.OPTIMAL:
            return sample
        lo_l, hi_l = 0.0, 1.0
        for _ in range(5):
            mid = 0.5 * (lo_l + hi_l)
            cand = passive.v0 + mid * (sample - passive.v0)
            if solve_fixed_v0(cand, probe=True)[1].status == LpStatus.OPTIMAL:
                lo_l = mid
            else:
                hi_l = mid
        if lo_l == 0.0:
            return None
        return passive.v0 + 0.9 * lo_l * (sample - passive.v0)

    def solve_fixed_lam(lam_hat):
        blk = ConstraintBlock(layout).extend(base)
        blk.extend(predicted_blocks_fixed_multipliers(sys, tube, form, n_hat,
                                                      layout, lam_hat))
        return _solve_block_lp(objective, blk, lb0, None, opts.lp_backend)

    # price every start with one LP; the frozen-v0 objective is exact
    scored, idx = [], 1
    _, out0 = solve_fixed_v0(passive.v0)
    if out0.status == LpStatus.OPTIMAL:
        scored.append((-out0.value, 0, passive.v0.copy(), out0))
    by_direction = {}
    for key, v0 in samples:
        _, out = solve_fixed_v0(v0)
        ok = out.status == LpStatus.OPTIMAL
        by_direction.setdefault(key, []).append((ok, v0))
        if ok:
            scored.append((-out.value, idx, v0, out))
            idx += 1
    # a direction whose whole ladder is infeasible still gets one repaired
    # try: pull its smallest rung toward the passive v0 until admissible
    for key, tries in by_direction.items():
        if any(ok for ok, _ in tries):
            continue
        fixed = repair(tries[0][1])
        if fixed is None:
            continue
        _, out = solve_fixed_v0(fixed)
        if out.status == LpStatus.OPTIMAL:
            scored.append((-out.value, idx, fixed, out))
            idx += 1
    if opts.refiner is not None:
        cand = opts.refiner(x_k, passive.v0.copy())
        if cand is not None:
            _, out = solve_fixed_v0(np.asarray(cand, dtype=float))
            if out.status == LpStatus.OPTIMAL:
                scored.append((-out.value, idx, np.asarray(cand, dtype=float),
                               out))
                idx += 1

    # the passive start always alternates; the rest compete on the priced
    # objective, deduplicated
    scored.sort(key=lambda t: (t[1] != 0, t[0], t[1]))
    keep, seen_v0 = [], []
    for cand in scored:
        if cand[1] != 0 and any(np.max(np.abs(cand[2] - s)) <= 1e-9
                                for s in seen_v0):
            continue
        keep.append(cand)
        seen_v0.append(cand[2])
        if len(keep) >= 1 + opts.multistarts:
            break

    results = []
    for obj0, idx, v0, out in keep:
        trace = [obj0]
        point, cur_v0 = out.point, np.asarray(v0, dtype=float)
        iters = 1
        while iters < opts.max_outer:
            dec = _unpack(layout, point, sys, tube, ps, n_hat)
            outB = solve_fixed_lam(dec.lam_hat)
            if outB.status != LpStatus.OPTIMAL:
                break
            candidate_v0 = outB.point[v0_sl].copy()
            _, outA = solve_fixed_v0(candidate_v0)
            if outA.status != LpStatus.OPTIMAL:
                break
            iters += 1
            objA = -outA.value
            if objA > trace[-1] - opts.tol:
                # converged (or LP wobble); keep the better of the two points
                if objA < trace[-1]:
                    trace.append(objA)
                    point, cur_v0 = outA.point, candidate_v0
                break
            trace.append(min(-outB.value, trace[-1]))
            trace.append(objA)
            point, cur_v0 = outA.point, candidate_v0
        results.append((trace[-1], idx, cur_v0, point, iters, trace))

    if not results:
        point = _padded_passive_point(passive, sys, tube, ps, n_hat, layout, p_layout)
        decision = _unpack(layout, point, sys, tube, ps, n_hat)
        return SolveReport(STALLED, passive.v0.copy(), decision, passive.objective,
                           1, [passive.objective], passive_objective=passive.objective,
                           n_starts=len(keep))

    def better(a, b):
        if a[0] < b[0] - 1e-9:
            return a
        if b[0] < a[0] - 1e-9:
            return b
        na, nb = np.max(np.abs(a[2])), np.max(np.abs(b[2]))
        if abs(na - nb) > 1e-12:
            return a if na < nb else b
        return a if a[1] <= b[1] else b

    best = results[0]
    for cand in results[1:]:
        best = better(best, cand)
    obj, _, v0, point, iters, trace = best

    # independent audit: rebuild every row at the returned v0 and re-check
    audit_block, _ = solve_fixed_v0_rows_only(sys, tube, ps, form, n_hat, layout,
                                              base, v0)
    viol = max(_violation(audit_block, point),
               float(np.max(np.maximum(lb0 - point, 0.0))))
    if viol > opts.audit_tol or obj > passive.objective + 1e-9:
        point = _padded_passive_point(passive, sys, tube, ps, n_hat, layout, p_layout)
        decision = _unpack(layout, point, sys, tube, ps, n_hat)
        return SolveReport(STALLED, passive.v0.copy(), decision, passive.objective,
                           iters, trace, passive_objective=passive.objective,
                           n_starts=len(keep), audit_violation=viol)
    decision = _unpack(layout, point, sys, tube, ps, n_hat)
    return SolveReport(SOLVED, np.asarray(v0, dtype=float), decision, obj, iters,
                       trace, passive_objective=passive.objective,
                       n_starts=len(keep), audit_violation=viol)


def solve_fixed_v0_rows_only(sys, tube, ps, form, n_hat, layout, base, v0):
    """All rows of the dual program at a frozen v0, including the v0 pin,
    for auditing a candidate point independently of the alternation."""
    blk = ConstraintBlock(layout).extend(base)
    blk.extend(predicted_blocks(sys, tube, form, n_hat, layout, v0))
    v0_sl = layout.sl(("v", 0))
    idx = np.arange(v0_sl.start, v0_sl.stop)
    for i, pos in enumerate(idx):
        blk.add_row([pos], [1.0], EQ, float(np.asarray(v0, dtype=float)[i]))
    return blk, v0_sl
