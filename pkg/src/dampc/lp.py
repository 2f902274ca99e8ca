"""Dense linear-program solver with a pluggable backend interface.

The embedded backend is a two-phase revised simplex on the standard form
``max c.x  s.t.  A x = b, x >= 0``:

* free variables are split, shifted or mirrored according to their bounds;
* phase 1 minimizes the sum of artificial variables from an identity basis;
* the basis inverse is maintained by product-form (eta) updates with periodic
  refactorization;
* pricing is by largest reduced cost with first-index tie-breaking, switching
  to Bland's rule after ``BLAND_AFTER`` degenerate pivots so cycling cannot
  persist;
* exceeding the iteration cap or a singular refactorization yields the
  explicit ``NUMERICAL_FAILURE`` status, never a silent wrong answer.

``register_backend`` lets callers swap in an alternate solver without
touching call sites; a scipy/HiGHS adapter is registered when scipy is
available and is what the MPC assembly code requests for its large sparse
programs.  Robustness beats speed here: every optimal outcome is re-checked
against the original rows before it is returned.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FEAS_TOL = 1e-8
OPT_TOL = 1e-8
PIVOT_TOL = 1e-9
BLAND_AFTER = 500
REFACTOR_EVERY = 64

LEQ = "<="
EQ = "="


class LpStatus:
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


def _as_dense(rows):
    if hasattr(rows, "toarray"):
        return rows.toarray()
    return np.asarray(rows, dtype=float)


@dataclass
class LinearProgram:
    """``maximize objective . x`` subject to per-row ``<=`` / ``=`` constraints
    and optional per-variable bounds (default free)."""

    objective: np.ndarray
    rows: object                      # (m, n) ndarray or scipy sparse matrix
    senses: list
    rhs: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        n = self.objective.shape[0]
        m = self.rhs.shape[0]
        shape = self.rows.shape
        if shape != (m, n):
            raise ValueError(f"rows shape {shape} inconsistent with {m} rhs / {n} objective entries")
        self.senses = list(self.senses)
        if len(self.senses) != m:
            raise ValueError(f"{len(self.senses)} senses for {m} rows")
        for s in self.senses:
            if s not in (LEQ, EQ):
                raise ValueError(f"unknown sense {s!r}")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bound vectors inconsistent with objective length")

    @property
    def n_vars(self):
        return self.objective.shape[0]

    @property
    def n_rows(self):
        return self.rhs.shape[0]


@dataclass
class LpOutcome:
    status: str
    point: Optional[np.ndarray] = None
    value: float = float("nan")
    dual: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == LpStatus.OPTIMAL


@dataclass
class FeasibilityResult:
    feasible: bool
    point: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# embedded revised simplex
# ---------------------------------------------------------------------------


class _Breakdown(Exception):
    pass


def _refactor(A, b, basis):
    B = A[:, basis]
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError as exc:
        raise _Breakdown("singular basis") from exc
    xB = Binv @ b
    xB[np.abs(xB) < 1e-12] = 0.0
    if xB.min(initial=0.0) < -1e-7:
        raise _Breakdown("basis lost feasibility")
    return Binv, xB


class _SimplexCore:
    """Operates on standard form max c.x, Ax = b (b >= 0), x >= 0."""

    def __init__(self, A, b, max_iterations):
        self.A = A
        self.b = b
        self.m, self.n = A.shape
        self.max_iterations = max_iterations
        self.iterations = 0
        self.degenerate = 0
        self.bland = False
        self.basis = None
        self.Binv = None
        self.xB = None
        self.in_basis = None

    def _pivot(self, j, pos):
        d = self.Binv @ self.A[:, j]
        piv = d[pos]
        theta = self.xB[pos] / piv
        self.xB -= theta * d
        self.xB[pos] = theta
        self.xB[np.abs(self.xB) < 1e-12] = 0.0
        self.Binv[pos] /= piv
        other = np.arange(self.m) != pos
        self.Binv[other] -= np.outer(d[other], self.Binv[pos])
        self.in_basis[self.basis[pos]] = False
        self.in_basis[j] = True
        self.basis[pos] = j

    def run(self, c, allowed):
        """Iterate to optimality of max c.x over columns where ``allowed``.
        Returns 'optimal' or 'unbounded'; raises _Breakdown past the budget."""
        while True:
            if self.iterations >= self.max_iterations:
                raise _Breakdown("iteration cap exceeded")
            self.iterations += 1
            if self.iterations % REFACTOR_EVERY == 0:
                self.Binv, self.xB = _refactor(self.A, self.b, self.basis)
            y = c[self.basis] @ self.Binv
            reduced = c - y @ self.A
            cand = allowed & ~self.in_basis & (reduced > OPT_TOL)
            if not cand.any():
                return "optimal"
            idx = np.nonzero(cand)[0]
            j = idx[0] if self.bland else idx[np.argmax(reduced[idx])]
            d = self.Binv @ self.A[:, j]
            rows = np.nonzero(d > PIVOT_TOL)[0]
            if rows.size == 0:
                return "unbounded"
            ratios = self.xB[rows] / d[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12]
            # smallest basis-variable index among ties keeps pivoting deterministic
            pos = tied[np.argmin(self.basis[tied])]
            if best <= 1e-11:
                self.degenerate += 1
                if self.degenerate >= BLAND_AFTER:
                    self.bland = True
            self._pivot(j, pos)


def _solve_standard(A, b, c, max_iterations):
    """Two-phase simplex.  Returns (status, x, y, iterations); y are duals of
    the rows of A (zeros for rows detected as redundant)."""
    m, n = A.shape
    core = _SimplexCore(np.hstack([A, np.eye(m)]), b, max_iterations)
    core.basis = np.arange(n, n + m)
    core.in_basis = np.zeros(n + m, dtype=bool)
    core.in_basis[core.basis] = True
    core.Binv = np.eye(m)
    core.xB = b.copy()

    c1 = np.zeros(n + m)
    c1[n:] = -1.0
    allowed = np.ones(n + m, dtype=bool)
    if core.run(c1, allowed) != "optimal":
        raise _Breakdown("phase 1 unbounded")  # impossible: objective <= 0
    if core.xB[core.basis >= n].sum(initial=0.0) > 1e-7:
        return LpStatus.INFEASIBLE, None, None, core.iterations

    # Drive remaining artificials out of the basis; rows that cannot release
    # their artificial are linearly dependent and get dropped.
    drop_rows = []
    for pos in range(m):
        if core.basis[pos] < n:
            continue
        row = core.Binv[pos] @ A
        pivots = np.nonzero((np.abs(row) > 1e-9) & ~core.in_basis[:n])[0]
        if pivots.size:
            core._pivot(pivots[0], pos)
        else:
            drop_rows.append(core.basis[pos] - n)

    keep = np.setdiff1d(np.arange(m), drop_rows)
    A2 = A[keep]
    b2 = b[keep]
    basis = np.array([bi for bi in core.basis if bi < n], dtype=int)
    if basis.size != keep.size:
        raise _Breakdown("basis bookkeeping failed after row drop")
    core2 = _SimplexCore(A2, b2, max_iterations)
    core2.iterations = core.iterations
    core2.degenerate = core.degenerate
    core2.bland = core.bland
    core2.basis = basis
    core2.in_basis = np.zeros(n, dtype=bool)
    core2.in_basis[basis] = True
    core2.Binv, core2.xB = _refactor(A2, b2, basis)

    outcome = core2.run(c, np.ones(n, dtype=bool))
    if outcome == "unbounded":
        return LpStatus.UNBOUNDED, None, None, core2.iterations
    x = np.zeros(n)
    x[core2.basis] = core2.xB
    y_kept = c[core2.basis] @ core2.Binv
    y = np.zeros(m)
    y[keep] = y_kept
    return LpStatus.OPTIMAL, x, y, core2.iterations


def _solve_simplex(prob: LinearProgram, max_iterations=None):
    A0 = _as_dense(prob.rows)
    m, n = prob.n_rows, prob.n_vars
    lb, ub = prob.lb, prob.ub
    if np.any(lb > ub):
        return LpOutcome(LpStatus.INFEASIBLE)

    # Column transforms to x >= 0 form: (kind, data) per original variable.
    cols = []          # columns of the standard-form matrix, built from A0
    recover = []       # (kind, payload) to map the standard solution back
    shift = np.zeros(n)
    extra_rows = []    # (std_col, cap) rows for doubly bounded variables
    for j in range(n):
        a = A0[:, j]
        if np.isneginf(lb[j]) and np.isposinf(ub[j]):
            recover.append(("split", len(cols)))
            cols.append(a)
            cols.append(-a)
        elif np.isneginf(lb[j]):
            recover.append(("mirror", len(cols), ub[j]))
            shift[j] = ub[j]
            cols.append(-a)
        else:
            recover.append(("shift", len(cols), lb[j]))
            shift[j] = lb[j]
            cols.append(a)
            if np.isfinite(ub[j]):
                extra_rows.append((len(cols) - 1, ub[j] - lb[j]))

    A1 = np.column_stack(cols) if cols else np.zeros((m, 0))
    b1 = prob.rhs - A0 @ shift
    senses = list(prob.senses)
    if extra_rows:
        bnd = np.zeros((len(extra_rows), A1.shape[1]))
        for i, (col, cap) in enumerate(extra_rows):
            bnd[i, col] = 1.0
        A1 = np.vstack([A1, bnd])
        b1 = np.concatenate([b1, [cap for _, cap in extra_rows]])
        senses += [LEQ] * len(extra_rows)

    n1 = A1.shape[1]
    c1 = np.zeros(n1)
    for j in range(n):
        kind = recover[j][0]
        col = recover[j][1]
        c1[col] += prob.objective[j] if kind != "mirror" else -prob.objective[j]
        if kind == "split":
            c1[col + 1] -= prob.objective[j]

    n_slack = sum(1 for s in senses if s == LEQ)
    S = np.zeros((len(senses), n_slack))
    k = 0
    for i, s in enumerate(senses):
        if s == LEQ:
            S[i, k] = 1.0
            k += 1
    A2 = np.hstack([A1, S])
    c2 = np.concatenate([c1, np.zeros(n_slack)])
    row_sign = np.where(b1 < 0, -1.0, 1.0)
    A2 = A2 * row_sign[:, None]
    b2 = b1 * row_sign

    if max_iterations is None:
        max_iterations = max(2000, 50 * (A2.shape[0] + A2.shape[1]))
    try:
        status, x_std, y_std, iters = _solve_standard(A2, b2, c2, max_iterations)
    except _Breakdown:
        return LpOutcome(LpStatus.NUMERICAL_FAILURE)
    if status == LpStatus.INFEASIBLE:
        return LpOutcome(LpStatus.INFEASIBLE, iterations=iters)
    if status == LpStatus.UNBOUNDED:
        return LpOutcome(LpStatus.UNBOUNDED, value=np.inf, iterations=iters)

    x = np.empty(n)
    for j, rec in enumerate(recover):
        if rec[0] == "split":
            x[j] = x_std[rec[1]] - x_std[rec[1] + 1]
        elif rec[0] == "mirror":
            x[j] = rec[2] - x_std[rec[1]]
        else:
            x[j] = rec[2] + x_std[rec[1]]
    y = (y_std * row_sign)[:m]
    out = LpOutcome(LpStatus.OPTIMAL, point=x, value=float(prob.objective @ x),
                    dual=y, iterations=iters)
    return _audit(prob, out)


# ---------------------------------------------------------------------------
# scipy/HiGHS backend
# ---------------------------------------------------------------------------


def _solve_highs(prob: LinearProgram, max_iterations=None):
    from scipy.optimize import linprog

    senses = np.array([s == LEQ for s in prob.senses])
    rows = prob.rows
    if not hasattr(rows, "toarray"):
        rows = np.asarray(rows, dtype=float)
    A_ub = rows[np.nonzero(senses)[0]] if senses.any() else None
    A_eq = rows[np.nonzero(~senses)[0]] if (~senses).any() else None
    bounds = [(None if np.isneginf(l) else l, None if np.isposinf(u) else u)
              for l, u in zip(prob.lb, prob.ub)]
    options = {}
    if max_iterations is not None:
        options["maxiter"] = max_iterations
    res = linprog(
        -prob.objective,
        A_ub=A_ub, b_ub=prob.rhs[senses] if senses.any() else None,
        A_eq=A_eq, b_eq=prob.rhs[~senses] if (~senses).any() else None,
        bounds=bounds, method="highs", options=options,
    )
    if res.status == 2:
        return LpOutcome(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpOutcome(LpStatus.UNBOUNDED, value=np.inf)
    if res.status != 0 or res.x is None:
        return LpOutcome(LpStatus.NUMERICAL_FAILURE)
    x = np.asarray(res.x, dtype=float)
    y = np.zeros(prob.n_rows)
    if senses.any():
        y[senses] = -np.asarray(res.ineqlin.marginals)
    if (~senses).any():
        y[~senses] = -np.asarray(res.eqlin.marginals)
    out = LpOutcome(LpStatus.OPTIMAL, point=x, value=float(prob.objective @ x),
                    dual=y, iterations=int(getattr(res, "nit", 0)))
    return _audit(prob, out)


def _audit(prob: LinearProgram, out: LpOutcome) -> LpOutcome:
    """Reject claimed-optimal points that violate the original rows."""
    x = out.point
    resid = prob.rows @ x - prob.rhs
    worst = 0.0
    for i, s in enumerate(prob.senses):
        worst = max(worst, resid[i] if s == LEQ else abs(resid[i]))
    worst = max(worst, np.max(prob.lb - x, initial=0.0), np.max(x - prob.ub, initial=0.0))
    if worst > 100 * FEAS_TOL:
        return LpOutcome(LpStatus.NUMERICAL_FAILURE, iterations=out.iterations)
    return out


# ---------------------------------------------------------------------------
# public interface
# ---------------------------------------------------------------------------

BACKENDS = {"simplex": _solve_simplex, "highs": _solve_highs}
DEFAULT_BACKEND = "simplex"


def register_backend(name, solver):
    BACKENDS[name] = solver


def solve_lp(prob: LinearProgram, backend=None, max_iterations=None) -> LpOutcome:
    """Solve ``max objective . x``.  ``backend`` defaults to the embedded
    simplex; large sparse callers pass ``"highs"``."""
    name = backend or DEFAULT_BACKEND
    if name not in BACKENDS:
        raise ValueError(f"unknown LP backend {name!r}")
    return BACKENDS[name](prob, max_iterations=max_iterations)


def solve_feasibility(rows, senses, rhs, lb=None, ub=None, backend=None) -> FeasibilityResult:
    """Find any point satisfying the rows, or report that none exists."""
    rows_arr = rows if hasattr(rows, "toarray") else np.asarray(rows, dtype=float)
    prob = LinearProgram(np.zeros(rows_arr.shape[1]), rows_arr, senses, rhs, lb=lb, ub=ub)
    out = solve_lp(prob, backend=backend)
    if out.status == LpStatus.OPTIMAL:
        return FeasibilityResult(True, out.point)
    if out.status == LpStatus.INFEASIBLE:
        return FeasibilityResult(False)
    from .errors import NumericalFailureError

    raise NumericalFailureError(f"feasibility solve ended with status {out.status}")
