"""Robust state tube over a scaled polytopic cross-section.

Cross-section l of the tube is {z_l} + alpha_l * X0 with X0 = {x : Hx x <= 1}
= conv{x^1..x^v} normalized so the support of X0 along each of its own rows
is one.  With prestabilized inputs u = K x + v_l, containment of the uncertain
one-step image of cross-section l in cross-section l+1 for every parameter in
the current set {theta : Ht theta <= ht} is equivalent to the existence of
nonnegative multipliers Lam_l^j (one n_x-by-n_theta matrix per step and
vertex) satisfying, for x_l^j = z_l + alpha_l x^j and u_l^j = K x_l^j + v_l,

    (dyn)  Lam_l^j ht + Hx d_l^j - alpha_{l+1} 1 <= -w_bar,
    (dir)  Hx D_l^j = Lam_l^j Ht,

where d_l^j is the nominal one-step defect A0 x_l^j + B0 u_l^j - z_{l+1},
D_l^j the uncertainty regressor at (x_l^j, u_l^j), and w_bar the row-wise
support of the disturbance set.  ``robust_blocks`` emits exactly these rows
plus the state/input constraints, initial-state anchoring and the terminal
conditions z_N = 0, alpha_N <= alpha_bar.

Decision-vector layout (fixed, addressed by name):

    ("z", l)        l = 0..N        tube centers               (n each, free)
    ("alpha", l)    l = 0..N        tube scalings               (1 each, >= 0)
    ("v", l)        l = 0..N-1      input corrections           (m each, free)
    ("lam", l, j)   l, j            multipliers, row-major      (n_x*n_theta, >= 0)

followed, when a prediction horizon is present, by ("zhat", l), ("ahat", l),
("lamhat", l, j) groups and the cost epigraph variables ("caux", l, j) and
("t", l) appended by the controller module.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import GainVerificationError, NoTerminalSetError
from .identify import ParameterSet
from .lp import LEQ, EQ, LinearProgram, LpStatus, solve_lp
from .polytopes import HPolytope, support, vertices_2d
from .rng import SplitMix64
from .system import UncertainSystem, matrices_at


class DecisionLayout:
    """Ordered named groups of a stacked decision vector with per-variable
    lower bounds (upper bounds are all +inf)."""

    def __init__(self):
        self._start = {}
        self._size = {}
        self.order = []
        self.n = 0
        self._lb = []

    def add(self, key, size, lb=-np.inf):
        if key in self._start:
            raise ValueError(f"duplicate layout group {key}")
        self._start[key] = self.n
        self._size[key] = size
        self.order.append(key)
        self.n += size
        self._lb.extend([lb] * size)
        return self

    def __contains__(self, key):
        return key in self._start

    def sl(self, key) -> slice:
        return slice(self._start[key], self._start[key] + self._size[key])

    def start(self, key) -> int:
        return self._start[key]

    def size(self, key) -> int:
        return self._size[key]

    def lower_bounds(self) -> np.ndarray:
        return np.array(self._lb, dtype=float)


class ConstraintBlock:
    """Rows over a DecisionLayout, accumulated sparsely."""

    def __init__(self, layout: DecisionLayout):
        self.layout = layout
        self._cols = []
        self._vals = []
        self.senses = []
        self.rhs = []

    @property
    def n_rows(self):
        return len(self.rhs)

    def add_row(self, cols, vals, sense, rhs):
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=float))
        self.senses.append(sense)
        self.rhs.append(float(rhs))

    def extend(self, other: "ConstraintBlock"):
        if other.layout is not self.layout:
            raise ValueError("cannot merge blocks over different layouts")
        self._cols.extend(other._cols)
        self._vals.extend(other._vals)
        self.senses.extend(other.senses)
        self.rhs.extend(other.rhs)
        return self

    def matrix(self):
        """(csr rows, senses list, rhs array)."""
        if not self.rhs:
            return sp.csr_matrix((0, self.layout.n)), [], np.zeros(0)
        lengths = np.array([c.size for c in self._cols])
        rows = np.repeat(np.arange(len(self._cols)), lengths)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(len(self.rhs), self.layout.n)).tocsr()
        return mat, list(self.senses), np.array(self.rhs)


@dataclass(frozen=True)
class TubeConfig:
    X0: HPolytope
    vertices: np.ndarray     # v x n hull vertices of X0
    K: np.ndarray            # prestabilizing gain, m x n
    N: int
    f_bar: np.ndarray        # vertex max of (F + G K) x over X0, per constraint row
    w_bar: np.ndarray        # support of W along each X0 row
    alpha_bar: float

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float))
        object.__setattr__(self, "f_bar", np.asarray(self.f_bar, dtype=float))
        object.__setattr__(self, "w_bar", np.asarray(self.w_bar, dtype=float))
        n = self.X0.dim
        if self.vertices.ndim != 2 or self.vertices.shape[1] != n:
            raise ValueError(f"vertex array shape {self.vertices.shape}")
        if self.K.shape[1] != n:
            raise ValueError(f"gain shape {self.K.shape} inconsistent with n={n}")
        if self.N < 1:
            raise ValueError("tube horizon must be at least 1")
        if self.alpha_bar < 0:
            raise ValueError("terminal scaling must be nonnegative")
        sup = self.X0.H @ self.vertices.T
        if np.max(np.abs(sup.max(axis=1) - 1.0)) > 1e-7:
            raise ValueError("X0 must be normalized: vertex support along each row must be 1")

    @property
    def n_x(self):
        return self.X0.n_rows

    @property
    def v(self):
        return self.vertices.shape[0]


@dataclass
class GainReport:
    max_radius: float
    worst_theta: np.ndarray
    n_vertices: int
    n_samples: int
    vertex_enumeration: bool
    stable: bool
    note: str = ("spectral radius below one at vertices and samples is necessary, "
                 "not sufficient, for robustness over the whole parameter set")

    def to_dict(self):
        return {
            "max_radius": self.max_radius,
            "worst_theta": list(map(float, self.worst_theta)),
            "n_vertices": self.n_vertices,
            "n_samples": self.n_samples,
            "vertex_enumeration": self.vertex_enumeration,
            "stable": self.stable,
            "note": self.note,
        }


def _theta_vertices(Theta: HPolytope, backend=None) -> np.ndarray:
    if Theta.dim == 1:
        hi = support(Theta, np.array([1.0]), backend=backend)
        lo = -support(Theta, np.array([-1.0]), backend=backend)
        return np.array([[lo], [hi]])
    if Theta.dim == 2:
        return vertices_2d(Theta, backend=backend)
    raise ValueError("vertex enumeration implemented for 1 or 2 parameters only")


def compute_offline(sys: UncertainSystem, X0: HPolytope, vertices, K, backend=None) -> tuple:
    """(f_bar, w_bar): constraint tightening and disturbance support terms."""
    vertices = np.asarray(vertices, dtype=float)
    FGK = sys.F + sys.G @ K
    f_bar = (FGK @ vertices.T).max(axis=1)
    w_bar = np.array([support(sys.W, row, backend=backend) for row in X0.H])
    return f_bar, w_bar


def verify_gain(sys: UncertainSystem, K, n_samples: int = 200, seed: int = 0,
                backend=None) -> GainReport:
    """Spectral radius of A(theta) + B(theta) K over parameter-set vertices
    (dimension <= 2) plus rejection-sampled interior points.  A radius >= 1
    anywhere raises, with the report attached."""
    K = np.asarray(K, dtype=float)
    try:
        verts = _theta_vertices(sys.Theta, backend=backend)
        enumerated = True
    except ValueError:
        verts = np.zeros((0, sys.p))
        enumerated = False

    stream = SplitMix64(seed)
    lo = np.array([-support(sys.Theta, -e, backend=backend) for e in np.eye(sys.p)])
    hi = np.array([support(sys.Theta, e, backend=backend) for e in np.eye(sys.p)])
    samples = []
    attempts = 0
    while len(samples) < n_samples and attempts < 100 * max(n_samples, 1):
        attempts += 1
        cand = np.array([stream.uniform_in(a, b) for a, b in zip(lo, hi)])
        if np.all(sys.Theta.H @ cand <= sys.Theta.h + 1e-12):
            samples.append(cand)

    worst = -np.inf
    worst_theta = None
    for theta in list(verts) + samples:
        A, B = matrices_at(sys, theta)
        radius = np.max(np.abs(np.linalg.eigvals(A + B @ K)))
        if radius > worst:
            worst, worst_theta = radius, np.asarray(theta, dtype=float)
    report = GainReport(float(worst), worst_theta, len(verts), len(samples),
                        enumerated, stable=bool(worst < 1.0))
    if not report.stable:
        raise GainVerificationError(
            f"gain destabilizes the loop at theta={worst_theta} (radius {worst:.4f})",
            report=report)
    return report


def compute_terminal_alpha(sys: UncertainSystem, X0: HPolytope, vertices, K,
                           tol: float = 1e-3, alpha_cap: float = 1e6,
                           backend=None) -> float:
    """Largest scaling alpha_bar (bisection grid of resolution tol) such that
    alpha_bar * X0 is robustly invariant under u = K x and constraint-
    admissible:

        (a) Hx A_cl(theta) (alpha x^j) + w_bar <= alpha 1   at all vertices,
        (b) (F + G K) (alpha x^j) <= 1.

    Both read g * alpha + c <= 0 row-wise, so the worst violation is convex
    piecewise-linear in alpha; its minimizer seeds the upward bisection.
    """
    vertices = np.asarray(vertices, dtype=float)
    K = np.asarray(K, dtype=float)
    _, w_bar = compute_offline(sys, X0, vertices, K, backend=backend)
    th_verts = _theta_vertices(sys.Theta, backend=backend)

    slopes, consts = [], []
    for theta in th_verts:
        A, B = matrices_at(sys, theta)
        Acl = A + B @ K
        for xj in vertices:
            g = X0.H @ (Acl @ xj) - 1.0
            slopes.append(g)
            consts.append(w_bar)
    FGK = sys.F + sys.G @ K
    for xj in vertices:
        slopes.append(FGK @ xj)
        consts.append(np.full(sys.n_c, -1.0))
    g = np.concatenate(slopes)
    c = np.concatenate(consts)

    def violation(alpha):
        return float(np.max(g * alpha + c))

    # minimize the convex piecewise-linear violation over [0, cap]
    rows = np.column_stack([g, -np.ones_like(g)])
    rows = np.vstack([rows, [[-1.0, 0.0]], [[1.0, 0.0]]])
    rhs = np.concatenate([-c, [0.0], [alpha_cap]])
    out = solve_lp(LinearProgram(np.array([0.0, -1.0]), rows, [LEQ] * rows.shape[0], rhs),
                   backend=backend)
    if out.status != LpStatus.OPTIMAL:
        raise NoTerminalSetError(f"violation minimization ended {out.status}")
    alpha_star, min_violation = out.point[0], out.point[1]
    if min_violation > tol:
        raise NoTerminalSetError(
            f"no scaling admits the invariance conditions (best violation {min_violation:.3e})")
    if violation(alpha_cap) <= tol:
        return float(alpha_cap)
    lo, hi = alpha_star, alpha_cap
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if violation(mid) <= tol:
            lo = mid
        else:
            hi = mid
    return float(lo)


def build_layout(sys: UncertainSystem, tube: TubeConfig, ps: ParameterSet,
                 n_hat: int = 0, cost: bool = False) -> DecisionLayout:
    """Canonical layout; see the module docstring for the documented order."""
    N, n, m = tube.N, sys.n, sys.m
    n_x, v, n_th = tube.n_x, tube.v, ps.n_rows
    lay = DecisionLayout()
    for l in range(N + 1):
        lay.add(("z", l), n)
    for l in range(N + 1):
        lay.add(("alpha", l), 1, lb=0.0)
    for l in range(N):
        lay.add(("v", l), m)
    for l in range(N):
        for j in range(v):
            lay.add(("lam", l, j), n_x * n_th, lb=0.0)
    if n_hat >= 1:
        for l in range(n_hat + 1):
            lay.add(("zhat", l), n)
        for l in range(n_hat + 1):
            lay.add(("ahat", l), 1, lb=0.0)
        for l in range(n_hat):
            for j in range(v):
                lay.add(("lamhat", l, j), n_x * (n_th + sys.n_w), lb=0.0)
    if cost:
        for l in range(N + 1):
            for j in range(v):
                lay.add(("caux", l, j), 2)  # state part, input part
        for l in range(N + 1):
            lay.add(("t", l), 1)
    return lay


def _tube_dynamic_rows(block: ConstraintBlock, sys: UncertainSystem, tube: TubeConfig,
                       Ht, ht, lam_key, z_key, a_key, znext_key, anext_key, v_key,
                       l, extra_rhs):
    """Containment rows for one tube step: multiplier (dyn) inequalities and
    (dir) equalities for every cross-section vertex.  extra_rhs is -w_bar."""
    lay = block.layout
    Hx = tube.X0.H
    K = tube.K
    n_th = Ht.shape[0]
    M = [Ai + Bi @ K for Ai, Bi in zip(sys.A, sys.B)]
    HxM0 = Hx @ M[0]
    HxB0 = Hx @ sys.B[0]
    z_sl, a_sl = lay.sl(z_key), lay.sl(a_key)
    zn_sl, an_sl = lay.sl(znext_key), lay.sl(anext_key)
    v_sl = lay.sl(v_key)
    z_idx = np.arange(z_sl.start, z_sl.stop)
    zn_idx = np.arange(zn_sl.start, zn_sl.stop)
    v_idx = np.arange(v_sl.start, v_sl.stop)
    for j in range(tube.v):
        xj = tube.vertices[j]
        lam_start = lay.start((lam_key, l, j))
        for r in range(tube.n_x):
            lam_idx = np.arange(lam_start + r * n_th, lam_start + (r + 1) * n_th)
            cols = np.concatenate([lam_idx, z_idx, [a_sl.start], v_idx, zn_idx, [an_sl.start]])
            vals = np.concatenate([ht, HxM0[r], [HxM0[r] @ xj], HxB0[r], -Hx[r], [-1.0]])
            block.add_row(cols, vals, LEQ, extra_rhs[r])
        for c in range(1, len(sys.A)):
            HxMc = Hx @ M[c]
            HxBc = Hx @ sys.B[c]
            for r in range(tube.n_x):
                lam_idx = np.arange(lam_start + r * n_th, lam_start + (r + 1) * n_th)
                cols = np.concatenate([z_idx, [a_sl.start], v_idx, lam_idx])
                vals = np.concatenate([HxMc[r], [HxMc[r] @ xj], HxBc[r], -Ht[:, c - 1]])
                block.add_row(cols, vals, EQ, 0.0)


def robust_blocks(sys: UncertainSystem, tube: TubeConfig, ps: ParameterSet, x_k,
                  layout: Optional[DecisionLayout] = None) -> ConstraintBlock:
    """All rows of the robust tube program at state x_k: state/input
    constraints, initial anchoring, multiplier containment for every step and
    vertex, and the terminal conditions."""
    x_k = np.asarray(x_k, dtype=float)
    lay = layout if layout is not None else build_layout(sys, tube, ps)
    block = ConstraintBlock(lay)
    N = tube.N
    Hx = tube.X0.H
    FGK = sys.F + sys.G @ tube.K

    for l in range(N):  # (F + G K) z_l + G v_l + alpha_l f_bar <= 1
        z_idx = np.arange(lay.start(("z", l)), lay.start(("z", l)) + sys.n)
        v_idx = np.arange(lay.start(("v", l)), lay.start(("v", l)) + sys.m)
        a_pos = lay.start(("alpha", l))
        for i in range(sys.n_c):
            block.add_row(np.concatenate([z_idx, v_idx, [a_pos]]),
                          np.concatenate([FGK[i], sys.G[i], [tube.f_bar[i]]]),
                          LEQ, 1.0)

    z0_idx = np.arange(lay.start(("z", 0)), lay.start(("z", 0)) + sys.n)
    a0_pos = lay.start(("alpha", 0))
    rhs0 = -Hx @ x_k
    for r in range(tube.n_x):  # x_k inside the first cross-section
        block.add_row(np.concatenate([z0_idx, [a0_pos]]),
                      np.concatenate([-Hx[r], [-1.0]]), LEQ, rhs0[r])

    for l in range(N):
        _tube_dynamic_rows(block, sys, tube, ps.H, ps.h, "lam",
                           ("z", l), ("alpha", l), ("z", l + 1), ("alpha", l + 1),
                           ("v", l), l, -tube.w_bar)

    zN = lay.start(("z", N))
    for i in range(sys.n):  # terminal center at the origin
        block.add_row([zN + i], [1.0], EQ, 0.0)
    block.add_row([lay.start(("alpha", N))], [1.0], LEQ, tube.alpha_bar)
    return block
