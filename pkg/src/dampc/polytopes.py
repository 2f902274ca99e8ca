"""Halfspace polytopes and scaled tube cross-sections.

A polytope is stored as rows ``H x <= h``.  Tube cross-sections are
translated scalings ``{z} + alpha * X0`` of a fixed shape set ``X0``; the
containment test between two cross-sections is exact when ``X0`` is
normalized so its support along every one of its own rows equals one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptySetError, NumericalFailureError, UnboundedSetError
from .lp import LEQ, LinearProgram, LpStatus, solve_feasibility, solve_lp

DEDUP_TOL = 1e-7


@dataclass(frozen=True)
class HPolytope:
    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if H.ndim != 2 or h.ndim != 1 or H.shape[0] != h.shape[0]:
            raise ValueError(f"inconsistent polytope data: H {H.shape}, h {h.shape}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self):
        return self.H.shape[1]

    @property
    def n_rows(self):
        return self.H.shape[0]


@dataclass(frozen=True)
class TubeCross:
    """Cross-section {z} + alpha * X0 for a shared shape set X0."""

    z: np.ndarray
    alpha: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.alpha < 0:
            raise ValueError(f"cross-section scaling must be >= 0, got {self.alpha}")


def support(P: HPolytope, direction, backend=None) -> float:
    """max direction . x over P.  Raises on empty or unbounded-in-direction P."""
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (P.dim,):
        raise ValueError(f"direction shape {direction.shape} for dim {P.dim}")
    out = solve_lp(LinearProgram(direction, P.H, [LEQ] * P.n_rows, P.h), backend=backend)
    if out.status == LpStatus.OPTIMAL:
        return out.value
    if out.status == LpStatus.INFEASIBLE:
        raise EmptySetError("support of empty polytope")
    if out.status == LpStatus.UNBOUNDED:
        raise UnboundedSetError(f"polytope unbounded along {direction}")
    raise NumericalFailureError("support LP failed numerically")


def contains(P: HPolytope, x, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(P.H @ x <= P.h + tol))


def cross_contains(outer: TubeCross, inner: TubeCross, Hx: np.ndarray, tol: float = 1e-9) -> bool:
    """Whether inner subset-of outer, both scalings of the same normalized X0
    with rows Hx.  Exact test: Hx (z_in - z_out) <= (a_out - a_in) * 1."""
    lhs = Hx @ (inner.z - outer.z) + inner.alpha
    return bool(np.all(lhs <= outer.alpha + tol))


def _hull_ccw(pts: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns CCW-ordered extreme points."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    if len(pts) <= 2:
        return pts

    def turn(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and turn(out[-2], out[-1], p) <= 1e-12:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _dedup(pts, tol):
    kept = []
    for p in pts:
        if all(np.max(np.abs(p - q)) > tol for q in kept):
            kept.append(p)
    return np.array(kept)


def vertices_2d(P: HPolytope, backend=None) -> np.ndarray:
    """Vertex enumeration for 2-D polytopes by sequential halfplane clipping.

    Returns CCW-ordered vertices deduplicated at 1e-7; a degenerate (segment
    or point) set comes back as its 2 or 1 distinct points.
    """
    if P.dim != 2:
        raise ValueError(f"vertices_2d requires dimension 2, got {P.dim}")
    feas = solve_feasibility(P.H, [LEQ] * P.n_rows, P.h, backend=backend)
    if not feas.feasible:
        raise EmptySetError("vertex enumeration of empty polytope")
    los, his = [], []
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1.0
        his.append(support(P, e, backend=backend))
        los.append(-support(P, -e, backend=backend))

    # start from a box strictly containing P and clip by every halfplane
    lo = np.array(los) - 1.0
    hi = np.array(his) + 1.0
    poly = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
            np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
    for a, b in zip(P.H, P.h):
        if np.max(np.abs(a)) < 1e-14:
            continue
        clipped = []
        k = len(poly)
        for i in range(k):
            p, q = poly[i], poly[(i + 1) % k]
            dp, dq = a @ p - b, a @ q - b
            p_in, q_in = dp <= 1e-9, dq <= 1e-9
            if p_in:
                clipped.append(p)
            if p_in != q_in:
                t = dp / (dp - dq)
                clipped.append(p + t * (q - p))
        poly = clipped
        if not poly:
            break

    pts = _dedup(np.array(poly), DEDUP_TOL) if poly else np.empty((0, 2))
    if len(pts) == 0:
        # clipped away by accumulated roundoff; the set still has a witness
        return feas.point.reshape(1, 2)
    if len(pts) <= 2:
        return pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    hull = _hull_ccw(pts)
    return _dedup(hull, DEDUP_TOL)
