"""Set-membership identification and a projected LMS point estimate.

The parameter set keeps a fixed row-direction matrix H; only the offsets h
shrink.  Each update intersects the previous set with the non-falsified set
built from a sliding window of transitions and re-tightens every offset by a
support LP, so the description complexity never grows:

    h_k[i] = max  H[i] . theta   s.t.  H theta <= h_{k-1},  H_delta theta <= h_delta.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySetError, FalsifiedError, NumericalFailureError
from .lp import LEQ, LinearProgram, LpStatus, solve_feasibility, solve_lp
from .polytopes import HPolytope, contains, support
from .rng import SplitMix64
from .system import UncertainSystem, matrices_at, offset, regressor


@dataclass(frozen=True)
class ParameterSet:
    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        if self.H.ndim != 2 or self.h.shape != (self.H.shape[0],):
            raise ValueError("inconsistent parameter-set rows")

    @property
    def polytope(self):
        return HPolytope(self.H, self.h)

    @property
    def n_rows(self):
        return self.H.shape[0]

    @property
    def dim(self):
        return self.H.shape[1]


@dataclass(frozen=True)
class NonFalsifiedSet:
    H: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class PointEstimate:
    theta_hat: np.ndarray
    mu: float  # base LMS step size

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", np.asarray(self.theta_hat, dtype=float))
        if not self.mu > 0:
            raise ValueError(f"step size must be positive, got {self.mu}")


def build_nonfalsified(sys: UncertainSystem, window) -> NonFalsifiedSet:
    """Rows -Hw D_t theta <= hw + Hw d_t for each (x_t, u_t, x_{t+1}) in the
    window; parameters consistent with every observed transition satisfy them."""
    if len(window) < 1:
        raise ValueError("non-falsified set needs at least one transition")
    Hw, hw = sys.W.H, sys.W.h
    blocks_H, blocks_h = [], []
    for x_t, u_t, x_n in window:
        D = regressor(sys, x_t, u_t)
        d = offset(sys, x_t, u_t, x_n)
        blocks_H.append(-Hw @ D)
        blocks_h.append(hw + Hw @ d)
    return NonFalsifiedSet(np.vstack(blocks_H), np.concatenate(blocks_h))


def update_parameter_set(ps: ParameterSet, delta: NonFalsifiedSet, backend=None) -> ParameterSet:
    """Fixed-complexity intersection: tighten each offset to the support of
    the previous set intersected with the non-falsified set."""
    if delta.H.shape[0] and delta.H.shape[1] != ps.dim:
        raise ValueError(f"non-falsified rows have dimension {delta.H.shape[1]}, expected {ps.dim}")
    H_all = np.vstack([ps.H, delta.H]) if delta.H.shape[0] else ps.H
    h_all = np.concatenate([ps.h, delta.h]) if delta.H.shape[0] else ps.h
    senses = [LEQ] * H_all.shape[0]
    if not solve_feasibility(H_all, senses, h_all, backend=backend).feasible:
        raise FalsifiedError("observed data excludes every parameter in the current set")
    h_new = np.empty(ps.n_rows)
    for i in range(ps.n_rows):
        out = solve_lp(LinearProgram(ps.H[i], H_all, senses, h_all), backend=backend)
        if out.status != LpStatus.OPTIMAL:
            raise NumericalFailureError(f"support LP for row {i} ended {out.status}")
        # the exact support never exceeds the previous offset; min() only
        # strips LP roundoff so monotonicity is preserved bit-for-bit
        h_new[i] = min(out.value, ps.h[i])
    return ParameterSet(ps.H, h_new)


def project_polytope(x, P: HPolytope, tol: float = 1e-9, max_sweeps: int = 10_000) -> np.ndarray:
    """Euclidean projection onto P by Dykstra's cyclic halfspace scheme."""
    x = np.asarray(x, dtype=float)
    if contains(P, x, tol=tol):
        return x.copy()
    if not solve_feasibility(P.H, [LEQ] * P.n_rows, P.h).feasible:
        raise EmptySetError("projection onto empty polytope")
    norms2 = np.einsum("ij,ij->i", P.H, P.H)
    point = x.copy()
    corrections = np.zeros((P.n_rows, P.dim))
    for _ in range(max_sweeps):
        start = point.copy()
        corr_start = corrections.copy()
        for i in range(P.n_rows):
            if norms2[i] < 1e-16:
                continue
            y = point + corrections[i]
            viol = P.H[i] @ y - P.h[i]
            proj = y - (max(viol, 0.0) / norms2[i]) * P.H[i]
            corrections[i] = y - proj
            point = proj
        # the point alone can sit still for a few sweeps while corrections
        # keep shifting weight between rows, so both must be stationary
        moved = max(np.max(np.abs(point - start)),
                    np.max(np.abs(corrections - corr_start)))
        if moved < tol and contains(P, point, tol=tol):
            return point
    raise NumericalFailureError(f"projection did not settle within {max_sweeps} sweeps")


def lms_update(est: PointEstimate, ps: ParameterSet, sys: UncertainSystem,
               x, u, x_next) -> PointEstimate:
    """Normalized projected LMS step on the one-step prediction error."""
    D = regressor(sys, x, u)
    A, B = matrices_at(sys, est.theta_hat)
    e = np.asarray(x_next, dtype=float) - A @ np.asarray(x, dtype=float) - B @ np.asarray(u, dtype=float)
    mu = est.mu / (1.0 + float(np.trace(D.T @ D)))
    raw = est.theta_hat + mu * (D.T @ e)
    return PointEstimate(project_polytope(raw, ps.polytope), est.mu)


def initial_parameter_set(Theta: HPolytope, n_theta=None, H_explicit=None,
                          seed: int = 0, backend=None) -> ParameterSet:
    """Fixed row directions for the online set.

    The rows of Theta are reused verbatim when their count matches n_theta
    (or when neither n_theta nor explicit rows are given).  Otherwise n_theta
    unit directions are generated: evenly spaced on the circle for 2
    parameters, signs for 1, a fixed-seed sphere sample above that.  Offsets
    start at the support of Theta, an outer bound.
    """
    if H_explicit is not None:
        H = np.asarray(H_explicit, dtype=float)
        if H.ndim != 2 or H.shape[1] != Theta.dim:
            raise ValueError(f"explicit direction rows have shape {H.shape}")
    elif n_theta is None or n_theta == Theta.n_rows:
        return ParameterSet(Theta.H, Theta.h)
    else:
        p = Theta.dim
        if p == 1:
            H = np.array([[1.0 if i % 2 == 0 else -1.0] for i in range(n_theta)])
        elif p == 2:
            ang = 2.0 * math.pi * np.arange(n_theta) / n_theta
            H = np.column_stack([np.cos(ang), np.sin(ang)])
        else:
            stream = SplitMix64(seed)
            rows = []
            while len(rows) < n_theta:
                g = np.array([stream.gauss_pair()[0] for _ in range(p)])
                nrm = np.linalg.norm(g)
                if nrm > 1e-8:
                    rows.append(g / nrm)
            H = np.array(rows)
    h = np.array([support(Theta, row, backend=backend) for row in H])
    return ParameterSet(H, h)
