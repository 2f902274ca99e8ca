"""Linear system with affine parametric uncertainty and bounded disturbance:

    x+ = A(theta) x + B(theta) u + w,   A(theta) = A0 + sum_i theta_i Ai,
    (x, u) constrained by F x + G u <= 1,  w in W,  theta in Theta.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptySetError, NumericalFailureError, UnboundedSetError
from .lp import LEQ, solve_feasibility
from .polytopes import HPolytope, contains, support
from .rng import SplitMix64


def _check_bounded_nonempty(P: HPolytope, name: str):
    if not solve_feasibility(P.H, [LEQ] * P.n_rows, P.h).feasible:
        raise EmptySetError(f"{name} is empty")
    for i in range(P.dim):
        e = np.zeros(P.dim)
        e[i] = 1.0
        support(P, e)
        support(P, -e)  # raises UnboundedSetError on an unbounded direction


@dataclass(frozen=True)
class UncertainSystem:
    A: tuple          # (p+1) state matrices, A[0] nominal
    B: tuple          # (p+1) input matrices
    F: np.ndarray     # constraint rows on x, normalized rhs 1
    G: np.ndarray     # constraint rows on u
    W: HPolytope      # disturbance set
    Theta: HPolytope  # initial parameter set

    def __post_init__(self):
        A = tuple(np.asarray(Ai, dtype=float) for Ai in self.A)
        B = tuple(np.asarray(Bi, dtype=float) for Bi in self.B)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))
        object.__setattr__(self, "G", np.asarray(self.G, dtype=float))
        n = A[0].shape[0]
        m = B[0].shape[1]
        if len(A) != len(B):
            raise ValueError(f"{len(A)} A-matrices vs {len(B)} B-matrices")
        if len(A) < 2:
            raise ValueError("need the nominal matrix plus at least one uncertainty direction")
        for Ai in A:
            if Ai.shape != (n, n):
                raise ValueError(f"A matrix shape {Ai.shape}, expected {(n, n)}")
        for Bi in B:
            if Bi.shape != (n, m):
                raise ValueError(f"B matrix shape {Bi.shape}, expected {(n, m)}")
        if self.F.ndim != 2 or self.F.shape[1] != n:
            raise ValueError(f"F shape {self.F.shape} inconsistent with n={n}")
        if self.G.shape != (self.F.shape[0], m):
            raise ValueError(f"G shape {self.G.shape} inconsistent with F/{m}")
        if self.W.dim != n:
            raise ValueError(f"disturbance set dimension {self.W.dim}, expected {n}")
        if self.Theta.dim != len(A) - 1:
            raise ValueError(f"parameter set dimension {self.Theta.dim}, expected {len(A) - 1}")
        _check_bounded_nonempty(self.W, "disturbance set")
        _check_bounded_nonempty(self.Theta, "parameter set")

    @property
    def n(self):
        return self.A[0].shape[0]

    @property
    def m(self):
        return self.B[0].shape[1]

    @property
    def p(self):
        return len(self.A) - 1

    @property
    def n_c(self):
        return self.F.shape[0]

    @property
    def n_w(self):
        return self.W.n_rows


def matrices_at(sys: UncertainSystem, theta) -> tuple:
    """(A(theta), B(theta)) for a parameter vector."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (sys.p,):
        raise ValueError(f"theta shape {theta.shape}, expected ({sys.p},)")
    A = sys.A[0] + sum(t * Ai for t, Ai in zip(theta, sys.A[1:]))
    B = sys.B[0] + sum(t * Bi for t, Bi in zip(theta, sys.B[1:]))
    return A, B


def regressor(sys: UncertainSystem, x, u) -> np.ndarray:
    """D(x, u): column i is A_i x + B_i u, so A(th)x + B(th)u = A0 x + B0 u + D th."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.column_stack([Ai @ x + Bi @ u for Ai, Bi in zip(sys.A[1:], sys.B[1:])])


def offset(sys: UncertainSystem, x, u, x_next) -> np.ndarray:
    """d = A0 x + B0 u - x_next; the non-falsified rows read -Hw D th <= hw + Hw d."""
    return sys.A[0] @ np.asarray(x, dtype=float) + sys.B[0] @ np.asarray(u, dtype=float) \
        - np.asarray(x_next, dtype=float)


class UniformDisturbance:
    """I.i.d. uniform over the bounding box of W by per-coordinate inverse-CDF
    from a splitmix64 substream; draws outside W (only possible for non-box W)
    are rejected and redrawn."""

    def __init__(self, W: HPolytope, stream: SplitMix64):
        self.W = W
        self.stream = stream
        self.lo = np.array([-support(W, -e) for e in np.eye(W.dim)])
        self.hi = np.array([support(W, e) for e in np.eye(W.dim)])

    def draw(self) -> np.ndarray:
        for _ in range(1000):
            w = np.array([self.stream.uniform_in(lo, hi) for lo, hi in zip(self.lo, self.hi)])
            if contains(self.W, w, tol=1e-12):
                return w
        raise NumericalFailureError("disturbance rejection sampling stalled")


class SequenceDisturbance:
    """Replays a fixed list of disturbances; running past the end is an error."""

    def __init__(self, values):
        self.values = [np.asarray(v, dtype=float) for v in values]
        self.k = 0

    def draw(self) -> np.ndarray:
        if self.k >= len(self.values):
            raise ValueError(f"disturbance sequence exhausted after {self.k} draws")
        w = self.values[self.k]
        self.k += 1
        return w


@dataclass
class TruthModel:
    """Ground truth used only by the harness; the controller never sees theta_star."""

    sys: UncertainSystem
    theta_star: np.ndarray
    law: object

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if not contains(self.sys.Theta, self.theta_star):
            raise ValueError("theta_star lies outside the parameter set")
        if isinstance(self.law, SequenceDisturbance):
            for w in self.law.values:
                if not contains(self.sys.W, w):
                    raise ValueError("disturbance sequence leaves the disturbance set")


def step_truth(truth: TruthModel, x, u) -> tuple:
    """One true transition; returns (x_next, w)."""
    A, B = matrices_at(truth.sys, truth.theta_star)
    w = truth.law.draw()
    return A @ np.asarray(x, dtype=float) + B @ np.asarray(u, dtype=float) + w, w
