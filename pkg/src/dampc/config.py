"""Experiment configuration: one versioned JSON document per experiment.

The loader constructs the domain objects (system, sets) eagerly so every
module-level precondition fires at load time, and wraps any complaint in
ConfigError for a uniform exit path.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DampcError
from .polytopes import HPolytope, contains
from .system import UncertainSystem

SCHEMA_VERSION = 1

DISTURBANCE_LAWS = ("uniform", "zero")


@dataclass(frozen=True)
class ExperimentConfig:
    system: UncertainSystem
    X0: HPolytope
    vertices: np.ndarray       # v x n hull vertices of X0
    K: np.ndarray              # m x n prestabilizing gain
    N: int                     # tube horizon
    n_hat: tuple               # predicted-tube lengths to compare
    bisection_tol: float       # terminal-scaling bisection tolerance
    n_theta: Optional[int]     # fixed-complexity row count (exclusive with H_theta)
    H_theta: Optional[np.ndarray]
    window: int                # identification window s
    mu0: float                 # LMS base step size
    theta_hat0: np.ndarray
    x0: np.ndarray
    T: int                     # closed-loop steps
    seeds: tuple
    disturbance: str           # one of DISTURBANCE_LAWS
    theta_star: np.ndarray     # truth, used only by the plant simulator
    Q: np.ndarray
    R: np.ndarray
    source: Optional[str] = field(default=None, compare=False)


def _mat(node, name, shape=None) -> np.ndarray:
    try:
        M = np.asarray(node, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: not a numeric array ({e})") from None
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{name}: contains non-finite entries")
    if shape is not None and M.shape != shape:
        raise ConfigError(f"{name}: shape {M.shape}, expected {shape}")
    return M


def _polytope(node, name) -> HPolytope:
    if not isinstance(node, dict) or "H" not in node or "h" not in node:
        raise ConfigError(f"{name}: expected an object with 'H' and 'h'")
    H = _mat(node["H"], f"{name}.H")
    h = _mat(node["h"], f"{name}.h")
    if H.ndim != 2 or h.ndim != 1 or H.shape[0] != h.shape[0]:
        raise ConfigError(f"{name}: H is {H.shape}, h is {h.shape}")
    return HPolytope(H, h)


def _section(doc, key) -> dict:
    if key not in doc or not isinstance(doc[key], dict):
        raise ConfigError(f"missing section '{key}'")
    return doc[key]


def _get(sec, key, name):
    if key not in sec:
        raise ConfigError(f"missing field '{name}'")
    return sec[key]


def _positive_definite(M, name):
    if not np.allclose(M, M.T, atol=1e-12):
        raise ConfigError(f"{name}: not symmetric")
    if np.min(np.linalg.eigvalsh(M)) <= 0:
        raise ConfigError(f"{name}: not positive definite")


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment file."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    cfg = config_from_dict(doc)
    object.__setattr__(cfg, "source", str(path))
    return cfg


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema version {version!r}, expected {SCHEMA_VERSION}")

    s = _section(doc, "system")
    A = [_mat(Ai, f"system.A[{i}]") for i, Ai in enumerate(_get(s, "A", "system.A"))]
    B = [_mat(Bi, f"system.B[{i}]") for i, Bi in enumerate(_get(s, "B", "system.B"))]
    F = _mat(_get(s, "F", "system.F"), "system.F")
    G = _mat(_get(s, "G", "system.G"), "system.G")
    W = _polytope(_get(s, "W", "system.W"), "system.W")
    Theta = _polytope(_get(s, "Theta", "system.Theta"), "system.Theta")
    try:
        system = UncertainSystem(tuple(A), tuple(B), F, G, W, Theta)
    except (ValueError, DampcError) as e:
        raise ConfigError(f"system: {e}") from None
    n, m, p = system.n, system.m, system.p

    t = _section(doc, "tube")
    X0 = _polytope(_get(t, "X0", "tube.X0"), "tube.X0")
    if X0.dim != n:
        raise ConfigError(f"tube.X0: dimension {X0.dim}, expected {n}")
    vertices = _mat(_get(t, "vertices", "tube.vertices"), "tube.vertices")
    if vertices.ndim != 2 or vertices.shape[1] != n:
        raise ConfigError(f"tube.vertices: shape {vertices.shape}, expected (v, {n})")
    for vert in vertices:
        if not contains(X0, vert, tol=1e-7):
            raise ConfigError(f"tube.vertices: {vert.tolist()} lies outside X0")
    K = _mat(_get(t, "K", "tube.K"), "tube.K", shape=(m, n))
    N = _get(t, "N", "tube.N")
    if not isinstance(N, int) or N < 1:
        raise ConfigError(f"tube.N: {N!r}, expected a positive integer")
    n_hat = tuple(_get(t, "n_hat", "tube.n_hat"))
    for nh in n_hat:
        if not isinstance(nh, int) or nh < 0 or nh > N:
            raise ConfigError(f"tube.n_hat: entry {nh!r} outside 0..{N}")
    bisection_tol = float(t.get("bisection_tol", 1e-3))
    if bisection_tol <= 0:
        raise ConfigError("tube.bisection_tol: must be positive")

    ident = _section(doc, "identification")
    n_theta = ident.get("n_theta")
    H_theta = ident.get("H_theta")
    if (n_theta is None) == (H_theta is None):
        raise ConfigError("identification: exactly one of n_theta / H_theta")
    if H_theta is not None:
        H_theta = _mat(H_theta, "identification.H_theta")
        if H_theta.ndim != 2 or H_theta.shape[1] != p:
            raise ConfigError(f"identification.H_theta: shape {H_theta.shape}")
    elif not isinstance(n_theta, int) or n_theta < 2 * p:
        raise ConfigError(f"identification.n_theta: {n_theta!r}, need >= {2 * p}")
    window = _get(ident, "window", "identification.window")
    if not isinstance(window, int) or window < 1:
        raise ConfigError(f"identification.window: {window!r}")
    mu0 = float(_get(ident, "mu0", "identification.mu0"))
    if mu0 <= 0:
        raise ConfigError("identification.mu0: must be positive")
    theta_hat0 = _mat(_get(ident, "theta_hat0", "identification.theta_hat0"),
                      "identification.theta_hat0", shape=(p,))
    if not contains(Theta, theta_hat0, tol=1e-9):
        raise ConfigError("identification.theta_hat0: outside the parameter set")

    r = _section(doc, "run")
    x0 = _mat(_get(r, "x0", "run.x0"), "run.x0", shape=(n,))
    T = _get(r, "T", "run.T")
    if not isinstance(T, int) or T < 0:
        raise ConfigError(f"run.T: {T!r}, expected a nonnegative integer")
    seeds = tuple(_get(r, "seeds", "run.seeds"))
    if not seeds or not all(isinstance(sd, int) for sd in seeds):
        raise ConfigError("run.seeds: expected a nonempty list of integers")
    disturbance = r.get("disturbance", "uniform")
    if disturbance not in DISTURBANCE_LAWS:
        raise ConfigError(f"run.disturbance: {disturbance!r}, "
                          f"expected one of {DISTURBANCE_LAWS}")

    truth = _section(doc, "truth")
    theta_star = _mat(_get(truth, "theta_star", "truth.theta_star"),
                      "truth.theta_star", shape=(p,))
    if not contains(Theta, theta_star, tol=1e-9):
        raise ConfigError("truth.theta_star: outside the parameter set")

    w = _section(doc, "weights")
    Q = _mat(_get(w, "Q", "weights.Q"), "weights.Q", shape=(n, n))
    R = _mat(_get(w, "R", "weights.R"), "weights.R", shape=(m, m))
    _positive_definite(Q, "weights.Q")
    _positive_definite(R, "weights.R")

    return ExperimentConfig(system=system, X0=X0, vertices=vertices, K=K, N=N,
                            n_hat=n_hat, bisection_tol=bisection_tol,
                            n_theta=n_theta, H_theta=H_theta, window=window,
                            mu0=mu0, theta_hat0=theta_hat0, x0=x0, T=T,
                            seeds=seeds, disturbance=disturbance,
                            theta_star=theta_star, Q=Q, R=R)
