"""Shared fixtures: the benchmark system and its offline artifacts."""

import os

import numpy as np
import pytest

from dampc.config import load_config
from dampc.identify import PointEstimate, initial_parameter_set
from dampc.polytopes import HPolytope
from dampc.runner import offline_artifacts
from dampc.system import UncertainSystem

CONFIG_PATH = os.path.join(os.path.dirname(__file__), "..", "configs",
                           "paper_example.json")


def box(radius, dim=2):
    H = np.vstack([np.eye(dim), -np.eye(dim)]) / radius
    return HPolytope(H, np.ones(2 * dim))


def benchmark_system() -> UncertainSystem:
    A0 = np.array([[0.85, 0.5], [0.2, 0.6]])
    A1 = 0.1 * np.eye(2)
    A2 = np.zeros((2, 2))
    B0 = np.array([[1.0, 0.4], [0.2, 0.4]])
    B1 = np.zeros((2, 2))
    B2 = np.array([[0.0, 0.5], [0.0, 0.4]])
    F = np.vstack([np.eye(2) / 10.0, -np.eye(2) / 10.0, np.zeros((4, 2))])
    G = np.vstack([np.zeros((4, 2)),
                   [[1.0, 0.0], [-2.0, 0.0], [0.0, 0.5], [0.0, -0.5]]])
    return UncertainSystem((A0, A1, A2), (B0, B1, B2), F, G,
                           W=box(0.1), Theta=box(1.0))


BENCH_K = np.array([[-0.5625, 0.0], [0.0, 0.0]])
BENCH_VERTICES = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]])


@pytest.fixture(scope="session")
def bench_sys():
    return benchmark_system()


@pytest.fixture(scope="session")
def bench_cfg():
    return load_config(CONFIG_PATH)


@pytest.fixture(scope="session")
def bench_art(bench_cfg):
    return offline_artifacts(bench_cfg)


@pytest.fixture(scope="session")
def bench_tube(bench_art):
    return bench_art.tube


@pytest.fixture(scope="session")
def bench_ps(bench_sys):
    return initial_parameter_set(bench_sys.Theta, n_theta=58)


@pytest.fixture(scope="session")
def bench_est():
    return PointEstimate(np.array([0.5, 0.5]), 0.5)
