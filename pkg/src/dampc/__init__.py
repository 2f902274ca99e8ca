"""Tube-based adaptive MPC with active exploration for linear systems with
parametric uncertainty and bounded disturbances."""

from .config import ExperimentConfig, config_from_dict, load_config
from .controller import (SolveOptions, SolveReport, solve_dampc, solve_pampc)
from .errors import (ConfigError, DampcError, FalsifiedError,
                     InfeasibleRunError, InfeasibleStartError,
                     NumericalFailureError)
from .identify import (ParameterSet, PointEstimate, build_nonfalsified,
                       initial_parameter_set, lms_update, update_parameter_set)
from .polytopes import HPolytope
from .runner import (ClosedLoopTrace, ComparisonReport, OfflineArtifacts,
                     closed_loop_cost, compare, offline_artifacts,
                     run_closed_loop)
from .system import TruthModel, UncertainSystem
from .tube import TubeConfig, compute_offline, compute_terminal_alpha, verify_gain

__version__ = "0.1.0"

__all__ = [
    "ClosedLoopTrace", "ComparisonReport", "ConfigError", "DampcError",
    "ExperimentConfig", "FalsifiedError", "HPolytope", "InfeasibleRunError",
    "InfeasibleStartError", "NumericalFailureError", "OfflineArtifacts",
    "ParameterSet", "PointEstimate", "SolveOptions", "SolveReport",
    "TruthModel", "TubeConfig", "UncertainSystem", "build_nonfalsified",
    "closed_loop_cost", "compare", "compute_offline", "compute_terminal_alpha",
    "config_from_dict", "initial_parameter_set", "lms_update", "load_config",
    "offline_artifacts", "run_closed_loop", "solve_dampc", "solve_pampc",
    "update_parameter_set", "verify_gain",
]
