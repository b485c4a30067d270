"""Adaptive reconstruction of time-dependent drug efficacy in an HIV infection model."""

from .estimates import EstimateReport, minimizer_bound_residual
from .experiment import TEST1, TEST2, CaseConfig, run_case
from .mesh import TimeMesh
from .model import DEFAULT_INITIAL_STATE, ModelParams
from .optimizer import OptimizerConfig, run_acga, run_cga
from .solvers import NewtonConfig, solve_adjoint, solve_forward
from .synthetic import TruthSpec

__version__ = "0.1.0"

__all__ = [
    "CaseConfig",
    "DEFAULT_INITIAL_STATE",
    "EstimateReport",
    "ModelParams",
    "NewtonConfig",
    "OptimizerConfig",
    "TEST1",
    "TEST2",
    "TimeMesh",
    "TruthSpec",
    "minimizer_bound_residual",
    "run_acga",
    "run_case",
    "run_cga",
    "solve_adjoint",
    "solve_forward",
]
