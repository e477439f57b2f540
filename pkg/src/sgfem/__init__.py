"""Stochastic Galerkin finite elements with block preconditioned Krylov solvers."""

from ._kernels import backend
from .harness import ExperimentConfig, build_problem, run_experiment, run_table

__all__ = ["ExperimentConfig", "backend", "build_problem", "run_experiment", "run_table"]
__version__ = "0.1.0"
