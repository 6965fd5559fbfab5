"""Distributed averaging of sketched second order solvers.

Closed-form bias corrections for averaged sketched Newton and ridge
estimators, the solvers that use them, and statistical verification suites
for the predicted moments, rates, and correction formulas.
"""

from .cluster import (ClusterConfig, WorkerConfig, WorkerError, make_cluster,
                      run_cluster_round, worker_stream)
from .experiments import (ConfigError, ExperimentConfig, config_to_toml,
                          load_config, run_experiment)
from .linalg import (NotPositiveDefiniteError, RngStream, ShapeError,
                     make_identical_singular_matrix, solve_spd,
                     solve_symmetric, sym_sqrt)
from .matio import read_csv_matrix, read_samx, write_csv_matrix, write_samx
from .moments import (BiasCorrection, ContractionError,
                      InfeasibleCorrectionError, MomentUndefinedError,
                      StepScalings, ihs_rate, lambda2_star_newton,
                      lambda2_star_ridge, lambda2_star_ridge_additive,
                      per_worker_corrections, predict_iterations,
                      step_scalings, theta1, theta2, theta3,
                      zero_bias_residual_ridge)
from .problems import (Barrier, DomainError, LeastSquares, Logistic, Problem,
                       Ridge, generate_problem, load_problem, save_problem)
from .sketches import SketchSpec, apply_sketch
from .solvers import (SolverReport, dist_ihs, dist_newton_sketch,
                      dist_ridge_average, ridge_single_sketch_stats,
                      single_sketch_direction_stats, solve_direct)
from .verify import SUITES, run_suite

__version__ = "0.1.0"

__all__ = [
    "Barrier", "BiasCorrection", "ClusterConfig", "ConfigError",
    "ContractionError", "DomainError", "ExperimentConfig",
    "InfeasibleCorrectionError", "LeastSquares", "Logistic",
    "MomentUndefinedError", "NotPositiveDefiniteError", "Problem", "Ridge",
    "RngStream", "SUITES", "ShapeError", "SketchSpec", "SolverReport",
    "StepScalings", "WorkerConfig", "WorkerError", "apply_sketch",
    "config_to_toml", "dist_ihs", "dist_newton_sketch", "dist_ridge_average",
    "generate_problem", "ihs_rate", "lambda2_star_newton",
    "lambda2_star_ridge", "lambda2_star_ridge_additive", "load_config",
    "load_problem", "make_cluster", "make_identical_singular_matrix",
    "per_worker_corrections", "predict_iterations", "read_csv_matrix",
    "read_samx", "ridge_single_sketch_stats", "run_cluster_round",
    "run_experiment", "run_suite", "save_problem",
    "single_sketch_direction_stats", "solve_direct", "solve_spd",
    "solve_symmetric", "step_scalings", "sym_sqrt", "theta1", "theta2",
    "theta3", "worker_stream", "write_csv_matrix", "write_samx",
    "zero_bias_residual_ridge",
]
