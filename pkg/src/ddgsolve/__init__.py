"""Piecewise-polynomial (DDG) coarse spaces for two-level overlapping Schwarz preconditioning."""

from .coarse import (
    CoarseSpace,
    GeneratingBasis,
    build_coarse_space,
    build_generating_basis,
    build_restriction,
    coarse_correct,
    coarse_solution_error,
    coarsen_generators,
)
from .estimators import DDGCoarseSpace, DDGConjugateGradient, DDGSchwarzPreconditioner
from .harness import ExperimentConfig, StageError, coarse_accuracy_study, run_experiment, run_sweep
from .krylov import PreconditionerNotSPDError, SolveReport, condition_estimate, fractional_iterations, pcg
from .partition import (
    OverlapSet,
    Partition,
    box_partition,
    expand_overlap,
    graph_partition,
    inertial_partition,
    subdomain_adjacency,
)
from .problems import ProblemInstance, make_problem
from .schwarz import TooSmallForThreeLevels, TwoLevelPreconditioner, build_three_level, build_two_level
from .sparse import CholeskyFactor, NotPositiveDefiniteError, cholesky_factorize, qr_orthonormalize

__version__ = "0.1.0"

__all__ = [
    "CholeskyFactor",
    "CoarseSpace",
    "DDGCoarseSpace",
    "DDGConjugateGradient",
    "DDGSchwarzPreconditioner",
    "ExperimentConfig",
    "GeneratingBasis",
    "NotPositiveDefiniteError",
    "OverlapSet",
    "Partition",
    "PreconditionerNotSPDError",
    "ProblemInstance",
    "SolveReport",
    "StageError",
    "TooSmallForThreeLevels",
    "TwoLevelPreconditioner",
    "box_partition",
    "build_coarse_space",
    "build_generating_basis",
    "build_restriction",
    "build_three_level",
    "build_two_level",
    "cholesky_factorize",
    "coarse_accuracy_study",
    "coarse_correct",
    "coarse_solution_error",
    "coarsen_generators",
    "condition_estimate",
    "expand_overlap",
    "fractional_iterations",
    "graph_partition",
    "inertial_partition",
    "make_problem",
    "pcg",
    "qr_orthonormalize",
    "run_experiment",
    "run_sweep",
    "subdomain_adjacency",
]
