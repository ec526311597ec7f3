from .program import (
    DEFAULT_TOL,
    INFEASIBLE,
    MAX_ITERS,
    NUMERICAL_ERROR,
    OPTIMAL,
    Affine,
    ConicProgram,
    HermitianVar,
    asum,
    dump_triplets,
    hyperbolic_as_psd,
)
from .solver import SolveResult, check_residuals, solve
from .linalg import eig_ratio, max_eigpair, rank_one_extract

__all__ = [
    "DEFAULT_TOL",
    "INFEASIBLE",
    "MAX_ITERS",
    "NUMERICAL_ERROR",
    "OPTIMAL",
    "Affine",
    "ConicProgram",
    "HermitianVar",
    "SolveResult",
    "asum",
    "check_residuals",
    "dump_triplets",
    "eig_ratio",
    "hyperbolic_as_psd",
    "max_eigpair",
    "rank_one_extract",
    "solve",
]
