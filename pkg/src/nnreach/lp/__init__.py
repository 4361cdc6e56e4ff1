"""Verification-LP assembly, a self-contained dense simplex solver, and
branch-and-bound completion of the ReLU relaxation."""

from .build import VerificationLP, build_lp
from .bnb import BnBResult, branch_and_bound
from .solver import (
    LPSolution,
    simplex_backend,
    solve_lp,
)

__all__ = [
    "VerificationLP",
    "build_lp",
    "LPSolution",
    "solve_lp",
    "simplex_backend",
    "BnBResult",
    "branch_and_bound",
]
