"""Finite-domain solver: propagation, matching-based all_different, DFS with
branch-and-bound, presolve rewriting, and deletion-based core extraction."""

from .core import extract_core, subset_model
from .domain import Domain
from .presolve import PresolveLog, presolve
from .props import Failure, State
from .search import Budget, SearchStats, SolveOutcome, search

__all__ = [
    "Budget",
    "Domain",
    "Failure",
    "PresolveLog",
    "SearchStats",
    "SolveOutcome",
    "State",
    "extract_core",
    "presolve",
    "search",
    "subset_model",
]
