"""Combinatorial engines for hypothesis generation and factor merging."""
from ._backend import BACKEND, available_backends
from .solvers import (
    Assignment,
    MurtyIterator,
    Selection,
    assignment_cost,
    k_min_sum,
    munkres,
    murty_iterator,
)

__all__ = [
    "Assignment",
    "BACKEND",
    "MurtyIterator",
    "Selection",
    "assignment_cost",
    "available_backends",
    "k_min_sum",
    "munkres",
    "murty_iterator",
]
