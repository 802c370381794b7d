"""Optimal assignment, K-best assignment enumeration and K-min-sum selection."""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..exceptions import EmptyArray, Infeasible
from . import _backend

_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Assignment:
    """Row ``i`` is assigned to column ``row_to_col[i]``."""

    row_to_col: tuple
    cost: float


@dataclass(frozen=True)
class Selection:
    """One index per input array and the sum of the selected entries."""

    indices: tuple
    sum: float


def _as_cost(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=float)
    if c.ndim == 1 and c.size == 0:
        c = c.reshape(0, 0)
    if c.ndim != 2:
        raise ValueError("cost matrix must be two-dimensional")
    if np.any(np.isnan(c)) or np.any(c == -np.inf):
        raise ValueError("cost entries must be finite or +inf")
    return c


def assignment_cost(c: np.ndarray, row_to_col: Sequence[int]) -> float:
    # summed in row order so equal assignments always produce identical floats
    total = 0.0
    for i, j in enumerate(row_to_col):
        total += float(c[i, j])
    return total


def _same_cost(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=_TIE_RTOL, abs_tol=_TIE_RTOL)


def _solve_prefixed(c: np.ndarray, prefix: list, solve: Callable) -> Optional[list]:
    """Optimal assignment with rows ``0..len(prefix)-1`` pinned to ``prefix``."""
    k = len(prefix)
    taken = set(prefix)
    keep = [j for j in range(c.shape[1]) if j not in taken]
    if k == c.shape[0]:
        return list(prefix)
    res = solve(c[k:, keep])
    if res is None:
        return None
    return list(prefix) + [keep[j] for j in res[0]]


def munkres(cost, solve: Optional[Callable] = None) -> Assignment:
    """Minimum-cost assignment; ties go to the lexicographically smallest one.

    ``cost`` is ``rows x cols`` with ``rows <= cols``; ``inf`` entries are
    forbidden.  Raises :class:`Infeasible` when no finite assignment exists.
    """
    c = _as_cost(cost)
    solve = solve or _backend.solve
    n = c.shape[0]
    res = solve(c)
    if res is None:
        raise Infeasible(f"no finite assignment for a {c.shape[0]}x{c.shape[1]} cost matrix")
    sol, u, v = res
    sol = list(sol)
    opt = assignment_cost(c, sol)
    if not np.isfinite(opt):
        raise Infeasible("optimal assignment has infinite cost")
    # Any assignment using (i, j) costs at least opt + reduced(i, j), so only
    # tight entries can produce a tie.
    tight_tol = 1e-9 * max(1.0, abs(opt))
    used = set()
    for i in range(n):
        for j in range(sol[i]):
            if j in used or not np.isfinite(c[i, j]):
                continue
            if c[i, j] - u[i] - v[j] > tight_tol:
                continue
            cand = _solve_prefixed(c, sol[:i] + [j], solve)
            if cand is not None and _same_cost(assignment_cost(c, cand), opt):
                sol = cand
                break
        used.add(sol[i])
    return Assignment(tuple(sol), assignment_cost(c, sol))


class MurtyIterator:
    """Enumerate assignments of a cost matrix in nondecreasing cost.

    Classic solution-space partitioning: every popped node is split into
    subproblems that fix a prefix of its free rows and forbid the next
    row's current column.  Equal-cost assignments come out in
    lexicographic ``row_to_col`` order.

    >>> it = MurtyIterator([[1, 2], [2, 4]])
    >>> [it.get_next().cost for _ in range(2)]
    [4.0, 5.0]
    """

    def __init__(self, cost, solve: Optional[Callable] = None):
        self._c = _as_cost(cost)
        self._solve = solve or _backend.solve
        self._heap: list = []
        self._tick = itertools.count()
        self._push((), frozenset())

    def _push(self, forced: tuple, excluded: frozenset) -> None:
        c = self._c
        if forced or excluded:
            c = c.copy()
            for r, j in excluded:
                c[r, j] = np.inf
            for r, j in forced:
                keep = c[r, j]
                c[r, :] = np.inf
                c[:, j] = np.inf
                c[r, j] = keep
        try:
            a = munkres(c, self._solve)
        except Infeasible:
            return
        cost = assignment_cost(self._c, a.row_to_col)
        heapq.heappush(self._heap, (cost, a.row_to_col, next(self._tick), forced, excluded))

    def has_next(self) -> bool:
        return bool(self._heap)

    def get_next(self) -> Assignment:
        if not self._heap:
            raise StopIteration("no more assignments")
        cost, sol, _, forced, excluded = heapq.heappop(self._heap)
        pinned = dict(forced)
        free_rows = [r for r in range(len(sol)) if r not in pinned]
        prefix = list(forced)
        for r in free_rows:
            self._push(tuple(prefix), excluded | {(r, sol[r])})
            prefix.append((r, sol[r]))
        return Assignment(sol, cost)

    def __iter__(self) -> Iterator[Assignment]:
        return self

    def __next__(self) -> Assignment:
        if not self.has_next():
            raise StopIteration
        return self.get_next()


def murty_iterator(cost, solve: Optional[Callable] = None) -> MurtyIterator:
    return MurtyIterator(cost, solve)


def k_min_sum(arrays: Sequence[Sequence[float]], K: int) -> list:
    """The ``K`` selections (one index per array) with the smallest sums.

    Builds the answer array by array: keep the best ``K`` partial
    selections, extend each by every element of the next array, keep the
    best ``K`` again.  Ties are ordered by index tuple.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    arrs = [np.asarray(a, dtype=float).reshape(-1) for a in arrays]
    if not arrs or any(a.size == 0 for a in arrs):
        raise EmptyArray("every array must be non-empty")
    first = arrs[0].tolist()
    best = heapq.nsmallest(K, ((s, (j,)) for j, s in enumerate(first)))
    for arr in arrs[1:]:
        vals = arr.tolist()
        cands = ((s + a, idx + (j,)) for s, idx in best for j, a in enumerate(vals))
        best = heapq.nsmallest(K, cands)
    return [Selection(idx, s) for s, idx in best]
