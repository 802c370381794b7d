"""Pure-Python rectangular assignment kernel (shortest augmenting path).

Used when the compiled kernel is unavailable.  Mirrors ``_lsap_cy.pyx``
statement for statement so both return identical solutions and duals.
"""
import math

INF = math.inf


def solve(cost):
    """Minimum-cost assignment of every row of ``cost`` to a distinct column.

    ``cost`` is an ``n x m`` array-like with ``n <= m``; ``inf`` marks a
    forbidden pair.  Returns ``(row_to_col, u, v)`` where ``u``/``v`` are dual
    potentials satisfying ``u[i] + v[j] <= cost[i][j]`` with equality on the
    assignment, ``v <= 0``, and ``v[j] == 0`` for every unassigned column.
    Returns ``None`` when no finite assignment exists.
    """
    a = [list(map(float, row)) for row in cost]
    n = len(a)
    if n == 0:
        return [], [], []
    m = len(a[0])
    if n > m:
        return None
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: 1-based row matched to column j, 0 if free
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            ui0 = u[i0]
            delta = INF
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            if j1 < 0 or delta == INF:
                return None
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = [0] * n
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]
