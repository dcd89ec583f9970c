"""Compiled inner loops for the MM solver.

Attacks refit thousands of tiny (m x m) problems, where numpy's per-call
overhead dwarfs the arithmetic.  numba is used when importable; the numpy
fallbacks compute the same quantities, one array operation at a time.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


def _mm_solve_py(wins, totals, p, tol, max_iters):
    it = 0
    change = np.inf
    while it < max_iters:
        it += 1
        new = wins / (totals / np.add.outer(p, p)).sum(axis=1)
        new /= new.sum()
        change = float(np.abs(new - p).max())
        p = new
        if change <= tol:
            return p, it, change, True
    return p, it, change, False


def _strongly_connected_py(c):
    m = c.shape[0]
    reach = (c > 0) | np.eye(m, dtype=bool)
    steps = 1
    while steps < m:
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        steps *= 2
    return bool(reach.all())


if njit is not None:

    @njit(cache=True)
    def mm_solve(wins, totals, p, tol, max_iters):
        m = p.shape[0]
        p = p.copy()
        new = np.empty(m)
        it = 0
        change = np.inf
        while it < max_iters:
            it += 1
            s = 0.0
            for i in range(m):
                d = 0.0
                for j in range(m):
                    if j != i and totals[i, j] > 0.0:
                        d += totals[i, j] / (p[i] + p[j])
                new[i] = wins[i] / d
                s += new[i]
            change = 0.0
            for i in range(m):
                new[i] /= s
                diff = abs(new[i] - p[i])
                if diff > change:
                    change = diff
            p, new = new, p
            if change <= tol:
                return p, it, change, True
        return p, it, change, False

    @njit(cache=True)
    def strongly_connected(c):
        # forward and backward reachability from candidate 0
        m = c.shape[0]
        for direction in range(2):
            seen = np.zeros(m, dtype=np.bool_)
            seen[0] = True
            stack = [0]
            while stack:
                i = stack.pop()
                for j in range(m):
                    edge = c[i, j] > 0.0 if direction == 0 else c[j, i] > 0.0
                    if edge and not seen[j]:
                        seen[j] = True
                        stack.append(j)
            if not seen.all():
                return False
        return True

else:  # pragma: no cover
    mm_solve = _mm_solve_py
    strongly_connected = _strongly_connected_py
