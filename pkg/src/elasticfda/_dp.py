"""Compiled dynamic-programming kernel for SRSF registration on a lattice."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def segment_cost(q1, q2, step, k, l, i, j):
    """Trapezoid cost of the straight segment ``(k, l) -> (i, j)``.

    Rows index the template ``q1``; columns index ``gamma`` values, so the segment
    has constant slope ``(j - l) / (i - k)`` and ``q2`` is read by linear
    interpolation at the fractional column ``l + s (j - l) / (i - k)``.
    """
    di = i - k
    dj = j - l
    rs = np.sqrt(dj / di)
    acc = 0.0
    for s in range(di + 1):
        num = l * di + s * dj
        x0 = num // di
        rem = num - x0 * di
        if rem == 0:
            val = q2[x0]
        else:
            fr = rem / di
            val = q2[x0] * (1.0 - fr) + q2[x0 + 1] * fr
        d = q1[k + s] - val * rs
        if s == 0 or s == di:
            acc += 0.5 * (d * d)
        else:
            acc += d * d
    return acc * step


@njit(cache=True, nogil=True)
def dp_table(q1, q2, step, slopes):
    m = q1.shape[0]
    cost = np.full((m, m), np.inf)
    back = np.full((m, m), -1, dtype=np.int64)
    cost[0, 0] = 0.0
    ns = slopes.shape[0]
    for i in range(1, m):
        for j in range(1, m):
            best = np.inf
            arg = -1
            for s in range(ns):
                k = i - slopes[s, 0]
                l = j - slopes[s, 1]
                if k < 0 or l < 0:
                    continue
                prev = cost[k, l]
                if prev == np.inf:
                    continue
                c = prev + segment_cost(q1, q2, step, k, l, i, j)
                if c < best:
                    best = c
                    arg = s
            cost[i, j] = best
            back[i, j] = arg
    return cost, back


def backtrack(back, slopes):
    m = back.shape[0]
    i = j = m - 1
    rows, cols = [i], [j]
    while i > 0 or j > 0:
        s = back[i, j]
        if s < 0:
            raise RuntimeError("lattice corner unreachable")
        i -= slopes[s, 0]
        j -= slopes[s, 1]
        rows.append(i)
        cols.append(j)
    return np.array(rows[::-1]), np.array(cols[::-1])
