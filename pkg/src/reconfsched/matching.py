"""Exact assignment solvers plus a brute-force oracle."""

from __future__ import annotations

import itertools

import numpy as np
from numba import njit

from .core import ContractError, Schedule

BRUTE_FORCE_MAX_N = 8


@njit(cache=True)
def hungarian_max(w):
    """Maximum-weight perfect assignment on a square float grid.

    Shortest augmenting path with potentials, O(n^3). Rows are inserted in
    index order and columns scanned in index order, so ties always resolve
    the same way. Returns ``perm`` with ``perm[i]`` the column of row ``i``.
    """
    n = w.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = inf
            used[j] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = -w[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm


@njit(cache=True)
def complete_perm(src_to_dst):
    """Fill ``-1`` holes of a partial assignment, pairing leftovers in index order."""
    n = src_to_dst.size
    taken = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if src_to_dst[i] >= 0:
            taken[src_to_dst[i]] = True
    out = src_to_dst.copy()
    j = 0
    for i in range(n):
        if out[i] < 0:
            while taken[j]:
                j += 1
            out[i] = j
            taken[j] = True
    return out


@njit(cache=True)
def max_size_perm(mask):
    n = mask.shape[0]
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if mask[i, j]:
                w[i, j] = 1.0
    perm = hungarian_max(w)
    partial = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if mask[i, perm[i]]:
            partial[i] = perm[i]
    return complete_perm(partial)


def _as_grid(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
        raise ContractError(f"weight grid must be square and non-empty, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ContractError("weight grid entries must be finite and nonnegative")
    return w


def max_weight_assignment(w) -> tuple[Schedule, float]:
    """Full schedule maximizing the summed grid weight, and that total."""
    w = _as_grid(w)
    perm = hungarian_max(w)
    return Schedule.from_perm(perm), float(w[np.arange(len(perm)), perm].sum())


def max_size_matching(mask) -> Schedule:
    """Maximum-cardinality matching over true cells, completed to a full schedule."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise ContractError("mask must be square")
    return Schedule.from_perm(max_size_perm(mask))


def complete_to_permutation(partial: Schedule) -> Schedule:
    src_to_dst = np.full(partial.n, -1, dtype=np.int64)
    for i, j in partial.edges:
        src_to_dst[i] = j
    return Schedule.from_perm(complete_perm(src_to_dst))


def brute_force_assignment(w) -> tuple[Schedule, float]:
    """Exhaustive search over all permutations (first maximizer in lexicographic order)."""
    w = _as_grid(w)
    n = w.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ContractError(f"brute force refuses n={n} > {BRUTE_FORCE_MAX_N}")
    rows = np.arange(n)
    best, best_perm = -np.inf, None
    for perm in itertools.permutations(range(n)):
        total = w[rows, perm].sum()
        if total > best:
            best, best_perm = total, perm
    return Schedule.from_perm(best_perm), float(best)
