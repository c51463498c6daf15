"""Sinkhorn scaling and Birkhoff-von Neumann decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import ContractError, Schedule
from .matching import hungarian_max

STOCHASTIC_TOL = 1e-9
SINKHORN_TOL = 1e-10
SINKHORN_MAX_ITER = 10_000
SMOOTHING = 1e-6
PEEL_FLOOR = 1e-9


class ScalingError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"Sinkhorn scaling did not converge after {iterations} sweeps (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class DecompositionError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"no perfect matching on the residual support (residual line mass {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    b: np.ndarray
    iterations: int
    residual: float

    @property
    def n(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True, eq=False)
class BvnDecomposition:
    """Convex combination ``sum_k alphas[k] * P(perms[k])``."""

    alphas: np.ndarray
    perms: np.ndarray

    def __len__(self) -> int:
        return len(self.alphas)

    @property
    def terms(self) -> list[tuple[float, Schedule]]:
        return [(float(a), Schedule.from_perm(p)) for a, p in zip(self.alphas, self.perms)]

    def reconstruct(self) -> np.ndarray:
        n = self.perms.shape[1]
        out = np.zeros((n, n))
        rows = np.arange(n)
        for a, p in zip(self.alphas, self.perms):
            out[rows, p] += a
        return out


@njit(cache=True)
def line_deviation(B):
    n = B.shape[0]
    dev = 0.0
    for i in range(n):
        r = 0.0
        c = 0.0
        for j in range(n):
            r += B[i, j]
            c += B[j, i]
        dev = max(dev, abs(r - 1.0), abs(c - 1.0))
    return dev


@njit(cache=True)
def sinkhorn_core(L, tol, max_iter):
    """Returns ``(B, sweeps, residual, converged)``.

    Inputs that are already doubly stochastic come back untouched; anything
    else is smoothed by a small uniform mass so every line is strictly
    positive before alternating row/column normalization.
    """
    n = L.shape[0]
    A = L.astype(np.float64)
    dev = line_deviation(A)
    if dev < tol:
        return A, 0, dev, True
    mean = A.sum() / (n * n)
    A += SMOOTHING * max(1.0, mean)
    for sweep in range(1, max_iter + 1):
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += A[i, j]
            for j in range(n):
                A[i, j] /= s
        for j in range(n):
            s = 0.0
            for i in range(n):
                s += A[i, j]
            for i in range(n):
                A[i, j] /= s
        dev = line_deviation(A)
        if dev < tol:
            return A, sweep, dev, True
    return A, max_iter, dev, False


@njit(cache=True)
def peel_core(B, floor):
    """Greedy peeling. Returns ``(alphas, perms, count, ok, residual)``.

    Each step takes a perfect matching on ``{B > floor}`` (largest residual
    mass among maximum-cardinality matchings) and removes its minimum entry,
    which therefore drops out of the support.
    """
    n = B.shape[0]
    R = B.copy()
    cap = n * n
    alphas = np.zeros(cap)
    perms = np.zeros((cap, n), dtype=np.int64)
    count = 0
    used = 0.0
    w = np.zeros((n, n))
    while 1.0 - used >= n * floor:
        if count == cap:
            return alphas, perms, count, False, 1.0 - used
        for i in range(n):
            for j in range(n):
                if R[i, j] > floor:
                    w[i, j] = n + 1.0 + R[i, j]
                else:
                    w[i, j] = 0.0
        perm = hungarian_max(w)
        alpha = np.inf
        for i in range(n):
            x = R[i, perm[i]]
            if not x > floor:
                return alphas, perms, count, False, 1.0 - used
            alpha = min(alpha, x)
        for i in range(n):
            R[i, perm[i]] -= alpha
        alphas[count] = alpha
        perms[count] = perm
        count += 1
        used += alpha
    total = 0.0
    for k in range(count):
        total += alphas[k]
    for k in range(count):
        alphas[k] /= total
    return alphas, perms, count, True, 1.0 - used


@njit(cache=True)
def top_q_core(alphas, perms, count, q):
    """Keep the ``q`` largest coefficients (stable), renormalized, in descending order."""
    keep = min(q, count)
    order = np.argsort(-alphas[:count], kind="mergesort")[:keep]
    out_a = np.empty(keep)
    out_p = np.empty((keep, perms.shape[1]), dtype=np.int64)
    total = 0.0
    for k in range(keep):
        total += alphas[order[k]]
    for k in range(keep):
        out_a[k] = alphas[order[k]] / total
        out_p[k] = perms[order[k]]
    return out_a, out_p


@njit(cache=True)
def allocate_core(alphas, frame):
    """Split ``frame`` slots by largest remainder, with at least one slot per term."""
    q = alphas.size
    quota = alphas * frame
    slots = np.floor(quota).astype(np.int64)
    left = frame - slots.sum()
    rem = quota - slots
    order = np.argsort(-rem, kind="mergesort")
    for k in range(left):
        slots[order[k % q]] += 1
    for k in range(q):
        while slots[k] < 1:
            big = np.argmax(slots)
            slots[big] -= 1
            slots[k] += 1
    return slots


def sinkhorn_scale(L, tol: float = SINKHORN_TOL, max_iter: int = SINKHORN_MAX_ITER) -> StochasticMatrix:
    """Scale a nonnegative matrix to doubly stochastic form."""
    A = np.asarray(L, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or np.any(A < 0) or not np.all(np.isfinite(A)):
        raise ContractError("sinkhorn_scale needs a square, finite, nonnegative matrix")
    B, sweeps, residual, ok = sinkhorn_core(A, tol, max_iter)
    if not ok:
        raise ScalingError(residual, sweeps)
    return StochasticMatrix(B, sweeps, residual)


def birkhoff_decompose(B, floor: float = PEEL_FLOOR) -> BvnDecomposition:
    if isinstance(B, StochasticMatrix):
        B = B.b
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ContractError("matrix must be square")
    if np.any(B < 0) or line_deviation(B) > STOCHASTIC_TOL:
        raise ContractError(f"matrix is not doubly stochastic (line deviation {line_deviation(B):.3e})")
    alphas, perms, count, ok, residual = peel_core(B, floor)
    if not ok:
        raise DecompositionError(residual)
    return BvnDecomposition(alphas[:count].copy(), perms[:count].copy())


def top_q(d: BvnDecomposition, Q: int) -> BvnDecomposition:
    if Q < 1:
        raise ContractError("Q must be at least 1")
    a, p = top_q_core(d.alphas, d.perms, len(d), Q)
    return BvnDecomposition(a, p)


def allocate_frame(alphas, frame: int) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=np.float64)
    if frame < alphas.size:
        raise ContractError(f"frame of {frame} slots cannot give {alphas.size} terms a slot each")
    return allocate_core(alphas, frame)
