"""Arrival-rate matrices, load, and Bernoulli arrival sampling."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import ContractError

RateMatrix = np.ndarray


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ContractError(f"load rho must lie in (0, 1), got {rho}")


def rate_matrix(values) -> RateMatrix:
    lam = np.asarray(values, dtype=np.float64)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise ContractError(f"rate matrix must be square, got shape {lam.shape}")
    if np.any(lam < 0) or np.any(lam > 1):
        raise ContractError("Bernoulli rates must lie in [0, 1]")
    if np.any(np.diag(lam) != 0):
        raise ContractError("rate matrix diagonal must be zero")
    return lam


def uniform_rates(n: int, rho: float) -> RateMatrix:
    """``rho / n`` on every off-diagonal cell; the diagonal has no queue."""
    _check_rho(rho)
    lam = np.full((n, n), rho / n)
    np.fill_diagonal(lam, 0.0)
    return lam


def random_derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 2:
        raise ContractError("a derangement needs n >= 2")
    idx = np.arange(n)
    while True:
        p = rng.permutation(n)
        if not np.any(p == idx):
            return p


def nonuniform_rates(n: int, rho: float, M: int, rng: np.random.Generator) -> RateMatrix:
    """Average of ``M`` random derangement matrices, scaled to load ``rho``."""
    _check_rho(rho)
    if M < 1:
        raise ContractError("M must be at least 1")
    counts = np.zeros((n, n))
    rows = np.arange(n)
    for _ in range(M):
        counts[rows, random_derangement(n, rng)] += 1.0
    return counts * (rho / M)


def load(lam) -> float:
    """Largest row or column sum (the crossbar's BvN load)."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.size == 0:
        return 0.0
    return float(max(lam.sum(axis=1).max(), lam.sum(axis=0).max()))


def sample_arrivals(lam, rng: np.random.Generator) -> np.ndarray:
    """One slot of independent Bernoulli arrivals (``A_max = 1``)."""
    lam = np.asarray(lam, dtype=np.float64)
    return (rng.random(lam.shape) < lam).astype(np.int64)


class ArrivalStream:
    """Bernoulli arrivals for consecutive slots, produced in blocks.

    Each cell draws geometric inter-arrival gaps instead of one uniform per
    slot; the law is the same Bernoulli process but the cost scales with the
    number of arrivals. The output is reproducible for a given seed and
    sequence of block sizes; a different chunking gives a different (but
    identically distributed) sample path.
    """

    def __init__(self, lam, rng: np.random.Generator):
        self.lam = rate_matrix(lam)
        self.rng = rng
        self.n = self.lam.shape[0]
        self._cells = [(i, j, self.lam[i, j]) for i in range(self.n) for j in range(self.n) if self.lam[i, j] > 0]
        # next arrival slot per active cell
        self._next = [int(rng.geometric(p)) - 1 for _, _, p in self._cells]
        self.t = 0

    def block(self, slots: int) -> np.ndarray:
        out = np.zeros((slots, self.n, self.n), dtype=np.int8)
        t0, t1 = self.t, self.t + slots
        for c, (i, j, p) in enumerate(self._cells):
            nxt = self._next[c]
            if nxt >= t1:
                continue
            if p >= 1.0:
                out[nxt - t0:, i, j] = 1
                self._next[c] = t1
                continue
            times = [np.array([nxt])]
            last = nxt
            expect = int(p * (t1 - last)) + 1
            while last < t1:
                size = expect + 4 * int(np.sqrt(expect)) + 8
                gaps = self.rng.geometric(p, size=size)
                more = last + np.cumsum(gaps)
                times.append(more)
                last = int(more[-1])
                expect = int(p * max(t1 - last, 0)) + 1
            all_times = np.concatenate(times)
            inside = all_times[all_times < t1]
            out[inside - t0, i, j] = 1
            self._next[c] = int(all_times[len(inside)])
        self.t = t1
        return out


def read_matrix_csv(path) -> np.ndarray:
    """Read a square numeric matrix; a leading non-numeric row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            cells = [c.strip() for c in row if c.strip() != ""]
            if not cells:
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                if k == 0 and not rows:
                    continue
                raise ContractError(f"{path}: row {k + 1} is not numeric")
    if not rows:
        raise ContractError(f"{path}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() != len(rows):
        raise ContractError(f"{path}: matrix is not square")
    return np.array(rows)


def write_matrix_csv(path, M) -> None:
    M = np.asarray(M)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in M:
            w.writerow([repr(float(x)) for x in row])
