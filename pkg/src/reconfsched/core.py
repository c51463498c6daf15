"""Domain types and weight arithmetic shared across the package.

Queue matrices are plain ``int64`` numpy arrays (``n x n``, zero diagonal).
Schedules are sub-permutations stored as an edge set; a full schedule may
contain self-edges ``(i, i)`` which stand for an idle port.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

QueueMatrix = np.ndarray


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


def queue_matrix(cells) -> QueueMatrix:
    """Validate ``cells`` and return it as an ``int64`` queue matrix."""
    L = np.asarray(cells)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] == 0:
        raise ContractError(f"queue matrix must be square and non-empty, got shape {L.shape}")
    if not np.issubdtype(L.dtype, np.integer):
        if not np.all(np.equal(np.mod(L, 1), 0)):
            raise ContractError("queue matrix entries must be integers")
    L = L.astype(np.int64)
    if np.any(L < 0):
        raise ContractError("queue matrix entries must be nonnegative")
    if np.any(np.diag(L) != 0):
        raise ContractError("queue matrix diagonal must be zero")
    return L


def total_queue(L: QueueMatrix) -> int:
    """Total number of queued packets ``sum_ij L_ij``."""
    return int(np.asarray(L, dtype=np.int64).sum())


@dataclass(frozen=True)
class Schedule:
    """A set of circuits ``(src, dst)``, each port used at most once per side.

    Indices are 0-based. Self-edges are idle placeholders that let a partial
    matching be stored as a full permutation; they never carry traffic.
    """

    n: int
    edges: frozenset

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ContractError("schedule size must be positive")
        srcs, dsts = set(), set()
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ContractError(f"edge {(i, j)} out of range for n={self.n}")
            if i in srcs or j in dsts:
                raise ContractError(f"edge {(i, j)} reuses a port")
            srcs.add(i)
            dsts.add(j)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Schedule":
        return cls(n, frozenset((int(i), int(j)) for i, j in edges))

    @classmethod
    def from_perm(cls, perm: Sequence[int]) -> "Schedule":
        return cls(len(perm), frozenset((i, int(j)) for i, j in enumerate(perm)))

    @classmethod
    def idle(cls, n: int) -> "Schedule":
        return cls.from_perm(range(n))

    @property
    def is_full(self) -> bool:
        return len(self.edges) == self.n

    @property
    def real_edges(self) -> frozenset:
        return frozenset(e for e in self.edges if e[0] != e[1])

    def perm(self) -> np.ndarray:
        """Destination of each source; only defined for full schedules."""
        if not self.is_full:
            raise ContractError("perm() requires a full schedule")
        out = np.empty(self.n, dtype=np.int64)
        for i, j in self.edges:
            out[i] = j
        return out

    def matrix(self) -> np.ndarray:
        S = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            S[i, j] = 1
        return S

    def __repr__(self) -> str:
        body = ", ".join(f"{i}->{j}" for i, j in sorted(self.edges))
        return f"Schedule(n={self.n}, {{{body}}})"


@dataclass(frozen=True)
class WeightFn:
    """Queue weight ``f(x) = x**alpha``; ``alpha == 1`` is the identity."""

    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ContractError("weight exponent alpha must be positive")

    @property
    def is_identity(self) -> bool:
        return self.alpha == 1.0

    def __call__(self, x):
        return apply_weight(np.asarray(x, dtype=np.float64), self.alpha)


IDENTITY = WeightFn(1.0)


@dataclass(frozen=True)
class HysteresisFn:
    """Power-law hysteresis ``g(x) = (1 - gamma) * x**(1 - delta)``."""

    gamma: float = 0.1
    delta: float = 0.01

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ContractError("gamma must lie in (0, 1)")
        if not 0.0 <= self.delta < 1.0:
            raise ContractError("delta must lie in [0, 1)")

    @property
    def is_sublinear(self) -> bool:
        return self.delta > 0.0

    def __call__(self, x: float) -> float:
        return eval_hysteresis(self, x)

    def inverse(self, y: float) -> float:
        return invert_hysteresis(self, y)


@njit(cache=True)
def apply_weight(L, alpha):
    """Elementwise ``L**alpha`` as float64 (exact copy when alpha is 1)."""
    out = np.empty(L.shape, dtype=np.float64)
    flat_in = L.ravel()
    flat_out = out.ravel()
    if alpha == 1.0:
        for k in range(flat_in.size):
            flat_out[k] = flat_in[k]
    else:
        for k in range(flat_in.size):
            flat_out[k] = flat_in[k] ** alpha
    return out


@njit(cache=True)
def perm_weight(fL, perm):
    """Sum of ``fL[i, perm[i]]`` in source order."""
    s = 0.0
    for i in range(perm.size):
        s += fL[i, perm[i]]
    return s


@njit(cache=True)
def hysteresis(x, gamma, delta):
    if x <= 0.0:
        return 0.0
    return (1.0 - gamma) * x ** (1.0 - delta)


def weight(L: QueueMatrix, S: Schedule, f: WeightFn = IDENTITY) -> float:
    """f-weight of schedule ``S`` under queue state ``L``."""
    L = np.asarray(L)
    if L.shape != (S.n, S.n):
        raise ContractError(f"queue matrix shape {L.shape} does not match schedule size {S.n}")
    fL = apply_weight(L.astype(np.float64), f.alpha)
    total = 0.0
    for i, j in sorted(S.edges):
        total += fL[i, j]
    return total


def eval_hysteresis(g: HysteresisFn, x: float) -> float:
    if x < 0:
        raise ContractError("hysteresis argument must be nonnegative")
    return float(hysteresis(float(x), g.gamma, g.delta))


def invert_hysteresis(g: HysteresisFn, y: float) -> float:
    """Return ``x`` with ``g(x) == y``."""
    if y < 0:
        raise ContractError("hysteresis value must be nonnegative")
    if y == 0:
        return 0.0
    return (y / (1.0 - g.gamma)) ** (1.0 / (1.0 - g.delta))
