"""Scheduling policies behind one ``decide(obs) -> Decision`` interface.

Every policy emits full schedules (idle ports as self-edges). Policies that
keep internal memory (Tassiulas random, Hamiltonian walk) keep it apart from
the schedule actually played, so wrapping them in :class:`Adaptive` does not
change what they remember.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import numpy as np
from numba import njit

from .bvn import PEEL_FLOOR, SINKHORN_MAX_ITER, SINKHORN_TOL, allocate_core, peel_core, sinkhorn_core, top_q_core
from .core import ContractError, HysteresisFn, Schedule, WeightFn, apply_weight, hysteresis, invert_hysteresis, perm_weight
from .matching import hungarian_max, max_size_perm

log = logging.getLogger(__name__)

KINDS = (
    "maxweight",
    "adaptive",
    "pipelined_maxweight",
    "tassiulas_random",
    "hamiltonian",
    "max_size",
    "ffmw",
    "vfmw",
    "tms",
)

# fields each kind serializes, beyond ``kind`` and ``label``
_KIND_FIELDS = {
    "maxweight": ("alpha",),
    "adaptive": ("base", "gamma", "delta", "alpha"),
    "pipelined_maxweight": ("K", "alpha"),
    "tassiulas_random": (),
    "hamiltonian": (),
    "max_size": (),
    "ffmw": ("T", "alpha"),
    "vfmw": ("c", "beta", "alpha"),
    "tms": ("W", "Q"),
}


@dataclass(frozen=True)
class PolicySpec:
    """Declarative policy description; ``base`` is only used by ``adaptive``."""

    kind: str
    base: Optional["PolicySpec"] = None
    gamma: float = 0.1
    delta: float = 0.01
    alpha: float = 1.0
    K: int = 0
    T: int = 1
    c: float = 1.0
    beta: float = 0.5
    W: int = 10
    Q: int = 1
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ContractError(f"unknown policy kind {self.kind!r}")
        if self.kind == "adaptive":
            if self.base is None:
                raise ContractError("adaptive policy needs a base policy")
            if self.base.kind == "adaptive":
                raise ContractError("adaptive wrapper cannot wrap another adaptive wrapper")
            HysteresisFn(self.gamma, self.delta)
        if self.alpha <= 0:
            raise ContractError("alpha must be positive")
        if self.kind == "pipelined_maxweight" and self.K < 0:
            raise ContractError("pipeline depth K must be >= 0")
        if self.kind == "ffmw" and self.T < 1:
            raise ContractError("frame length T must be >= 1")
        if self.kind == "vfmw" and not (self.c > 0 and 0 < self.beta < 1):
            raise ContractError("vfmw needs c > 0 and beta in (0, 1)")
        if self.kind == "tms" and not (self.W >= self.Q >= 1):
            raise ContractError("tms needs W >= Q >= 1")

    @property
    def hysteresis(self) -> HysteresisFn:
        return HysteresisFn(self.gamma, self.delta)

    @property
    def weight_fn(self) -> WeightFn:
        return WeightFn(self.alpha)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "adaptive":
            short = {"maxweight": "AMW", "hamiltonian": "AHam", "tassiulas_random": "ATass", "max_size": "AMS"}
            tag = short.get(self.base.kind, f"A[{self.base.name}]")
            return tag if self.alpha == 1.0 else f"{tag}(alpha={self.alpha:g})"
        extra = {
            "maxweight": "" if self.alpha == 1.0 else f"(alpha={self.alpha:g})",
            "pipelined_maxweight": f"(K={self.K})",
            "ffmw": f"(T={self.T})",
            "vfmw": f"(c={self.c:g},beta={self.beta:g})",
            "tms": f"(W={self.W},Q={self.Q})",
        }.get(self.kind, "")
        return {"maxweight": "MW", "pipelined_maxweight": "PMW", "tassiulas_random": "Tass",
                "hamiltonian": "Ham", "max_size": "MS", "ffmw": "FFMW", "vfmw": "VFMW",
                "tms": "TMS"}[self.kind] + extra

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        for name in _KIND_FIELDS[self.kind]:
            value = getattr(self, name)
            out[name] = value.to_dict() if isinstance(value, PolicySpec) else value
        if self.label is not None:
            out["label"] = self.label
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PolicySpec":
        data = dict(data)
        kind = data.get("kind")
        if kind not in KINDS:
            raise ContractError(f"unknown policy kind {kind!r}")
        allowed = set(_KIND_FIELDS[kind]) | {"kind", "label"}
        unknown = set(data) - allowed
        if unknown:
            raise ContractError(f"policy {kind!r} does not take field(s) {sorted(unknown)}")
        if "base" in data:
            data["base"] = cls.from_dict(data["base"])
        for key in ("K", "T", "W", "Q"):
            if key in data and (isinstance(data[key], bool) or int(data[key]) != data[key]):
                raise ContractError(f"policy field {key!r} must be an integer")
        for key in ("gamma", "delta", "alpha", "c", "beta"):
            if key in data:
                data[key] = float(data[key])
        return cls(**data)

    def replace(self, **changes) -> "PolicySpec":
        return replace(self, **changes)


def amw(gamma: float = 0.1, delta: float = 0.01, alpha: float = 1.0) -> PolicySpec:
    """Adaptive MaxWeight (MaxWeight-alpha when ``alpha != 1``)."""
    return PolicySpec("adaptive", base=PolicySpec("maxweight", alpha=alpha), gamma=gamma, delta=delta, alpha=alpha)


@dataclass(frozen=True, eq=False)
class Observation:
    """What a policy sees at slot ``t``: a (possibly stale) queue snapshot and the active schedule."""

    L: np.ndarray
    prev_schedule: Schedule
    t: int
    in_reconfig: bool = False

    def __post_init__(self) -> None:
        if self.L.shape != (self.prev_schedule.n, self.prev_schedule.n):
            raise ContractError("observation queue matrix does not match schedule size")

    @property
    def prev_perm(self) -> np.ndarray:
        return self.prev_schedule.perm()


@dataclass(frozen=True)
class Decision:
    schedule: Schedule
    changed: bool
    proposal: Optional[Schedule] = field(default=None, compare=False)


# --- numba helpers shared with the simulation kernel -------------------------------


@njit(cache=True)
def float_queues(L, alpha):
    return apply_weight(L.astype(np.float64), alpha)


@njit(cache=True)
def maxweight_keep(fL, prev):
    """MaxWeight schedule, except the previous one is kept when it ties the maximum."""
    best = hungarian_max(fL)
    if perm_weight(fL, prev) >= perm_weight(fL, best):
        return prev.copy()
    return best


@njit(cache=True)
def max_size_keep(L, prev):
    mask = L > 0
    best = max_size_perm(mask)
    have = 0
    top = 0
    for i in range(prev.size):
        if mask[i, prev[i]]:
            have += 1
        if mask[i, best[i]]:
            top += 1
    if have >= top:
        return prev.copy()
    return best


@njit(cache=True)
def sjt_step(perm, dirs):
    """Advance a Steinhaus-Johnson-Trotter walk in place by one adjacent swap.

    ``dirs`` is indexed by element value (-1 left, +1 right). After the last
    permutation of the order the walk wraps to the identity, which is also
    one adjacent swap away, so the walk is a Hamiltonian cycle.
    """
    n = perm.size
    best_v = -1
    best_k = -1
    for k in range(n):
        v = perm[k]
        nk = k + dirs[v]
        if 0 <= nk < n and perm[nk] < v and v > best_v:
            best_v = v
            best_k = k
    if best_v < 0:
        for k in range(n):
            perm[k] = k
            dirs[k] = -1
        return
    nk = best_k + dirs[best_v]
    perm[best_k] = perm[nk]
    perm[nk] = best_v
    for v in range(best_v + 1, n):
        dirs[v] = -dirs[v]


def sjt_order(n: int) -> list[tuple[int, ...]]:
    """All ``n!`` permutations in walk order, starting from the identity."""
    perm = np.arange(n, dtype=np.int64)
    dirs = -np.ones(n, dtype=np.int64)
    out = [tuple(int(x) for x in perm)]
    for _ in range(math.factorial(n) - 1):
        sjt_step(perm, dirs)
        out.append(tuple(int(x) for x in perm))
    return out


def batch_duration(total: int, c: float, beta: float, delta_r: int) -> int:
    """VFMW batch length: reconfiguration delay plus a sublinear function of the backlog."""
    return int(delta_r + math.ceil(c * (1.0 + total) ** beta))


@njit(cache=True)
def tms_plan(fL, W, Q, tol, max_iter):
    """Frame plan ``(perms, ends, fell_back)``; term ``k`` plays for offsets ``[ends[k-1], ends[k])``.

    Falls back to a single MaxWeight schedule for the whole frame when
    scaling or decomposition fails.
    """
    B, _, _, ok = sinkhorn_core(fL, tol, max_iter)
    if ok:
        alphas, perms, count, ok2, _ = peel_core(B, PEEL_FLOOR)
        if ok2:
            a, p = top_q_core(alphas, perms, count, Q)
            slots = allocate_core(a, W)
            return p, np.cumsum(slots), False
    perm = hungarian_max(fL)
    p = np.empty((1, perm.size), dtype=np.int64)
    p[0] = perm
    ends = np.empty(1, dtype=np.int64)
    ends[0] = W
    return p, ends, True


# --- policies -----------------------------------------------------------------------


class Policy:
    """Base class. ``observe`` is called every slot, ``decide`` only on decision slots."""

    n: int

    def observe(self, obs: Observation) -> None:
        pass

    def propose(self, obs: Observation) -> np.ndarray:
        raise NotImplementedError

    def decide(self, obs: Observation) -> Decision:
        perm = self.propose(obs)
        prev = obs.prev_perm
        sched = Schedule.from_perm(perm)
        return Decision(sched, bool(np.any(perm != prev)), proposal=sched)


class MaxWeight(Policy):
    def __init__(self, n: int, alpha: float = 1.0):
        self.n = n
        self.alpha = alpha

    def propose(self, obs):
        return maxweight_keep(float_queues(obs.L, self.alpha), obs.prev_perm)


class PipelinedMaxWeight(Policy):
    """MaxWeight on the observation from ``K`` slots back (the first one while ``t < K``)."""

    def __init__(self, n: int, K: int, alpha: float = 1.0):
        self.n = n
        self.K = K
        self.alpha = alpha
        self.fifo: deque = deque(maxlen=K + 1)
        self._last_t = -1

    def observe(self, obs):
        if obs.t != self._last_t:
            self.fifo.append(obs.L.copy())
            self._last_t = obs.t

    def propose(self, obs):
        self.observe(obs)
        return maxweight_keep(float_queues(self.fifo[0], self.alpha), obs.prev_perm)


class TassiulasRandom(Policy):
    """Keep a remembered schedule unless a uniformly drawn one is strictly heavier.

    ``draw`` supplies the candidate for each decision; by default it samples
    ``rng``. The simulator substitutes its own per-slot stream.
    """

    def __init__(self, n: int, rng: Optional[np.random.Generator] = None,
                 draw: Optional[Callable[[], np.ndarray]] = None):
        self.n = n
        self.rng = rng if rng is not None else np.random.default_rng()
        self.draw = draw or (lambda: self.rng.permutation(self.n))
        self.memory = np.arange(n, dtype=np.int64)

    def propose(self, obs, z: Optional[np.ndarray] = None):
        if z is None:
            z = self.draw()
        z = np.asarray(z, dtype=np.int64)
        fL = obs.L.astype(np.float64)
        if perm_weight(fL, z) > perm_weight(fL, self.memory):
            self.memory = z.copy()
        return self.memory.copy()


class Hamiltonian(Policy):
    """Best of the remembered schedule and the next stop of an SJT walk."""

    def __init__(self, n: int):
        self.n = n
        self.memory = np.arange(n, dtype=np.int64)
        self.walk = np.arange(n, dtype=np.int64)
        self.dirs = -np.ones(n, dtype=np.int64)

    def propose(self, obs):
        sjt_step(self.walk, self.dirs)
        fL = obs.L.astype(np.float64)
        if perm_weight(fL, self.walk) > perm_weight(fL, self.memory):
            self.memory = self.walk.copy()
        return self.memory.copy()


class MaxSize(Policy):
    def __init__(self, n: int):
        self.n = n

    def propose(self, obs):
        return max_size_keep(obs.L, obs.prev_perm)


class FixedFrameMaxWeight(Policy):
    def __init__(self, n: int, T: int, alpha: float = 1.0):
        self.n = n
        self.T = T
        self.alpha = alpha
        self.last_frame = 0

    def propose(self, obs):
        frame = obs.t // self.T
        if obs.t % self.T == 0 or frame > self.last_frame:
            self.last_frame = frame
            return maxweight_keep(float_queues(obs.L, self.alpha), obs.prev_perm)
        return obs.prev_perm


class VariableFrameMaxWeight(Policy):
    def __init__(self, n: int, c: float, beta: float, delta_r: int, alpha: float = 1.0):
        self.n = n
        self.c = c
        self.beta = beta
        self.delta_r = delta_r
        self.alpha = alpha
        self.next_decision = 0

    def propose(self, obs):
        if obs.t < self.next_decision:
            return obs.prev_perm
        self.next_decision = obs.t + batch_duration(int(obs.L.sum()), self.c, self.beta, self.delta_r)
        return maxweight_keep(float_queues(obs.L, self.alpha), obs.prev_perm)


class TrafficMatrixScheduling(Policy):
    """Per ``W``-slot frame: scale, decompose, keep ``Q`` terms, play them by descending weight."""

    def __init__(self, n: int, W: int, Q: int):
        self.n = n
        self.W = W
        self.Q = Q
        self.frame = 0
        self.frame_start = 0
        self.plan: Optional[np.ndarray] = None
        self.ends: Optional[np.ndarray] = None
        self.fallbacks = 0

    def propose(self, obs):
        frame = obs.t // self.W
        if obs.t % self.W == 0 or frame > self.frame:
            self.frame = frame
            self.frame_start = frame * self.W
            self.plan, self.ends, fell_back = tms_plan(obs.L.astype(np.float64), self.W, self.Q, SINKHORN_TOL, SINKHORN_MAX_ITER)
            if fell_back:
                self.fallbacks += 1
                log.info("TMS frame at t=%d: scaling/decomposition failed, using MaxWeight", obs.t)
        if self.plan is None:
            return obs.prev_perm
        k = int(np.searchsorted(self.ends, obs.t - self.frame_start, side="right"))
        return self.plan[min(k, len(self.plan) - 1)].copy()


class Adaptive(Policy):
    """Switch to the base proposal only when its weight gain beats ``g`` of its weight."""

    def __init__(self, base: Policy, g: HysteresisFn, f: WeightFn = WeightFn()):
        self.base = base
        self.n = base.n
        self.g = g
        self.f = f

    def observe(self, obs):
        self.base.observe(obs)

    def decide(self, obs):
        proposal = self.base.decide(obs).schedule
        prop = proposal.perm()
        prev = obs.prev_perm
        if adaptive_switch(float_queues(obs.L, self.f.alpha), prev, prop, self.g.gamma, self.g.delta):
            return Decision(proposal, bool(np.any(prop != prev)), proposal=proposal)
        return Decision(obs.prev_schedule, False, proposal=proposal)


@njit(cache=True)
def adaptive_switch(fL, prev, prop, gamma, delta):
    w_pi = perm_weight(fL, prop)
    gain = w_pi - perm_weight(fL, prev)
    return gain > hysteresis(w_pi, gamma, delta)


def adaptive_decide(proposal: Schedule, g: HysteresisFn, f: WeightFn, obs: Observation) -> Decision:
    """The wrapper's rule applied to an already computed base proposal."""
    prop = proposal.perm()
    prev = obs.prev_perm
    if adaptive_switch(float_queues(obs.L, f.alpha), prev, prop, g.gamma, g.delta):
        return Decision(proposal, bool(np.any(prop != prev)), proposal=proposal)
    return Decision(obs.prev_schedule, False, proposal=proposal)


def make_policy(spec: PolicySpec, n: int, delta_r: int = 0, rng: Optional[np.random.Generator] = None) -> Policy:
    """Fresh per-run policy state for ``spec``."""
    k = spec.kind
    if k == "adaptive":
        return Adaptive(make_policy(spec.base, n, delta_r, rng), spec.hysteresis, spec.weight_fn)
    if k == "maxweight":
        return MaxWeight(n, spec.alpha)
    if k == "pipelined_maxweight":
        return PipelinedMaxWeight(n, spec.K, spec.alpha)
    if k == "tassiulas_random":
        return TassiulasRandom(n, rng)
    if k == "hamiltonian":
        return Hamiltonian(n)
    if k == "max_size":
        return MaxSize(n)
    if k == "ffmw":
        return FixedFrameMaxWeight(n, spec.T, spec.alpha)
    if k == "vfmw":
        return VariableFrameMaxWeight(n, spec.c, spec.beta, delta_r, spec.alpha)
    if k == "tms":
        return TrafficMatrixScheduling(n, spec.W, spec.Q)
    raise ContractError(f"unknown policy kind {k!r}")


# --- analytical helpers -------------------------------------------------------------


def condition_constant(spec: PolicySpec, n: int, a_max: int = 1) -> Optional[float]:
    """Deterministic MaxWeight-proximity constant ``G`` of a base policy, if one is known."""
    base = spec.base if spec.kind == "adaptive" else spec
    if base.kind == "maxweight" and base.alpha == 1.0:
        return 0.0
    if base.kind == "pipelined_maxweight" and base.alpha == 1.0:
        return float(n * (a_max + 1) * base.K)
    if base.kind == "hamiltonian":
        return float(2 * n * math.factorial(n))
    return None


def dwell_bound(g: HysteresisFn, G: float, n: int, a_max: int, t_prime: float) -> float:
    """Weight level above which a fresh reconfiguration holds for ``t_prime`` slots."""
    if G < 0 or n < 1 or a_max < 0 or t_prime < 0:
        raise ContractError("dwell_bound arguments must be nonnegative (n >= 1)")
    return invert_hysteresis(g, G + n * (a_max + 1) * t_prime) + n * t_prime


def check_gf_admissibility(g: HysteresisFn, f: WeightFn) -> bool:
    """Whether ``x**(alpha-1) / g(x**alpha) -> 0`` for power ``f`` and sublinear power-law ``g``.

    ``x**(alpha-1) / x**(alpha*(1-delta))`` vanishes iff ``alpha - 1 < alpha*(1 - delta)``,
    i.e. ``alpha * delta < 1``. A linear ``g`` (``delta == 0``) is rejected since the
    construction needs ``g`` sublinear in the first place.
    """
    return g.is_sublinear and f.alpha - 1.0 < f.alpha * (1.0 - g.delta)
