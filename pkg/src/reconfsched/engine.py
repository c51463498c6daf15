"""Slotted simulation of edge queues under a scheduling policy with reconfiguration delay.

Per slot ``t``, in order:

1. observe the queue snapshot ``delta_m`` slots old (refreshed every
   ``monitor_interval`` slots, clamped at ``t = 0``);
2. if no reconfiguration is in progress, ask the policy for a schedule; a
   changed schedule starts a reconfiguration that blanks slots
   ``t .. t + delta_r`` (``delta_r + 1`` slots) before it serves;
3. departures: nothing while blanked, else one packet from every nonempty
   queue on an active circuit;
4. Bernoulli arrivals at the end of the slot, clipped at ``queue_capacity``.

``run`` executes the compiled loop in :mod:`reconfsched._kernel`;
``run_reference`` is a plain-Python loop over :class:`~reconfsched.policies.Policy`
objects and produces the same trajectories from the same seed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernel as K
from .core import ContractError, HysteresisFn, Schedule, perm_weight
from .matching import hungarian_max
from .metrics import RunMetrics, build_metrics, duty_cycle, sample_stride, summarize
from .policies import Adaptive, Observation, PolicySpec, TassiulasRandom, dwell_bound, make_policy
from .traffic import ArrivalStream, load, rate_matrix

__all__ = [
    "SimParams", "Trace", "run", "run_reference", "lemma1_checker", "duty_cycle",
    "condition_violations", "run_streams", "EVENT_NAMES",
]

BLOCK = 1 << 15
EVENT_NAMES = {K.EV_DECISION: "decision", K.EV_RECONFIG_START: "reconfig_start", K.EV_RECONFIG_END: "reconfig_end"}
_INT64_SAFE = 2 ** 62


@dataclass(frozen=True)
class SimParams:
    n: int
    delta_r: int = 0
    horizon: int = 10_000
    warmup: int = 0
    delta_m: int = 0
    monitor_interval: int = 1
    queue_capacity: Optional[int] = None
    seed: int = 0
    trace: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ContractError("n must be positive")
        if self.delta_r < 0 or self.delta_m < 0:
            raise ContractError("delays must be nonnegative")
        if self.monitor_interval < 1:
            raise ContractError("monitor_interval must be >= 1")
        if not 0 <= self.warmup < self.horizon:
            raise ContractError("need 0 <= warmup < horizon")
        if self.queue_capacity is not None and self.queue_capacity < 0:
            raise ContractError("queue_capacity must be nonnegative")
        if not 0 <= self.seed < 2 ** 64:
            raise ContractError("seed must fit in 64 bits")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class Trace:
    """Per-slot record. ``event`` codes: 0 blanked mid-reconfiguration, 1 decision,
    2 reconfiguration start, 3 last blanked slot of a reconfiguration."""

    w_star: np.ndarray
    w_active: np.ndarray
    w_proposal: np.ndarray
    total_queue: np.ndarray
    event: np.ndarray
    reconfig_log: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.total_queue)

    def equals(self, other: "Trace") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name), equal_nan=name.startswith("w_"))
            for name in ("w_star", "w_active", "w_proposal", "total_queue", "event", "reconfig_log")
        )

    def write_csv(self, path) -> None:
        """Rows ``t,event,W_star,W_active,total_queue`` for every slot that carries an event."""
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "event", "W_star", "W_active", "total_queue"])
            for t in np.flatnonzero(self.event):
                w.writerow([int(t), EVENT_NAMES[int(self.event[t])], repr(float(self.w_star[t])),
                            repr(float(self.w_active[t])), int(self.total_queue[t])])


def run_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (arrival, policy, traffic-matrix) generators derived from one seed."""
    arr, pol, traffic = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(arr), np.random.default_rng(pol), np.random.default_rng(traffic)


def _base_spec(spec: PolicySpec) -> PolicySpec:
    return spec.base if spec.kind == "adaptive" else spec


def _check_inputs(params: SimParams, lam, initial) -> tuple[np.ndarray, np.ndarray]:
    lam = rate_matrix(lam)
    if lam.shape != (params.n, params.n):
        raise ContractError(f"rate matrix is {lam.shape}, expected {(params.n, params.n)}")
    L0 = np.zeros((params.n, params.n), dtype=np.int64)
    if initial is not None:
        from .core import queue_matrix

        L0 = queue_matrix(initial)
        if L0.shape != lam.shape:
            raise ContractError("initial queue matrix has the wrong size")
    bound = params.queue_capacity if params.queue_capacity is not None else params.horizon + int(L0.max())
    if params.horizon * params.n * params.n * max(bound, 1) >= _INT64_SAFE:
        raise OverflowError(f"horizon {params.horizon} with n={params.n} could overflow 64-bit accumulators")
    return lam, L0


def _perm_block(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    return rng.permuted(np.tile(np.arange(n, dtype=np.int64), (m, 1)), axis=1)


def run(params: SimParams, policy: PolicySpec, lam, initial=None) -> tuple[RunMetrics, Optional[Trace]]:
    """Simulate ``params.horizon`` slots. Deterministic in ``params.seed``."""
    lam, L = _check_inputs(params, lam, initial)
    n = params.n
    base = _base_spec(policy)
    adaptive = policy.kind == "adaptive"
    arr_rng, pol_rng, _ = run_streams(params.seed)
    stream = ArrivalStream(lam, arr_rng)

    K_depth = base.K if base.kind == "pipelined_maxweight" else 0
    H = K_depth + params.delta_m + params.monitor_interval
    cfg_i = np.zeros(16, dtype=np.int64)
    cfg_i[K.I_N] = n
    cfg_i[K.I_KIND] = K.BASE_KINDS[base.kind]
    cfg_i[K.I_ADAPTIVE] = int(adaptive)
    cfg_i[K.I_K] = K_depth
    cfg_i[K.I_T] = base.T
    cfg_i[K.I_W] = base.W
    cfg_i[K.I_Q] = base.Q
    cfg_i[K.I_DR] = params.delta_r
    cfg_i[K.I_DM] = params.delta_m
    cfg_i[K.I_MI] = params.monitor_interval
    cfg_i[K.I_CAP] = -1 if params.queue_capacity is None else params.queue_capacity
    cfg_i[K.I_HORIZON] = params.horizon
    cfg_i[K.I_WARMUP] = params.warmup
    cfg_i[K.I_TRACE] = int(params.trace)
    cfg_i[K.I_SK_ITER] = 10_000
    cfg_i[K.I_STRIDE] = sample_stride(params.horizon)
    cfg_f = np.zeros(7)
    cfg_f[K.F_GAMMA] = policy.gamma
    cfg_f[K.F_DELTA] = policy.delta
    cfg_f[K.F_WRAP_ALPHA] = policy.alpha
    cfg_f[K.F_BASE_ALPHA] = base.alpha
    cfg_f[K.F_C] = base.c
    cfg_f[K.F_BETA] = base.beta
    cfg_f[K.F_SK_TOL] = 1e-10

    st = np.zeros(K.N_STATE, dtype=np.int64)
    initial_total = int(L.sum())
    S = np.arange(n, dtype=np.int64)
    pending = S.copy()
    hist = np.zeros((H, n, n), dtype=np.int64)
    mem = np.arange(n, dtype=np.int64)
    walk = np.arange(n, dtype=np.int64)
    dirs = -np.ones(n, dtype=np.int64)
    qmax = max(base.Q, 1)
    plan = np.zeros((qmax, n), dtype=np.int64)
    ends = np.zeros(qmax, dtype=np.int64)
    needs_z = base.kind == "tassiulas_random"

    reconfigs, samples_t, samples_v = [], [], []
    tr = {k: [] for k in ("w_star", "w_active", "w_proposal", "total_queue", "event")}
    rec_buf = np.zeros(BLOCK, dtype=np.int64)
    smp_t = np.zeros(BLOCK, dtype=np.int64)
    smp_v = np.zeros(BLOCK, dtype=np.int64)
    empty_f = np.zeros(0)
    empty_i = np.zeros(0, dtype=np.int64)
    empty_e = np.zeros(0, dtype=np.int8)
    no_z = np.zeros((0, n), dtype=np.int64)

    t = 0
    while t < params.horizon:
        m = min(BLOCK, params.horizon - t)
        arrivals = stream.block(m)
        z = _perm_block(pol_rng, n, m) if needs_z else no_z
        if params.trace:
            bufs = (np.zeros(m), np.zeros(m), np.zeros(m), np.zeros(m, dtype=np.int64), np.zeros(m, dtype=np.int8))
        else:
            bufs = (empty_f, empty_f, empty_f, empty_i, empty_e)
        n_rec, n_smp = K.run_block(t, m, cfg_i, cfg_f, st, L, S, pending, hist, mem, walk, dirs, plan, ends,
                                   arrivals, z, rec_buf, smp_t, smp_v, *bufs)
        reconfigs.append(rec_buf[:n_rec].copy())
        samples_t.append(smp_t[:n_smp].copy())
        samples_v.append(smp_v[:n_smp].copy())
        if params.trace:
            for key, buf in zip(tr, bufs):
                tr[key].append(buf)
        t += m

    reconfig_log = np.concatenate(reconfigs)
    if st[K.S_FALLBACKS]:
        warnings.warn(f"TMS fell back to MaxWeight in {st[K.S_FALLBACKS]} frame(s)", RuntimeWarning, stacklevel=2)
    metrics = build_metrics(
        n=n, horizon=params.horizon, warmup=params.warmup, delta_r=params.delta_r,
        window_sum=int(st[K.S_WINDOW_SUM]), first_sum=int(st[K.S_FIRST_SUM]), second_sum=int(st[K.S_SECOND_SUM]),
        reconfig_log=reconfig_log, reconfig_total=int(st[K.S_RECONFIG_TOTAL]),
        drops=int(st[K.S_DROPS]), arrivals=int(st[K.S_ARRIVALS]), departures=int(st[K.S_DEPARTURES]),
        initial_total=initial_total, final_total=int(L.sum()), effective_load=load(lam),
        blank_slots=int(st[K.S_BLANK]), fallbacks=int(st[K.S_FALLBACKS]),
        samples=np.stack([np.concatenate(samples_t), np.concatenate(samples_v)], axis=1),
    )
    trace = None
    if params.trace:
        trace = Trace(*(np.concatenate(tr[key]) for key in tr), reconfig_log=reconfig_log)
    return metrics, trace


def run_reference(params: SimParams, policy: PolicySpec, lam, initial=None) -> tuple[RunMetrics, Trace]:
    """Slow pure-Python simulation; always records a full trace."""
    lam, L = _check_inputs(params, lam, initial)
    n = params.n
    arr_rng, pol_rng, _ = run_streams(params.seed)
    stream = ArrivalStream(lam, arr_rng)
    pol = make_policy(policy, n, params.delta_r)
    inner = pol.base if isinstance(pol, Adaptive) else pol
    zblock = {"t0": 0, "z": None}
    if isinstance(inner, TassiulasRandom):
        inner.draw = lambda: zblock["z"][cur["t"] - zblock["t0"]]
    cur = {"t": 0}

    cap = params.queue_capacity
    horizon = params.horizon
    S = Schedule.idle(n)
    pending: Optional[Schedule] = None
    remaining = 0
    snapshots: dict[int, np.ndarray] = {}
    w_star, w_active, w_prop = np.zeros(horizon), np.zeros(horizon), np.full(horizon, np.nan)
    totals = np.zeros(horizon, dtype=np.int64)
    events = np.zeros(horizon, dtype=np.int8)
    blank_flags = np.zeros(horizon, dtype=bool)
    log: list[int] = []
    drops = arrivals_total = departures = 0
    arrivals = None

    for t in range(horizon):
        cur["t"] = t
        if t % BLOCK == 0:
            m = min(BLOCK, horizon - t)
            arrivals = stream.block(m)
            if isinstance(inner, TassiulasRandom):
                zblock["t0"], zblock["z"] = t, _perm_block(pol_rng, n, m)
        snapshots[t] = L.copy()
        s = max(t - params.delta_m, 0)
        seen = snapshots[(s // params.monitor_interval) * params.monitor_interval]
        for old in [k for k in snapshots if k < t - params.delta_m - params.monitor_interval - 1]:
            del snapshots[old]
        obs = Observation(seen, S, t, in_reconfig=remaining > 0)
        pol.observe(obs)

        fL = L.astype(np.float64)
        if remaining == 0:
            d = pol.decide(obs)
            events[t] = K.EV_DECISION
            w_prop[t] = perm_weight(fL, d.proposal.perm())
            if d.changed:
                log.append(t)
                pending = d.schedule
                remaining = params.delta_r + 1
                events[t] = K.EV_RECONFIG_START

        totals[t] = L.sum()
        w_star[t] = perm_weight(fL, hungarian_max(fL))
        blank = remaining > 0
        blank_flags[t] = blank
        w_active[t] = 0.0 if blank else perm_weight(fL, S.perm())
        if blank:
            remaining -= 1
            if remaining == 0:
                S, pending = pending, None
                if events[t] == K.EV_NONE:
                    events[t] = K.EV_RECONFIG_END
        else:
            for i, j in S.real_edges:
                if L[i, j] > 0:
                    L[i, j] -= 1
                    departures += 1
        A = arrivals[t % BLOCK].astype(np.int64)
        arrivals_total += int(A.sum())
        L += A
        if cap is not None:
            over = np.maximum(L - cap, 0)
            drops += int(over.sum())
            L -= over

    reconfig_log = np.array(log, dtype=np.int64)
    metrics = summarize(
        totals, reconfig_log, n=n, warmup=params.warmup, delta_r=params.delta_r, effective_load=load(lam),
        drops=drops, arrivals=arrivals_total, departures=departures, final_total=int(L.sum()),
        blank=blank_flags, fallbacks=getattr(inner, "fallbacks", 0),
    )
    return metrics, Trace(w_star, w_active, w_prop, totals, events, reconfig_log)


def lemma1_checker(trace: Trace, g: HysteresisFn, G: float, n: int, a_max: int, t_prime: int) -> list[tuple[int, int]]:
    """Reconfiguration pairs ``(t, u)`` with ``W*(t)`` above the dwell bound and ``t < u <= t + t_prime``.

    Only meaningful for sublinear ``g``; a linear ``g`` is checked anyway but
    triggers a warning.
    """
    if not g.is_sublinear:
        warnings.warn("hysteresis function is linear (delta = 0); dwell bound hypotheses do not hold",
                      UserWarning, stacklevel=2)
    M = dwell_bound(g, G, n, a_max, t_prime)
    times = np.asarray(trace.reconfig_log, dtype=np.int64)
    violations = []
    for k, t in enumerate(times):
        if trace.w_star[t] > M:
            later = times[k + 1:]
            for u in later[later <= t + t_prime]:
                violations.append((int(t), int(u)))
    return violations


def condition_violations(trace: Trace, G: float) -> np.ndarray:
    """Decision slots where the base proposal's weight falls more than ``G`` below ``W*``."""
    decided = np.flatnonzero((trace.event == K.EV_DECISION) | (trace.event == K.EV_RECONFIG_START))
    short = trace.w_proposal[decided] < trace.w_star[decided] - G
    return decided[short]
