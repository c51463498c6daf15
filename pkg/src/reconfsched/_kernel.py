"""Compiled slot loop. Mirrors ``engine.run_reference`` for every policy kind.

All run state lives in numpy arrays owned by the caller so a run can be
advanced one block of slots at a time.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .core import hysteresis, perm_weight
from .matching import hungarian_max
from .policies import float_queues, max_size_keep, maxweight_keep, sjt_step, tms_plan

BASE_KINDS = {
    "maxweight": 0,
    "pipelined_maxweight": 1,
    "tassiulas_random": 2,
    "hamiltonian": 3,
    "max_size": 4,
    "ffmw": 5,
    "vfmw": 6,
    "tms": 7,
}

EV_NONE, EV_DECISION, EV_RECONFIG_START, EV_RECONFIG_END = 0, 1, 2, 3

# cfg_i slots
I_N, I_KIND, I_ADAPTIVE, I_K, I_T, I_W, I_Q, I_DR, I_DM, I_MI, I_CAP, I_HORIZON, I_WARMUP, I_TRACE, \
    I_SK_ITER, I_STRIDE = range(16)
# cfg_f slots
F_GAMMA, F_DELTA, F_WRAP_ALPHA, F_BASE_ALPHA, F_C, F_BETA, F_SK_TOL = range(7)
# st slots
S_REM, S_LAST_FRAME, S_NEXT_DEC, S_PLAN_LEN, S_FRAME_START, S_FALLBACKS, S_DROPS, S_ARRIVALS, \
    S_DEPARTURES, S_WINDOW_SUM, S_FIRST_SUM, S_SECOND_SUM, S_BLANK, S_RECONFIG_TOTAL = range(14)
N_STATE = 14


@njit(cache=True)
def obs_time(t, delta_m, interval):
    """Slot whose snapshot the policy sees at ``t``: the latest refresh at least ``delta_m`` old."""
    s = t - delta_m
    if s < 0:
        return 0
    return (s // interval) * interval


@njit(cache=True)
def _propose(kind, t, cfg_i, cfg_f, st, Lobs, hist, S, mem, walk, dirs, plan, ends, z):
    n = S.size
    H = hist.shape[0]
    if kind == 0:
        return maxweight_keep(float_queues(Lobs, cfg_f[F_BASE_ALPHA]), S)
    if kind == 1:
        s = t - cfg_i[I_K]
        if s < 0:
            s = 0
        old = hist[obs_time(s, cfg_i[I_DM], cfg_i[I_MI]) % H]
        return maxweight_keep(float_queues(old, cfg_f[F_BASE_ALPHA]), S)
    if kind == 2:
        fL = Lobs.astype(np.float64)
        if perm_weight(fL, z) > perm_weight(fL, mem):
            mem[:] = z
        return mem.copy()
    if kind == 3:
        sjt_step(walk, dirs)
        fL = Lobs.astype(np.float64)
        if perm_weight(fL, walk) > perm_weight(fL, mem):
            mem[:] = walk
        return mem.copy()
    if kind == 4:
        return max_size_keep(Lobs, S)
    if kind == 5:
        T = cfg_i[I_T]
        frame = t // T
        if t % T == 0 or frame > st[S_LAST_FRAME]:
            st[S_LAST_FRAME] = frame
            return maxweight_keep(float_queues(Lobs, cfg_f[F_BASE_ALPHA]), S)
        return S.copy()
    if kind == 6:
        if t < st[S_NEXT_DEC]:
            return S.copy()
        total = 0
        for i in range(n):
            for j in range(n):
                total += Lobs[i, j]
        st[S_NEXT_DEC] = t + cfg_i[I_DR] + np.int64(np.ceil(cfg_f[F_C] * (1.0 + total) ** cfg_f[F_BETA]))
        return maxweight_keep(float_queues(Lobs, cfg_f[F_BASE_ALPHA]), S)
    # kind == 7, TMS
    W = cfg_i[I_W]
    frame = t // W
    if t % W == 0 or frame > st[S_LAST_FRAME]:
        st[S_LAST_FRAME] = frame
        st[S_FRAME_START] = frame * W
        p, e, fell_back = tms_plan(Lobs.astype(np.float64), W, cfg_i[I_Q], cfg_f[F_SK_TOL], cfg_i[I_SK_ITER])
        q = p.shape[0]
        plan[:q] = p
        ends[:q] = e
        st[S_PLAN_LEN] = q
        if fell_back:
            st[S_FALLBACKS] += 1
    q = st[S_PLAN_LEN]
    if q == 0:
        return S.copy()
    k = np.searchsorted(ends[:q], t - st[S_FRAME_START], side="right")
    if k > q - 1:
        k = q - 1
    return plan[k].copy()


@njit(cache=True)
def run_block(t0, m, cfg_i, cfg_f, st, L, S, pending, hist, mem, walk, dirs, plan, ends,
              arrivals, zperms, reconfig_out, sample_t, sample_v,
              tr_wstar, tr_wact, tr_wprop, tr_total, tr_event):
    """Advance the run by ``m`` slots starting at ``t0``.

    Returns ``(reconfigurations, samples)`` written into the output buffers.
    """
    n = cfg_i[I_N]
    kind = cfg_i[I_KIND]
    adaptive = cfg_i[I_ADAPTIVE] == 1
    dr = cfg_i[I_DR]
    cap = cfg_i[I_CAP]
    horizon = cfg_i[I_HORIZON]
    warmup = cfg_i[I_WARMUP]
    trace = cfg_i[I_TRACE] == 1
    stride = cfg_i[I_STRIDE]
    mid = warmup + (horizon - warmup) // 2
    gamma = cfg_f[F_GAMMA]
    delta = cfg_f[F_DELTA]
    wrap_alpha = cfg_f[F_WRAP_ALPHA]
    H = hist.shape[0]
    n_rec = 0
    n_smp = 0
    empty_z = np.zeros(n, dtype=np.int64)
    for k in range(m):
        t = t0 + k
        hist[t % H] = L
        total = 0
        for i in range(n):
            for j in range(n):
                total += L[i, j]
        Lobs = hist[obs_time(t, cfg_i[I_DM], cfg_i[I_MI]) % H]
        event = EV_NONE
        wprop = np.nan

        if st[S_REM] == 0:
            z = zperms[k] if zperms.shape[0] > 0 else empty_z
            prop = _propose(kind, t, cfg_i, cfg_f, st, Lobs, hist, S, mem, walk, dirs, plan, ends, z)
            new = prop
            if adaptive:
                fL = float_queues(Lobs, wrap_alpha)
                w_pi = perm_weight(fL, prop)
                if not (w_pi - perm_weight(fL, S) > hysteresis(w_pi, gamma, delta)):
                    new = S
            event = EV_DECISION
            if trace:
                wprop = perm_weight(L.astype(np.float64), prop)
            changed = False
            for i in range(n):
                if new[i] != S[i]:
                    changed = True
                    break
            if changed:
                reconfig_out[n_rec] = t
                n_rec += 1
                st[S_RECONFIG_TOTAL] += 1
                pending[:] = new
                st[S_REM] = dr + 1
                event = EV_RECONFIG_START

        blank = st[S_REM] > 0
        if trace:
            tr_wstar[k] = perm_weight(L.astype(np.float64), hungarian_max(L.astype(np.float64)))
            tr_wact[k] = 0.0 if blank else perm_weight(L.astype(np.float64), S)
            tr_wprop[k] = wprop
            tr_total[k] = total

        if blank:
            st[S_REM] -= 1
            if st[S_REM] == 0:
                S[:] = pending
                if event == EV_NONE:
                    event = EV_RECONFIG_END
            if t >= warmup:
                st[S_BLANK] += 1
        else:
            for i in range(n):
                j = S[i]
                if j != i and L[i, j] > 0:
                    L[i, j] -= 1
                    st[S_DEPARTURES] += 1

        for i in range(n):
            for j in range(n):
                a = arrivals[k, i, j]
                if a > 0:
                    st[S_ARRIVALS] += a
                    L[i, j] += a
                    if cap >= 0 and L[i, j] > cap:
                        st[S_DROPS] += L[i, j] - cap
                        L[i, j] = cap

        if t >= warmup:
            st[S_WINDOW_SUM] += total
            if t < mid:
                st[S_FIRST_SUM] += total
            else:
                st[S_SECOND_SUM] += total
        if t % stride == 0:
            sample_t[n_smp] = t
            sample_v[n_smp] = total
            n_smp += 1
        if trace:
            tr_event[k] = event
    return n_rec, n_smp
