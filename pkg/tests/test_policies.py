import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reconfsched.core import ContractError, HysteresisFn, Schedule, WeightFn, weight
from reconfsched.matching import brute_force_assignment
from reconfsched.policies import (
    Adaptive, FixedFrameMaxWeight, Hamiltonian, MaxSize, MaxWeight, Observation, PipelinedMaxWeight, PolicySpec,
    TassiulasRandom, TrafficMatrixScheduling, VariableFrameMaxWeight, adaptive_decide, amw, batch_duration,
    check_gf_admissibility, condition_constant, dwell_bound, make_policy, sjt_order,
)

G01 = HysteresisFn(0.1, 0.01)


def obs(L, prev=None, t=0):
    L = np.asarray(L, dtype=np.int64)
    return Observation(L, prev if prev is not None else Schedule.idle(L.shape[0]), t)


def perm_of(decision):
    return tuple(int(x) for x in decision.schedule.perm())


def test_maxweight_example(grid3):
    d = MaxWeight(3).decide(obs(grid3))
    assert perm_of(d) == (1, 2, 0) and d.changed


def test_every_kind_feasible_on_empty_queues():
    rng = np.random.default_rng(0)
    specs = [PolicySpec("maxweight"), PolicySpec("pipelined_maxweight", K=2), PolicySpec("tassiulas_random"),
             PolicySpec("hamiltonian"), PolicySpec("max_size"), PolicySpec("ffmw", T=3), PolicySpec("vfmw"),
             PolicySpec("tms", W=5, Q=2), amw()]
    for spec in specs:
        d = make_policy(spec, 4, 2, rng).decide(obs(np.zeros((4, 4))))
        assert d.schedule.is_full
        assert d.changed == (d.schedule != Schedule.idle(4))


def test_ffmw_mid_frame_keeps(grid3):
    p = FixedFrameMaxWeight(3, T=5)
    prev = Schedule.from_perm([0, 2, 1])
    p.decide(obs(grid3, prev, t=0))
    d = p.decide(obs(grid3, prev, t=3))
    assert d.schedule == prev and not d.changed


def test_ffmw_t1_is_maxweight():
    rng = np.random.default_rng(1)
    ff, mw = FixedFrameMaxWeight(4, T=1), MaxWeight(4)
    prev = Schedule.idle(4)
    for t in range(30):
        L = rng.integers(0, 9, (4, 4))
        np.fill_diagonal(L, 0)
        a, b = ff.decide(obs(L, prev, t)), mw.decide(obs(L, prev, t))
        assert a == b
        prev = a.schedule


def test_ffmw_static_boundary_unchanged(grid3):
    p = FixedFrameMaxWeight(3, T=4)
    first = p.decide(obs(grid3, Schedule.idle(3), 0))
    again = p.decide(obs(grid3, first.schedule, 4))
    assert again.schedule == first.schedule and not again.changed


def test_ffmw_catches_missed_boundary(grid3):
    p = FixedFrameMaxWeight(3, T=4)
    p.decide(obs(np.zeros((3, 3)), Schedule.idle(3), 0))
    d = p.decide(obs(grid3, Schedule.idle(3), 6))
    assert d.changed and perm_of(d) == (1, 2, 0)
    assert not p.decide(obs(grid3, Schedule.idle(3), 7)).changed


def test_adaptive_rule_examples():
    g = G01
    assert g(100) == pytest.approx(0.9 * 100 ** 0.99, rel=1e-14)
    assert 85.9 < g(100) < 86.0
    prop = Schedule.from_perm([1, 0])
    keep = adaptive_decide(prop, g, WeightFn(), obs([[0, 100], [0, 0]], Schedule.from_perm([1, 0])))
    assert not keep.changed
    # W_pi = 100, W_prev = 95 -> keep
    L = np.array([[0, 100, 0], [0, 0, 0], [95, 0, 0]])
    prev = Schedule.from_perm([0, 1, 2]).edges - {(2, 2), (0, 0)} | {(2, 0), (0, 2)}
    prev = Schedule.from_edges(3, prev)
    prop = Schedule.from_perm([1, 0, 2])
    assert weight(L, prop) == 100 and weight(L, prev) == 95
    d = adaptive_decide(prop, g, WeightFn(), obs(L, prev))
    assert d.schedule == prev and not d.changed
    # W_pi = 100, W_prev = 0 -> switch
    d = adaptive_decide(prop, g, WeightFn(), obs(L, Schedule.idle(3)))
    assert d.schedule == prop and d.changed


def _rand_L(rng, n, hi=30):
    L = rng.integers(0, hi, (n, n))
    np.fill_diagonal(L, 0)
    return L


def test_adaptive_with_gamma_near_one_follows_base():
    rng = np.random.default_rng(4)
    g = HysteresisFn(1 - 1e-12, 0.01)
    for _ in range(200):
        n = int(rng.integers(2, 6))
        L = _rand_L(rng, n)
        prev = Schedule.from_perm(rng.permutation(n))
        base = MaxWeight(n).decide(obs(L, prev))
        wrapped = Adaptive(MaxWeight(n), g).decide(obs(L, prev))
        if weight(L, base.schedule) > weight(L, prev):
            assert wrapped.schedule == base.schedule
        else:
            assert wrapped.schedule == prev


@given(st.integers(0, 2 ** 32), st.floats(0.01, 0.99), st.floats(0.0, 0.5), st.sampled_from([0.5, 1.0, 2.0]))
def test_adaptive_rule_matches_definition(seed, gamma, delta, alpha):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    L = _rand_L(rng, n)
    prev = Schedule.from_perm(rng.permutation(n))
    prop = Schedule.from_perm(rng.permutation(n))
    g, f = HysteresisFn(gamma, delta), WeightFn(alpha)
    d = adaptive_decide(prop, g, f, obs(L, prev))
    w_pi, w_prev = weight(L, prop, f), weight(L, prev, f)
    expect = prop if w_pi - w_prev > g(w_pi) else prev
    assert d.schedule == expect
    assert d.changed == (d.schedule != prev)


def test_pipelined_k0_is_maxweight():
    rng = np.random.default_rng(2)
    p, mw = PipelinedMaxWeight(4, 0), MaxWeight(4)
    prev = Schedule.idle(4)
    for t in range(20):
        L = _rand_L(rng, 4)
        o = obs(L, prev, t)
        p.observe(o)
        a = p.decide(o)
        assert a == mw.decide(o)
        prev = a.schedule


def test_pipelined_walk_by_hand():
    L0 = np.array([[0, 9, 0], [0, 0, 0], [0, 0, 0]])
    L1 = np.array([[0, 0, 0], [0, 0, 0], [0, 7, 0]])
    p = PipelinedMaxWeight(3, 3)
    idle = Schedule.idle(3)
    seen = []
    for t in range(6):
        o = obs(L0 if t == 0 else L1, idle, t)
        p.observe(o)
        seen.append(p.decide(o).schedule)
    for t in (0, 1, 2, 3):
        assert (0, 1) in seen[t].edges
    assert (2, 1) in seen[4].edges and (2, 1) in seen[5].edges


def test_pipelined_constant_queues_match_maxweight(grid3):
    p, mw = PipelinedMaxWeight(3, 4), MaxWeight(3)
    prev = Schedule.idle(3)
    for t in range(10):
        o = obs(grid3, prev, t)
        p.observe(o)
        assert p.decide(o) == mw.decide(o)


def test_tassiulas_examples(grid3):
    best = Schedule.from_perm([1, 2, 0])
    p = TassiulasRandom(3, draw=lambda: np.array([1, 2, 0]))
    p.memory = np.array([1, 2, 0])
    d = p.decide(obs(grid3, best))
    assert d.schedule == best and not d.changed
    # weight(memory) = 12 beats weight(Z) = 5
    z = np.array([0, 2, 1])
    assert weight(grid3, Schedule.from_perm(z)) == 5
    p = TassiulasRandom(3)
    p.memory = np.array([1, 2, 0])
    assert tuple(p.propose(obs(grid3, best), z=z)) == (1, 2, 0)
    # memory of weight zero loses to any Z covering a nonempty queue
    p = TassiulasRandom(3)
    assert tuple(p.propose(obs(grid3), z=z)) == (0, 2, 1)


def test_tassiulas_memory_is_independent_of_play(grid3):
    p = TassiulasRandom(3)
    p.propose(obs(grid3), z=np.array([1, 2, 0]))
    # the wrapper may keep playing idle; the policy still remembers its own best
    p.propose(obs(grid3, Schedule.idle(3)), z=np.array([0, 1, 2]))
    assert tuple(p.memory) == (1, 2, 0)


def test_sjt_order_n3():
    assert sjt_order(3) == [(0, 1, 2), (0, 2, 1), (2, 0, 1), (2, 1, 0), (1, 2, 0), (1, 0, 2)]


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_sjt_is_hamiltonian_cycle(n):
    order = sjt_order(n)
    assert len(set(order)) == math.factorial(n)
    for a, b in zip(order, order[1:] + order[:1]):
        diff = [k for k in range(n) if a[k] != b[k]]
        assert len(diff) == 2 and diff[1] == diff[0] + 1


def test_hamiltonian_n2_alternates():
    h = Hamiltonian(2)
    walk = []
    for t in range(6):
        h.propose(obs(np.zeros((2, 2)), t=t))
        walk.append(tuple(h.walk))
    assert walk == [(1, 0), (0, 1)] * 3


def test_hamiltonian_reaches_max_weight(grid3):
    h = Hamiltonian(3)
    weights = [weight(grid3, h.decide(obs(grid3, t=t)).schedule) for t in range(6)]
    assert weights == sorted(weights)
    assert weights[-1] == brute_force_assignment(grid3)[1]


def test_max_size_serves_most_queues():
    L = np.array([[0, 5, 0], [0, 0, 1], [0, 0, 0]])
    d = MaxSize(3).decide(obs(L))
    assert {(0, 1), (1, 2)} <= d.schedule.edges


def test_vfmw_durations():
    assert batch_duration(0, 1.0, 0.5, 3) == 4
    assert batch_duration(99, 1.0, 0.5, 3) == 13
    v = VariableFrameMaxWeight(3, 1.0, 0.5, 3)
    L = np.array([[0, 50, 0], [0, 0, 49], [0, 0, 0]])
    first = v.decide(obs(L, Schedule.idle(3), 0))
    assert first.changed and v.next_decision == 13
    for t in range(1, 13):
        d = v.decide(obs(np.array([[0, 0, 0], [9, 0, 0], [0, 0, 0]]), first.schedule, t))
        assert d.schedule == first.schedule and not d.changed
    assert v.decide(obs(np.array([[0, 0, 0], [9, 0, 0], [0, 0, 0]]), first.schedule, 13)).changed


def test_tms_permutation_queue_single_schedule():
    L = np.zeros((4, 4), dtype=np.int64)
    perm = [1, 2, 3, 0]
    L[np.arange(4), perm] = 1
    p = TrafficMatrixScheduling(4, W=10, Q=3)
    for t in range(10):
        assert list(p.propose(obs(L, t=t))) == perm


def test_tms_plays_terms_by_weight():
    B = np.array([[0, 6, 0, 4], [4, 0, 6, 0], [0, 4, 0, 6], [6, 0, 4, 0]])
    p = TrafficMatrixScheduling(4, W=10, Q=2)
    played = [tuple(p.propose(obs(B, t=t))) for t in range(10)]
    assert played[:6] == [(1, 2, 3, 0)] * 6
    assert played[6:] == [(3, 0, 1, 2)] * 4
    assert p.fallbacks == 0


def test_tms_q1_is_single_permutation_per_frame():
    rng = np.random.default_rng(9)
    L = rng.integers(1, 20, (5, 5))
    np.fill_diagonal(L, 0)
    p = TrafficMatrixScheduling(5, W=7, Q=1)
    played = {tuple(p.propose(obs(L, t=t))) for t in range(7)}
    assert len(played) == 1


def test_tms_falls_back_to_maxweight():
    L = np.array([[0, 16, 4, 10], [16, 0, 0, 6], [0, 0, 0, 14], [0, 0, 14, 0]])
    p = TrafficMatrixScheduling(4, W=5, Q=2)
    got = p.propose(obs(L))
    assert p.fallbacks == 1
    assert weight(L, Schedule.from_perm(got)) == brute_force_assignment(L)[1]


def test_dwell_bound_examples():
    g = G01
    assert dwell_bound(g, 0, 4, 1, 100) == pytest.approx((800 / 0.9) ** (1 / 0.99) + 400, rel=1e-12)
    assert dwell_bound(g, 0, 4, 1, 100) == pytest.approx(1352.0, abs=0.05)
    assert dwell_bound(HysteresisFn(0.1, 0.0), 0, 4, 1, 100) == pytest.approx(800 / 0.9 + 400)
    assert dwell_bound(g, 50, 4, 1, 0) == pytest.approx(g.inverse(50))


def test_gf_admissibility_examples():
    assert check_gf_admissibility(G01, WeightFn(1.0))
    assert not check_gf_admissibility(HysteresisFn(0.1, 0.6), WeightFn(2.0))
    assert check_gf_admissibility(HysteresisFn(0.1, 0.4), WeightFn(2.0))
    assert not check_gf_admissibility(HysteresisFn(0.1, 0.0), WeightFn(1.0))


@given(st.floats(0.01, 0.99), st.floats(0.1, 5.0))
def test_gf_admissibility_closed_form(delta, alpha):
    assert check_gf_admissibility(HysteresisFn(0.1, delta), WeightFn(alpha)) == (alpha * delta < 1)


def test_condition_constants():
    assert condition_constant(amw(), 4) == 0
    assert condition_constant(PolicySpec("pipelined_maxweight", K=20), 4) == 4 * 2 * 20
    assert condition_constant(PolicySpec("hamiltonian"), 4) == 2 * 4 * 24
    assert condition_constant(PolicySpec("tassiulas_random"), 4) is None


def test_spec_roundtrip_and_validation():
    specs = [amw(0.2, 0.05), PolicySpec("tms", W=30, Q=4), PolicySpec("vfmw", c=2.0, beta=0.3),
             PolicySpec("adaptive", base=PolicySpec("pipelined_maxweight", K=5)), PolicySpec("ffmw", T=9, label="x")]
    for s in specs:
        assert PolicySpec.from_dict(s.to_dict()) == s
    bad = [dict(kind="nope"), dict(kind="adaptive"), dict(kind="ffmw", T=0), dict(kind="tms", W=2, Q=3),
           dict(kind="vfmw", beta=1.0), dict(kind="maxweight", T=3), dict(kind="ffmw", T=2.5)]
    for b in bad:
        with pytest.raises(ContractError):
            PolicySpec.from_dict(b)
    with pytest.raises(ContractError):
        PolicySpec("adaptive", base=amw())


def test_names():
    assert amw().name == "AMW"
    assert PolicySpec("adaptive", base=PolicySpec("hamiltonian")).name == "AHam"
    assert PolicySpec("ffmw", T=334).name == "FFMW(T=334)"
