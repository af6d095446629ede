import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from erach.access import (
    BACKOFF,
    MetricsAccumulator,
    RaAction,
    SlotOutcome,
    SlotTiming,
    access_delay,
    collision_rate,
    jains_fairness,
    network_throughput,
    resolve_slot,
    resource_utilization,
)

TIMING = SlotTiming()


def brute_force(actions):
    """Pairwise oracle: collide iff some other UT shares (plane, preamble)."""
    c = []
    for i, a in enumerate(actions):
        hit = a.choice != BACKOFF and any(
            j != i and b.choice == a.choice and b.preamble == a.preamble for j, b in enumerate(actions)
        )
        c.append(hit)
    eta = [a.choice != BACKOFF and not hit for a, hit in zip(actions, c)]
    return c, eta


def action_space(K, P):
    return [RaAction(BACKOFF)] + [RaAction(k, p) for k in range(1, K + 1) for p in range(1, P + 1)]


def test_timing_defaults():
    assert TIMING.opportunity_duration == pytest.approx(0.1)
    assert TIMING.signaling_slots == 1 and TIMING.data_slots == 9
    assert TIMING.opportunities_per_pass(5728, 22) == 2604
    assert SlotTiming(opportunities=260).opportunities_per_pass(5728, 22) == 260
    with pytest.raises(ValueError):
        SlotTiming(signaling_duration=0.015)


def test_ra_action_invariant():
    with pytest.raises(ValueError):
        RaAction(BACKOFF, 1)
    with pytest.raises(ValueError):
        RaAction(1)


def test_all_backoff():
    out = resolve_slot([RaAction(BACKOFF)] * 4)
    assert not out.collided.any() and not out.accessed.any()


def test_shared_preamble_collides_distinct_preamble_succeeds():
    out = resolve_slot([RaAction(1, 1), RaAction(1, 1), RaAction(1, 2)])
    assert out.collided.tolist() == [True, True, False]
    assert out.accessed.tolist() == [False, False, True]


def test_exhaustive_against_bruteforce():
    for J in range(1, 5):
        for K in (1, 2):
            for P in (1, 2):
                space = action_space(K, P)
                for prof in itertools.product(space, repeat=J):
                    out = resolve_slot(list(prof), num_preambles=P)
                    c, eta = brute_force(prof)
                    assert out.collided.tolist() == c
                    assert out.accessed.tolist() == eta


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(1, 2)), min_size=1, max_size=8), st.randoms())
def test_permutation_symmetry_and_conservation(raw, rnd):
    acts = [RaAction(k, p) if k else RaAction(BACKOFF) for k, p in raw]
    out = resolve_slot(acts, num_preambles=2)
    perm = list(range(len(acts)))
    rnd.shuffle(perm)
    out2 = resolve_slot([acts[i] for i in perm], num_preambles=2)
    assert out2.collided.tolist() == [bool(out.collided[i]) for i in perm]
    backoffs = sum(a.choice == BACKOFF for a in acts)
    assert int(out.accessed.sum() + out.collided.sum()) + backoffs == len(acts)
    assert out.accessed.sum() <= 4
    assert not np.any(out.collided & out.accessed)


def test_collision_rate_examples():
    distinct = [resolve_slot([RaAction(1, 1), RaAction(2, 1)])]
    assert collision_rate(distinct) == 0.0
    assert collision_rate([resolve_slot([RaAction(BACKOFF)])], per="attempt") is None
    mixed = [resolve_slot([RaAction(1, 1), RaAction(1, 1), RaAction(BACKOFF)])]
    assert collision_rate(mixed) == pytest.approx(2 / 3)
    assert collision_rate(mixed, per="attempt") == 1.0
    with pytest.raises(ValueError):
        collision_rate(mixed, per="slot")


def test_collision_rate_three_uts_four_resources():
    rng = np.random.default_rng(5)
    picks = rng.integers(0, 4, size=(100000, 3))
    outs = [resolve_slot(1 + p // 2, 1 + p % 2, 2) for p in picks[:20000]]
    assert collision_rate(outs, per="attempt") == pytest.approx(1 - 0.75**2, abs=0.01)


def test_access_delay_closed_form():
    assert access_delay(1000, 1000, TIMING) == pytest.approx(0.01)
    assert access_delay(1000, 250, TIMING) == pytest.approx(0.31, abs=1e-12)
    assert access_delay(100, 0, TIMING) is None


def _outcome(bits, accessed, collided=None, choices=None):
    J = len(bits)
    choices = np.ones(J, dtype=np.int64) if choices is None else np.asarray(choices)
    return SlotOutcome(choices, np.ones(J, dtype=np.int64),
                       np.zeros(J, bool) if collided is None else np.asarray(collided),
                       np.asarray(accessed), np.asarray(bits, dtype=float))


def test_network_throughput_cases():
    zero = [_outcome([0.0, 0.0], [False, False]) for _ in range(3)]
    assert network_throughput(zero, TIMING)[0] == 0.0
    const = [_outcome([5e6], [True]) for _ in range(10)]
    assert network_throughput(const, TIMING)[0] == pytest.approx(5e7)


def test_network_throughput_streaming_oracle():
    rng = np.random.default_rng(2)
    outs = [_outcome(rng.uniform(0, 1e7, 5) * (rng.random(5) < 0.5), rng.random(5) < 0.5) for _ in range(300)]
    total = 0.0
    for o in outs:
        for b in o.throughput:
            total += b
    ref = total / len(outs) / TIMING.opportunity_duration
    assert network_throughput(outs, TIMING)[0] == pytest.approx(ref, rel=1e-9)
    acc = MetricsAccumulator(5, 2, 2, TIMING)
    for o in outs:
        acc.add(o)
    assert acc.metrics().network_throughput == pytest.approx(ref, rel=1e-9)


def test_jains_examples():
    assert jains_fairness([3, 3, 3, 3]) == pytest.approx(1.0)
    assert jains_fairness([7, 0, 0, 0, 0]) == pytest.approx(0.2)
    assert jains_fairness([1, 2, 3, 4, 5]) == pytest.approx(225 / 275)
    assert jains_fairness([0, 0]) is None
    with pytest.raises(ValueError):
        jains_fairness([-1, 2])


@given(st.lists(st.floats(0, 1e9), min_size=1, max_size=10))
def test_jains_bounds(x):
    j = jains_fairness(x)
    if j is not None:
        assert 1 / len(x) - 1e-12 <= j <= 1 + 1e-12


def test_resource_utilization_cases():
    none = [_outcome([0.0] * 4, [False] * 4)]
    assert resource_utilization(none, 2, 2) == 0.0
    full = [_outcome([1.0] * 4, [True] * 4)]
    assert resource_utilization(full, 2, 2) == 1.0
    with pytest.raises(ValueError):
        resource_utilization(full, 0, 2)


def test_accumulator_matches_functions():
    rng = np.random.default_rng(9)
    acc = MetricsAccumulator(4, 2, 2, TIMING)
    outs = []
    for _ in range(200):
        ch = rng.integers(0, 3, 4)
        pr = np.where(ch > 0, rng.integers(1, 3, 4), 0)
        o = resolve_slot(ch, pr, 2)
        o.throughput = np.where(o.accessed, rng.uniform(1e6, 5e6, 4), 0.0)
        outs.append(o)
        acc.add(o)
    m = acc.metrics()
    assert m.collision_rate == pytest.approx(collision_rate(outs))
    assert m.attempt_collision_rate == pytest.approx(collision_rate(outs, per="attempt"))
    assert m.resource_utilization == pytest.approx(resource_utilization(outs, 2, 2))
    thr, per_ut = network_throughput(outs, TIMING)
    assert m.network_throughput == pytest.approx(thr)
    assert m.jains_index == pytest.approx(jains_fairness(per_ut))
    n_a = sum(int(o.accessed.sum()) for o in outs) / 4
    assert m.access_delay == pytest.approx(access_delay(200, n_a, TIMING))
