import random
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from aqmrd.aqm import Action, GatewayParams, make_discipline
from aqmrd.aqm.controllers import (
    PiParams,
    PiState,
    RemParams,
    RemState,
    droptail_on_arrival,
    pi_update,
    rem_on_arrival,
    rem_update,
)
from aqmrd.aqm.red import (
    ARED_MAX_P_BOUNDS,
    RedState,
    ared_adapt,
    ared_target,
    red_base_prob,
    red_on_arrival,
    tred_base_prob,
)
from aqmrd.aqm.sfq import SfqState, sfq_bucket, sfq_on_arrival

P = GatewayParams()


def drop_gaps(p_b_avg, n_gaps, seed, arrival=red_on_arrival, params=P):
    """Arrivals between consecutive drops with avg pinned inside the band."""
    rng = random.Random(seed)
    state = RedState(avg=p_b_avg, max_p=params.max_p)
    gaps, since = [], 0
    while len(gaps) < n_gaps:
        v, state = arrival(state, 0, rng.random(), 0.0, params)
        since += 1
        if v.dropped:
            gaps.append(since)
            since = 0
    return gaps


# -- RED ---------------------------------------------------------------------


def test_red_example_with_count():
    # avg=32 on (16, 48) with max_p=0.1 gives p_b=0.05; count=0 leaves it alone
    v, s = red_on_arrival(RedState(avg=32.0, count=0), 10, 0.049, 0.0, P)
    assert v.p_applied == pytest.approx(0.05, rel=1e-12)
    assert v.action is Action.DROP and s.count == 0


def test_red_thresholds():
    assert red_base_prob(15.9, 16, 48, 0.1) == 0.0
    assert red_base_prob(48.0, 16, 48, 0.1) == 1.0
    v, s = red_on_arrival(RedState(avg=50.0, count=3), 10, 0.999, 0.0, P)
    assert v.action is Action.DROP and s.count == 0


def test_red_inter_drop_gaps_are_uniform():
    gaps = drop_gaps(32.0, 20_000, seed=3)
    counts = Counter(gaps)
    assert set(counts) == set(range(1, 21))
    observed = [counts[k] for k in range(1, 21)]
    assert chisquare(observed).pvalue > 0.01


# -- TRED --------------------------------------------------------------------


@pytest.mark.parametrize("r", [1 / 3, 2 / 3])
def test_tred_continuous_at_section_boundaries(r):
    avg = 16 + r * 32
    eps = 1e-9
    assert tred_base_prob(avg - eps, 16, 48, 0.1) == pytest.approx(
        tred_base_prob(avg + eps, 16, 48, 0.1), abs=1e-7
    )


def test_tred_shape():
    assert tred_base_prob(16.0, 16, 48, 0.1) == 0.0
    assert tred_base_prob(32.0, 16, 48, 0.1) == pytest.approx(0.05)
    assert tred_base_prob(48.0 - 1e-9, 16, 48, 0.1) == pytest.approx(1.0, abs=1e-6)
    # gentler than RED low, harsher high
    assert tred_base_prob(20.0, 16, 48, 0.1) < red_base_prob(20.0, 16, 48, 0.1)
    assert tred_base_prob(45.0, 16, 48, 0.1) > red_base_prob(45.0, 16, 48, 0.1)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0, 60), b=st.floats(0, 60))
def test_tred_monotone(a, b):
    lo, hi = sorted((a, b))
    assert tred_base_prob(lo, 16, 48, 0.1) <= tred_base_prob(hi, 16, 48, 0.1)


# -- Adaptive RED --------------------------------------------------------------


def test_ared_target_band():
    assert ared_target(P) == pytest.approx((28.8, 35.2))


def test_ared_increases_additively_when_above_band():
    s = ared_adapt(RedState(avg=40.0, max_p=0.1), 0.5, P)
    assert s.max_p == pytest.approx(0.11)
    s = ared_adapt(RedState(avg=40.0, max_p=0.02), 0.5, P)
    assert s.max_p == pytest.approx(0.025)


def test_ared_decreases_multiplicatively_when_below_band():
    s = ared_adapt(RedState(avg=20.0, max_p=0.1), 0.5, P)
    assert s.max_p == pytest.approx(0.09)


def test_ared_holds_inside_band_and_respects_bounds():
    assert ared_adapt(RedState(avg=32.0, max_p=0.1), 0.5, P).max_p == 0.1
    lo, hi = ARED_MAX_P_BOUNDS
    s = RedState(avg=60.0, max_p=0.1)
    for _ in range(200):
        s = ared_adapt(s, 0.0, P)
    assert s.max_p == pytest.approx(hi)
    s = replace(s, avg=0.0)
    for _ in range(200):
        s = ared_adapt(s, 0.0, P)
    assert s.max_p == pytest.approx(lo)


def test_ared_discipline_adapts_on_timer():
    d = make_discipline("ared", P)
    assert d.timer_interval == 0.5
    d.state = replace(d.state, avg=45.0)
    d.on_timer(40, 0.5)
    assert d.state.max_p > P.max_p


# -- REM ---------------------------------------------------------------------


def test_rem_price_and_probability():
    rp = RemParams(capacity_pps=2500.0)
    # queue 10 above reference, 5 packets admitted in a 2 ms slot that serves 5
    s = rem_update(RemState(price=0.0, admitted=5), 30, rp)
    assert s.price == pytest.approx(0.001 * 0.1 * 10)
    assert s.prob == pytest.approx(1 - 1.001 ** (-s.price), rel=1e-12)
    assert s.admitted == 0
    # price never goes negative
    assert rem_update(RemState(price=0.0), 0, rp).price == 0.0


def test_rem_counts_admitted_packets_only():
    s = RemState(prob=0.0)
    v, s = rem_on_arrival(s, 3, 0.5, 0.0, P)
    assert v.action is Action.ENQUEUE and s.admitted == 1
    v, s = rem_on_arrival(s, P.buffer_capacity, 0.5, 0.0, P)
    assert v.overflow and s.admitted == 1


def test_rem_rejects_bad_phi():
    with pytest.raises(ValueError):
        RemParams(phi=1.0)


# -- PI ----------------------------------------------------------------------


def test_pi_steady_at_reference():
    pp = PiParams()
    s = PiState(p=0.03, q_prev=20.0)
    assert pi_update(s, 20.0, pp).p == 0.03


def test_pi_first_update_and_direction():
    pp = PiParams()
    s = pi_update(PiState(), 40.0, pp)
    assert s.p == pytest.approx((pp.a - pp.b) * 20.0, rel=1e-12)
    assert pi_update(s, 40.0, pp).p > s.p
    assert pi_update(PiState(p=0.0, q_prev=0.0), 0.0, pp).p == 0.0


# -- drop-tail ---------------------------------------------------------------


def test_droptail():
    assert droptail_on_arrival(63, P).action is Action.ENQUEUE
    v = droptail_on_arrival(64, P)
    assert v.action is Action.DROP and v.overflow


# -- SFQ ---------------------------------------------------------------------


def test_sfq_bucket_deterministic_and_spread():
    assert sfq_bucket(7, 123, 16) == sfq_bucket(7, 123, 16)
    used = {sfq_bucket(f, 0, 16) for f in range(100)}
    assert len(used) >= 12
    moved = sum(sfq_bucket(f, 0, 16) != sfq_bucket(f, 0xBEEF, 16) for f in range(100))
    assert moved > 50


def test_sfq_per_bucket_limit():
    st_ = SfqState.create(16, 64)
    assert st_.bucket_limit == 4
    b = sfq_bucket(1, 0, 16)
    st_.lengths[b] = 4
    v = sfq_on_arrival(st_, 1, 10)
    assert v.dropped and v.bucket == b


def test_sfq_round_robin_service():
    d = make_discipline("sfq", P, seed=1)
    for pkt in ("a1", "a2", "a3"):
        d.enqueue(pkt, 2)
    d.enqueue("b1", 9)
    assert len(d) == 4
    assert [d.dequeue() for _ in range(4)] == ["a1", "b1", "a2", "a3"]
    assert d.dequeue() is None and len(d) == 0


def test_sfq_salt_perturbation_seeded():
    a, b = make_discipline("sfq", P, seed=4), make_discipline("sfq", P, seed=4)
    a.on_timer(0, 5.0)
    b.on_timer(0, 5.0)
    assert a.ctl.salt == b.ctl.salt != 0


def test_unknown_discipline():
    with pytest.raises(ValueError):
        make_discipline("codel", P)
