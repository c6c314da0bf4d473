import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsrc_perf.params import ScenarioParams, derive_timing
from dsrc_perf.sim import kernels
from dsrc_perf.sim.engine import (
    InvalidPolicy,
    SimTrace,
    contention_density_sample,
    make_rng,
    mean_contention_density,
    merge,
    reception_delay_accumulate,
    run,
    run_replication,
    trace_stats,
)
from dsrc_perf.sim.kernels import COLLIDED, DELIVERED, DROPPED, IN_FLIGHT
from dsrc_perf.sim.reference import simulate_reference


def _same(a: SimTrace, b: SimTrace) -> bool:
    return (
        np.array_equal(a.vehicle, b.vehicle)
        and np.array_equal(a.gen_slot, b.gen_slot)
        and np.array_equal(a.tx_slot, b.tx_slot)
        and np.array_equal(a.outcome, b.outcome)
    )


# -- engine equivalence ---------------------------------------------------------

CONFIGS = [
    dict(policy="dot11p", n=12, lam=100, cw=8, busy=0, oracle=False),
    dict(policy="dot11p", n=25, lam=200, cw=8, busy=20, oracle=False),
    dict(policy="dot11p", n=8, lam=50, cw=2, busy=0, oracle=False),
    dict(policy="spcdc", n=12, lam=100, cw=16, busy=0, oracle=False),
    dict(policy="spcdc", n=25, lam=200, cw=16, busy=10, oracle=False),
    dict(policy="spcdc", n=25, lam=200, cw=16, busy=0, oracle=True),
]


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: f"{c['policy']}-n{c['n']}-busy{c['busy']}-o{int(c['oracle'])}")
@pytest.mark.parametrize("seed", [0, 7])
def test_engines_bit_identical(cfg, seed):
    p = ScenarioParams(n_vehicles=cfg["n"], lambda_=cfg["lam"], cw=cfg["cw"], spcdc_period=0.02)
    kw = dict(initial_busy_slots=cfg["busy"], oracle=cfg["oracle"])
    ref, _ = run_replication(p, cfg["policy"], 0.2, 0.0, seed, 0, engine="reference", **kw)
    for engine in ("numba", "numpy"):
        got, _ = run_replication(p, cfg["policy"], 0.2, 0.0, seed, 0, engine=engine, **kw)
        assert _same(ref, got), engine


def test_numpy_fallback_selected_by_env():
    code = "from dsrc_perf.sim import kernels; print(kernels.use_numba())"
    env = dict(os.environ, DSRC_PERF_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


# -- channel rules ------------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**32), policy=st.sampled_from(["dot11p", "spcdc"]))
def test_no_transmission_starts_on_a_busy_channel(n, seed, policy):
    p = ScenarioParams(n_vehicles=n, lambda_=50)
    tr, _ = run_replication(p, policy, 1.0, 0.0, seed)
    starts = np.unique(tr.tx_slot[tr.tx_slot >= 0])
    assert np.all(np.diff(starts) >= derive_timing(p).slots_per_tx)
    # all packets starting in one slot share the outcome
    for s in starts[:200]:
        outs = tr.outcome[tr.tx_slot == s]
        assert (len(outs) == 1 and outs[0] == DELIVERED) or (len(outs) > 1 and np.all(outs == COLLIDED))


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2**32), policy=st.sampled_from(["dot11p", "spcdc"]),
       lam=st.sampled_from([10, 200, 1500]))
def test_conservation(n, seed, policy, lam):
    p = ScenarioParams(n_vehicles=n, lambda_=lam)
    tr, _ = run_replication(p, policy, 0.5, 0.0, seed)
    counts = {o: int((tr.outcome == o).sum()) for o in (DELIVERED, COLLIDED, DROPPED, IN_FLIGHT)}
    assert sum(counts.values()) == len(tr.outcome)
    for v in range(n):
        mine = tr.outcome[tr.vehicle == v]
        assert len(mine) == int((tr.gen_slot[tr.vehicle == v] < tr.end_slot).sum())
        # only a vehicle's last packet can still be waiting at the end
        assert (mine == IN_FLIGHT).sum() <= 1


def test_overload_drops_are_counted():
    # 31-slot period with 23-slot transmissions: most packets are replaced
    p = ScenarioParams(n_vehicles=3, lambda_=2000)
    m = run(p, "dot11p", 0.5, 0.0, 1, reps=2).metrics
    assert m.dropped > 0
    assert m.generated == m.delivered + m.collided + m.dropped + m.in_flight


def test_single_vehicle_access_is_difs():
    p = ScenarioParams(n_vehicles=1)
    tr, _ = run_replication(p, "dot11p", 10.0, 0.0, 3)
    assert len(tr.outcome) == 100
    assert np.all(tr.outcome == DELIVERED)
    np.testing.assert_array_equal(tr.tx_slot - tr.gen_slot, 4)
    m = run(p, "dot11p", 10.0, 0.0, 3, reps=2).metrics
    assert m.pdr == 1.0
    assert m.mean_access_s == pytest.approx(p.difs, rel=1e-12)


def test_single_vehicle_spcdc_waits_c_slots():
    p = ScenarioParams(n_vehicles=1, spcdc_period=1e-3)
    tr, _ = run_replication(p, "spcdc", 5.0, 0.0, 3)
    # b = C + omega with omega in {-1, 0, 1}
    assert set(np.unique(tr.tx_slot - tr.gen_slot)) <= {2, 3, 4}


def test_same_slot_immediate_access_does_not_collide():
    # both arrive to an idle channel in the same slot; the earlier arrival
    # in continuous time goes first and the other senses it
    p = ScenarioParams(n_vehicles=2)
    tr, _ = run_replication(p, "dot11p", 0.05, 0.0, 0, phases=[100, 100])
    first = tr.gen_slot == 100
    assert np.all(tr.outcome[first] == DELIVERED)
    assert sorted(tr.tx_slot[first] - 100)[0] == 4


def test_backoff_transmission_preempts_immediate_access():
    # vehicle 0 leaves backoff with counter 0 at slot 24; vehicle 1 arrives at
    # slot 20 to an idle channel and would also start at slot 24
    p = ScenarioParams(n_vehicles=2)
    n_pk = 2
    tx = np.full((2, n_pk), -1, np.int64)
    out = np.full((2, n_pk), -1, np.int8)
    cw = np.zeros((2, n_pk), np.int64)
    omega = np.zeros((2, 1), np.int64)
    for sim in (kernels.simulate_numba, kernels.simulate_numpy, simulate_reference):
        tx[:] = -1
        out[:] = -1
        sim(0, np.array([0, 20]), np.zeros(2), 6250, 100, 23, 4, cw, omega, 10, 3, 20, False, tx, out)
        assert tx[0, 0] == 24 and out[0, 0] == DELIVERED
        assert tx[1, 0] == 24 + 23 + 4 and out[1, 0] == DELIVERED


# -- small-instance oracles -------------------------------------------------------

def test_forced_simultaneous_backoff_collides_one_in_cw():
    """Two vehicles arrive together on a busy channel every period.

    A third vehicle, generating 5 slots earlier, is always idle on arrival and
    starts its transmission one slot before the pair arrives.
    """
    cw = 16
    p = ScenarioParams(n_vehicles=3, cw=cw)
    period = derive_timing(p).period_slots
    trials = 100_000
    tr, _ = run_replication(p, "dot11p", trials / p.lambda_, 0.0, 2024, phases=[0, 0, period - 5],
                            initial_busy_slots=10)
    pair = (tr.vehicle == 0) & (tr.outcome != IN_FLIGHT)
    n = int(pair.sum())
    assert n >= trials - 1
    rate = float((tr.outcome[pair] == COLLIDED).mean())
    sd = math.sqrt((1 / cw) * (1 - 1 / cw) / n)
    assert abs(rate - 1 / cw) <= 3 * sd
    helper = tr.vehicle == 2
    assert np.all(tr.outcome[helper & (tr.outcome != IN_FLIGHT)] == DELIVERED)


def test_cw2_enumeration_by_seed_search():
    """All four (draw_0, draw_1) combinations of a CW=2 backoff, found by seed search."""
    p = ScenarioParams(n_vehicles=2, cw=2)
    dur = 0.004
    found = {}
    seed = 0
    while len(found) < 4:
        rng = make_rng(seed, 0)
        rng.random(2)
        end_slot = round(dur / p.slot)
        n_pk = -(-end_slot // derive_timing(p).period_slots) + 1
        d = rng.integers(0, 2, size=(2, n_pk))
        found.setdefault((int(d[0, 0]), int(d[1, 0])), seed)
        seed += 1
    for (d0, d1), s in sorted(found.items()):
        tr, _ = run_replication(p, "dot11p", dur, 0.0, s, phases=[0, 0], initial_busy_slots=10)
        first = tr.gen_slot == 0
        outs, tx = tr.outcome[first], tr.tx_slot[first]
        if d0 == d1:
            assert np.all(outs == COLLIDED)
            assert tx[0] == tx[1] == 10 + 4 + d0
        else:
            assert np.all(outs == DELIVERED)
            lo = int(np.argmin([d0, d1]))
            assert tx[lo] == 10 + 4 + min(d0, d1)
            assert tx[1 - lo] == tx[lo] + 23 + 4 + (max(d0, d1) - min(d0, d1))


def test_timeline_complete_after_collision_free_period():
    p = ScenarioParams(n_vehicles=6)
    t = derive_timing(p)
    n_pk = 3
    phase = np.array([0, 500, 1000, 1500, 2000, 2500])
    tx = np.full((6, n_pk), -1, np.int64)
    out = np.full((6, n_pk), -1, np.int8)
    states = []
    simulate_reference(1, phase, np.zeros(6), t.period_slots, t.period_slots + 2600, t.slots_per_tx, t.difs_slots,
                       np.zeros((6, n_pk), np.int64), np.zeros((6, 1), np.int64), 10, 3, 0, False, tx, out,
                       states_out=states)
    assert np.all(out[:, 0] == DELIVERED)
    for v, s in enumerate(states):
        assert set(s.timeline) == set(range(6)) - {v}
        assert all(s.timeline[o] == phase[o] for o in s.timeline)


def test_collided_packet_teaches_nothing():
    p = ScenarioParams(n_vehicles=3, cw=1)
    t = derive_timing(p)
    tx = np.full((3, 2), -1, np.int64)
    out = np.full((3, 2), -1, np.int8)
    states = []
    # two spcdc vehicles in the same slot with identical counters collide
    simulate_reference(1, np.array([0, 0, 3000]), np.zeros(3), t.period_slots, 3100, t.slots_per_tx, t.difs_slots,
                       np.zeros((3, 2), np.int64), np.zeros((3, 1), np.int64), 10, 3, 0, False, tx, out,
                       states_out=states)
    assert out[0, 0] == out[1, 0] == COLLIDED
    assert set(states[2].timeline) == set()
    assert set(states[0].timeline) == {2}


# -- determinism ----------------------------------------------------------------------

def test_same_seed_same_trace():
    p = ScenarioParams(n_vehicles=40)
    a, _ = run_replication(p, "spcdc", 3.0, 0.5, 99, 2)
    b, _ = run_replication(p, "spcdc", 3.0, 0.5, 99, 2)
    assert _same(a, b)
    m1 = run(p, "dot11p", 3.0, 0.5, 5, reps=3).metrics
    m2 = run(p, "dot11p", 3.0, 0.5, 5, reps=3).metrics
    assert m1.pdr == m2.pdr and m1.mean_service_s == m2.mean_service_s


def test_replications_keyed_by_seed_xor_rep():
    a = make_rng(5, 3).integers(0, 2**62, size=4)
    b = make_rng(6, 0).integers(0, 2**62, size=4)
    np.testing.assert_array_equal(a, b)


def test_different_seeds_agree_statistically():
    p = ScenarioParams(n_vehicles=120)
    # seeds far apart so that seed ^ rep streams do not overlap
    a = run(p, "dot11p", 10.0, 2.0, 1, reps=10).metrics
    b = run(p, "dot11p", 10.0, 2.0, 1 << 32, reps=10).metrics
    assert abs(a.pdr - b.pdr) <= a.pdr_half_width + b.pdr_half_width


def test_parallel_replications_match_serial():
    p = ScenarioParams(n_vehicles=30)
    a = run(p, "spcdc", 3.0, 0.5, 4, reps=4).metrics
    b = run(p, "spcdc", 3.0, 0.5, 4, reps=4, workers=2).metrics
    assert a.pdr == b.pdr and a.mean_reception_s == b.mean_reception_s
    assert a.contention_density == b.contention_density


def test_merge_order_independent():
    p = ScenarioParams(n_vehicles=50)
    reps = [trace_stats(run_replication(p, "dot11p", 3.0, 0.5, 8, r)[0], p.lambda_) for r in range(5)]
    a, b = merge(reps, 8), merge(reps[::-1], 8)
    assert a.pdr == b.pdr
    assert a.mean_service_s == pytest.approx(b.mean_service_s, rel=1e-15)
    assert a.mean_reception_s == pytest.approx(b.mean_reception_s, rel=1e-15)


def test_invalid_policy():
    with pytest.raises(InvalidPolicy):
        run(ScenarioParams(), "aloha", 1.0, 0.0)


# -- estimators -------------------------------------------------------------------------

def test_reception_delay_examples():
    assert reception_delay_accumulate([True, True, True], [1e-3] * 3, 10) == pytest.approx(1e-3)
    # collided then delivered: 1/lambda + service
    assert reception_delay_accumulate([False, True], [1e-3, 1e-3], 10) == pytest.approx(0.101)
    # trailing failures are discarded
    assert reception_delay_accumulate([True, False, False], [1e-3] * 3, 10) == pytest.approx(1e-3)
    assert math.isnan(reception_delay_accumulate([False, False], [1e-3] * 2, 10))


@pytest.mark.parametrize("p_c", [0.05, 0.2, 0.5])
def test_reception_delay_matches_geometric_closed_form(p_c):
    rng = np.random.default_rng(17)
    lam = 10.0
    ok = rng.random(400_000) >= p_c
    got = reception_delay_accumulate(ok, np.zeros(len(ok)), lam)
    assert got == pytest.approx(p_c / ((1 - p_c) * lam), rel=0.02)


def test_contention_density_examples():
    assert contention_density_sample(np.zeros(5, bool)) == 0
    assert contention_density_sample(np.array([False, True, False])) == 1


def test_mean_density_from_trace():
    # one packet waiting 10 slots out of a 100-slot window
    tr = SimTrace(vehicle=np.array([0]), gen_slot=np.array([20]), tx_slot=np.array([30]),
                  outcome=np.array([DELIVERED], np.int8), slot=16e-6, t_tr=3e-4, period_slots=1000,
                  warmup_slot=0, end_slot=100)
    assert mean_contention_density(tr) == pytest.approx(0.1)


def test_trace_csv(tmp_path):
    p = ScenarioParams(n_vehicles=3)
    tr, _ = run_replication(p, "dot11p", 0.3, 0.0, 1)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "vehicle_id,gen_time_s,tx_start_s,outcome,access_delay_s,service_time_s"
    assert len(lines) == len(tr.outcome) + 1
