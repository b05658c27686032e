"""Policing: bucket-vs-oracle equivalence, monitor semantics, dedup window."""

import random
import struct

import pytest

from flyover.admission import AllocationMatrix, DefaultPolicy, EstimatorConfig
from flyover.policing import DedupWindow, TokenBucket, TrafficMonitor, Verdict, self_renew
from fractions import Fraction

from oracles import CounterBucket

MS = 1_000_000
S = 1_000_000_000


def test_fresh_bucket_admits_up_to_burst():
    b = TokenBucket(rate_bytes_per_ns=1.0, window_ns=50 * MS, now=0)
    assert b.check(50 * MS, 0)  # exactly one burst worth
    assert not b.check(1, 0)


def test_old_timestamp_clamps_to_now():
    b = TokenBucket(1.0, 50 * MS, now=0)
    b.ts = 0
    # long idle: bucket cannot be "more than full"
    assert b.check(50 * MS, now=10 * S)
    assert not b.check(1, now=10 * S)


def test_back_to_back_burst_count():
    # window 50 ms at 1.25 B/ns -> burst 62.5e6 bytes; 1000-byte packets
    b = TokenBucket(1.25, 50 * MS, now=0)
    allowed = 0
    while b.check(1000, 0):
        allowed += 1
    assert allowed == 62_500_000 // 1000


def test_denial_leaves_state_unchanged():
    b = TokenBucket(1.0, 1000, now=0)
    b.check(600, 0)
    ts_before = b.ts
    assert not b.check(600, 0)
    assert b.ts == ts_before
    assert b.check(400, 0)


def _random_trace(rng, n):
    t = 0
    out = []
    for _ in range(n):
        t += rng.randrange(0, 2_000_000)
        out.append((t, rng.randrange(1, 5000)))
    return out


@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0, 0.25, 4.0])
def test_bucket_matches_counter_oracle(rate):
    """Decision-for-decision equivalence with a classic counter bucket."""
    rng = random.Random(int(rate * 100))
    for _ in range(200):
        window = rng.choice([10 * MS, 50 * MS, 100 * MS])
        b = TokenBucket(rate, window, now=0)
        oracle = CounterBucket(rate, rate * window)
        for now, length in _random_trace(rng, 50):
            assert b.check(length, now) == oracle.check(length, now)


def test_bucket_serializes_to_eight_bytes():
    b = TokenBucket(1.0, 1000, now=123.5)
    raw = b.serialize()
    assert len(raw) == 8
    assert struct.unpack(">d", raw)[0] == b.ts


# monitor ---------------------------------------------------------------------

def test_register_twice_keeps_single_entry_and_bucket_state():
    mon = TrafficMonitor()
    mon.register(5, 8_000_000_000, 10 * S, 0, now=0)
    entry = mon.entry(5, 0)
    mon.police(5, 1000, 1, 2, 0, now=0)
    ts_after_traffic = entry.bucket.ts
    mon.register(5, 8_000_000_000, 12 * S, 0, now=1)  # repeated request
    assert mon.entry(5, 0) is entry
    assert entry.bucket.ts == ts_after_traffic  # burst not refilled
    assert entry.ts_exp == 12 * S
    assert len(mon.entries) == 1


def test_register_update_changes_rate():
    mon = TrafficMonitor()
    mon.register(5, 8_000_000_000, 10 * S, 0, now=0)
    mon.register(5, 16_000_000_000, 10 * S, 0, now=0)
    assert mon.entry(5, 0).bw == 16_000_000_000
    assert mon.entry(5, 0).bucket.rate == 2.0  # bytes per ns


def test_monitor_footprint_100k():
    mon = TrafficMonitor()
    for src in range(100_000):
        mon.register(src, 1_000_000, 10 * S, 0, now=0)
    assert len(mon.serialized_bucket_state()) == 800_000


def test_police_verdicts():
    mon = TrafficMonitor(window_ns=50 * MS)
    assert mon.police(9, 1000, 1, 2, 0, 0) is Verdict.UNKNOWN
    mon.register(9, 8_000_000_000, 5 * S, 0, now=0)
    assert mon.police(9, 1000, 1, 2, 0, 100) is Verdict.CONFORM
    assert mon.police(9, 1000, 1, 2, 0, 5 * S + 1) is Verdict.EXPIRED


def test_police_conforming_rate_never_flags():
    # send exactly at the granted rate for ten full burst windows
    mon = TrafficMonitor(window_ns=1 * MS)
    bw = 8_000_000_000  # 1 B/ns
    mon.register(3, bw, 10**12, 0, now=0)
    gap = 1000  # ns per 1000-byte packet at 1 B/ns
    for k in range(10 * MS // gap):
        assert mon.police(3, 1000, 1, 2, 0, k * gap) is Verdict.CONFORM


def test_police_double_rate_flags_half():
    # 1 ms burst window; the 50 ms trace spans 50 windows so the initial
    # burst contributes ~1% slack, inside the 2% tolerance
    mon = TrafficMonitor(window_ns=1 * MS)
    mon.register(4, 8_000_000_000, 10**12, 0, now=0)
    verdicts = []
    for k in range(100_000):
        verdicts.append(mon.police(4, 1000, 1, 2, 0, k * 500))  # 2x rate
    over = sum(v is Verdict.OVERUSE for v in verdicts)
    assert abs(over / len(verdicts) - 0.5) < 0.02
    c = mon.counters[4]
    assert c.conform_bytes + c.overuse_bytes == 100_000 * 1000


def test_policing_soundness_bound():
    """Conform bytes can never exceed burst + rate * elapsed."""
    rng = random.Random(11)
    for _ in range(50):
        window = 50 * MS
        bw = rng.choice([8_000_000_000, 4_000_000_000, 1_000_000_000])
        rate = bw / 8 / 1e9
        mon = TrafficMonitor(window_ns=window)
        mon.register(1, bw, 10**15, 0, now=0)
        conform = 0
        t = 0
        for _ in range(400):
            t += rng.randrange(0, 1_000_000)
            length = rng.randrange(1, 9000)
            if mon.police(1, length, 0, 1, 0, t) is Verdict.CONFORM:
                conform += length
            assert conform <= rate * window + rate * t + 1e-6


def test_sweep_evicts_lazily():
    mon = TrafficMonitor()
    mon.register(1, 1000, 100, 0, now=0)
    mon.register(2, 1000, 10**9, 0, now=0)
    assert mon.sweep(now=200) == 1
    assert mon.entry(1, 0) is None and mon.entry(2, 0) is not None


def test_report_rows_schema():
    mon = TrafficMonitor(window_ns=50 * MS)
    mon.register(7, 8_000_000_000, 10 * S, 0, now=0)
    mon.police(7, 1000, 1, 2, 0, 0)
    mon.note_replay(7)
    rows = mon.report_rows()
    assert rows == [(7, 1000, 0, 0, 1)]


# dedup ------------------------------------------------------------------------

def test_dedup_fresh_then_replay():
    w = DedupWindow(window_ns=1500 * MS)
    assert w.check(1, 1000, DedupWindow.KIND_DATA_FWD, now=1000)
    assert not w.check(1, 1000, DedupWindow.KIND_DATA_FWD, now=1001)


def test_dedup_distinct_sources_share_timestamp():
    w = DedupWindow(window_ns=1500 * MS)
    assert w.check(1, 42, 0, now=42)
    assert w.check(2, 42, 0, now=43)


def test_dedup_direction_in_key():
    w = DedupWindow(window_ns=1500 * MS)
    assert w.check(1, 42, DedupWindow.KIND_DATA_FWD, now=42)
    assert w.check(1, 42, DedupWindow.KIND_DATA_BWD, now=43)
    assert w.check(1, 42, DedupWindow.KIND_SETUP, now=44)


def test_dedup_eviction_after_window():
    w = DedupWindow(window_ns=1000)
    assert w.check(1, 100, 0, now=100)
    # re-sent long after the original's window: fresh again
    assert w.check(1, 100, 0, now=5000)
    assert len(w) == 1


# self-renewal -------------------------------------------------------------------

def _warm_policy(entry_bw=100 * 10**9):
    m = AllocationMatrix([[0, entry_bw], [entry_bw, 0]])
    cfg = EstimatorConfig(interval_ns=10 * S, min_requesters=1,
                          reserved_fraction=Fraction(4, 5), tentative_slots=0, exact=True)
    policy = DefaultPolicy(m, cfg)
    est = policy.estimator_for(0, 1)
    est.granted.add(9)
    est.previous.add(9)
    return policy


def test_self_renew_advances_expiry():
    policy = _warm_policy()
    mon = TrafficMonitor()
    mon.register(9, 1000, 5 * S, 0, now=0)
    assert self_renew(mon, 9, policy, 0, 1, 0, now=3 * S)
    assert mon.entry(9, 0).ts_exp == 3 * S + 10 * S
    assert mon.entry(9, 0).bw == int(Fraction(4, 5) * 100 * 10**9)


def test_self_renew_denied_leaves_entry():
    m = AllocationMatrix([[0, 10**9], [10**9, 0]])
    cfg = EstimatorConfig(interval_ns=10 * S, min_requesters=1, tentative_slots=0, exact=True)
    policy = DefaultPolicy(m, cfg)
    mon = TrafficMonitor()
    mon.register(9, 1000, 5 * S, 0, now=0)
    assert not self_renew(mon, 9, policy, 0, 1, 0, now=3 * S)  # not in granted set
    assert mon.entry(9, 0).ts_exp == 5 * S
