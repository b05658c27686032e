"""Deterministic per-source traffic policing and replay suppression.

The monitor keeps one token bucket per (source AS, direction); each
bucket's whole state is one eight-byte timestamp, so policing a hundred
thousand sources costs 800 kB. The duplicate suppressor is an exact
sliding-window set over
(source, timestamp, kind), giving zero false positives and zero false
negatives inside the admission window.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field
from enum import Enum


class Verdict(Enum):
    CONFORM = "conform"
    OVERUSE = "overuse"
    EXPIRED = "expired"
    UNKNOWN = "unknown"


class TokenBucket:
    """Token bucket whose entire state is one timestamp.

    A packet taking ``pkt_len / rate`` ns to drain is admitted iff the
    drain completes within ``window`` ns from now; the timestamp tracks
    when the bucket would run empty. Equivalent to a counter bucket with
    rate CIR and burst CBS = rate * window.
    """

    __slots__ = ("ts", "rate", "window")

    def __init__(self, rate_bytes_per_ns: float, window_ns: float, now: float = 0.0):
        if rate_bytes_per_ns <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_bytes_per_ns
        self.window = window_ns
        self.ts = now  # a fresh bucket is full

    def check(self, pkt_len: int, now: float) -> bool:
        """Admit and charge the packet, or refuse and leave state unchanged."""
        pkt_time = pkt_len / self.rate
        base = self.ts if self.ts > now else now
        if base + pkt_time <= now + self.window:
            self.ts = base + pkt_time
            return True
        return False

    def serialize(self) -> bytes:
        return struct.pack(">d", self.ts)


@dataclass
class MonitorEntry:
    src: int
    direction: int
    bucket: TokenBucket
    bw: int  # granted rate, bits per second
    ts_exp: int


@dataclass
class SourceCounters:
    conform_bytes: int = 0
    overuse_bytes: int = 0
    expired_pkts: int = 0
    replay_pkts: int = 0


class TrafficMonitor:
    """Per-source reservation registry with token-bucket policing."""

    def __init__(self, window_ns: int = 50_000_000):
        self.window_ns = window_ns
        self.entries: dict[tuple[int, int], MonitorEntry] = {}
        self.counters: dict[int, SourceCounters] = {}

    def _counters(self, src: int) -> SourceCounters:
        c = self.counters.get(src)
        if c is None:
            c = self.counters[src] = SourceCounters()
        return c

    def register(self, src: int, bw: int, ts_exp: int, direction: int, now: int) -> None:
        """Create or update the single entry for (src, direction).

        A repeated or renewed registration keeps the bucket state: refilling
        on request would let a source launder burst capacity.
        """
        if bw < 0:
            raise ValueError("bandwidth must be >= 0")
        key = (src, direction)
        rate = bw / 8 / 1e9  # bits per second -> bytes per ns
        entry = self.entries.get(key)
        if entry is None:
            bucket = TokenBucket(max(rate, 1e-18), self.window_ns, now)
            self.entries[key] = MonitorEntry(src, direction, bucket, bw, ts_exp)
        else:
            entry.bucket.rate = max(rate, 1e-18)
            entry.bw = bw
            entry.ts_exp = ts_exp

    def police(self, src: int, pkt_len: int, ingress: int, egress: int,
               direction: int, now: int) -> Verdict:
        entry = self.entries.get((src, direction))
        if entry is None:
            return Verdict.UNKNOWN
        if now > entry.ts_exp:
            self._counters(src).expired_pkts += 1
            return Verdict.EXPIRED
        if entry.bucket.check(pkt_len, now):
            self._counters(src).conform_bytes += pkt_len
            return Verdict.CONFORM
        self._counters(src).overuse_bytes += pkt_len
        return Verdict.OVERUSE

    def note_replay(self, src: int) -> None:
        self._counters(src).replay_pkts += 1

    def entry(self, src: int, direction: int) -> MonitorEntry | None:
        return self.entries.get((src, direction))

    def remove(self, src: int, direction: int) -> None:
        self.entries.pop((src, direction), None)

    def sweep(self, now: int, grace_ns: int = 0) -> int:
        """Evict entries expired for longer than ``grace_ns``; returns count."""
        dead = [k for k, e in self.entries.items() if now > e.ts_exp + grace_ns]
        for k in dead:
            del self.entries[k]
        return len(dead)

    def serialized_bucket_state(self) -> bytes:
        """All bucket state back to back: 8 bytes per registered entry."""
        return b"".join(e.bucket.serialize() for e in self.entries.values())

    def report_rows(self) -> list[tuple[int, int, int, int, int]]:
        """(src, conform_bytes, overuse_bytes, expired_pkts, replay_pkts) rows."""
        return [
            (src, c.conform_bytes, c.overuse_bytes, c.expired_pkts, c.replay_pkts)
            for src, c in sorted(self.counters.items())
        ]


class DedupWindow:
    """Exact duplicate suppression over (source, timestamp, kind) triples.

    Entries are evicted once their timestamp falls out of the admission
    window, so a packet re-sent after its original expired reads as fresh
    (and then fails the upstream currency check instead).
    """

    KIND_DATA_FWD = 0
    KIND_DATA_BWD = 1
    KIND_SETUP = 2

    def __init__(self, window_ns: int):
        self.window_ns = window_ns
        self.seen: set[tuple[int, int, int]] = set()
        self._heap: list[tuple[int, tuple[int, int, int]]] = []

    def check(self, src: int, ts: int, kind: int, now: int) -> bool:
        """True if fresh (and records it); False if a replay."""
        cutoff = now - self.window_ns
        while self._heap and self._heap[0][0] < cutoff:
            _, key = heapq.heappop(self._heap)
            self.seen.discard(key)
        key = (src, ts, kind)
        if key in self.seen:
            return False
        self.seen.add(key)
        heapq.heappush(self._heap, (ts, key))
        return True

    def __len__(self) -> int:
        return len(self.seen)


def self_renew(monitor: TrafficMonitor, src: int, policy, ingress: int, egress: int,
               direction: int, now: int) -> bool:
    """Renew a reservation from validated data traffic instead of a request.

    Runs the bandwidth policy exactly as an explicit request would and
    updates the monitor entry; no response is emitted, so a source that
    wants to learn the refreshed size still has to send a real request.
    Returns True if the entry was updated.
    """
    grant = policy.get_bandwidth(src, ingress, egress, now)
    if grant is None:
        return False
    monitor.register(src, grant.bw, grant.ts_exp, direction, now)
    return True
