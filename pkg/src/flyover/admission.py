"""Border-router admission: requester counting and bandwidth grants.

Per interface pair, the reservable bandwidth handed to one source AS is the
allocation-matrix entry divided by the number of requesting ASes (clamped
below). The requester count is maintained with three rotating membership
filters: one holding the ASes grantable in the current interval, one
collecting current requesters, and one holding the previous interval's
requesters. Rotation promotes requesters so that an AS is guaranteed a
grant at most two intervals after its first request, while the union
cardinality of the two collection filters keeps the count high enough that
the sum of grants can never exceed the reserved fraction of the entry.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

from . import crypto, wire
from .policing import DedupWindow, TrafficMonitor


def flyover_bandwidth(entry_bw: int, requesters: int, min_requesters: int) -> int:
    """Per-source share of an interface-pair entry: entry / max(count, floor)."""
    if requesters < 0 or min_requesters < 1:
        raise ValueError("requesters must be >= 0 and min_requesters >= 1")
    return entry_bw // max(requesters, min_requesters)


class ExactSetFilter:
    """Exact membership set; the oracle-mode counterpart of the Bloom filter."""

    __slots__ = ("items",)

    def __init__(self):
        self.items: set[int] = set()

    def add(self, item: int) -> None:
        self.items.add(item)

    def __contains__(self, item: int) -> bool:
        return item in self.items

    def union_cardinality(self, other: "ExactSetFilter") -> int:
        return len(self.items | other.items)

    def reset(self) -> "ExactSetFilter":
        self.items.clear()
        return self


class BloomFilter:
    """Bloom filter over AS ids with double hashing.

    Union cardinality is estimated from the fill ratio of the bitwise OR and
    rounded up: over-estimating the requester count only shrinks grants, so
    the no-over-allocation guarantee is preserved.
    """

    __slots__ = ("bits", "n_bits", "n_hashes")

    def __init__(self, n_bits: int = 95_851, n_hashes: int = 7):
        self.bits = 0
        self.n_bits = n_bits
        self.n_hashes = n_hashes

    def _mask(self, item: int) -> int:
        digest = hashlib.blake2b(item.to_bytes(8, "big"), digest_size=16).digest()
        h1 = int.from_bytes(digest[:8], "big")
        h2 = int.from_bytes(digest[8:], "big") | 1
        mask = 0
        for i in range(self.n_hashes):
            mask |= 1 << ((h1 + i * h2) % self.n_bits)
        return mask

    def add(self, item: int) -> None:
        self.bits |= self._mask(item)

    def __contains__(self, item: int) -> bool:
        mask = self._mask(item)
        return self.bits & mask == mask

    def union_cardinality(self, other: "BloomFilter") -> int:
        filled = (self.bits | other.bits).bit_count()
        if filled >= self.n_bits:
            return self.n_bits
        est = -(self.n_bits / self.n_hashes) * math.log1p(-filled / self.n_bits)
        return math.ceil(est)

    def reset(self) -> "BloomFilter":
        self.bits = 0
        return self


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator parameters; the reserved fraction must stay in (0, 1]."""

    interval_ns: int = 10_000_000_000  # rotation period
    min_requesters: int = 16
    reserved_fraction: Fraction = Fraction(4, 5)
    tentative_slots: int = 8
    filter_bits: int = 95_851
    hash_count: int = 7
    exact: bool = False

    def __post_init__(self):
        if not 0 < self.reserved_fraction <= 1:
            raise ValueError("reserved_fraction must be in (0, 1]")
        if self.min_requesters < 1:
            raise ValueError("min_requesters must be >= 1")

    def make_filter(self):
        if self.exact:
            return ExactSetFilter()
        return BloomFilter(self.filter_bits, self.hash_count)


@dataclass(frozen=True)
class Grant:
    bw: int
    ts_exp: int
    tentative: bool = False


class RequesterEstimator:
    """Rotating-filter requester counter for one interface pair (or ingress).

    ``granted`` is read-only between rotations; requests only insert into
    ``current`` and consult ``granted``. Tentative slots hand out the
    unreserved remainder to first-time requesters, at most ``tentative_slots``
    distinct ASes per interval, and those grants expire at the interval end
    so the instantaneous total never exceeds the full entry.
    """

    def __init__(self, config: EstimatorConfig, now: int = 0):
        self.config = config
        self.granted = config.make_filter()
        self.previous = config.make_filter()
        self.current = config.make_filter()
        self.requesters = config.min_requesters
        self.slots_used = 0
        self._tentative_holders: dict[int, int] = {}  # src -> granted bw this interval
        self.next_rotation = now + config.interval_ns

    def rotate(self, now: int) -> None:
        """Apply every rotation due by ``now`` (idempotent when none are)."""
        while now >= self.next_rotation:
            union = self.current.union_cardinality(self.previous)
            self.requesters = max(union, self.config.min_requesters)
            self.granted, self.previous, self.current = (
                self.previous,
                self.current,
                self.granted.reset(),
            )
            self.slots_used = 0
            self._tentative_holders.clear()
            self.next_rotation += self.config.interval_ns

    def request(self, src: int, entry_bw: int, now: int) -> Grant | None:
        """Admit one request against ``entry_bw``; None means retry later.

        Callers must have applied rotations up to ``now`` (see
        :meth:`rotate`); admission itself never rotates so that the
        tie-break between a simultaneous rotation and request stays with
        the caller.
        """
        cfg = self.config
        self.current.add(src)
        if src in self.granted:
            bw = int(cfg.reserved_fraction * entry_bw / self.requesters)
            return Grant(bw, now + cfg.interval_ns, tentative=False)
        if src in self._tentative_holders:
            # repeat first-timer in the same interval: same slot, same grant
            return Grant(self._tentative_holders[src], self.next_rotation, tentative=True)
        if self.slots_used < cfg.tentative_slots:
            self.slots_used += 1
            bw = int((1 - cfg.reserved_fraction) * entry_bw / cfg.tentative_slots)
            self._tentative_holders[src] = bw
            return Grant(bw, self.next_rotation, tentative=True)
        return None


@dataclass(frozen=True)
class ScheduledUpdate:
    """Outcome of an allocation-matrix change: when each plane sees it."""

    ingress: int
    egress: int
    old_value: int
    new_value: int
    admission_effective: int
    capacity_effective: int


class AllocationMatrix:
    """Reservable bandwidth between interface pairs of one AS.

    Decreases apply to admission immediately but to capacity only one
    reservation validity period later; increases apply to both at once.
    Entries are non-negative with a zero diagonal; interface 0 is the
    AS-internal interface.
    """

    def __init__(self, entries: list[list[int]]):
        n = len(entries)
        for row in entries:
            if len(row) != n:
                raise ValueError("matrix must be square")
        for i in range(n):
            if entries[i][i] != 0:
                raise ValueError("diagonal entries must be 0")
            for j in range(n):
                if entries[i][j] < 0:
                    raise ValueError("entries must be >= 0")
        self.n_interfaces = n
        self._admission = [list(row) for row in entries]
        self._capacity_timeline: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self._base_capacity = [list(row) for row in entries]

    @classmethod
    def from_capacities(cls, capacities: list[int]) -> "AllocationMatrix":
        """Build from per-interface link capacities.

        Each entry (a, b) starts at the capacity of the egress link b, then
        columns are scaled so they sum to that capacity, and any row whose
        sum exceeds the ingress link capacity is scaled down to equality.
        Done in exact rationals, floored to integer bit rates at the end.
        """
        n = len(capacities)
        m = [[Fraction(0) if a == b else Fraction(capacities[b]) for b in range(n)] for a in range(n)]
        for b in range(n):
            col = sum(m[a][b] for a in range(n))
            if col > 0:
                scale = Fraction(capacities[b]) / col
                for a in range(n):
                    m[a][b] *= scale
        for a in range(n):
            row = sum(m[a])
            if row > capacities[a]:
                scale = Fraction(capacities[a]) / row
                for b in range(n):
                    m[a][b] *= scale
        return cls([[int(m[a][b]) for b in range(n)] for a in range(n)])

    def _check_pair(self, a: int, b: int) -> None:
        if not (0 <= a < self.n_interfaces and 0 <= b < self.n_interfaces):
            raise IndexError("interface out of range")

    def admission_value(self, ingress: int, egress: int) -> int:
        self._check_pair(ingress, egress)
        return self._admission[ingress][egress]

    def capacity_value(self, ingress: int, egress: int, now: int) -> int:
        self._check_pair(ingress, egress)
        value = self._base_capacity[ingress][egress]
        for effective, new in self._capacity_timeline.get((ingress, egress), ()):
            if now >= effective:
                value = new
        return value

    def update(self, ingress: int, egress: int, new_value: int, now: int,
               validity_ns: int) -> ScheduledUpdate:
        """Change one entry; returns when each plane observes the new value."""
        self._check_pair(ingress, egress)
        if new_value < 0:
            raise ValueError("entry must be >= 0")
        if ingress == egress and new_value != 0:
            raise ValueError("diagonal entries must stay 0")
        old = self._admission[ingress][egress]
        self._admission[ingress][egress] = new_value
        cap_at = now if new_value >= old else now + validity_ns
        self._capacity_timeline.setdefault((ingress, egress), []).append((cap_at, new_value))
        return ScheduledUpdate(ingress, egress, old, new_value, now, cap_at)

    def rows(self) -> list[list[int]]:
        return [list(r) for r in self._admission]


class DefaultPolicy:
    """Estimator-backed bandwidth policy, one estimator per interface pair.

    Set ``per_pair=False`` to share one estimator per ingress interface
    instead (cheaper, coarser counts). Demand fields are accepted and
    ignored; a demand-aware policy can be plugged in through the same
    ``get_bandwidth`` surface.
    """

    def __init__(self, matrix: AllocationMatrix, config: EstimatorConfig,
                 per_pair: bool = True, now: int = 0):
        self.matrix = matrix
        self.config = config
        self.per_pair = per_pair
        self._created_at = now
        self._estimators: dict[tuple, RequesterEstimator] = {}

    def estimator_for(self, ingress: int, egress: int) -> RequesterEstimator:
        key = (ingress, egress) if self.per_pair else (ingress,)
        est = self._estimators.get(key)
        if est is None:
            est = self._estimators[key] = RequesterEstimator(self.config, self._created_at)
        return est

    def get_bandwidth(self, src: int, ingress: int, egress: int, now: int,
                      bw_demand: int | None = None, bw_min: int | None = None) -> Grant | None:
        est = self.estimator_for(ingress, egress)
        est.rotate(now)
        entry = self.matrix.admission_value(ingress, egress)
        return est.request(src, entry, now)


def admit_setup(state, req: wire.SetupRequest, hop_index: int, ingress: int, egress: int,
                now: int, nonce_source=None) -> list[wire.RespEntry]:
    """Run the admission procedure for one router's hop of a setup request.

    ``state`` carries the router-resident pieces: ``secret``, ``policy``,
    ``monitor``, ``dedup`` and ``config`` (timestamp window). On any failed
    check the result is simply an empty list; the caller forwards the
    request regardless so ASes later on the path can still admit it.

    The ingress role admits the forward reservation and the egress role the
    backward one (with the interface pair swapped); both are handled here
    because this codebase models one router per AS.
    """
    entry = req.entry_for(hop_index)
    if entry is None or not (entry.flag_r or entry.flag_b):
        return []
    cfg = state.config
    if not -cfg.delta_ns <= now - req.ts_req <= cfg.lifetime_ns + cfg.delta_ns:
        return []
    drkey = crypto.derive_drkey(state.secret, req.src)
    expected = crypto.compute_request_auth(
        drkey, req.ts_req, entry.flag_r, entry.flag_b, req.bw_demand, req.bw_min
    )
    if expected != entry.auth:
        return []
    if not state.dedup.check(req.src, req.ts_req, DedupWindow.KIND_SETUP, now):
        return []
    state.note_request(req.src, req.ts_req)

    out = []
    for direction, wants, pair in (
        (wire.FORWARD, entry.flag_r, (ingress, egress)),
        (wire.BACKWARD, entry.flag_b, (egress, ingress)),
    ):
        if not wants:
            continue
        grant = state.policy.get_bandwidth(req.src, pair[0], pair[1], now,
                                           req.bw_demand, req.bw_min)
        if grant is None:
            continue
        alpha = crypto.compute_authenticator(state.secret, req.src, pair[0], pair[1])
        nonce = nonce_source.randbytes(12) if nonce_source is not None else None
        nonce, enc_auth, tag = crypto.seal_grant(drkey, alpha, grant.bw, grant.ts_exp, nonce)
        out.append(wire.RespEntry(hop_index, direction, nonce, enc_auth, tag,
                                  grant.bw, grant.ts_exp))
        state.monitor.register(req.src, grant.bw, grant.ts_exp, direction, now)
        state.note_grant(req.src, pair, grant, now, req.ts_req)
    return out
