"""Byte-exact codec for reservation messages.

All integers are big-endian. Layouts (sizes in bytes):

    SetupRequest   0x01 | src(8) | tsReq(8) | n(1) | n * [hop(1) flags(1) auth(16)]
                   flags: bit0 = forward reservation, bit1 = backward reservation
    SetupRequest   0x04 | src(8) | tsReq(8) | bwDem(8) | bwMin(8) | n(1) | entries
    (demand-aware variant)
    SetupResponse  0x02 | src(8) | tsReq(8) | m(1) | m * [hop(1) dir(1) nonce(12)
                   encAuth(16) tag(16) bw(8) tsExp(8)]
    DataPacket     0x03 | src(8) | flags(1) | tsPkt(8) | lenB(2) | nF(1) | nB(1)
                   | nF * [hop(1) rvf(3)] | nB * [hop(1) bvf(3)] | payload
                   flags: bit0 = direction (0 forward, 1 backward)

Hop lists are sorted by hop index without duplicates. Setup messages must
consume the whole buffer; for data packets everything after the declared
field lists is payload. Decoding is the exact inverse of encoding on valid
messages.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

MSG_SETUP_REQ = 0x01
MSG_SETUP_RESP = 0x02
MSG_DATA = 0x03
MSG_SETUP_REQ_DEMAND = 0x04

DATA_FIXED_HEADER = 22  # type + src + flags + tsPkt + lenB + nF + nB
FIELD_ENTRY_LEN = 4  # hop byte + 3-byte validation field
RESP_ENTRY_LEN = 62

FORWARD = 0
BACKWARD = 1


class EncodeError(ValueError):
    """Message violates a layout invariant (unsorted hops, oversized lists...)."""


class DecodeError(ValueError):
    """Input is not a valid encoding; ``reason`` is one of
    ``truncated``, ``bad_magic``, ``bad_counts``."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class ReqEntry:
    hop: int
    flag_r: bool
    flag_b: bool
    auth: bytes  # 16-byte request tag


@dataclass(frozen=True)
class SetupRequest:
    src: int
    ts_req: int
    entries: tuple[ReqEntry, ...]
    bw_demand: int | None = None
    bw_min: int | None = None

    @property
    def last_hop(self) -> int:
        return max(e.hop for e in self.entries) if self.entries else -1

    def entry_for(self, hop: int) -> ReqEntry | None:
        for e in self.entries:
            if e.hop == hop:
                return e
        return None


@dataclass(frozen=True)
class RespEntry:
    hop: int
    direction: int  # FORWARD or BACKWARD
    nonce: bytes
    enc_auth: bytes
    tag: bytes
    bw: int
    ts_exp: int


@dataclass(frozen=True)
class SetupResponse:
    src: int
    ts_req: int
    entries: tuple[RespEntry, ...] = ()


@dataclass(frozen=True)
class DataPacket:
    src: int
    d_flag: bool
    ts_pkt: int
    len_b: int
    rvfs: tuple[tuple[int, bytes], ...] = ()
    bvfs: tuple[tuple[int, bytes], ...] = ()
    payload: bytes = b""

    @property
    def header_len(self) -> int:
        return DATA_FIXED_HEADER + FIELD_ENTRY_LEN * (len(self.rvfs) + len(self.bvfs))

    @property
    def total_len(self) -> int:
        return self.header_len + len(self.payload)

    def field_for(self, hop: int) -> bytes | None:
        for h, f in (self.bvfs if self.d_flag else self.rvfs):
            if h == hop:
                return f
        return None


def _check_u(value: int, bits: int, what: str) -> int:
    if not 0 <= value < 1 << bits:
        raise EncodeError(f"{what} out of range for u{bits}")
    return value


def _check_hops(hops: list[int], what: str) -> None:
    if len(hops) > 255:
        raise EncodeError(f"too many {what} entries")
    if any(not 0 <= h <= 255 for h in hops):
        raise EncodeError(f"{what} hop index out of range")
    if hops != sorted(set(hops)):
        raise EncodeError(f"{what} entries must be sorted by hop with no duplicates")


def encode(msg) -> bytes:
    if isinstance(msg, SetupRequest):
        return _encode_request(msg)
    if isinstance(msg, SetupResponse):
        return _encode_response(msg)
    if isinstance(msg, DataPacket):
        return _encode_data(msg)
    raise EncodeError(f"cannot encode {type(msg).__name__}")


def _encode_request(msg: SetupRequest) -> bytes:
    _check_hops([e.hop for e in msg.entries], "request")
    if (msg.bw_demand is None) != (msg.bw_min is None):
        raise EncodeError("demand fields must be given together")
    out = bytearray()
    if msg.bw_demand is None:
        out.append(MSG_SETUP_REQ)
        out += struct.pack(">QQ", _check_u(msg.src, 64, "src"), _check_u(msg.ts_req, 64, "tsReq"))
    else:
        out.append(MSG_SETUP_REQ_DEMAND)
        out += struct.pack(
            ">QQQQ",
            _check_u(msg.src, 64, "src"),
            _check_u(msg.ts_req, 64, "tsReq"),
            _check_u(msg.bw_demand, 64, "bwDem"),
            _check_u(msg.bw_min, 64, "bwMin"),
        )
    out.append(len(msg.entries))
    for e in msg.entries:
        if len(e.auth) != 16:
            raise EncodeError("request auth must be 16 bytes")
        out.append(e.hop)
        out.append((1 if e.flag_r else 0) | (2 if e.flag_b else 0))
        out += e.auth
    return bytes(out)


def _encode_response(msg: SetupResponse) -> bytes:
    hops = [e.hop for e in msg.entries]
    if len(hops) > 255:
        raise EncodeError("too many response entries")
    # hop may repeat once: forward and backward entries for the same hop
    keys = [(e.hop, e.direction) for e in msg.entries]
    if keys != sorted(set(keys)):
        raise EncodeError("response entries must be sorted by (hop, direction), no duplicates")
    out = bytearray([MSG_SETUP_RESP])
    out += struct.pack(">QQ", _check_u(msg.src, 64, "src"), _check_u(msg.ts_req, 64, "tsReq"))
    out.append(len(msg.entries))
    for e in msg.entries:
        if e.direction not in (FORWARD, BACKWARD):
            raise EncodeError("bad response direction")
        if len(e.nonce) != 12 or len(e.enc_auth) != 16 or len(e.tag) != 16:
            raise EncodeError("bad response entry field size")
        out.append(e.hop)
        out.append(e.direction)
        out += e.nonce + e.enc_auth + e.tag
        out += struct.pack(">QQ", _check_u(e.bw, 64, "bw"), _check_u(e.ts_exp, 64, "tsExp"))
    return bytes(out)


def _encode_data(msg: DataPacket) -> bytes:
    _check_hops([h for h, _ in msg.rvfs], "rvf")
    _check_hops([h for h, _ in msg.bvfs], "bvf")
    if msg.total_len > 0xFFFF:
        raise EncodeError("packet exceeds 65535 bytes")
    out = bytearray([MSG_DATA])
    out += struct.pack(">Q", _check_u(msg.src, 64, "src"))
    out.append(1 if msg.d_flag else 0)
    out += struct.pack(">QH", _check_u(msg.ts_pkt, 64, "tsPkt"), _check_u(msg.len_b, 16, "lenB"))
    out.append(len(msg.rvfs))
    out.append(len(msg.bvfs))
    for hop, f in msg.rvfs + msg.bvfs:
        if len(f) != 3:
            raise EncodeError("validation field must be 3 bytes")
        out.append(hop)
        out += f
    out += msg.payload
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated", f"needed {n} bytes at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def rest(self) -> bytes:
        out = self.data[self.pos :]
        self.pos = len(self.data)
        return out

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError("bad_counts", "trailing bytes after message")


def decode(data: bytes):
    """Decode one message; raises :class:`DecodeError` on malformed input."""
    r = _Reader(data)
    kind = r.u8()
    if kind in (MSG_SETUP_REQ, MSG_SETUP_REQ_DEMAND):
        src, ts_req = r.u64(), r.u64()
        bw_demand = bw_min = None
        if kind == MSG_SETUP_REQ_DEMAND:
            bw_demand, bw_min = r.u64(), r.u64()
        entries = []
        for _ in range(r.u8()):
            hop = r.u8()
            flags = r.u8()
            if flags & ~0x03:
                raise DecodeError("bad_counts", "unknown request flag bits")
            entries.append(ReqEntry(hop, bool(flags & 1), bool(flags & 2), r.take(16)))
        r.expect_end()
        _decode_check_sorted([e.hop for e in entries])
        return SetupRequest(src, ts_req, tuple(entries), bw_demand, bw_min)
    if kind == MSG_SETUP_RESP:
        src, ts_req = r.u64(), r.u64()
        entries = []
        for _ in range(r.u8()):
            hop, direction = r.u8(), r.u8()
            if direction not in (FORWARD, BACKWARD):
                raise DecodeError("bad_counts", "bad direction byte")
            nonce, enc_auth, tag = r.take(12), r.take(16), r.take(16)
            bw, ts_exp = r.u64(), r.u64()
            entries.append(RespEntry(hop, direction, nonce, enc_auth, tag, bw, ts_exp))
        r.expect_end()
        keys = [(e.hop, e.direction) for e in entries]
        if keys != sorted(set(keys)):
            raise DecodeError("bad_counts", "response entries unsorted or duplicated")
        return SetupResponse(src, ts_req, tuple(entries))
    if kind == MSG_DATA:
        src = r.u64()
        flags = r.u8()
        if flags & ~0x01:
            raise DecodeError("bad_counts", "unknown data flag bits")
        ts_pkt, len_b = r.u64(), r.u16()
        n_f, n_b = r.u8(), r.u8()
        rvfs = tuple((r.u8(), r.take(3)) for _ in range(n_f))
        bvfs = tuple((r.u8(), r.take(3)) for _ in range(n_b))
        _decode_check_sorted([h for h, _ in rvfs])
        _decode_check_sorted([h for h, _ in bvfs])
        return DataPacket(src, bool(flags & 1), ts_pkt, len_b, rvfs, bvfs, r.rest())
    raise DecodeError("bad_magic", f"unknown message type {kind:#04x}")


def _decode_check_sorted(hops: list[int]) -> None:
    if hops != sorted(set(hops)):
        raise DecodeError("bad_counts", "hop entries unsorted or duplicated")
