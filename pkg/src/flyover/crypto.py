"""Symmetric-key primitives for flyover reservations.

Every key is 16 bytes. The MAC is AES-128 in CBC mode with a zero IV over
fixed-width, big-endian, zero-padded inputs; all MAC inputs fit in at most
two blocks, so fixed widths rule out length-extension issues. Grants are
sealed with ChaCha20-Poly1305 (IETF, 12-byte nonce).

All functions here are pure; they keep no state besides the invocation
counters used by cost-accounting tests.
"""

from __future__ import annotations

import os

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

KEY_LEN = 16
BLOCK_LEN = 16
NONCE_LEN = 12
TAG_LEN = 16
# Truncation length of validation fields, in bytes.
VALIDATION_FIELD_LEN = 3

_ZERO_IV = b"\x00" * BLOCK_LEN


class AuthFailure(Exception):
    """A sealed grant failed tag verification (tampered or mis-keyed)."""


class OpCounter:
    """Invocation counters for crypto cost accounting in tests."""

    __slots__ = ("macs", "prf_calls")

    def __init__(self) -> None:
        self.macs = 0
        self.prf_calls = 0

    def reset(self) -> None:
        self.macs = 0
        self.prf_calls = 0


ops = OpCounter()


def _aes_block(key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def cbc_mac(key: bytes, data: bytes) -> bytes:
    """AES-128 CBC-MAC over ``data`` zero-padded to a block multiple."""
    if len(key) != KEY_LEN:
        raise ValueError("MAC key must be 16 bytes")
    ops.macs += 1
    if len(data) % BLOCK_LEN:
        data = data + b"\x00" * (BLOCK_LEN - len(data) % BLOCK_LEN)
    enc = Cipher(algorithms.AES(key), modes.CBC(_ZERO_IV)).encryptor()
    ct = enc.update(data) + enc.finalize()
    return ct[-BLOCK_LEN:]


def derive_drkey(secret: bytes, remote_as: int) -> bytes:
    """Derive the per-remote-AS key: AES-128 of the zero-padded 64-bit AS id.

    Deterministic, so border routers can recompute the key on the fly from
    the AS-local secret instead of storing per-peer state.
    """
    if len(secret) != KEY_LEN:
        raise ValueError("secret must be 16 bytes")
    if not 0 <= remote_as < 1 << 64:
        raise ValueError("AS id out of range")
    ops.prf_calls += 1
    return _aes_block(secret, remote_as.to_bytes(16, "big"))


def compute_authenticator(secret: bytes, src: int, ingress: int, egress: int) -> bytes:
    """Reservation authenticator for (source AS, ingress, egress).

    Keyed by the AS-local secret; independent of granted bandwidth and
    expiry, so renewals never change it. The backward-direction token is
    obtained by swapping the interface arguments.
    """
    msg = src.to_bytes(8, "big") + ingress.to_bytes(2, "big") + egress.to_bytes(2, "big")
    return cbc_mac(secret, msg)


def compute_validation_field(auth: bytes, ts_pkt: int, length: int) -> bytes:
    """Per-packet validation field: truncated MAC over (timestamp, length).

    ``length`` is the total packet length for forward fields and the reply
    byte budget for backward fields.
    """
    msg = ts_pkt.to_bytes(8, "big") + length.to_bytes(2, "big")
    return cbc_mac(auth, msg)[:VALIDATION_FIELD_LEN]


def compute_request_auth(
    drkey: bytes,
    ts_req: int,
    flag_r: bool,
    flag_b: bool,
    bw_demand: int | None = None,
    bw_min: int | None = None,
) -> bytes:
    """Setup-request tag binding (tsReq, R, B) and, if present, the demand fields.

    The source AS id is not an input: it is already bound through the key
    derivation.
    """
    msg = ts_req.to_bytes(8, "big") + bytes([flag_r, flag_b])
    if (bw_demand is None) != (bw_min is None):
        raise ValueError("demand fields must be given together")
    if bw_demand is not None:
        msg += bw_demand.to_bytes(8, "big") + bw_min.to_bytes(8, "big")
    return cbc_mac(drkey, msg)


def _aead_key(drkey: bytes) -> bytes:
    # ChaCha20-Poly1305 takes a 32-byte key; expand the 16-byte key with two
    # AES blocks in counter positions 1 and 2.
    return _aes_block(drkey, (1).to_bytes(16, "big")) + _aes_block(drkey, (2).to_bytes(16, "big"))


def _grant_ad(bw: int, ts_exp: int) -> bytes:
    return bw.to_bytes(8, "big") + ts_exp.to_bytes(8, "big")


def seal_grant(
    drkey: bytes, auth: bytes, bw: int, ts_exp: int, nonce: bytes | None = None
) -> tuple[bytes, bytes, bytes]:
    """Encrypt an authenticator, binding (bw, ts_exp) as associated data.

    The nonce must be fresh per sealing because one derived key seals many
    responses over its lifetime; if none is supplied a random one is drawn.
    Returns (nonce, ciphertext, tag).
    """
    if nonce is None:
        nonce = os.urandom(NONCE_LEN)
    if len(nonce) != NONCE_LEN:
        raise ValueError("nonce must be 12 bytes")
    if len(auth) != BLOCK_LEN:
        raise ValueError("authenticator must be 16 bytes")
    sealed = ChaCha20Poly1305(_aead_key(drkey)).encrypt(nonce, auth, _grant_ad(bw, ts_exp))
    return nonce, sealed[:BLOCK_LEN], sealed[BLOCK_LEN:]


def unseal_grant(
    drkey: bytes, nonce: bytes, ciphertext: bytes, tag: bytes, bw: int, ts_exp: int
) -> bytes:
    """Invert :func:`seal_grant`; raises :class:`AuthFailure` on any tampering."""
    try:
        return ChaCha20Poly1305(_aead_key(drkey)).decrypt(
            nonce, ciphertext + tag, _grant_ad(bw, ts_exp)
        )
    except InvalidTag as exc:
        raise AuthFailure("grant tag verification failed") from exc
