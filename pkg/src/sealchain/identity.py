"""On-chain contract identity and its fixed 93-byte sealing encoding.

Layout::

    version (1) | chain id, big-endian (8) | address (20) | code hash (32) | metadata digest (32)
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import MalformedTarget

TARGET_VERSION = 1
TARGET_LENGTH = 93
ZERO_DIGEST = bytes(32)

_U64_MAX = 2**64 - 1


def _check_chain_id(value: int) -> None:
    if not isinstance(value, int) or not 0 < value <= _U64_MAX:
        raise ValueError(f"chain id must be in 1..2**64-1, got {value!r}")


def _check_fixed(name: str, value: bytes, size: int) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != size:
        raise ValueError(f"{name} must be exactly {size} bytes")


def metadata_digest(metadata: bytes | None) -> bytes:
    """SHA-256 of opaque metadata bytes; all-zero when there is no metadata."""
    if metadata is None:
        return ZERO_DIGEST
    return hashlib.sha256(metadata).digest()


@dataclass(frozen=True)
class SealTarget:
    chain_id: int
    address: bytes
    code_hash: bytes
    metadata_digest: bytes = ZERO_DIGEST
    version: int = TARGET_VERSION

    def __post_init__(self):
        if self.version != TARGET_VERSION:
            raise ValueError(f"unsupported target version {self.version}")
        _check_chain_id(self.chain_id)
        _check_fixed("address", self.address, 20)
        _check_fixed("code_hash", self.code_hash, 32)
        _check_fixed("metadata_digest", self.metadata_digest, 32)
        object.__setattr__(self, "address", bytes(self.address))
        object.__setattr__(self, "code_hash", bytes(self.code_hash))
        object.__setattr__(self, "metadata_digest", bytes(self.metadata_digest))

    def encode(self) -> bytes:
        return encode_seal_target(self)

    def digest(self) -> bytes:
        return seal_target_digest(self)


def encode_seal_target(t: SealTarget) -> bytes:
    return (
        bytes([t.version])
        + t.chain_id.to_bytes(8, "big")
        + t.address
        + t.code_hash
        + t.metadata_digest
    )


def decode_seal_target(b: bytes) -> SealTarget:
    if len(b) != TARGET_LENGTH:
        raise MalformedTarget(f"seal target must be {TARGET_LENGTH} bytes, got {len(b)}")
    if b[0] != TARGET_VERSION:
        raise MalformedTarget(f"unknown seal target version {b[0]}")
    chain_id = int.from_bytes(b[1:9], "big")
    if chain_id == 0:
        raise MalformedTarget("chain id must be non-zero")
    return SealTarget(
        chain_id=chain_id,
        address=bytes(b[9:29]),
        code_hash=bytes(b[29:61]),
        metadata_digest=bytes(b[61:93]),
    )


def seal_target_digest(t: SealTarget) -> bytes:
    return hashlib.sha256(encode_seal_target(t)).digest()


@dataclass(frozen=True)
class LegalPersonId:
    """Legal Person Identifier embedded next to a seal (1-64 visible ASCII chars)."""

    value: str

    def __post_init__(self):
        v = self.value
        if not isinstance(v, str) or not 1 <= len(v) <= 64:
            raise ValueError("LPID must be 1-64 characters")
        if any(not 0x20 <= ord(c) <= 0x7E for c in v):
            raise ValueError("LPID must be visible ASCII without control characters")

    def __str__(self):
        return self.value
