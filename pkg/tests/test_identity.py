import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import decode_target_reference, sha256_reference
from sealchain.errors import MalformedTarget
from sealchain.identity import (
    TARGET_LENGTH,
    LegalPersonId,
    SealTarget,
    decode_seal_target,
    encode_seal_target,
    metadata_digest,
    seal_target_digest,
)

ZERO_TARGET = SealTarget(1, bytes(20), bytes(32), bytes(32))
# SHA-256 of 0x01 || 0x0000000000000001 || 84 zero bytes, from the reference implementation in oracles.py
ZERO_TARGET_DIGEST = "e63b10e0e181acb75f013601d18963f2d8aee3f44cfe0f47771c88a40412a578"

targets = st.builds(
    SealTarget,
    chain_id=st.integers(1, 2**64 - 1),
    address=st.binary(min_size=20, max_size=20),
    code_hash=st.binary(min_size=32, max_size=32),
    metadata_digest=st.binary(min_size=32, max_size=32),
)


def test_zero_case_layout():
    assert encode_seal_target(ZERO_TARGET) == b"\x01" + (1).to_bytes(8, "big") + bytes(84)


def test_zero_case_digest_frozen():
    enc = encode_seal_target(ZERO_TARGET)
    assert seal_target_digest(ZERO_TARGET).hex() == ZERO_TARGET_DIGEST
    assert sha256_reference(enc).hex() == ZERO_TARGET_DIGEST


@settings(max_examples=300)
@given(targets)
def test_round_trip_and_reference_decoder(t):
    enc = encode_seal_target(t)
    assert len(enc) == TARGET_LENGTH
    assert decode_seal_target(enc) == t
    assert decode_target_reference(enc) == (1, t.chain_id, t.address, t.code_hash, t.metadata_digest)
    assert encode_seal_target(decode_seal_target(enc)) == enc


@pytest.mark.parametrize("bad", [bytes(92), bytes(94), b"", b"\x02" + (1).to_bytes(8, "big") + bytes(84),
                                 b"\x01" + bytes(92)])
def test_decode_rejects(bad):
    with pytest.raises(MalformedTarget):
        decode_seal_target(bad)


def test_single_bit_flips_change_digest():
    enc = encode_seal_target(SealTarget(10, b"\x11" * 20, b"\x22" * 32, metadata_digest(b"meta")))
    base = hashlib.sha256(enc).digest()
    seen = {base}
    for i in range(len(enc) * 8):
        flipped = bytearray(enc)
        flipped[i // 8] ^= 1 << (i % 8)
        d = sha256_reference(bytes(flipped))
        assert d not in seen
        seen.add(d)


def test_invalid_field_values():
    with pytest.raises(ValueError):
        SealTarget(0, bytes(20), bytes(32))
    with pytest.raises(ValueError):
        SealTarget(2**64, bytes(20), bytes(32))
    with pytest.raises(ValueError):
        SealTarget(1, bytes(19), bytes(32))
    with pytest.raises(ValueError):
        SealTarget(1, bytes(20), bytes(31))


def test_metadata_digest():
    assert metadata_digest(None) == bytes(32)
    assert metadata_digest(b"") == bytes.fromhex("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")


@pytest.mark.parametrize("value", ["A", "LEI-5299000ACME0000001", "x" * 64, "with space"])
def test_lpid_accepts(value):
    assert str(LegalPersonId(value)) == value


@pytest.mark.parametrize("value", ["", "x" * 65, "tab\there", "nl\n", "café", "\x7f"])
def test_lpid_rejects(value):
    with pytest.raises(ValueError):
        LegalPersonId(value)
