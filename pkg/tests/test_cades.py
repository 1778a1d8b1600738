import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import seeded
from generators import mutate, random_envelope
from oracles import openssl_verify, sha256_reference
from sealchain.cades import (
    INDEX_LENGTH,
    SealEnvelope,
    SealIndex,
    SealStatus,
    create_seal,
    extract_rs,
    locate_index,
    pack_seal_field,
    parse_signed_attrs_slice,
    signed_attrs_digest,
    unpack_seal_field,
    verify_seal,
)
from sealchain.certificates import CertFlag, CertificateRequest, issue_certificate
from sealchain.errors import IndexInvalid, KeyMismatch, MalformedEnvelope, NotASealCert
from sealchain.identity import SealTarget, seal_target_digest

T = 20_000


@pytest.fixture(scope="module")
def sealed(pki):
    return create_seal(pki.target, pki.leaf_key, pki.leaf_cert, T)


def test_create_and_verify(pki, sealed):
    env, idx = sealed
    assert verify_seal(env, pki.target, pki.leaf_cert) is SealStatus.VALID
    assert env.signed_attrs.message_digest == seal_target_digest(pki.target)
    assert env.signed_attrs.signing_cert_digest == sha256_reference(pki.leaf_cert.to_der())
    pub = pki.leaf_cert.subject_key
    digest = sha256_reference(env.signed_attrs.signed_bytes())
    assert openssl_verify(pub.x, pub.y, digest, env.signature.r, env.signature.s)


def test_deterministic(pki, sealed):
    again, idx = create_seal(pki.target, pki.leaf_key, pki.leaf_cert, T)
    assert again.to_der() == sealed[0].to_der() and idx == sealed[1]


def test_other_target_digest_mismatch(pki, sealed):
    other = SealTarget(2, pki.target.address, pki.target.code_hash)
    assert verify_seal(sealed[0], other, pki.leaf_cert) is SealStatus.DIGEST_MISMATCH


def test_cert_and_signature_mismatch(pki, sealed):
    env = sealed[0]
    _, pub = seeded("other-leaf")
    other = issue_certificate(pki.qtsp_key, pki.qtsp_cert, CertificateRequest(
        4242, "Acme Payments SA", 10_000, 2_000_000, pub, frozenset({CertFlag.QUALIFIED_SEAL})))
    assert verify_seal(env, pki.target, other) is SealStatus.CERT_MISMATCH
    bad = replace(env, signature=replace(env.signature, s=env.signature.s ^ 1))
    assert verify_seal(bad, pki.target, pki.leaf_cert) is SealStatus.SIGNATURE_INVALID


def test_create_preconditions(pki):
    with pytest.raises(NotASealCert):
        create_seal(pki.target, pki.qtsp_key, pki.qtsp_cert, T)
    with pytest.raises(KeyMismatch):
        create_seal(pki.target, pki.qtsp_key, pki.leaf_cert, T)


def test_index_points_at_signature(pki, sealed):
    env, idx = sealed
    enc = env.to_der()
    assert extract_rs(enc, idx) == env.signature
    raw = enc[idx.signed_attrs_offset:idx.signed_attrs_offset + idx.signed_attrs_length]
    assert parse_signed_attrs_slice(raw) == env.signed_attrs
    assert signed_attrs_digest(raw) == sha256_reference(env.signed_attrs.signed_bytes())
    assert locate_index(enc) == idx
    assert SealIndex.from_bytes(idx.to_bytes()) == idx and len(idx.to_bytes()) == INDEX_LENGTH


def test_bad_indices(sealed):
    env, idx = sealed
    enc = env.to_der()
    bad = [
        replace(idx, r_offset=idx.r_offset + 1),
        replace(idx, s_offset=idx.s_offset - 1),
        replace(idx, signed_attrs_offset=idx.signed_attrs_offset + 1),
        replace(idx, signed_attrs_length=0),
        replace(idx, signed_attrs_length=idx.signed_attrs_length + 1),
        replace(idx, signed_attrs_offset=len(enc)),
        SealIndex(2**32 - 1, 0, 0, 0),
    ]
    for b in bad:
        with pytest.raises(IndexInvalid):
            extract_rs(enc, b)
    with pytest.raises(IndexInvalid):
        extract_rs(enc + b"\x00", idx)
    with pytest.raises(IndexInvalid):
        SealIndex.from_bytes(b"\x00" * 15)


def test_seal_field_packing(sealed):
    env, idx = sealed
    field = pack_seal_field(env.to_der(), idx)
    assert unpack_seal_field(field) == (env.to_der(), idx)
    with pytest.raises(MalformedEnvelope):
        unpack_seal_field(b"\x00" * INDEX_LENGTH)


def test_round_trip_and_index_fuzz():
    rng = random.Random(6)
    for _ in range(300):
        env = random_envelope(rng)
        enc = env.to_der()
        assert SealEnvelope.from_der(enc) == env
        assert extract_rs(enc, locate_index(enc)) == env.signature


def test_mutations_rejected_or_canonical():
    rng = random.Random(7)
    for _ in range(500):
        enc = random_envelope(rng).to_der()
        bad = mutate(rng, enc)
        try:
            env = SealEnvelope.from_der(bad)
        except MalformedEnvelope:
            continue
        assert env.to_der() == bad


@settings(max_examples=25, deadline=None)
@given(a=st.integers(1, 2**64 - 1), b=st.integers(1, 2**64 - 1))
def test_distinct_targets_give_distinct_envelopes(pki, a, b):
    ta = SealTarget(a, pki.target.address, pki.target.code_hash)
    tb = SealTarget(b, pki.target.address, pki.target.code_hash)
    ea, _ = create_seal(ta, pki.leaf_key, pki.leaf_cert, T)
    eb, _ = create_seal(tb, pki.leaf_key, pki.leaf_cert, T)
    assert (ea.to_der() == eb.to_der()) == (a == b)
