"""CAdES-baseline style SignedData envelope for contract seals.

The envelope is a detached CMS ContentInfo/SignedData carrying a single
SignerInfo and the signer's certificate::

    ContentInfo ::= SEQUENCE {
        contentType  id-signedData,
        content  [0] EXPLICIT SignedData }

    SignedData ::= SEQUENCE {
        version           INTEGER (1),
        digestAlgorithms  SET { SEQUENCE { id-sha256 } },
        encapContentInfo  SEQUENCE { id-data },          -- no eContent
        certificates  [0] IMPLICIT SET { Certificate },
        signerInfos       SET { SignerInfo } }

    SignerInfo ::= SEQUENCE {
        version            INTEGER (1),
        sid                SEQUENCE { issuer UTF8String, serial INTEGER },
        digestAlgorithm    SEQUENCE { id-sha256 },
        signedAttrs    [0] IMPLICIT SET OF Attribute,
        signatureAlgorithm SEQUENCE { ecdsa-with-SHA256 },
        signature          OCTET STRING (Ecdsa-Sig-Value) }

Signed attributes are contentType, messageDigest, signingTime and
signingCertificateV2 (certHash only, SHA-256 implied). The signature is over
SHA-256 of the attributes re-tagged as a universal SET.

Because the signature is the final element of the encoding, (r, s) and the
signed-attribute bytes sit at fixed offsets that a verifier can check
cheaply; ``SealIndex`` records them.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from . import der
from .certificates import CertificateRecord
from .crypto import (
    N,
    OID_ECDSA_WITH_SHA256,
    OID_SHA256,
    EcdsaSignature,
    PrivateScalar,
    sha256,
    sign_digest,
    verify_digest,
)
from .errors import IndexInvalid, KeyMismatch, MalformedCertificate, MalformedDer, MalformedEnvelope, NotASealCert
from .identity import SealTarget, seal_target_digest

OID_SIGNED_DATA = "1.2.840.113549.1.7.2"
OID_DATA = "1.2.840.113549.1.7.1"
OID_CONTENT_TYPE = "1.2.840.113549.1.9.3"
OID_MESSAGE_DIGEST = "1.2.840.113549.1.9.4"
OID_SIGNING_TIME = "1.2.840.113549.1.9.5"
OID_SIGNING_CERTIFICATE_V2 = "1.2.840.113549.1.9.16.2.47"

_SHA256_ALG = der.seq(der.oid(OID_SHA256))
_ECDSA_ALG = der.seq(der.oid(OID_ECDSA_WITH_SHA256))
_ECDSA_ALG_TLV = der.der_encode(_ECDSA_ALG)

SIGNED_ATTRS_TAG = der.context_tag(0)
INDEX_LENGTH = 16


class SealStatus(str, enum.Enum):
    VALID = "VALID"
    DIGEST_MISMATCH = "DIGEST-MISMATCH"
    CERT_MISMATCH = "CERT-MISMATCH"
    SIGNATURE_INVALID = "SIGNATURE-INVALID"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SignedAttributes:
    message_digest: bytes
    signing_time: int
    signing_cert_digest: bytes
    content_type: str = OID_DATA

    def attribute_values(self) -> list[der.DerValue]:
        def attr(oid, value):
            return der.seq(der.oid(oid), der.set_of(value))

        cert_id = der.seq(der.seq(der.seq(der.octets(self.signing_cert_digest))))
        return [
            attr(OID_CONTENT_TYPE, der.oid(self.content_type)),
            attr(OID_MESSAGE_DIGEST, der.octets(self.message_digest)),
            attr(OID_SIGNING_TIME, der.gentime(self.signing_time)),
            attr(OID_SIGNING_CERTIFICATE_V2, cert_id),
        ]

    def to_set(self) -> der.DerValue:
        return der.set_of(*self.attribute_values())

    def signed_bytes(self) -> bytes:
        """The universal-SET encoding the signature is computed over."""
        return der.der_encode(self.to_set())

    def to_implicit(self) -> der.DerValue:
        return der.DerValue(SIGNED_ATTRS_TAG, self.to_set().children)

    @classmethod
    def from_set(cls, v: der.DerValue) -> "SignedAttributes":
        found = {}
        for attr in v.children:
            oid_v, values = attr.expect(der.SEQUENCE, 2).children
            key = oid_v.as_oid()
            if key in found:
                raise ValueError(f"duplicate attribute {key}")
            (found[key],) = values.expect(der.SET, 1).children
        if set(found) != {OID_CONTENT_TYPE, OID_MESSAGE_DIGEST, OID_SIGNING_TIME, OID_SIGNING_CERTIFICATE_V2}:
            raise ValueError("unexpected signed attribute set")
        if found[OID_CONTENT_TYPE].as_oid() != OID_DATA:
            raise ValueError("unsupported content type")
        digest = found[OID_MESSAGE_DIGEST].as_bytes()
        (certs,) = found[OID_SIGNING_CERTIFICATE_V2].expect(der.SEQUENCE, 1).children
        (cert_id,) = certs.expect(der.SEQUENCE, 1).children
        (cert_hash,) = cert_id.expect(der.SEQUENCE, 1).children
        cert_digest = cert_hash.as_bytes()
        if len(digest) != 32 or len(cert_digest) != 32:
            raise ValueError("digests must be 32 bytes")
        signing_time = found[OID_SIGNING_TIME].as_time()
        if signing_time < 0:
            raise ValueError("signing time before the epoch")
        return cls(digest, signing_time, cert_digest)


def parse_signed_attrs_slice(raw: bytes) -> SignedAttributes:
    """Parse the [0]-tagged signed attribute bytes cut out via a SealIndex."""
    if not raw or raw[0] != SIGNED_ATTRS_TAG:
        raise ValueError("not a signed-attributes element")
    return SignedAttributes.from_set(der.der_decode(bytes([der.SET]) + raw[1:]))


def signed_attrs_digest(raw: bytes) -> bytes:
    """SHA-256 of a [0]-tagged signed attribute slice re-tagged as SET."""
    return sha256(bytes([der.SET]) + raw[1:])


@dataclass(frozen=True)
class SealEnvelope:
    signed_attrs: SignedAttributes
    signer_issuer: str
    signer_serial: int
    signature: EcdsaSignature
    certificate: CertificateRecord

    digest_algorithm = "SHA-256"

    def __post_init__(self):
        if (self.signer_issuer, self.signer_serial) != (self.certificate.issuer_name, self.certificate.serial):
            raise ValueError("embedded certificate does not match the signer reference")

    def _signer_info(self) -> der.DerValue:
        return der.seq(
            der.integer(1),
            der.seq(der.utf8(self.signer_issuer), der.integer(self.signer_serial)),
            _SHA256_ALG,
            self.signed_attrs.to_implicit(),
            _ECDSA_ALG,
            der.octets(self.signature.to_der()),
        )

    @der.memoized
    def to_der_value(self) -> der.DerValue:
        signed_data = der.seq(
            der.integer(1),
            der.set_of(_SHA256_ALG),
            der.seq(der.oid(OID_DATA)),
            der.DerValue(der.context_tag(0), (self.certificate.to_der_value(),)),
            der.set_of(self._signer_info()),
        )
        return der.seq(der.oid(OID_SIGNED_DATA), der.explicit(0, signed_data))

    def to_der(self) -> bytes:
        return der.der_encode(self.to_der_value())

    @classmethod
    def from_der(cls, b: bytes) -> "SealEnvelope":
        b = bytes(b)
        try:
            ctype, wrapped = der.der_decode(b).expect(der.SEQUENCE, 2).children
            if ctype.as_oid() != OID_SIGNED_DATA:
                raise ValueError("not a SignedData content")
            (signed_data,) = wrapped.expect(der.context_tag(0), 1).children
            version, algs, encap, certs, infos = signed_data.expect(der.SEQUENCE, 5).children
            if version.as_int() != 1 or algs != der.set_of(_SHA256_ALG):
                raise ValueError("unsupported SignedData version or digest algorithm")
            if encap != der.seq(der.oid(OID_DATA)):
                raise ValueError("envelope must be detached id-data")
            (cert_v,) = certs.expect(der.context_tag(0), 1).children
            (info,) = infos.expect(der.SET, 1).children
            iv, sid, dalg, attrs, salg, sig = info.expect(der.SEQUENCE, 6).children
            if iv.as_int() != 1 or dalg != _SHA256_ALG or salg != _ECDSA_ALG:
                raise ValueError("unsupported SignerInfo version or algorithms")
            issuer, serial = sid.expect(der.SEQUENCE, 2).children
            signed_attrs = SignedAttributes.from_set(der.set_of(*attrs.expect(SIGNED_ATTRS_TAG).children))
            env = cls(
                signed_attrs=signed_attrs,
                signer_issuer=issuer.as_text(),
                signer_serial=serial.as_int(),
                signature=EcdsaSignature.from_der(sig.as_bytes()),
                certificate=CertificateRecord.from_der_value(cert_v),
            )
        except (ValueError, TypeError, MalformedDer, MalformedCertificate) as exc:
            raise MalformedEnvelope(str(exc)) from exc
        if env.to_der() != b:
            raise MalformedEnvelope("non-canonical envelope encoding")
        return env


@dataclass(frozen=True)
class SealIndex:
    r_offset: int
    s_offset: int
    signed_attrs_offset: int
    signed_attrs_length: int

    def to_bytes(self) -> bytes:
        return struct.pack(">IIII", self.r_offset, self.s_offset, self.signed_attrs_offset, self.signed_attrs_length)

    @classmethod
    def from_bytes(cls, b: bytes) -> "SealIndex":
        if len(b) != INDEX_LENGTH:
            raise IndexInvalid("seal index must be 16 bytes")
        return cls(*struct.unpack(">IIII", b))


def locate_index(envelope_bytes: bytes) -> SealIndex:
    """Compute the SealIndex of a canonical envelope encoding."""
    env = SealEnvelope.from_der(envelope_bytes)
    sig_der = env.signature.to_der()
    sig_start = len(envelope_bytes) - len(der.der_encode(der.octets(sig_der)))
    r_offset = sig_start + 4
    s_offset = r_offset + len(der.der_encode(der.integer(env.signature.r)))
    attrs_len = len(der.der_encode(env.signed_attrs.to_implicit()))
    attrs_offset = sig_start - len(_ECDSA_ALG_TLV) - attrs_len
    idx = SealIndex(r_offset, s_offset, attrs_offset, attrs_len)
    extract_rs(envelope_bytes, idx)
    return idx


def _positive_integer_at(b: bytes, pos: int) -> tuple[int, int]:
    try:
        value, end = der.decode_prefix(b, pos)
    except MalformedDer as exc:
        raise IndexInvalid(f"no INTEGER at offset {pos}: {exc.reason}") from exc
    if value.tag != der.INTEGER:
        raise IndexInvalid(f"no INTEGER at offset {pos}")
    n = value.as_int()
    if not 1 <= n < N:
        raise IndexInvalid(f"signature component at offset {pos} out of range")
    return n, end


def check_index(envelope_bytes: bytes, idx: SealIndex) -> None:
    """Revalidate ``idx`` against the raw bytes without a full parse."""
    extract_rs(envelope_bytes, idx)


def extract_rs(envelope_bytes: bytes, idx: SealIndex) -> EcdsaSignature:
    """Read (r, s) at the indexed offsets after checking the surrounding layout."""
    b = bytes(envelope_bytes)
    size = len(b)
    sa, sa_len = idx.signed_attrs_offset, idx.signed_attrs_length
    if sa_len < 2 or sa + sa_len > size or not 0 <= sa < size:
        raise IndexInvalid("signed attribute slice out of bounds")
    if b[sa] != SIGNED_ATTRS_TAG:
        raise IndexInvalid("signed attribute slice does not start with [0]")
    try:
        _, _, sa_end = der.read_header(b, sa)
    except MalformedDer as exc:
        raise IndexInvalid(f"bad signed attribute header: {exc.reason}") from exc
    if sa_end - sa != sa_len:
        raise IndexInvalid("signed attribute length disagrees with its header")
    if b[sa_end:sa_end + len(_ECDSA_ALG_TLV)] != _ECDSA_ALG_TLV:
        raise IndexInvalid("signature algorithm does not follow the signed attributes")
    octet_at = sa_end + len(_ECDSA_ALG_TLV)
    try:
        tag, octet_start, octet_end = der.read_header(b, octet_at)
        seq_tag, seq_start, seq_end = der.read_header(b, octet_start, octet_end)
    except MalformedDer as exc:
        raise IndexInvalid(f"bad signature wrapper: {exc.reason}") from exc
    if tag != der.OCTET_STRING or seq_tag != der.SEQUENCE or octet_end != size or seq_end != size:
        raise IndexInvalid("signature is not the final OCTET STRING of the envelope")
    if idx.r_offset != seq_start:
        raise IndexInvalid("r offset does not point at the signature value")
    r, r_end = _positive_integer_at(b[:seq_end], idx.r_offset)
    if idx.s_offset != r_end:
        raise IndexInvalid("s offset does not follow r")
    s, s_end = _positive_integer_at(b[:seq_end], idx.s_offset)
    if s_end != seq_end:
        raise IndexInvalid("trailing data after s")
    return EcdsaSignature(r, s)


def create_seal(
    target: SealTarget, signer_key: PrivateScalar, signer_cert: CertificateRecord, signing_time: int
) -> tuple[SealEnvelope, SealIndex]:
    if not signer_cert.is_seal:
        raise NotASealCert(f"certificate {signer_cert.serial} does not carry QUALIFIED-SEAL")
    if signer_key.public_point() != signer_cert.subject_key:
        raise KeyMismatch("signing key does not match the seal certificate")
    attrs = SignedAttributes(
        message_digest=seal_target_digest(target),
        signing_time=signing_time,
        signing_cert_digest=signer_cert.digest(),
    )
    signature = sign_digest(signer_key, sha256(attrs.signed_bytes()))
    env = SealEnvelope(attrs, signer_cert.issuer_name, signer_cert.serial, signature, signer_cert)
    return env, locate_index(env.to_der())


def verify_seal(
    env: SealEnvelope, expected: SealTarget, signer_cert: CertificateRecord, verifier=verify_digest
) -> SealStatus:
    if env.signed_attrs.message_digest != seal_target_digest(expected):
        return SealStatus.DIGEST_MISMATCH
    if (
        env.signed_attrs.signing_cert_digest != signer_cert.digest()
        or env.certificate != signer_cert
        or (env.signer_issuer, env.signer_serial) != (signer_cert.issuer_name, signer_cert.serial)
    ):
        return SealStatus.CERT_MISMATCH
    if not verifier(signer_cert.subject_key, sha256(env.signed_attrs.signed_bytes()), env.signature):
        return SealStatus.SIGNATURE_INVALID
    return SealStatus.VALID


# -- ledger seal field ---------------------------------------------------------

def pack_seal_field(envelope_bytes: bytes, idx: SealIndex) -> bytes:
    return bytes(envelope_bytes) + idx.to_bytes()


def unpack_seal_field(field: bytes) -> tuple[bytes, SealIndex]:
    if len(field) <= INDEX_LENGTH:
        raise MalformedEnvelope("seal field too short")
    return bytes(field[:-INDEX_LENGTH]), SealIndex.from_bytes(field[-INDEX_LENGTH:])
