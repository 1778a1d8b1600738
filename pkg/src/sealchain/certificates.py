"""Simplified qualified-certificate profile and CRL-style revocation lists.

Certificate DER::

    Certificate ::= SEQUENCE {
        tbs SEQUENCE {
            serial      INTEGER (0..2^64-1),
            issuer      UTF8String,
            subject     UTF8String,
            notBefore   GeneralizedTime,
            notAfter    GeneralizedTime,
            subjectKey  BIT STRING (0x04 || qx || qy),
            flags       SET OF OBJECT IDENTIFIER,
            lpid    [0] EXPLICIT UTF8String OPTIONAL },
        signatureAlgorithm SEQUENCE { ecdsa-with-SHA256 },
        signature   BIT STRING (DER Ecdsa-Sig-Value) }

The signature covers SHA-256 of the tbs encoding. Names are compared by
exact string match; validity windows are half-open [notBefore, notAfter).
"""

from __future__ import annotations

import enum
import uuid
from dataclasses import dataclass

from . import der
from .crypto import (
    OID_ECDSA_WITH_SHA256,
    EcdsaSignature,
    PrivateScalar,
    PublicPoint,
    sha256,
    sign_digest,
    verify_digest,
)
from .errors import InvalidWindow, KeyMismatch, MalformedCertificate, MalformedDer, NotAQtsp
from .identity import LegalPersonId

# private arc under the UUID-derived OID root (2.25)
OID_ARC = "2.25." + str(uuid.UUID("7c1e5a0e-4d7b-4d0a-9b53-2f6a1c3e8d41").int)

U64_MAX = 2**64 - 1


class CertFlag(enum.Enum):
    IS_QTSP = "IS-QTSP"
    QUALIFIED_SEAL = "QUALIFIED-SEAL"


FLAG_OIDS = {
    CertFlag.IS_QTSP: OID_ARC + ".1.1",
    CertFlag.QUALIFIED_SEAL: OID_ARC + ".1.2",
}
_OID_FLAGS = {v: k for k, v in FLAG_OIDS.items()}

_SIG_ALG = der.seq(der.oid(OID_ECDSA_WITH_SHA256))


def _check_u64(name, value):
    if not isinstance(value, int) or not 0 <= value <= U64_MAX:
        raise ValueError(f"{name} must be an unsigned 64-bit integer")


def _check_epoch(name, value):
    if not isinstance(value, int) or not 0 <= value <= der.MAX_EPOCH:
        raise ValueError(f"{name} must be epoch seconds within GeneralizedTime range")


def encode_point(pub: PublicPoint) -> der.DerValue:
    return der.bits(b"\x04" + pub.encode())


def decode_point(v: der.DerValue) -> PublicPoint:
    raw = v.as_bits()
    if len(raw) != 65 or raw[0] != 0x04:
        raise ValueError("subject key must be an uncompressed P-256 point")
    return PublicPoint.decode(raw[1:])


def signed_structure(tbs: der.DerValue, signature: EcdsaSignature) -> der.DerValue:
    return der.seq(tbs, _SIG_ALG, der.bits(signature.to_der()))


def split_signed_structure(v: der.DerValue) -> tuple[der.DerValue, EcdsaSignature]:
    tbs, alg, sig = v.expect(der.SEQUENCE, 3).children
    if alg != _SIG_ALG:
        raise ValueError("unsupported signature algorithm")
    return tbs.expect(der.SEQUENCE), EcdsaSignature.from_der(sig.as_bits())


@dataclass(frozen=True)
class CertificateRequest:
    """Everything a certificate carries except the issuer and signature."""

    serial: int
    subject_name: str
    not_before: int
    not_after: int
    subject_key: PublicPoint
    flags: frozenset = frozenset()
    lpid: LegalPersonId | None = None


@dataclass(frozen=True)
class CertificateRecord:
    serial: int
    issuer_name: str
    subject_name: str
    not_before: int
    not_after: int
    subject_key: PublicPoint
    flags: frozenset
    lpid: LegalPersonId | None
    signature: EcdsaSignature

    def __post_init__(self):
        _check_u64("serial", self.serial)
        _check_epoch("not_before", self.not_before)
        _check_epoch("not_after", self.not_after)
        if not self.issuer_name or not self.subject_name:
            raise ValueError("issuer and subject names must be non-empty")
        if self.not_before >= self.not_after:
            raise ValueError("not_before must precede not_after")
        object.__setattr__(self, "flags", frozenset(self.flags))
        if {CertFlag.IS_QTSP, CertFlag.QUALIFIED_SEAL} <= self.flags:
            raise ValueError("IS-QTSP and QUALIFIED-SEAL are mutually exclusive")

    @property
    def is_qtsp(self) -> bool:
        return CertFlag.IS_QTSP in self.flags

    @property
    def is_seal(self) -> bool:
        return CertFlag.QUALIFIED_SEAL in self.flags

    @der.memoized
    def tbs_value(self) -> der.DerValue:
        return _tbs(self.serial, self.issuer_name, self.subject_name, self.not_before,
                    self.not_after, self.subject_key, self.flags, self.lpid)

    def tbs_der(self) -> bytes:
        return der.der_encode(self.tbs_value())

    @der.memoized
    def to_der_value(self) -> der.DerValue:
        return signed_structure(self.tbs_value(), self.signature)

    def to_der(self) -> bytes:
        return der.der_encode(self.to_der_value())

    def digest(self) -> bytes:
        return sha256(self.to_der())

    @classmethod
    def from_der_value(cls, v: der.DerValue) -> "CertificateRecord":
        try:
            tbs, signature = split_signed_structure(v)
            items = tbs.children
            if len(items) not in (7, 8):
                raise ValueError("unexpected number of tbs fields")
            lpid = None
            if len(items) == 8:
                wrapper = items[7].expect(der.context_tag(0), 1)
                lpid = LegalPersonId(wrapper.children[0].as_text())
            flags = set()
            for item in items[6].expect(der.SET).children:
                flag = _OID_FLAGS.get(item.as_oid())
                if flag is None or flag in flags:
                    raise ValueError("unknown or duplicated certificate flag")
                flags.add(flag)
            return cls(
                serial=items[0].as_int(),
                issuer_name=items[1].as_text(),
                subject_name=items[2].as_text(),
                not_before=items[3].as_time(),
                not_after=items[4].as_time(),
                subject_key=decode_point(items[5]),
                flags=frozenset(flags),
                lpid=lpid,
                signature=signature,
            )
        except (ValueError, TypeError, MalformedDer) as exc:
            raise MalformedCertificate(str(exc)) from exc

    @classmethod
    def from_der(cls, b: bytes) -> "CertificateRecord":
        try:
            v = der.der_decode(b)
        except MalformedDer as exc:
            raise MalformedCertificate(str(exc)) from exc
        cert = cls.from_der_value(v)
        if cert.to_der() != bytes(b):
            raise MalformedCertificate("non-canonical certificate encoding")
        return cert


def _tbs(serial, issuer, subject, not_before, not_after, key, flags, lpid) -> der.DerValue:
    items = [
        der.integer(serial),
        der.utf8(issuer),
        der.utf8(subject),
        der.gentime(not_before),
        der.gentime(not_after),
        encode_point(key),
        der.set_of(*(der.oid(FLAG_OIDS[f]) for f in flags)),
    ]
    if lpid is not None:
        items.append(der.explicit(0, der.utf8(lpid.value)))
    return der.seq(*items)


def _sign_request(issuer_key, issuer_name, request: CertificateRequest) -> CertificateRecord:
    if request.not_before >= request.not_after:
        raise InvalidWindow(f"empty validity window [{request.not_before}, {request.not_after})")
    tbs = _tbs(request.serial, issuer_name, request.subject_name, request.not_before,
               request.not_after, request.subject_key, frozenset(request.flags), request.lpid)
    signature = sign_digest(issuer_key, sha256(der.der_encode(tbs)))
    return CertificateRecord(
        serial=request.serial,
        issuer_name=issuer_name,
        subject_name=request.subject_name,
        not_before=request.not_before,
        not_after=request.not_after,
        subject_key=request.subject_key,
        flags=frozenset(request.flags),
        lpid=request.lpid,
        signature=signature,
    )


def issue_certificate(
    issuer_key: PrivateScalar, issuer_cert: CertificateRecord, request: CertificateRequest
) -> CertificateRecord:
    if not issuer_cert.is_qtsp:
        raise NotAQtsp(f"{issuer_cert.subject_name!r} does not carry IS-QTSP")
    if issuer_key.public_point() != issuer_cert.subject_key:
        raise KeyMismatch("issuer key does not match the issuer certificate")
    return _sign_request(issuer_key, issuer_cert.subject_name, request)


def self_issue_qtsp(
    key: PrivateScalar, name: str, serial: int, not_before: int, not_after: int
) -> CertificateRecord:
    """Root service certificate for a QTSP, signed by its own key."""
    request = CertificateRequest(
        serial=serial,
        subject_name=name,
        not_before=not_before,
        not_after=not_after,
        subject_key=key.public_point(),
        flags=frozenset({CertFlag.IS_QTSP}),
    )
    return _sign_request(key, name, request)


def verify_certificate(cert: CertificateRecord, issuer_cert: CertificateRecord, verifier=verify_digest) -> bool:
    if cert.issuer_name != issuer_cert.subject_name:
        return False
    return verifier(issuer_cert.subject_key, sha256(cert.tbs_der()), cert.signature)


def check_validity(cert: CertificateRecord, at: int) -> bool:
    return cert.not_before <= at < cert.not_after


# -- revocation ----------------------------------------------------------------

class RevocationStatus(str, enum.Enum):
    GOOD = "GOOD"
    REVOKED = "REVOKED"
    UNTRUSTED_LIST = "UNTRUSTED-LIST"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RevocationList:
    issuer_name: str
    revoked_serials: frozenset
    issued_at: int
    signature: EcdsaSignature

    def __post_init__(self):
        object.__setattr__(self, "revoked_serials", frozenset(self.revoked_serials))
        for s in self.revoked_serials:
            _check_u64("revoked serial", s)
        _check_epoch("issued_at", self.issued_at)
        if not self.issuer_name:
            raise ValueError("issuer name must be non-empty")

    def tbs_der(self) -> bytes:
        return der.der_encode(_rl_tbs(self.issuer_name, self.revoked_serials, self.issued_at))

    def to_der(self) -> bytes:
        tbs = _rl_tbs(self.issuer_name, self.revoked_serials, self.issued_at)
        return der.der_encode(signed_structure(tbs, self.signature))

    @classmethod
    def from_der(cls, b: bytes) -> "RevocationList":
        try:
            tbs, signature = split_signed_structure(der.der_decode(b))
            issuer, issued_at, serials = tbs.expect(der.SEQUENCE, 3).children
            values = [s.as_int() for s in serials.expect(der.SET).children]
            if len(set(values)) != len(values):
                raise ValueError("duplicate revoked serial")
            rl = cls(issuer.as_text(), frozenset(values), issued_at.as_time(), signature)
        except (ValueError, TypeError, MalformedDer) as exc:
            raise MalformedCertificate(f"bad revocation list: {exc}") from exc
        if rl.to_der() != bytes(b):
            raise MalformedCertificate("non-canonical revocation list encoding")
        return rl


def _rl_tbs(issuer, serials, issued_at):
    return der.seq(
        der.utf8(issuer),
        der.gentime(issued_at),
        der.set_of(*(der.integer(s) for s in serials)),
    )


def build_revocation_list(
    issuer_key: PrivateScalar, issuer_cert: CertificateRecord, revoked, issued_at: int
) -> RevocationList:
    if issuer_key.public_point() != issuer_cert.subject_key:
        raise KeyMismatch("issuer key does not match the issuer certificate")
    serials = frozenset(revoked)
    tbs = der.der_encode(_rl_tbs(issuer_cert.subject_name, serials, issued_at))
    return RevocationList(issuer_cert.subject_name, serials, issued_at, sign_digest(issuer_key, sha256(tbs)))


def check_revocation(
    cert: CertificateRecord, rl: RevocationList, issuer_cert: CertificateRecord, verifier=verify_digest
) -> RevocationStatus:
    if rl.issuer_name != issuer_cert.subject_name or rl.issuer_name != cert.issuer_name:
        return RevocationStatus.UNTRUSTED_LIST
    if not verifier(issuer_cert.subject_key, sha256(rl.tbs_der()), rl.signature):
        return RevocationStatus.UNTRUSTED_LIST
    if cert.serial in rl.revoked_serials:
        return RevocationStatus.REVOKED
    return RevocationStatus.GOOD
