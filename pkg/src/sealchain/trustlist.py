"""LOTL model: operator-signed QTSP list, chain validation and sanctions screening.

TrustList DER::

    TrustList ::= SEQUENCE {
        tbs SEQUENCE {
            sequenceNumber    INTEGER (0..2^64-1),
            issuedAt          GeneralizedTime,
            operatorKeyDigest OCTET STRING (SIZE(32)),
            entries SEQUENCE OF SEQUENCE {
                qtspName           UTF8String,
                serviceCertificate Certificate,
                status             INTEGER { granted(0), withdrawn(1) } } },
        signatureAlgorithm SEQUENCE { ecdsa-with-SHA256 },
        signature BIT STRING }
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

from . import der
from .certificates import (
    CertificateRecord,
    RevocationList,
    RevocationStatus,
    check_revocation,
    check_validity,
    signed_structure,
    split_signed_structure,
    verify_certificate,
)
from .crypto import EcdsaSignature, PrivateScalar, PublicPoint, sha256, sign_digest, verify_digest
from .errors import (
    EntryInvariantViolation,
    MalformedCertificate,
    MalformedDer,
    MalformedTrustList,
    SequenceRollback,
    TrustListRejected,
    UntrustedRegistry,
)
from .identity import LegalPersonId

U64_MAX = 2**64 - 1


class QtspStatus(str, enum.Enum):
    GRANTED = "GRANTED"
    WITHDRAWN = "WITHDRAWN"

    def __str__(self):
        return self.value


_STATUS_CODES = {QtspStatus.GRANTED: 0, QtspStatus.WITHDRAWN: 1}
_CODE_STATUS = {v: k for k, v in _STATUS_CODES.items()}


class AnchorMode(str, enum.Enum):
    MANUAL = "MANUAL"
    ORACLE = "ORACLE"
    ONCHAIN_MIRROR = "ONCHAIN-MIRROR"

    def __str__(self):
        return self.value


class ChainOutcome(str, enum.Enum):
    VALID = "VALID"
    SEAL_CERT_INVALID = "SEAL-CERT-INVALID"
    QTSP_NOT_LISTED = "QTSP-NOT-LISTED"
    QTSP_WITHDRAWN = "QTSP-WITHDRAWN"
    EXPIRED = "EXPIRED"
    REVOKED = "REVOKED"
    LIST_SIGNATURE_INVALID = "LIST-SIGNATURE-INVALID"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ChainReport:
    outcome: ChainOutcome
    checked_at: int
    path: tuple = ()
    # finer-grained cause, e.g. the seal check or revocation status behind a failure
    detail: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))
        if self.outcome is ChainOutcome.VALID and not self.path:
            raise ValueError("a VALID report needs a non-empty path")

    @property
    def valid(self) -> bool:
        return self.outcome is ChainOutcome.VALID

    def summary(self) -> str:
        text = f"{self.outcome} path=[{', '.join(str(s) for s in self.path)}]"
        if self.detail:
            text += f" detail={self.detail}"
        return text


@dataclass(frozen=True)
class QtspEntry:
    qtsp_name: str
    service_certificate: CertificateRecord
    status: QtspStatus = QtspStatus.GRANTED

    def check(self) -> None:
        if self.service_certificate.subject_name != self.qtsp_name:
            raise EntryInvariantViolation(
                f"service certificate subject {self.service_certificate.subject_name!r} "
                f"does not match QTSP name {self.qtsp_name!r}"
            )
        if not self.service_certificate.is_qtsp:
            raise EntryInvariantViolation(f"service certificate of {self.qtsp_name!r} lacks IS-QTSP")

    @der.memoized
    def to_der_value(self) -> der.DerValue:
        return der.seq(
            der.utf8(self.qtsp_name),
            self.service_certificate.to_der_value(),
            der.integer(_STATUS_CODES[self.status]),
        )


@dataclass(frozen=True)
class TrustList:
    sequence_number: int
    issued_at: int
    operator_key_digest: bytes
    entries: tuple
    signature: EcdsaSignature

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @der.memoized
    def tbs_value(self) -> der.DerValue:
        return _list_tbs(self.sequence_number, self.issued_at, self.operator_key_digest, self.entries)

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
    def from_der(cls, b: bytes) -> "TrustList":
        try:
            tbs, signature = split_signed_structure(der.der_decode(b))
            seqno, issued_at, key_digest, entries = tbs.expect(der.SEQUENCE, 4).children
            parsed = []
            for item in entries.expect(der.SEQUENCE).children:
                name, cert, status = item.expect(der.SEQUENCE, 3).children
                code = status.as_int()
                if code not in _CODE_STATUS:
                    raise ValueError(f"unknown QTSP status code {code}")
                entry = QtspEntry(name.as_text(), CertificateRecord.from_der_value(cert), _CODE_STATUS[code])
                entry.check()
                parsed.append(entry)
            digest = key_digest.as_bytes()
            number = seqno.as_int()
            if len(digest) != 32 or not 0 <= number <= U64_MAX:
                raise ValueError("bad sequence number or operator key digest")
            tl = cls(number, issued_at.as_time(), digest, tuple(parsed), signature)
        except (ValueError, TypeError, MalformedDer, MalformedCertificate, EntryInvariantViolation) as exc:
            raise MalformedTrustList(str(exc)) from exc
        if tl.to_der() != bytes(b):
            raise MalformedTrustList("non-canonical trust list encoding")
        return tl

    def text_dump(self) -> str:
        """One line per entry: name, serial, status, validity window."""
        lines = []
        for e in self.entries:
            c = e.service_certificate
            lines.append(f"{e.qtsp_name}\tserial={c.serial}\tstatus={e.status}\tvalid=[{c.not_before},{c.not_after})")
        return "\n".join(lines)


def _list_tbs(sequence_number, issued_at, key_digest, entries) -> der.DerValue:
    return der.seq(
        der.integer(sequence_number),
        der.gentime(issued_at),
        der.octets(key_digest),
        der.seq(*(e.to_der_value() for e in entries)),
    )


def build_trust_list(
    operator_key: PrivateScalar, entries, sequence_number: int, issued_at: int
) -> TrustList:
    entries = tuple(entries)
    for e in entries:
        e.check()
    if not 0 <= sequence_number <= U64_MAX:
        raise ValueError("sequence number must be an unsigned 64-bit integer")
    key_digest = operator_key.public_point().digest()
    tbs = der.der_encode(_list_tbs(sequence_number, issued_at, key_digest, entries))
    return TrustList(sequence_number, issued_at, key_digest, entries, sign_digest(operator_key, sha256(tbs)))


def verify_trust_list(tl: TrustList, operator_key: PublicPoint, verifier=verify_digest) -> bool:
    if tl.operator_key_digest != operator_key.digest():
        return False
    return verifier(operator_key, sha256(tl.tbs_der()), tl.signature)


def lookup_qtsp(tl: TrustList, issuer_name: str) -> QtspEntry | None:
    for entry in tl.entries:
        if entry.qtsp_name == issuer_name:
            return entry
    return None


def duplicate_names(tl: TrustList) -> list[str]:
    seen, dups = set(), []
    for e in tl.entries:
        if e.qtsp_name in seen and e.qtsp_name not in dups:
            dups.append(e.qtsp_name)
        seen.add(e.qtsp_name)
    return dups


def validate_chain(
    seal_cert: CertificateRecord,
    trust_list: TrustList,
    operator_key: PublicPoint,
    rl: RevocationList | None,
    at: int,
    verifier=verify_digest,
) -> ChainReport:
    """Trace a sealing certificate back to the operator-signed list.

    Checks run in a fixed order and the first failure decides the outcome:
    list signature, listing, QTSP status, certificate signature, validity of
    both certificates, revocation.
    """
    if not verify_trust_list(trust_list, operator_key, verifier):
        return ChainReport(ChainOutcome.LIST_SIGNATURE_INVALID, at)
    entry = lookup_qtsp(trust_list, seal_cert.issuer_name)
    if entry is None:
        return ChainReport(ChainOutcome.QTSP_NOT_LISTED, at, (seal_cert.serial,))
    qtsp_cert = entry.service_certificate
    path = (seal_cert.serial, qtsp_cert.serial)
    if entry.status is not QtspStatus.GRANTED:
        return ChainReport(ChainOutcome.QTSP_WITHDRAWN, at, path)
    if not seal_cert.is_seal:
        return ChainReport(ChainOutcome.SEAL_CERT_INVALID, at, path, "NotASealCert")
    if not verify_certificate(seal_cert, qtsp_cert, verifier):
        return ChainReport(ChainOutcome.SEAL_CERT_INVALID, at, path, "CertSignatureInvalid")
    if not (check_validity(seal_cert, at) and check_validity(qtsp_cert, at)):
        return ChainReport(ChainOutcome.EXPIRED, at, path)
    if rl is not None:
        status = check_revocation(seal_cert, rl, qtsp_cert, verifier)
        if status is not RevocationStatus.GOOD:
            # an unverifiable list cannot confirm GOOD status, so fail closed
            return ChainReport(ChainOutcome.REVOKED, at, path, str(status))
    return ChainReport(ChainOutcome.VALID, at, path)


# -- anchoring -----------------------------------------------------------------

class ManualTrustStore:
    """Locally curated trust list cache with rollback protection.

    Updates are serialized; readers get whichever immutable list is current.
    """

    def __init__(self, operator_key: PublicPoint, initial: TrustList | None = None):
        self.operator_key = operator_key
        self._lock = threading.Lock()
        self._current = None
        if initial is not None:
            self.update(initial)

    @property
    def current(self) -> TrustList | None:
        return self._current

    def update(self, tl: TrustList) -> None:
        with self._lock:
            if not verify_trust_list(tl, self.operator_key):
                raise TrustListRejected("trust list signature does not verify under the pinned operator key")
            if self._current is not None and tl.sequence_number <= self._current.sequence_number:
                raise SequenceRollback(
                    f"sequence {tl.sequence_number} does not exceed {self._current.sequence_number}"
                )
            self._current = tl


@dataclass(frozen=True)
class OracleAttestation:
    """Oracle statement that a trust list with ``list_digest`` is current.

    Wire format: 32-byte digest followed by the DER signature.
    """

    list_digest: bytes
    signature: EcdsaSignature

    def to_bytes(self) -> bytes:
        return self.list_digest + self.signature.to_der()

    @classmethod
    def from_bytes(cls, b: bytes) -> "OracleAttestation":
        if len(b) < 33:
            raise MalformedTrustList("attestation too short")
        try:
            sig = EcdsaSignature.from_der(b[32:])
        except (ValueError, MalformedDer) as exc:
            raise MalformedTrustList(f"bad attestation signature: {exc}") from exc
        return cls(bytes(b[:32]), sig)


def attest_trust_list(oracle_key: PrivateScalar, tl: TrustList) -> OracleAttestation:
    digest = tl.digest()
    return OracleAttestation(digest, sign_digest(oracle_key, digest))


def verify_attestation(att: OracleAttestation, oracle_key: PublicPoint, verifier=verify_digest) -> bool:
    return verifier(oracle_key, att.list_digest, att.signature)


# -- sanctions -----------------------------------------------------------------

@dataclass(frozen=True)
class SanctionsRegistry:
    operator_name: str
    identifiers: frozenset
    issued_at: int
    signature: EcdsaSignature

    def __post_init__(self):
        object.__setattr__(self, "identifiers", frozenset(self.identifiers))

    def tbs_der(self) -> bytes:
        return der.der_encode(_registry_tbs(self.operator_name, self.identifiers, self.issued_at))

    def to_der(self) -> bytes:
        tbs = _registry_tbs(self.operator_name, self.identifiers, self.issued_at)
        return der.der_encode(signed_structure(tbs, self.signature))

    @classmethod
    def from_der(cls, b: bytes) -> "SanctionsRegistry":
        try:
            tbs, signature = split_signed_structure(der.der_decode(b))
            name, issued_at, ids = tbs.expect(der.SEQUENCE, 3).children
            values = [i.as_text() for i in ids.expect(der.SET).children]
            if len(set(values)) != len(values):
                raise ValueError("duplicate identifier")
            reg = cls(name.as_text(), frozenset(values), issued_at.as_time(), signature)
        except (ValueError, TypeError, MalformedDer) as exc:
            raise MalformedTrustList(f"bad sanctions registry: {exc}") from exc
        if reg.to_der() != bytes(b):
            raise MalformedTrustList("non-canonical sanctions registry encoding")
        return reg


def _registry_tbs(name, identifiers, issued_at):
    return der.seq(der.utf8(name), der.gentime(issued_at), der.set_of(*(der.utf8(i) for i in identifiers)))


def build_sanctions_registry(
    operator_key: PrivateScalar, operator_name: str, identifiers, issued_at: int
) -> SanctionsRegistry:
    ids = frozenset(str(i) for i in identifiers)
    tbs = der.der_encode(_registry_tbs(operator_name, ids, issued_at))
    return SanctionsRegistry(operator_name, ids, issued_at, sign_digest(operator_key, sha256(tbs)))


def check_sanctions(
    subject: str | LegalPersonId, registry: SanctionsRegistry, operator_key: PublicPoint, verifier=verify_digest
) -> bool:
    """True when ``subject`` is clear, i.e. absent from a trusted registry."""
    if not verifier(operator_key, sha256(registry.tbs_der()), registry.signature):
        raise UntrustedRegistry("sanctions registry signature does not verify")
    return str(subject) not in registry.identifiers
