"""Exception hierarchy shared across the package."""


class SealChainError(Exception):
    """Base class for every error raised by this package."""

    #: short machine-readable reason, used in receipts and CLI output
    code = "Error"

    def __init__(self, message=None):
        super().__init__(message or self.code)


class MalformedTarget(SealChainError):
    code = "MalformedTarget"


class MalformedDer(SealChainError):
    code = "MalformedDer"

    def __init__(self, position, reason):
        self.position = position
        self.reason = reason
        super().__init__(f"malformed DER at offset {position}: {reason}")


class UnsupportedConstruct(SealChainError):
    code = "UnsupportedConstruct"


class MalformedCertificate(SealChainError):
    code = "MalformedCertificate"


class NotAQtsp(SealChainError):
    code = "NotAQtsp"


class KeyMismatch(SealChainError):
    code = "KeyMismatch"


class InvalidWindow(SealChainError):
    code = "InvalidWindow"


class EntryInvariantViolation(SealChainError):
    code = "EntryInvariantViolation"


class MalformedTrustList(SealChainError):
    code = "MalformedTrustList"


class UntrustedRegistry(SealChainError):
    code = "UntrustedRegistry"


class TrustListRejected(SealChainError):
    code = "TrustListRejected"


class NotASealCert(SealChainError):
    code = "NotASealCert"


class MalformedEnvelope(SealChainError):
    code = "MalformedEnvelope"


class IndexInvalid(SealChainError):
    code = "IndexInvalid"


# -- ledger ------------------------------------------------------------------

class LedgerError(SealChainError):
    """A failed ledger operation. ``code`` becomes the revert reason."""


class UnknownContract(LedgerError):
    code = "UnknownContract"


class SealTargetMismatch(LedgerError):
    code = "SealTargetMismatch"


class CertificateMismatch(LedgerError):
    code = "CertificateMismatch"


class BadListSignature(LedgerError):
    code = "BadListSignature"


class SequenceRollback(LedgerError):
    code = "SequenceRollback"


class NoSeal(LedgerError):
    code = "NoSeal"


class NoMirror(LedgerError):
    code = "NoMirror"


class AuthExpired(LedgerError):
    code = "AuthExpired"


class AuthNotYetValid(LedgerError):
    code = "AuthNotYetValid"


class NonceReused(LedgerError):
    code = "NonceReused"


class BadAuthSignature(LedgerError):
    code = "BadAuthSignature"


class InsufficientBalance(LedgerError):
    code = "InsufficientBalance"


class CallerNotPayee(LedgerError):
    code = "CallerNotPayee"


class OutOfGas(LedgerError):
    code = "OutOfGas"


class Sanctioned(LedgerError):
    code = "Sanctioned"


class NoSanctionsRegistry(LedgerError):
    code = "NoSanctionsRegistry"


class BadAttestation(LedgerError):
    code = "BadAttestation"


class UnknownOperation(LedgerError):
    code = "UnknownOperation"


class ValidationFailed(LedgerError):
    """An on-chain trust validation produced a non-VALID report."""

    def __init__(self, outcome):
        self.code = str(outcome)
        super().__init__(self.code)


# -- agents ------------------------------------------------------------------

class NoMatch(SealChainError):
    code = "NoMatch"
