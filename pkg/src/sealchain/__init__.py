"""Seal smart-contract identities with P-256 qualified seals and validate them against a trust list."""

from .cades import SealEnvelope, SealIndex, SealStatus, create_seal, extract_rs, verify_seal
from .certificates import CertFlag, CertificateRecord, RevocationList, issue_certificate, verify_certificate
from .crypto import EcdsaSignature, PrivateScalar, PublicPoint, keygen, sign_digest, suite_info, verify_digest
from .errors import SealChainError
from .identity import LegalPersonId, SealTarget, decode_seal_target, encode_seal_target, seal_target_digest
from .ledger import ExecutionReceipt, Ledger, LedgerState, PaymentAuthorization, Transaction
from .trustlist import AnchorMode, ChainOutcome, ChainReport, TrustList, build_trust_list, validate_chain

__all__ = [
    "AnchorMode", "CertFlag", "CertificateRecord", "ChainOutcome", "ChainReport", "EcdsaSignature",
    "ExecutionReceipt", "Ledger", "LedgerState", "LegalPersonId", "PaymentAuthorization", "PrivateScalar",
    "PublicPoint", "RevocationList", "SealChainError", "SealEnvelope", "SealIndex", "SealStatus", "SealTarget",
    "Transaction", "TrustList", "build_trust_list", "create_seal", "decode_seal_target", "encode_seal_target",
    "extract_rs", "issue_certificate", "keygen", "seal_target_digest", "sign_digest", "suite_info",
    "validate_chain", "verify_certificate", "verify_digest", "verify_seal",
]
