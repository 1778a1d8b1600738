"""Deterministic EVM-like ledger with seal storage and on-chain trust validation.

Contracts are not bytecode: each call names a native operation executed on
behalf of the target contract. Gas is charged per operation class from
``DEFAULT_GAS_PRICES``:

=================  ======  ============================================
class              units   charged for
=================  ======  ============================================
tx_base            21000   once per transaction
call               700     each call in a transaction
hash_base          60      each SHA-256 invocation
hash_word          12      each 32-byte word hashed
precompile         3450    each P256VERIFY invocation
storage_read       2100    each 32-byte word read from contract storage
storage_write      20000   each 32-byte word written
transfer           5000    each balance update pair
event              375     each emitted event
=================  ======  ============================================

All state transitions other than genesis funding and deployment go through
transactions that either commit completely or leave the state untouched.
"""

from __future__ import annotations

import enum
import hashlib
import threading
from dataclasses import dataclass, field, replace

from . import der
from .cades import (
    SealEnvelope,
    check_index,
    extract_rs,
    parse_signed_attrs_slice,
    signed_attrs_digest,
    unpack_seal_field,
)
from .certificates import CertificateRecord, RevocationList
from .crypto import (
    PRECOMPILE_GAS,
    PRECOMPILE_SUCCESS,
    EcdsaSignature,
    PrivateScalar,
    PublicPoint,
    precompile_p256verify,
    sha256,
    sign_digest,
)
from .errors import (
    AuthExpired,
    AuthNotYetValid,
    BadAttestation,
    BadAuthSignature,
    BadListSignature,
    CallerNotPayee,
    CertificateMismatch,
    IndexInvalid,
    InsufficientBalance,
    LedgerError,
    MalformedCertificate,
    NoMirror,
    NonceReused,
    NoSanctionsRegistry,
    NoSeal,
    OutOfGas,
    Sanctioned,
    SealChainError,
    SealTargetMismatch,
    SequenceRollback,
    UnknownContract,
    UnknownOperation,
    ValidationFailed,
)
from .identity import ZERO_DIGEST, LegalPersonId, SealTarget
from .trustlist import (
    AnchorMode,
    ChainOutcome,
    ChainReport,
    OracleAttestation,
    SanctionsRegistry,
    TrustList,
    check_sanctions,
    validate_chain,
    verify_attestation,
    verify_trust_list,
)

DEFAULT_GAS_PRICES = {
    "tx_base": 21000,
    "call": 700,
    "hash_base": 60,
    "hash_word": 12,
    "precompile": PRECOMPILE_GAS,
    "storage_read": 2100,
    "storage_write": 20000,
    "transfer": 5000,
    "event": 375,
}
DEFAULT_GAS_LIMIT = 10_000_000

AUTH_DOMAIN_TAG = b"TRUSTPAY-V1"
U128_MAX = 2**128 - 1


class Role(str, enum.Enum):
    PROVIDER = "PROVIDER"
    USER_SMART_ACCOUNT = "USER-SMART-ACCOUNT"
    LOTL_ANCHOR = "LOTL-ANCHOR"
    TOKEN = "TOKEN"
    PLAIN = "PLAIN"

    def __str__(self):
        return self.value


def _words(n: int) -> int:
    return (n + 31) // 32


def _hex(b: bytes) -> str:
    return b.hex()


# -- value types ---------------------------------------------------------------

@dataclass(frozen=True)
class ContractAccount:
    address: bytes
    code_hash: bytes
    role: Role = Role.PLAIN
    seal_field: bytes | None = None
    cert_field: bytes | None = None
    lpid_field: LegalPersonId | None = None
    metadata_digest: bytes = ZERO_DIGEST

    @property
    def sealed(self) -> bool:
        return self.seal_field is not None and self.cert_field is not None


@dataclass(frozen=True)
class PaymentAuthorization:
    """Transfer-with-authorization message signed by the payer's controlling key."""

    payer: bytes
    payee: bytes
    value: int
    valid_after: int
    valid_before: int
    nonce: bytes
    signature: EcdsaSignature

    def __post_init__(self):
        if len(self.payer) != 20 or len(self.payee) != 20 or len(self.nonce) != 32:
            raise ValueError("bad address or nonce length")
        if not 0 <= self.value <= U128_MAX:
            raise ValueError("value must fit in 128 bits")
        if not 0 <= self.valid_after < self.valid_before < 2**64:
            raise ValueError("authorization window must satisfy valid_after < valid_before")

    def digest(self) -> bytes:
        return authorization_digest(self.payer, self.payee, self.value, self.valid_after,
                                    self.valid_before, self.nonce)

    def to_bytes(self) -> bytes:
        return _auth_fields(self.payer, self.payee, self.value, self.valid_after,
                            self.valid_before, self.nonce) + self.signature.to_bytes()

    @classmethod
    def from_bytes(cls, b: bytes) -> "PaymentAuthorization":
        if len(b) != 104 + 64:
            raise ValueError("payment authorization must be 168 bytes")
        return cls(
            payer=b[0:20],
            payee=b[20:40],
            value=int.from_bytes(b[40:56], "big"),
            valid_after=int.from_bytes(b[56:64], "big"),
            valid_before=int.from_bytes(b[64:72], "big"),
            nonce=b[72:104],
            signature=EcdsaSignature(int.from_bytes(b[104:136], "big"), int.from_bytes(b[136:168], "big")),
        )


def _auth_fields(payer, payee, value, valid_after, valid_before, nonce) -> bytes:
    return (
        payer + payee + value.to_bytes(16, "big") + valid_after.to_bytes(8, "big")
        + valid_before.to_bytes(8, "big") + nonce
    )


def authorization_digest(payer, payee, value, valid_after, valid_before, nonce) -> bytes:
    return sha256(AUTH_DOMAIN_TAG + _auth_fields(payer, payee, value, valid_after, valid_before, nonce))


def sign_authorization(
    key: PrivateScalar, payer: bytes, payee: bytes, value: int, valid_after: int, valid_before: int, nonce: bytes
) -> PaymentAuthorization:
    digest = authorization_digest(payer, payee, value, valid_after, valid_before, nonce)
    return PaymentAuthorization(payer, payee, value, valid_after, valid_before, nonce, sign_digest(key, digest))


@dataclass(frozen=True)
class Call:
    target: bytes
    operation: str
    args: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Transaction:
    origin: bytes
    calls: tuple
    gas_limit: int = DEFAULT_GAS_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "calls", tuple(self.calls))
        if not self.calls:
            raise ValueError("a transaction needs at least one call")


@dataclass(frozen=True)
class Event:
    name: str
    fields: tuple

    def line(self) -> str:
        return " ".join([self.name] + [f"{k}={v}" for k, v in self.fields])


@dataclass(frozen=True)
class ExecutionReceipt:
    status: str
    reason: str | None
    gas_used: int
    precompile_call_count: int
    events: tuple = ()

    @property
    def committed(self) -> bool:
        return self.status == "COMMITTED"

    def status_text(self) -> str:
        return self.status if self.committed else f"REVERTED({self.reason})"

    def log(self) -> str:
        return "\n".join(e.line() for e in self.events)


# -- state ---------------------------------------------------------------------

@dataclass
class LedgerState:
    chain_id: int
    block_time: int = 0
    anchor_mode: AnchorMode = AnchorMode.ONCHAIN_MIRROR
    operator_key: PublicPoint | None = None
    oracle_key: PublicPoint | None = None
    contracts: dict = field(default_factory=dict)
    balances: dict = field(default_factory=dict)
    deploy_nonces: dict = field(default_factory=dict)
    used_auth_nonces: set = field(default_factory=set)
    gas_price_table: dict = field(default_factory=lambda: dict(DEFAULT_GAS_PRICES))
    mirrored_list: TrustList | None = None
    oracle_attestation: OracleAttestation | None = None
    revocation_lists: dict = field(default_factory=dict)
    sanctions_key: PublicPoint | None = None
    sanctions_registry: SanctionsRegistry | None = None

    def copy(self) -> "LedgerState":
        # values inside the containers are immutable, so copying containers suffices
        return replace(
            self,
            contracts=dict(self.contracts),
            balances=dict(self.balances),
            deploy_nonces=dict(self.deploy_nonces),
            used_auth_nonces=set(self.used_auth_nonces),
            gas_price_table=dict(self.gas_price_table),
            revocation_lists=dict(self.revocation_lists),
        )

    def total_supply(self) -> int:
        return sum(self.balances.values())

    # Snapshot image: one DER SEQUENCE. Absent optional values are empty
    # OCTET STRINGs (or an empty UTF8String for the LPID); present values are
    # never empty, so the encoding is unambiguous.
    def to_bytes(self) -> bytes:
        def opt(b):
            return der.octets(b if b is not None else b"")

        contracts = []
        for addr in sorted(self.contracts):
            c = self.contracts[addr]
            contracts.append(der.seq(
                der.octets(c.address),
                der.octets(c.code_hash),
                der.utf8(c.role.value),
                opt(c.seal_field),
                opt(c.cert_field),
                der.utf8(c.lpid_field.value if c.lpid_field else ""),
                der.octets(c.metadata_digest),
            ))
        return der.der_encode(der.seq(
            der.integer(1),
            der.integer(self.chain_id),
            der.integer(self.block_time),
            der.utf8(self.anchor_mode.value),
            opt(self.operator_key.encode() if self.operator_key else None),
            opt(self.oracle_key.encode() if self.oracle_key else None),
            der.seq(*contracts),
            der.seq(*(der.seq(der.octets(a), der.integer(self.balances[a])) for a in sorted(self.balances))),
            der.seq(*(der.seq(der.octets(a), der.integer(self.deploy_nonces[a])) for a in sorted(self.deploy_nonces))),
            der.set_of(*(der.octets(n) for n in self.used_auth_nonces)),
            der.seq(*(der.seq(der.utf8(k), der.integer(self.gas_price_table[k])) for k in sorted(self.gas_price_table))),
            opt(self.mirrored_list.to_der() if self.mirrored_list else None),
            opt(self.oracle_attestation.to_bytes() if self.oracle_attestation else None),
            der.seq(*(der.octets(self.revocation_lists[k].to_der()) for k in sorted(self.revocation_lists))),
            opt(self.sanctions_key.encode() if self.sanctions_key else None),
            opt(self.sanctions_registry.to_der() if self.sanctions_registry else None),
        ))

    @classmethod
    def from_bytes(cls, b: bytes) -> "LedgerState":
        def opt(v, parse):
            raw = v.as_bytes()
            return parse(raw) if raw else None

        (version, chain_id, block_time, mode, op_key, oracle_key, contracts, balances, nonces,
         used, gas, mirrored, attestation, rls, s_key, s_reg) = der.der_decode(b).expect(der.SEQUENCE, 16).children
        if version.as_int() != 1:
            raise ValueError("unsupported ledger snapshot version")
        accounts = {}
        for item in contracts.children:
            addr, code, role, seal, cert, lpid, meta = item.expect(der.SEQUENCE, 7).children
            text = lpid.as_text()
            accounts[addr.as_bytes()] = ContractAccount(
                address=addr.as_bytes(),
                code_hash=code.as_bytes(),
                role=Role(role.as_text()),
                seal_field=seal.as_bytes() or None,
                cert_field=cert.as_bytes() or None,
                lpid_field=LegalPersonId(text) if text else None,
                metadata_digest=meta.as_bytes(),
            )
        state = cls(
            chain_id=chain_id.as_int(),
            block_time=block_time.as_int(),
            anchor_mode=AnchorMode(mode.as_text()),
            operator_key=opt(op_key, PublicPoint.decode),
            oracle_key=opt(oracle_key, PublicPoint.decode),
            contracts=accounts,
            balances={p.children[0].as_bytes(): p.children[1].as_int() for p in balances.children},
            deploy_nonces={p.children[0].as_bytes(): p.children[1].as_int() for p in nonces.children},
            used_auth_nonces={n.as_bytes() for n in used.children},
            gas_price_table={p.children[0].as_text(): p.children[1].as_int() for p in gas.children},
            mirrored_list=opt(mirrored, TrustList.from_der),
            oracle_attestation=opt(attestation, OracleAttestation.from_bytes),
            revocation_lists={},
            sanctions_key=opt(s_key, PublicPoint.decode),
            sanctions_registry=opt(s_reg, SanctionsRegistry.from_der),
        )
        for item in rls.children:
            rl = RevocationList.from_der(item.as_bytes())
            state.revocation_lists[rl.issuer_name] = rl
        return state


class _Execution:
    """Per-transaction meter: gas, precompile calls and the event log."""

    def __init__(self, state: LedgerState, gas_limit: int | None):
        self.state = state
        self.gas_limit = gas_limit
        self.prices = state.gas_price_table
        self.gas_used = 0
        self.precompile_calls = 0
        self.events = []

    def charge(self, kind: str, units: int = 1) -> None:
        self.gas_used += self.prices[kind] * units
        if self.gas_limit is not None and self.gas_used > self.gas_limit:
            self.gas_used = self.gas_limit
            raise OutOfGas(f"gas limit {self.gas_limit} exhausted")

    def hash(self, data: bytes) -> bytes:
        self.charge("hash_base")
        self.charge("hash_word", _words(len(data)))
        return sha256(data)

    def read(self, nbytes: int) -> None:
        self.charge("storage_read", _words(nbytes))

    def write(self, nbytes: int) -> None:
        self.charge("storage_write", max(1, _words(nbytes)))

    def precompile(self, data: bytes) -> bytes:
        self.precompile_calls += 1
        self.charge("precompile")
        return precompile_p256verify(data)

    def verify(self, pub: PublicPoint, digest: bytes, sig: EcdsaSignature) -> bool:
        """Signature check routed through the P256VERIFY precompile."""
        if not (0 <= sig.r < 2**256 and 0 <= sig.s < 2**256):
            return False
        return self.precompile(digest + sig.to_bytes() + pub.encode()) == PRECOMPILE_SUCCESS

    def emit(self, name: str, **fields) -> None:
        self.charge("event")
        self.events.append(Event(name, tuple(fields.items())))


def seal_target_for(state: LedgerState, account: ContractAccount) -> SealTarget:
    return SealTarget(state.chain_id, account.address, account.code_hash, account.metadata_digest)


# -- operations ------------------------------------------------------------------

def _account(state: LedgerState, address: bytes) -> ContractAccount:
    acct = state.contracts.get(bytes(address))
    if acct is None:
        raise UnknownContract(f"no contract at {bytes(address).hex()}")
    return acct


def _write_seal(ctx, contract, seal_field, cert_bytes, metadata_digest, lpid):
    state = ctx.state
    acct = _account(state, contract)
    env_bytes, idx = unpack_seal_field(seal_field)
    env = SealEnvelope.from_der(env_bytes)
    check_index(env_bytes, idx)
    try:
        cert = CertificateRecord.from_der(cert_bytes)
    except MalformedCertificate as exc:
        raise CertificateMismatch(f"certificate field does not parse: {exc}") from exc
    if env.certificate != cert:
        raise CertificateMismatch("certificate field differs from the envelope's embedded certificate")
    if len(metadata_digest) != 32:
        raise SealTargetMismatch("metadata digest must be 32 bytes")
    updated = replace(acct, metadata_digest=bytes(metadata_digest))
    if env.signed_attrs.message_digest != ctx.hash(seal_target_for(state, updated).encode()):
        raise SealTargetMismatch("envelope does not seal this contract")
    if lpid is None:
        lpid = cert.lpid
    ctx.write(len(seal_field) + len(cert_bytes) + 32)
    state.contracts[acct.address] = replace(
        updated, seal_field=bytes(seal_field), cert_field=bytes(cert_bytes), lpid_field=lpid
    )
    ctx.emit("SealWritten", contract=_hex(acct.address), cert_serial=cert.serial)


def _mirror(ctx, tl: TrustList, operator_key: PublicPoint):
    state = ctx.state
    if state.operator_key is not None and operator_key != state.operator_key:
        raise BadListSignature("operator key is not the pinned LOTL operator")
    if not verify_trust_list(tl, operator_key, ctx.verify):
        raise BadListSignature("trust list signature does not verify")
    current = state.mirrored_list
    if current is not None and tl.sequence_number <= current.sequence_number:
        raise SequenceRollback(f"sequence {tl.sequence_number} does not exceed {current.sequence_number}")
    ctx.write(len(tl.to_der()))
    state.mirrored_list = tl
    state.operator_key = operator_key
    ctx.emit("MirrorUpdated", sequence=tl.sequence_number, entries=len(tl.entries))


def _post_attestation(ctx, att: OracleAttestation):
    state = ctx.state
    if state.oracle_key is None or not verify_attestation(att, state.oracle_key, ctx.verify):
        raise BadAttestation("attestation does not verify under the pinned oracle key")
    ctx.write(len(att.to_bytes()))
    state.oracle_attestation = att
    ctx.emit("AttestationPosted", digest=_hex(att.list_digest))


def _mirror_revocations(ctx, rl: RevocationList, trust_list=None):
    state = ctx.state
    tl, _ = _anchor(ctx, trust_list)
    entry = next((e for e in tl.entries if e.qtsp_name == rl.issuer_name), None)
    if entry is None:
        raise NoMirror(f"issuer {rl.issuer_name!r} is not in the mirrored list")
    if not ctx.verify(entry.service_certificate.subject_key, sha256(rl.tbs_der()), rl.signature):
        raise BadListSignature("revocation list signature does not verify")
    previous = state.revocation_lists.get(rl.issuer_name)
    if previous is not None and rl.issued_at <= previous.issued_at:
        raise SequenceRollback("revocation list is not newer than the mirrored one")
    ctx.write(len(rl.to_der()))
    state.revocation_lists[rl.issuer_name] = rl
    ctx.emit("RevocationsMirrored", issuer=rl.issuer_name, revoked=len(rl.revoked_serials))


def _install_sanctions(ctx, registry: SanctionsRegistry, operator_key: PublicPoint):
    state = ctx.state
    if not ctx.verify(operator_key, sha256(registry.tbs_der()), registry.signature):
        raise BadListSignature("sanctions registry signature does not verify")
    ctx.write(len(registry.to_der()))
    state.sanctions_registry = registry
    state.sanctions_key = operator_key
    ctx.emit("SanctionsRegistryInstalled", entries=len(registry.identifiers))


def _anchor(ctx, trust_list_calldata):
    state = ctx.state
    if state.anchor_mode is AnchorMode.ORACLE:
        att = state.oracle_attestation
        if att is None or trust_list_calldata is None:
            raise NoMirror("no attested trust list available")
        raw = trust_list_calldata.to_der()
        if ctx.hash(raw) != att.list_digest:
            raise NoMirror("supplied trust list does not match the oracle attestation")
        return trust_list_calldata, state.operator_key
    tl = state.mirrored_list
    if tl is None:
        raise NoMirror("no trust list mirrored")
    ctx.read(len(tl.to_der()))
    return tl, state.operator_key


def _validate(ctx, subject: bytes, at: int | None, trust_list=None) -> ChainReport:
    state = ctx.state
    at = state.block_time if at is None else at
    acct = _account(state, subject)
    if not acct.sealed:
        raise NoSeal(f"contract {acct.address.hex()} carries no seal")
    tl, operator_key = _anchor(ctx, trust_list)
    ctx.read(len(acct.seal_field) + len(acct.cert_field))

    def seal_failure(detail):
        return ChainReport(ChainOutcome.SEAL_CERT_INVALID, at, (), detail)

    env_bytes, idx = unpack_seal_field(acct.seal_field)
    try:
        sig = extract_rs(env_bytes, idx)
    except IndexInvalid:
        return seal_failure("IndexInvalid")
    raw_attrs = env_bytes[idx.signed_attrs_offset:idx.signed_attrs_offset + idx.signed_attrs_length]
    attrs = parse_signed_attrs_slice(raw_attrs)
    if attrs.message_digest != ctx.hash(seal_target_for(state, acct).encode()):
        return seal_failure("DIGEST-MISMATCH")
    if attrs.signing_cert_digest != ctx.hash(acct.cert_field):
        return seal_failure("CERT-MISMATCH")
    cert = CertificateRecord.from_der(acct.cert_field)
    ctx.hash(b"\x00" * len(raw_attrs))  # meter the signed-attribute hash
    if not ctx.verify(cert.subject_key, signed_attrs_digest(raw_attrs), sig):
        return seal_failure("SIGNATURE-INVALID")
    ctx.charge("hash_base", 2)
    ctx.charge("hash_word", _words(len(tl.tbs_der())) + _words(len(cert.tbs_der())))
    rl = state.revocation_lists.get(cert.issuer_name)
    return validate_chain(cert, tl, operator_key, rl, at, verifier=ctx.verify)


def _receive(ctx, auth: PaymentAuthorization, caller: bytes):
    state = ctx.state
    if bytes(caller) != auth.payee:
        raise CallerNotPayee("only the payee may submit receive-with-authorization")
    now = state.block_time
    if not now > auth.valid_after:
        raise AuthNotYetValid(f"authorization valid after {auth.valid_after}, block time {now}")
    if not now < auth.valid_before:
        raise AuthExpired(f"authorization expired at {auth.valid_before}, block time {now}")
    if auth.nonce in state.used_auth_nonces:
        raise NonceReused(f"nonce {auth.nonce.hex()} already used")
    payer = state.contracts.get(auth.payer)
    if payer is None or payer.cert_field is None:
        raise BadAuthSignature("payer has no certificate binding a controlling key")
    ctx.read(len(payer.cert_field))
    key = CertificateRecord.from_der(payer.cert_field).subject_key
    if not ctx.verify(key, ctx.hash(AUTH_DOMAIN_TAG + auth.to_bytes()[:104]), auth.signature):
        raise BadAuthSignature("authorization signature does not verify")
    balance = state.balances.get(auth.payer, 0)
    if balance < auth.value:
        raise InsufficientBalance(f"balance {balance} below {auth.value}")
    ctx.charge("transfer")
    state.balances[auth.payer] = balance - auth.value
    state.balances[auth.payee] = state.balances.get(auth.payee, 0) + auth.value
    state.used_auth_nonces.add(auth.nonce)
    ctx.emit(
        "TransferWithAuthorization",
        payer=_hex(auth.payer), payee=_hex(auth.payee), value=auth.value, nonce=_hex(auth.nonce),
    )


def _sanctions(ctx, executor: bytes, subject: bytes):
    state = ctx.state
    if state.sanctions_registry is None:
        raise NoSanctionsRegistry("no sanctions registry installed")
    acct = _account(state, subject)
    identifiers = []
    if acct.lpid_field is not None:
        identifiers.append(str(acct.lpid_field))
    if acct.cert_field is not None:
        identifiers.append(CertificateRecord.from_der(acct.cert_field).subject_name)
    if not identifiers:
        raise NoSeal("subject carries no identity to screen")
    # the registry signature is re-checked on every screening, once
    clear = check_sanctions(identifiers[0], state.sanctions_registry, state.sanctions_key, ctx.verify)
    clear = clear and not any(i in state.sanctions_registry.identifiers for i in identifiers[1:])
    if not clear:
        raise Sanctioned(f"contract {acct.address.hex()} matches the sanctions registry")
    ctx.emit("SanctionsCleared", checker=_hex(executor), subject=_hex(acct.address))


def _dispatch(ctx, call: Call):
    op, args, target = call.operation, call.args, bytes(call.target)
    if op == "validate":
        _account(ctx.state, target)
        report = _validate(ctx, args["subject"], args.get("at"), args.get("trust_list"))
        ctx.emit("CounterpartyValidated", validator=_hex(target), subject=_hex(bytes(args["subject"])),
                 outcome=report.outcome.value)
        if not report.valid:
            raise ValidationFailed(report.outcome)
    elif op == "check_sanctions":
        _account(ctx.state, target)
        _sanctions(ctx, target, args["subject"])
    elif op == "receive_with_authorization":
        _account(ctx.state, target)
        _receive(ctx, args["auth"], target)
    elif op == "write_seal_field":
        _write_seal(ctx, target, args["seal_field"], args["cert"],
                    args.get("metadata_digest", ZERO_DIGEST), args.get("lpid"))
    elif op == "mirror_trust_list":
        _mirror(ctx, args["trust_list"], args["operator_key"])
    elif op == "post_attestation":
        _post_attestation(ctx, args["attestation"])
    elif op == "mirror_revocation_list":
        _mirror_revocations(ctx, args["revocation_list"], args.get("trust_list"))
    elif op == "install_sanctions_registry":
        _install_sanctions(ctx, args["registry"], args["operator_key"])
    else:
        raise UnknownOperation(f"unknown operation {op!r}")


# -- ledger --------------------------------------------------------------------

class Ledger:
    """Single-writer ledger. Mutations are serialized; reads see whole states."""

    def __init__(
        self,
        chain_id: int,
        *,
        block_time: int = 0,
        operator_key: PublicPoint | None = None,
        anchor_mode: AnchorMode = AnchorMode.ONCHAIN_MIRROR,
        oracle_key: PublicPoint | None = None,
        gas_prices: dict | None = None,
    ):
        if anchor_mode is AnchorMode.MANUAL:
            raise ValueError("MANUAL anchoring is an off-chain mode; use ONCHAIN-MIRROR or ORACLE")
        if anchor_mode is AnchorMode.ORACLE and (oracle_key is None or operator_key is None):
            raise ValueError("ORACLE mode needs pinned oracle and operator keys")
        prices = dict(DEFAULT_GAS_PRICES)
        prices.update(gas_prices or {})
        self._state = LedgerState(
            chain_id=chain_id,
            block_time=block_time,
            anchor_mode=anchor_mode,
            operator_key=operator_key,
            oracle_key=oracle_key,
            gas_price_table=prices,
        )
        self._lock = threading.RLock()

    @classmethod
    def from_state(cls, state: LedgerState) -> "Ledger":
        ledger = cls.__new__(cls)
        ledger._state = state.copy()
        ledger._lock = threading.RLock()
        return ledger

    @classmethod
    def restore(cls, snapshot: bytes) -> "Ledger":
        return cls.from_state(LedgerState.from_bytes(snapshot))

    @property
    def state(self) -> LedgerState:
        """Current state. Treat as read-only; it is replaced, not mutated, by writes."""
        return self._state

    def snapshot(self) -> bytes:
        return self._state.to_bytes()

    def clone(self) -> "Ledger":
        return Ledger.from_state(self._state)

    # -- queries --

    @property
    def chain_id(self) -> int:
        return self._state.chain_id

    @property
    def block_time(self) -> int:
        return self._state.block_time

    def account(self, address: bytes) -> ContractAccount:
        return _account(self._state, address)

    def balance_of(self, address: bytes) -> int:
        return self._state.balances.get(bytes(address), 0)

    def total_supply(self) -> int:
        return self._state.total_supply()

    def seal_target_of(self, address: bytes) -> SealTarget:
        return seal_target_for(self._state, self.account(address))

    # -- harness-level transitions --

    def set_block_time(self, t: int) -> None:
        with self._lock:
            if t < self._state.block_time:
                raise ValueError("block time cannot move backwards")
            work = self._state.copy()
            work.block_time = t
            self._state = work

    def advance_time(self, seconds: int) -> None:
        self.set_block_time(self._state.block_time + seconds)

    def mint(self, address: bytes, amount: int) -> None:
        """Genesis allocation; the only way token supply changes."""
        with self._lock:
            work = self._state.copy()
            work.balances[bytes(address)] = work.balances.get(bytes(address), 0) + amount
            if work.balances[bytes(address)] > U128_MAX:
                raise ValueError("balance exceeds 128 bits")
            self._state = work

    def deploy_contract(self, code_hash: bytes, role: Role, deployer: bytes) -> bytes:
        if len(code_hash) != 32 or len(deployer) != 20:
            raise ValueError("code hash must be 32 bytes and deployer 20 bytes")
        with self._lock:
            work = self._state.copy()
            nonce = work.deploy_nonces.get(bytes(deployer), 0)
            address = hashlib.sha256(bytes(deployer) + nonce.to_bytes(8, "big") + bytes(code_hash)).digest()[:20]
            if address in work.contracts:
                raise LedgerError(f"address collision at {address.hex()}")
            work.deploy_nonces[bytes(deployer)] = nonce + 1
            work.contracts[address] = ContractAccount(address, bytes(code_hash), Role(role))
            self._state = work
            return address

    # -- atomic operations --

    def _run(self, fn, gas_limit=None):
        with self._lock:
            ctx = _Execution(self._state.copy(), gas_limit)
            result = fn(ctx)
            self._state = ctx.state
            return result

    def write_seal_field(self, contract: bytes, seal_field: bytes, cert_bytes: bytes,
                         metadata_digest: bytes = ZERO_DIGEST, lpid: LegalPersonId | None = None) -> None:
        self._run(lambda ctx: _write_seal(ctx, contract, seal_field, cert_bytes, metadata_digest, lpid))

    def mirror_trust_list(self, tl: TrustList, operator_key: PublicPoint) -> None:
        self._run(lambda ctx: _mirror(ctx, tl, operator_key))

    def post_attestation(self, att: OracleAttestation) -> None:
        self._run(lambda ctx: _post_attestation(ctx, att))

    def mirror_revocation_list(self, rl: RevocationList, trust_list: TrustList | None = None) -> None:
        self._run(lambda ctx: _mirror_revocations(ctx, rl, trust_list))

    def install_sanctions_registry(self, registry: SanctionsRegistry, operator_key: PublicPoint) -> None:
        self._run(lambda ctx: _install_sanctions(ctx, registry, operator_key))

    def receive_with_authorization(self, auth: PaymentAuthorization, caller: bytes) -> None:
        self._run(lambda ctx: _receive(ctx, auth, caller))

    def onchain_validate(self, subject: bytes, at: int | None = None, trust_list: TrustList | None = None) -> ChainReport:
        """Read-only validation of ``subject``'s seal and chain; state is never modified."""
        return self.onchain_validate_metered(subject, at, trust_list)[0]

    def onchain_validate_metered(
        self, subject: bytes, at: int | None = None, trust_list: TrustList | None = None
    ) -> tuple[ChainReport, ExecutionReceipt]:
        """Like ``onchain_validate`` but also returns the metering receipt of the read-only call."""
        ctx = _Execution(self._state.copy(), None)
        report = _validate(ctx, subject, at, trust_list)
        return report, ExecutionReceipt("COMMITTED", None, ctx.gas_used, ctx.precompile_calls, ())

    def execute_atomic(self, tx: Transaction) -> ExecutionReceipt:
        with self._lock:
            ctx = _Execution(self._state.copy(), tx.gas_limit)
            try:
                ctx.charge("tx_base")
                for call in tx.calls:
                    ctx.charge("call")
                    _dispatch(ctx, call)
            except SealChainError as exc:
                return ExecutionReceipt("REVERTED", exc.code, ctx.gas_used, ctx.precompile_calls, ())
            self._state = ctx.state
            return ExecutionReceipt("COMMITTED", None, ctx.gas_used, ctx.precompile_calls, tuple(ctx.events))


def defi_flow_transaction(
    origin: bytes,
    user_account: bytes,
    provider: bytes,
    auth: PaymentAuthorization,
    gas_limit: int = DEFAULT_GAS_LIMIT,
    trust_list: TrustList | None = None,
) -> Transaction:
    """Mutual validation, sanctions screening, then settlement, in one transaction."""
    extra = {"trust_list": trust_list} if trust_list is not None else {}
    return Transaction(
        origin=origin,
        calls=(
            Call(user_account, "validate", {"subject": provider, **extra}),
            Call(provider, "validate", {"subject": user_account, **extra}),
            Call(provider, "check_sanctions", {"subject": user_account}),
            Call(provider, "receive_with_authorization", {"auth": auth}),
        ),
        gas_limit=gas_limit,
    )
