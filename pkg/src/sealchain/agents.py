"""Agent trusted payment protocol over an in-memory transport.

Eight steps, consumer and provider each validating the other off-chain
before any value moves:

1. consumer discovers the provider
2. consumer reads the provider's seal and certificate from the ledger
3. consumer validates the provider's seal and chain
4. consumer signs a payment authorization and sends the service request
5. provider receives the request and checks the price
6. provider validates the consumer's seal, chain and authorization
7. facilitator settles the authorization on the ledger
8. provider serves the result

A failed step never appears among the trace's steps; it is reported only by
the terminal ``ABORTED(step, reason)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import der
from .cades import SealEnvelope, SealStatus, unpack_seal_field, verify_seal
from .certificates import CertificateRecord, RevocationList
from .crypto import PrivateScalar, PublicPoint, sha256, verify_digest
from .errors import NoMatch, NoMirror, NoSeal, SealChainError, UnknownContract
from .ledger import (
    Call,
    ExecutionReceipt,
    Ledger,
    LedgerState,
    PaymentAuthorization,
    Transaction,
    seal_target_for,
    sign_authorization,
)
from .trustlist import (
    AnchorMode,
    ChainOutcome,
    ChainReport,
    ManualTrustStore,
    OracleAttestation,
    TrustList,
    validate_chain,
    verify_attestation,
)


@dataclass(frozen=True)
class ServiceOffer:
    service_id: str
    price: int


@dataclass(frozen=True)
class AgentProfile:
    agent_contract: bytes
    endpoint_id: str
    controlling_key: PrivateScalar
    services: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))

    def price_of(self, service_id: str) -> int | None:
        for offer in self.services:
            if offer.service_id == service_id:
                return offer.price
        return None


class AgentRegistry:
    """Local stand-in for agent discovery; profiles keep registration order."""

    def __init__(self, profiles=()):
        self._profiles = list(profiles)

    def register(self, profile: AgentProfile) -> None:
        self._profiles.append(profile)

    def __iter__(self):
        return iter(self._profiles)

    def __len__(self):
        return len(self._profiles)


def discover(registry, service_id: str) -> AgentProfile:
    """First registered profile offering ``service_id``."""
    for profile in registry:
        if profile.price_of(service_id) is not None:
            return profile
    raise NoMatch(f"no agent offers {service_id!r}")


# -- trust configuration and off-chain validation -----------------------------------

@dataclass
class TrustConfig:
    """How an agent anchors trust.

    MANUAL uses ``store`` (or the fixed ``trust_list``) and the agent's own
    revocation lists. ORACLE takes ``trust_list`` from off-chain and accepts
    it only if the ledger's posted attestation covers it. ONCHAIN-MIRROR
    reads the ledger's mirrored list and revocation lists.
    """

    operator_key: PublicPoint
    mode: AnchorMode = AnchorMode.MANUAL
    trust_list: TrustList | None = None
    store: ManualTrustStore | None = None
    oracle_key: PublicPoint | None = None
    revocation_lists: dict = field(default_factory=dict)

    def resolve(self, state: LedgerState) -> tuple[TrustList, dict]:
        if self.mode is AnchorMode.MANUAL:
            tl = self.store.current if self.store is not None else self.trust_list
            if tl is None:
                raise NoMirror("no locally curated trust list")
            return tl, self.revocation_lists
        if self.mode is AnchorMode.ORACLE:
            att: OracleAttestation | None = state.oracle_attestation
            if self.trust_list is None or att is None or self.oracle_key is None:
                raise NoMirror("no attested trust list available")
            if not verify_attestation(att, self.oracle_key) or att.list_digest != self.trust_list.digest():
                raise NoMirror("trust list does not match the oracle attestation")
            return self.trust_list, self.revocation_lists
        if state.mirrored_list is None:
            raise NoMirror("no trust list mirrored")
        return state.mirrored_list, state.revocation_lists


def validate_counterparty(
    ledger: Ledger | LedgerState, counterparty: bytes, trust: TrustConfig, at: int | None = None
) -> ChainReport:
    """Validate a contract's seal and chain entirely off-chain.

    Reads the seal and certificate fields, rebuilds the sealed target from
    ledger facts and runs full envelope verification plus chain validation.
    No precompile is involved and the ledger is not touched.
    """
    state = ledger.state if isinstance(ledger, Ledger) else ledger
    at = state.block_time if at is None else at
    acct = state.contracts.get(bytes(counterparty))
    if acct is None:
        raise UnknownContract(f"no contract at {bytes(counterparty).hex()}")
    if not acct.sealed:
        raise NoSeal(f"contract {acct.address.hex()} carries no seal")
    tl, revocations = trust.resolve(state)
    env_bytes, _ = unpack_seal_field(acct.seal_field)
    env = SealEnvelope.from_der(env_bytes)
    cert = CertificateRecord.from_der(acct.cert_field)
    status = verify_seal(env, seal_target_for(state, acct), cert)
    if status is not SealStatus.VALID:
        return ChainReport(ChainOutcome.SEAL_CERT_INVALID, at, (), str(status))
    rl: RevocationList | None = revocations.get(cert.issuer_name)
    return validate_chain(cert, tl, trust.operator_key, rl, at)


# -- wire messages -----------------------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    step: int
    actor: str
    outcome: str

    def line(self) -> str:
        return f"step={self.step} actor={self.actor} outcome={self.outcome}"

    def to_der_value(self) -> der.DerValue:
        return der.seq(der.integer(self.step), der.utf8(self.actor), der.utf8(self.outcome))

    @classmethod
    def from_der_value(cls, v: der.DerValue) -> "TraceStep":
        step, actor, outcome = v.expect(der.SEQUENCE, 3).children
        return cls(step.as_int(), actor.as_text(), outcome.as_text())


@dataclass(frozen=True)
class ServiceRequest:
    service_id: str
    params: bytes
    payment_auth: PaymentAuthorization

    def to_wire(self) -> bytes:
        return der.der_encode(der.seq(
            der.utf8(self.service_id), der.octets(self.params), der.octets(self.payment_auth.to_bytes())
        ))

    @classmethod
    def from_wire(cls, b: bytes) -> "ServiceRequest":
        sid, params, auth = der.der_decode(b).expect(der.SEQUENCE, 3).children
        return cls(sid.as_text(), params.as_bytes(), PaymentAuthorization.from_bytes(auth.as_bytes()))


@dataclass(frozen=True)
class ServiceResponse:
    """Provider reply. ``steps`` are the provider-side steps that succeeded."""

    served: bool
    result: bytes = b""
    reason: str = ""
    failed_step: int = 0
    steps: tuple = ()

    def to_wire(self) -> bytes:
        return der.der_encode(der.seq(
            der.integer(int(self.served)),
            der.octets(self.result),
            der.utf8(self.reason),
            der.integer(self.failed_step),
            der.seq(*(s.to_der_value() for s in self.steps)),
        ))

    @classmethod
    def from_wire(cls, b: bytes) -> "ServiceResponse":
        served, result, reason, failed, steps = der.der_decode(b).expect(der.SEQUENCE, 5).children
        return cls(
            bool(served.as_int()), result.as_bytes(), reason.as_text(), failed.as_int(),
            tuple(TraceStep.from_der_value(s) for s in steps.children),
        )

    def status_text(self) -> str:
        return "SERVED" if self.served else f"REJECTED({self.reason})"


class InMemoryTransport:
    """Synchronous request/response delivery keyed by endpoint id."""

    def __init__(self):
        self._handlers = {}
        self.messages = 0

    def register(self, endpoint_id: str, handler) -> None:
        self._handlers[endpoint_id] = handler

    def request(self, endpoint_id: str, payload: bytes) -> bytes:
        handler = self._handlers.get(endpoint_id)
        if handler is None:
            raise NoMatch(f"no endpoint {endpoint_id!r}")
        self.messages += 1
        return handler(payload)


# -- facilitator and provider --------------------------------------------------------

def facilitator_settle(ledger: Ledger, auth: PaymentAuthorization, payee: bytes) -> ExecutionReceipt:
    tx = Transaction(origin=payee, calls=(Call(payee, "receive_with_authorization", {"auth": auth}),))
    return ledger.execute_atomic(tx)


class Facilitator:
    """Submits authorizations on-chain. Performs no trust validation itself."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self.calls = 0

    def settle(self, auth: PaymentAuthorization, payee: bytes) -> ExecutionReceipt:
        self.calls += 1
        return facilitator_settle(self.ledger, auth, payee)


def _service_result(provider: AgentProfile, request: ServiceRequest) -> bytes:
    return sha256(provider.agent_contract + request.service_id.encode() + request.params)


def run_provider(
    provider: AgentProfile,
    incoming: ServiceRequest,
    ledger: Ledger,
    trust: TrustConfig,
    facilitator: Facilitator,
    at: int | None = None,
) -> ServiceResponse:
    steps = []

    def reject(step, reason):
        return ServiceResponse(False, reason=reason, failed_step=step, steps=tuple(steps))

    auth = incoming.payment_auth
    price = provider.price_of(incoming.service_id)
    if price is None:
        return reject(5, "UnknownService")
    if auth.value != price:
        return reject(5, "PriceMismatch")
    if auth.payee != provider.agent_contract:
        return reject(5, "PayeeMismatch")
    steps.append(TraceStep(5, "provider", "REQUEST-ACCEPTED"))

    try:
        report = validate_counterparty(ledger, auth.payer, trust, at)
    except SealChainError as exc:
        return reject(6, exc.code)
    if not report.valid:
        return reject(6, report.outcome.value)
    payer_key = CertificateRecord.from_der(ledger.state.contracts[auth.payer].cert_field).subject_key
    if not verify_digest(payer_key, auth.digest(), auth.signature):
        return reject(6, "BadAuthSignature")
    steps.append(TraceStep(6, "provider", "VALID"))

    receipt = facilitator.settle(auth, provider.agent_contract)
    if not receipt.committed:
        return reject(7, f"SettlementFailed({receipt.reason})")
    steps.append(TraceStep(7, "facilitator", "COMMITTED"))
    steps.append(TraceStep(8, "provider", "SERVED"))
    return ServiceResponse(True, result=_service_result(provider, incoming), steps=tuple(steps))


class ProviderEndpoint:
    """Binds a provider profile to a transport endpoint."""

    def __init__(self, profile: AgentProfile, ledger: Ledger, trust: TrustConfig, facilitator: Facilitator):
        self.profile = profile
        self.ledger = ledger
        self.trust = trust
        self.facilitator = facilitator

    def handle(self, payload: bytes) -> bytes:
        request = ServiceRequest.from_wire(payload)
        return run_provider(self.profile, request, self.ledger, self.trust, self.facilitator).to_wire()

    def attach(self, transport: InMemoryTransport) -> None:
        transport.register(self.profile.endpoint_id, self.handle)


# -- consumer -----------------------------------------------------------------------

@dataclass
class ProtocolTrace:
    steps: list = field(default_factory=list)
    terminal: str = ""
    authorization: PaymentAuthorization | None = None
    result: bytes = b""

    def record(self, step: int, actor: str, outcome: str) -> None:
        if self.steps and step <= self.steps[-1].step:
            raise ValueError("trace steps must strictly increase")
        self.steps.append(TraceStep(step, actor, outcome))

    def abort(self, step: int, reason: str) -> "ProtocolTrace":
        self.terminal = f"ABORTED({step}, {reason})"
        return self

    @property
    def served(self) -> bool:
        return self.terminal == "SERVED"

    def outcome_of(self, step: int) -> str | None:
        for s in self.steps:
            if s.step == step:
                return s.outcome
        return None

    def to_text(self) -> str:
        return "\n".join([s.line() for s in self.steps] + [f"terminal={self.terminal}"]) + "\n"


def request_nonce(consumer: bytes, provider: bytes, service_id: str, block_time: int, params: bytes) -> bytes:
    """Deterministic authorization nonce, so reruns from one snapshot replay exactly."""
    return sha256(
        b"AGENT-NONCE" + consumer + provider + service_id.encode() + b"\x00"
        + block_time.to_bytes(8, "big") + params
    )


def run_consumer(
    consumer: AgentProfile,
    provider: AgentProfile | AgentRegistry,
    ledger: Ledger,
    trust: TrustConfig,
    transport: InMemoryTransport,
    *,
    service_id: str | None = None,
    params: bytes = b"",
    nonce: bytes | None = None,
    validity: int = 600,
) -> ProtocolTrace:
    trace = ProtocolTrace()

    registry = provider if isinstance(provider, AgentRegistry) else [provider]
    if service_id is None:
        if isinstance(provider, AgentRegistry) or not provider.services:
            raise ValueError("service_id is required")
        service_id = provider.services[0].service_id
    try:
        target = discover(registry, service_id)
    except NoMatch:
        return trace.abort(1, "NoMatch")
    trace.record(1, "consumer", f"DISCOVERED:{target.endpoint_id}")

    acct = ledger.state.contracts.get(target.agent_contract)
    trace.record(2, "consumer", "SEAL-RETRIEVED" if acct is not None and acct.sealed else "NO-SEAL-FIELD")

    try:
        report = validate_counterparty(ledger, target.agent_contract, trust)
    except SealChainError as exc:
        return trace.abort(3, exc.code)
    if not report.valid:
        return trace.abort(3, report.outcome.value)
    trace.record(3, "consumer", "VALID")

    now = ledger.block_time
    if nonce is None:
        nonce = request_nonce(consumer.agent_contract, target.agent_contract, service_id, now, params)
    auth = sign_authorization(
        consumer.controlling_key,
        consumer.agent_contract,
        target.agent_contract,
        target.price_of(service_id),
        max(0, now - 1),
        now + validity,
        nonce,
    )
    trace.authorization = auth
    trace.record(4, "consumer", f"AUTHORIZED:{auth.value}")

    request = ServiceRequest(service_id, params, auth)
    response = ServiceResponse.from_wire(transport.request(target.endpoint_id, request.to_wire()))
    for step in response.steps:
        trace.record(step.step, step.actor, step.outcome)
    if not response.served:
        return trace.abort(response.failed_step, response.reason)
    trace.result = response.result
    trace.terminal = "SERVED"
    return trace
