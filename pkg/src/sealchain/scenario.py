"""Declarative scenarios: parse key=value files, build worlds, run flows.

A scenario file holds one ``key=value`` pair per line; ``#`` starts a
comment. Party keys are prefixed with the party name (``consumer.`` or its
alias ``user.``, and ``provider.``)::

    flow=defi
    anchor=ONCHAIN-MIRROR
    user.fault=valid
    user.balance=1000
    provider.fault=withdrawn-qtsp
    expect=REVERTED(QTSP-WITHDRAWN)

Party faults decide how that party's certificate and seal are produced.
"""

from __future__ import annotations

import functools
import random
from dataclasses import dataclass, field, fields, replace

from .agents import (
    AgentProfile,
    Facilitator,
    InMemoryTransport,
    ProtocolTrace,
    ProviderEndpoint,
    ServiceOffer,
    TrustConfig,
    run_consumer,
)
from .cades import SealEnvelope, create_seal, locate_index, pack_seal_field
from .certificates import (
    CertFlag,
    CertificateRecord,
    CertificateRequest,
    build_revocation_list,
    issue_certificate,
    self_issue_qtsp,
)
from .crypto import PrivateScalar, PublicPoint, keygen, sha256, sign_digest
from .identity import LegalPersonId
from .ledger import (
    DEFAULT_GAS_LIMIT,
    ExecutionReceipt,
    Ledger,
    Role,
    defi_flow_transaction,
    sign_authorization,
)
from .trustlist import (
    AnchorMode,
    ManualTrustStore,
    QtspEntry,
    QtspStatus,
    TrustList,
    attest_trust_list,
    build_sanctions_registry,
    build_trust_list,
)

FAULTS = (
    "valid",
    "unsealed",
    "expired",
    "not-yet-valid",
    "revoked",
    "unlisted-qtsp",
    "withdrawn-qtsp",
    "forged-cert",
    "bad-seal",
)
AUTH_FAULTS = ("valid", "expired", "early", "wrong-key")

GRANTED_QTSP = "QTSP-Granted"
WITHDRAWN_QTSP = "QTSP-Withdrawn"
UNLISTED_QTSP = "QTSP-Unlisted"

CERT_LIFETIME = 10**7


class ScenarioError(ValueError):
    """Scenario text that cannot be interpreted."""


def _yes(text: str) -> bool:
    if text not in ("yes", "no"):
        raise ScenarioError(f"expected yes or no, got {text!r}")
    return text == "yes"


@dataclass
class PartySpec:
    fault: str = "valid"
    balance: int = 0
    lpid: str | None = None
    sanctioned: bool = False

    def __post_init__(self):
        if self.fault not in FAULTS:
            raise ScenarioError(f"unknown party fault {self.fault!r}")


@dataclass
class ScenarioSpec:
    flow: str = "agent"
    seed: int = 0
    chain_id: int = 1
    block_time: int = 1_700_000_000
    anchor: AnchorMode = AnchorMode.ONCHAIN_MIRROR
    list_signature: str = "valid"
    withdraw_granted: bool = False
    sanctions_registry: bool = True
    price: int = 100
    auth: str = "valid"
    replay: bool = False
    gas_limit: int = DEFAULT_GAS_LIMIT
    consumer: PartySpec = field(default_factory=PartySpec)
    provider: PartySpec = field(default_factory=PartySpec)
    expect: str | None = None

    def __post_init__(self):
        if self.flow not in ("agent", "defi"):
            raise ScenarioError(f"unknown flow {self.flow!r}")
        if self.list_signature not in ("valid", "bad"):
            raise ScenarioError("list_signature must be valid or bad")
        if self.auth not in AUTH_FAULTS:
            raise ScenarioError(f"unknown auth fault {self.auth!r}")
        if self.flow == "defi" and self.anchor is AnchorMode.MANUAL:
            raise ScenarioError("the DeFi flow validates on-chain; MANUAL anchoring is off-chain only")

    @property
    def consumer_label(self) -> str:
        return "user" if self.flow == "defi" else "consumer"

    @classmethod
    def parse(cls, text: str) -> "ScenarioSpec":
        top, parties = {}, {"consumer": {}, "provider": {}}
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioError(f"line {number}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            if "." in key:
                who, attr = key.split(".", 1)
                who = "consumer" if who == "user" else who
                if who not in parties:
                    raise ScenarioError(f"line {number}: unknown party {who!r}")
                parties[who][attr] = value
            else:
                top[key] = value
        try:
            return cls._from_fields(top, parties)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc)) from exc

    @classmethod
    def _from_fields(cls, top, parties) -> "ScenarioSpec":
        def party(values):
            known = {f.name for f in fields(PartySpec)}
            unknown = set(values) - known
            if unknown:
                raise ScenarioError(f"unknown party keys: {sorted(unknown)}")
            return PartySpec(
                fault=values.get("fault", "valid"),
                balance=int(values.get("balance", 0)),
                lpid=values.get("lpid"),
                sanctioned=_yes(values.get("sanctioned", "no")),
            )

        converters = {
            "flow": str, "seed": int, "chain_id": int, "block_time": int, "anchor": AnchorMode,
            "list_signature": str, "withdraw_granted": _yes, "sanctions_registry": _yes, "price": int,
            "auth": str, "replay": _yes, "gas_limit": int, "expect": str,
        }
        unknown = set(top) - set(converters)
        if unknown:
            raise ScenarioError(f"unknown keys: {sorted(unknown)}")
        kwargs = {k: converters[k](v) for k, v in top.items()}
        return cls(consumer=party(parties["consumer"]), provider=party(parties["provider"]), **kwargs)

    def to_text(self) -> str:
        lines = [
            f"flow={self.flow}",
            f"seed={self.seed}",
            f"chain_id={self.chain_id}",
            f"block_time={self.block_time}",
            f"anchor={self.anchor.value}",
            f"list_signature={self.list_signature}",
            f"withdraw_granted={'yes' if self.withdraw_granted else 'no'}",
            f"sanctions_registry={'yes' if self.sanctions_registry else 'no'}",
            f"price={self.price}",
            f"auth={self.auth}",
            f"replay={'yes' if self.replay else 'no'}",
            f"gas_limit={self.gas_limit}",
        ]
        for name, p in ((self.consumer_label, self.consumer), ("provider", self.provider)):
            lines += [f"{name}.fault={p.fault}", f"{name}.balance={p.balance}"]
            if p.lpid is not None:
                lines.append(f"{name}.lpid={p.lpid}")
            lines.append(f"{name}.sanctioned={'yes' if p.sanctioned else 'no'}")
        if self.expect is not None:
            lines.append(f"expect={self.expect}")
        return "\n".join(lines) + "\n"


# -- key pool -----------------------------------------------------------------

KEY_POOL_SIZE = 8


@functools.lru_cache(maxsize=None)
def pooled_key(label: str) -> tuple[PrivateScalar, PublicPoint]:
    """Deterministic keypair for ``label``; cached so large suites stay fast."""
    return keygen(sha256(b"scenario-key:" + label.encode()))


def _pool_label(role: str, seed: int) -> str:
    return f"{role}-{seed % KEY_POOL_SIZE}"


# -- world ------------------------------------------------------------------------

@dataclass
class Party:
    name: str
    address: bytes
    key: PrivateScalar
    certificate: CertificateRecord
    lpid: LegalPersonId
    sealed: bool


@dataclass
class World:
    spec: ScenarioSpec
    ledger: Ledger
    operator_key: PublicPoint
    oracle_key: PublicPoint
    trust_list: TrustList
    revocation_lists: dict
    qtsps: dict
    parties: dict

    def trust_config(self, mode: AnchorMode | None = None) -> TrustConfig:
        mode = self.spec.anchor if mode is None else mode
        store = None
        if mode is AnchorMode.MANUAL and self.spec.list_signature == "valid":
            store = ManualTrustStore(self.operator_key, self.trust_list)
        return TrustConfig(
            operator_key=self.operator_key,
            mode=mode,
            trust_list=self.trust_list,
            store=store,
            oracle_key=self.oracle_key,
            revocation_lists=dict(self.revocation_lists),
        )

    def calldata_list(self) -> TrustList | None:
        return self.trust_list if self.spec.anchor is AnchorMode.ORACLE else None

    def balances(self) -> dict:
        return {name: self.ledger.balance_of(p.address) for name, p in self.parties.items()}


def _qtsp(name: str, seed: int, serial: int, not_before: int) -> tuple[PrivateScalar, CertificateRecord]:
    key, _ = pooled_key(_pool_label(name, seed))
    return key, self_issue_qtsp(key, name, serial, not_before, not_before + 10 * CERT_LIFETIME)


def _party_certificate(fault, name, serial, pub, lpid, bt, qtsps, seed):
    issuer = {"unlisted-qtsp": UNLISTED_QTSP, "withdrawn-qtsp": WITHDRAWN_QTSP}.get(fault, GRANTED_QTSP)
    nb, na = bt - 1000, bt + CERT_LIFETIME
    if fault == "expired":
        nb, na = bt - CERT_LIFETIME, bt  # half-open window ends exactly now
    elif fault == "not-yet-valid":
        nb, na = bt + 1, bt + CERT_LIFETIME
    request = CertificateRequest(serial, f"Org {name} {seed}", nb, na, pub, frozenset({CertFlag.QUALIFIED_SEAL}), lpid)
    if fault == "forged-cert":
        # claims the granted QTSP as issuer but is signed by an impostor key
        rogue, _ = pooled_key(_pool_label("rogue", seed))
        impostor = self_issue_qtsp(rogue, GRANTED_QTSP, 1, bt - CERT_LIFETIME, bt + CERT_LIFETIME)
        return issue_certificate(rogue, impostor, request)
    key, cert = qtsps[issuer]
    return issue_certificate(key, cert, request)


def build_world(spec: ScenarioSpec) -> World:
    bt, seed = spec.block_time, spec.seed
    qtsp_start = bt - 5 * CERT_LIFETIME
    qtsps = {
        GRANTED_QTSP: _qtsp(GRANTED_QTSP, seed, 1001, qtsp_start),
        WITHDRAWN_QTSP: _qtsp(WITHDRAWN_QTSP, seed, 1002, qtsp_start),
        UNLISTED_QTSP: _qtsp(UNLISTED_QTSP, seed, 1003, qtsp_start),
    }
    op_key, op_pub = pooled_key(_pool_label("operator", seed))
    oracle_key, oracle_pub = pooled_key(_pool_label("oracle", seed))
    entries = [
        QtspEntry(GRANTED_QTSP, qtsps[GRANTED_QTSP][1], QtspStatus.GRANTED),
        QtspEntry(WITHDRAWN_QTSP, qtsps[WITHDRAWN_QTSP][1], QtspStatus.WITHDRAWN),
    ]
    signer = op_key
    if spec.list_signature == "bad":
        signer, _ = pooled_key(_pool_label("rogue-operator", seed))
    tl = build_trust_list(signer, entries, 1, bt - 100)
    if spec.list_signature == "bad":
        # keep the pinned operator digest so only the signature is wrong
        tl = replace(tl, operator_key_digest=op_pub.digest())

    ledger = Ledger(
        spec.chain_id,
        block_time=bt - 50,
        operator_key=op_pub,
        anchor_mode=AnchorMode.ORACLE if spec.anchor is AnchorMode.ORACLE else AnchorMode.ONCHAIN_MIRROR,
        oracle_key=oracle_pub,
    )
    if spec.anchor is AnchorMode.ORACLE:
        ledger.post_attestation(attest_trust_list(oracle_key, tl))
    elif spec.list_signature == "valid":
        ledger.mirror_trust_list(tl, op_pub)

    deployer = sha256(b"deployer" + seed.to_bytes(8, "big"))[:20]
    parties = {}
    revoked = []
    for offset, (name, pspec, role) in enumerate((
        (spec.consumer_label, spec.consumer, Role.USER_SMART_ACCOUNT),
        ("provider", spec.provider, Role.PROVIDER),
    )):
        key, pub = pooled_key(_pool_label(name, seed))
        address = ledger.deploy_contract(sha256(f"code:{name}:{seed}".encode()), role, deployer)
        serial = 10_000 + 2 * (seed % 1_000_000) + offset
        lpid = LegalPersonId(pspec.lpid or f"LPID-{name.upper()}-{seed}")
        cert = _party_certificate(pspec.fault, name, serial, pub, lpid, bt, qtsps, seed)
        if pspec.fault == "revoked":
            revoked.append(serial)
        sealed = pspec.fault != "unsealed"
        if sealed:
            env, idx = create_seal(ledger.seal_target_of(address), key, cert, bt - 500)
            if pspec.fault == "bad-seal":
                wrong, _ = pooled_key(_pool_label("wrong-sealer", seed))
                bad = sign_digest(wrong, sha256(env.signed_attrs.signed_bytes()))
                env = SealEnvelope(env.signed_attrs, env.signer_issuer, env.signer_serial, bad, env.certificate)
                idx = locate_index(env.to_der())
            ledger.write_seal_field(address, pack_seal_field(env.to_der(), idx), cert.to_der())
        if pspec.balance:
            ledger.mint(address, pspec.balance)
        parties[name] = Party(name, address, key, cert, lpid, sealed)

    granted_key, granted_cert = qtsps[GRANTED_QTSP]
    rl = build_revocation_list(granted_key, granted_cert, revoked, bt - 60)
    revocation_lists = {GRANTED_QTSP: rl}
    if spec.anchor is AnchorMode.ORACLE:
        ledger.mirror_revocation_list(rl, tl)
    elif ledger.state.mirrored_list is not None:
        ledger.mirror_revocation_list(rl)

    if spec.sanctions_registry:
        s_key, s_pub = pooled_key(_pool_label("sanctions", seed))
        listed = [str(parties[name].lpid) for name, pspec in
                  ((spec.consumer_label, spec.consumer), ("provider", spec.provider)) if pspec.sanctioned]
        ledger.install_sanctions_registry(build_sanctions_registry(s_key, "Sanctions Desk", listed, bt - 70), s_pub)

    if spec.withdraw_granted:
        entries = [replace(e, status=QtspStatus.WITHDRAWN) if e.qtsp_name == GRANTED_QTSP else e for e in entries]
        newer = build_trust_list(op_key, entries, 2, bt - 40)
        if spec.anchor is AnchorMode.ORACLE:
            ledger.post_attestation(attest_trust_list(oracle_key, newer))
            tl = newer
        elif ledger.state.mirrored_list is not None:
            ledger.mirror_trust_list(newer, op_pub)
            tl = newer

    ledger.set_block_time(bt)
    return World(spec, ledger, op_pub, oracle_pub, tl, revocation_lists, qtsps, parties)


# -- runs ---------------------------------------------------------------------------

@dataclass
class AgentRun:
    world: World
    trace: ProtocolTrace
    balances_before: dict
    balances_after: dict
    facilitator_calls: int
    traces: tuple = ()

    @property
    def terminal(self) -> str:
        return self.trace.terminal

    def log(self) -> str:
        return "".join(t.to_text() for t in self.traces)


def _agent_profiles(world: World):
    spec = world.spec
    consumer = world.parties[spec.consumer_label]
    provider = world.parties["provider"]
    return (
        AgentProfile(consumer.address, "agent://consumer", consumer.key, ()),
        AgentProfile(provider.address, "agent://provider", provider.key, (ServiceOffer("inference", spec.price),)),
    )


def run_agent_scenario(spec: ScenarioSpec, world: World | None = None) -> AgentRun:
    world = world or build_world(spec)
    ledger = world.ledger
    consumer, provider = _agent_profiles(world)
    facilitator = Facilitator(ledger)
    transport = InMemoryTransport()
    ProviderEndpoint(provider, ledger, world.trust_config(), facilitator).attach(transport)
    before = world.balances()
    traces = []
    for _ in range(2 if spec.replay else 1):
        traces.append(run_consumer(
            consumer, provider, ledger, world.trust_config(), transport,
            service_id="inference", params=b"prompt",
        ))
    return AgentRun(world, traces[-1], before, world.balances(), facilitator.calls, tuple(traces))


@dataclass
class DefiRun:
    world: World
    receipt: ExecutionReceipt
    snapshot_before: bytes
    snapshot_after: bytes
    supply_before: int
    supply_after: int
    receipts: tuple = ()

    @property
    def terminal(self) -> str:
        return self.receipt.status_text()

    def log(self) -> str:
        out = []
        for r in self.receipts:
            out.append(f"status={r.status_text()} gas_used={r.gas_used} precompile_calls={r.precompile_call_count}")
            out.extend(e.line() for e in r.events)
        return "\n".join(out) + "\n"


def defi_authorization(world: World):
    spec, bt = world.spec, world.spec.block_time
    user = world.parties[spec.consumer_label]
    provider = world.parties["provider"]
    after, before = bt - 1, bt + 600
    if spec.auth == "expired":
        after, before = bt - 600, bt
    elif spec.auth == "early":
        after, before = bt, bt + 600
    key = user.key
    if spec.auth == "wrong-key":
        key, _ = pooled_key(_pool_label("wrong-payer", spec.seed))
    nonce = sha256(b"defi-nonce" + spec.seed.to_bytes(8, "big"))
    return sign_authorization(key, user.address, provider.address, spec.price, after, before, nonce)


def run_defi_scenario(spec: ScenarioSpec, world: World | None = None) -> DefiRun:
    world = world or build_world(spec)
    ledger = world.ledger
    user = world.parties[spec.consumer_label]
    provider = world.parties["provider"]
    tx = defi_flow_transaction(
        user.address, user.address, provider.address, defi_authorization(world),
        gas_limit=spec.gas_limit, trust_list=world.calldata_list(),
    )
    supply_before = ledger.total_supply()
    receipts = []
    for _ in range(2 if spec.replay else 1):
        snapshot_before = ledger.snapshot()
        receipts.append(ledger.execute_atomic(tx))
    return DefiRun(world, receipts[-1], snapshot_before, ledger.snapshot(), supply_before,
                   ledger.total_supply(), tuple(receipts))


def run_scenario(spec: ScenarioSpec):
    return run_defi_scenario(spec) if spec.flow == "defi" else run_agent_scenario(spec)


# -- random generation ----------------------------------------------------------------

def random_spec(rng: random.Random, flow: str = "agent", fault_rate: float = 0.5) -> ScenarioSpec:
    """A random scenario; roughly ``fault_rate`` of parties get a non-valid fault."""

    def party():
        fault = rng.choice(FAULTS[1:]) if rng.random() < fault_rate else "valid"
        return PartySpec(fault=fault, balance=rng.choice([0, 50, 100, 1000]), sanctioned=rng.random() < 0.1)

    anchors = [AnchorMode.ONCHAIN_MIRROR, AnchorMode.ORACLE]
    if flow == "agent":
        anchors.append(AnchorMode.MANUAL)
    return ScenarioSpec(
        flow=flow,
        seed=rng.randrange(2**32),
        chain_id=rng.choice([1, 10, 8453, 2**40]),
        block_time=rng.randrange(1_500_000_000, 2_000_000_000),
        anchor=rng.choice(anchors),
        list_signature="bad" if rng.random() < 0.08 else "valid",
        withdraw_granted=rng.random() < 0.08,
        price=rng.choice([1, 50, 100, 500]),
        auth=rng.choice(AUTH_FAULTS) if rng.random() < 0.2 else "valid",
        replay=rng.random() < 0.1,
        consumer=party(),
        provider=party(),
    )
