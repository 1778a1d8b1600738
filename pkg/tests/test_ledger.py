import hashlib
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import seeded
from sealchain.cades import create_seal, pack_seal_field
from sealchain.certificates import CertFlag, CertificateRequest, build_revocation_list, issue_certificate
from sealchain.crypto import EcdsaSignature
from sealchain.errors import (
    AuthExpired,
    AuthNotYetValid,
    BadAuthSignature,
    BadListSignature,
    CallerNotPayee,
    CertificateMismatch,
    IndexInvalid,
    InsufficientBalance,
    MalformedEnvelope,
    NoMirror,
    NonceReused,
    NoSeal,
    SealTargetMismatch,
    SequenceRollback,
)
from sealchain.identity import LegalPersonId
from sealchain.ledger import (
    Call,
    Ledger,
    LedgerState,
    Role,
    Transaction,
    defi_flow_transaction,
    sign_authorization,
    PaymentAuthorization,
)
from sealchain.trustlist import ChainOutcome, QtspEntry, QtspStatus, build_sanctions_registry, build_trust_list

BT = 50_000
DEPLOYER = bytes(20)


def _code(name):
    return hashlib.sha256(name.encode()).digest()


class Net:
    """A small ledger with a mirrored list and two sealed parties."""

    def __init__(self, pki):
        self.pki = pki
        self.ledger = Ledger(1, block_time=BT, operator_key=pki.operator_pub)
        self.ledger.mirror_trust_list(pki.trust_list, pki.operator_pub)
        self.keys, self.certs, self.addr = {}, {}, {}
        for serial, name, role in ((501, "user", Role.USER_SMART_ACCOUNT), (502, "provider", Role.PROVIDER)):
            key, pub = seeded(name)
            cert = issue_certificate(pki.qtsp_key, pki.qtsp_cert, CertificateRequest(
                serial, f"{name} org", 10_000, 2_000_000, pub, frozenset({CertFlag.QUALIFIED_SEAL}),
                LegalPersonId(f"LEI-{name.upper()}")))
            self.keys[name], self.certs[name] = key, cert
            self.addr[name] = self.ledger.deploy_contract(_code(name), role, DEPLOYER)
        for name in ("user", "provider"):
            self.seal(name)
        sk, spub = seeded("sanctions")
        self.ledger.install_sanctions_registry(build_sanctions_registry(sk, "Desk", [], BT), spub)
        self.ledger.mint(self.addr["user"], 1_000)

    def seal(self, name):
        env, idx = create_seal(self.ledger.seal_target_of(self.addr[name]), self.keys[name], self.certs[name], BT)
        self.ledger.write_seal_field(self.addr[name], pack_seal_field(env.to_der(), idx), self.certs[name].to_der())

    def auth(self, value=100, va=BT - 1, vb=BT + 600, nonce=b"\x01" * 32, key=None):
        return sign_authorization(key or self.keys["user"], self.addr["user"], self.addr["provider"],
                                  value, va, vb, nonce)


@pytest.fixture
def net(pki):
    return Net(pki)


def test_deploy_addresses(pki):
    a, b = Ledger(1), Ledger(1)
    x = a.deploy_contract(_code("c"), Role.PLAIN, DEPLOYER)
    assert x == b.deploy_contract(_code("c"), Role.PLAIN, DEPLOYER)
    assert x == hashlib.sha256(DEPLOYER + bytes(8) + _code("c")).digest()[:20]
    assert len(x) == 20 and a.deploy_contract(_code("c"), Role.PLAIN, DEPLOYER) != x


def test_manual_mode_is_off_chain_only():
    from sealchain.trustlist import AnchorMode
    with pytest.raises(ValueError):
        Ledger(1, anchor_mode=AnchorMode.MANUAL)


def test_write_seal_errors(net, pki):
    ledger, addr = net.ledger, net.addr
    env, idx = create_seal(ledger.seal_target_of(addr["user"]), net.keys["user"], net.certs["user"], BT)
    field = pack_seal_field(env.to_der(), idx)
    cert = net.certs["user"].to_der()
    with pytest.raises(SealTargetMismatch):
        ledger.write_seal_field(addr["provider"], field, cert)
    with pytest.raises(MalformedEnvelope):
        ledger.write_seal_field(addr["user"], env.to_der()[:-5] + field[-16:], cert)
    with pytest.raises(IndexInvalid):
        ledger.write_seal_field(addr["user"], pack_seal_field(env.to_der(), replace(idx, r_offset=idx.r_offset + 1)), cert)
    with pytest.raises(CertificateMismatch):
        ledger.write_seal_field(addr["user"], field, net.certs["provider"].to_der())
    with pytest.raises(SealTargetMismatch):
        ledger.write_seal_field(addr["user"], field, cert, metadata_digest=b"\x01" * 32)


def test_seal_fields_stored(net):
    acct = net.ledger.account(net.addr["user"])
    assert acct.sealed and acct.lpid_field == LegalPersonId("LEI-USER")
    assert acct.cert_field == net.certs["user"].to_der()


def test_mirror_rules(net, pki):
    ledger = net.ledger
    with pytest.raises(SequenceRollback):
        ledger.mirror_trust_list(pki.trust_list, pki.operator_pub)
    newer = build_trust_list(pki.operator_key, pki.trust_list.entries, 2, 6_000)
    corrupt = replace(newer, signature=EcdsaSignature(newer.signature.r, newer.signature.s ^ 1))
    with pytest.raises(BadListSignature):
        ledger.mirror_trust_list(corrupt, pki.operator_pub)
    ledger.mirror_trust_list(newer, pki.operator_pub)
    assert ledger.state.mirrored_list.sequence_number == 2


def test_onchain_validate(net, pki):
    report, receipt = net.ledger.onchain_validate_metered(net.addr["provider"])
    assert report.outcome is ChainOutcome.VALID
    assert receipt.precompile_call_count == 3
    withdrawn = build_trust_list(pki.operator_key, [QtspEntry("Trust Services Ltd", pki.qtsp_cert, QtspStatus.WITHDRAWN)], 2, 6_000)
    net.ledger.mirror_trust_list(withdrawn, pki.operator_pub)
    assert net.ledger.onchain_validate(net.addr["provider"]).outcome is ChainOutcome.QTSP_WITHDRAWN


def test_validate_counts_revocation_check(net, pki):
    rl = build_revocation_list(pki.qtsp_key, pki.qtsp_cert, [], BT)
    net.ledger.mirror_revocation_list(rl)
    report, receipt = net.ledger.onchain_validate_metered(net.addr["provider"])
    assert report.valid and receipt.precompile_call_count == 4
    revoked = build_revocation_list(pki.qtsp_key, pki.qtsp_cert, [502], BT + 1)
    net.ledger.mirror_revocation_list(revoked)
    assert net.ledger.onchain_validate(net.addr["provider"]).outcome is ChainOutcome.REVOKED


def test_validate_errors(pki):
    ledger = Ledger(1, block_time=BT, operator_key=pki.operator_pub)
    a = ledger.deploy_contract(_code("x"), Role.PROVIDER, DEPLOYER)
    with pytest.raises(NoSeal):
        ledger.onchain_validate(a)
    env, idx = create_seal(ledger.seal_target_of(a), pki.leaf_key, pki.leaf_cert, BT)
    ledger.write_seal_field(a, pack_seal_field(env.to_der(), idx), pki.leaf_cert.to_der())
    with pytest.raises(NoMirror):
        ledger.onchain_validate(a)


def test_validate_is_read_only(net):
    before = net.ledger.snapshot()
    net.ledger.onchain_validate(net.addr["user"])
    assert net.ledger.snapshot() == before


def test_receive_happy_and_replay(net):
    auth = net.auth()
    net.ledger.receive_with_authorization(auth, net.addr["provider"])
    assert net.ledger.balance_of(net.addr["user"]) == 900
    assert net.ledger.balance_of(net.addr["provider"]) == 100
    with pytest.raises(NonceReused):
        net.ledger.receive_with_authorization(auth, net.addr["provider"])


@pytest.mark.parametrize("case,error", [
    ("caller", CallerNotPayee),
    ("early", AuthNotYetValid),
    ("at-after", AuthNotYetValid),
    ("expired", AuthExpired),
    ("wrong-key", BadAuthSignature),
    ("too-much", InsufficientBalance),
])
def test_receive_errors(net, case, error):
    caller = net.addr["provider"]
    auth = net.auth()
    if case == "caller":
        caller = net.addr["user"]
    elif case == "early":
        auth = net.auth(va=BT + 1, vb=BT + 10)
    elif case == "at-after":
        auth = net.auth(va=BT, vb=BT + 10)
    elif case == "expired":
        auth = net.auth(va=BT - 10, vb=BT)
    elif case == "wrong-key":
        auth = net.auth(key=net.keys["provider"])
    elif case == "too-much":
        auth = net.auth(value=1_001)
    before = net.ledger.snapshot()
    with pytest.raises(error):
        net.ledger.receive_with_authorization(auth, caller)
    assert net.ledger.snapshot() == before


def test_authorization_encoding(net):
    auth = net.auth()
    assert len(auth.to_bytes()) == 168
    assert PaymentAuthorization.from_bytes(auth.to_bytes()) == auth
    with pytest.raises(ValueError):
        net.auth(va=5, vb=5)


def test_defi_flow_commits_in_order(net):
    tx = defi_flow_transaction(net.addr["user"], net.addr["user"], net.addr["provider"], net.auth())
    receipt = net.ledger.execute_atomic(tx)
    assert receipt.committed, receipt
    names = [e.name for e in receipt.events]
    assert names == ["CounterpartyValidated", "CounterpartyValidated", "SanctionsCleared", "TransferWithAuthorization"]
    assert receipt.precompile_call_count == 3 + 3 + 1 + 1
    assert net.ledger.total_supply() == 1_000


def test_defi_flow_reverts_byte_identical(net, pki):
    withdrawn = build_trust_list(pki.operator_key, [QtspEntry("Trust Services Ltd", pki.qtsp_cert, QtspStatus.WITHDRAWN)], 2, 6_000)
    net.ledger.mirror_trust_list(withdrawn, pki.operator_pub)
    before = net.ledger.snapshot()
    receipt = net.ledger.execute_atomic(
        defi_flow_transaction(net.addr["user"], net.addr["user"], net.addr["provider"], net.auth()))
    assert receipt.status_text() == "REVERTED(QTSP-WITHDRAWN)"
    assert net.ledger.snapshot() == before


def test_unsealed_user_reverts(pki):
    net = Net(pki)
    state = net.ledger.state.copy()
    state.contracts[net.addr["user"]] = replace(state.contracts[net.addr["user"]], seal_field=None)
    ledger = Ledger.from_state(state)
    before = ledger.snapshot()
    receipt = ledger.execute_atomic(defi_flow_transaction(net.addr["user"], net.addr["user"], net.addr["provider"], net.auth()))
    assert receipt.status_text() == "REVERTED(NoSeal)" and ledger.snapshot() == before


def test_out_of_gas(net):
    tx = defi_flow_transaction(net.addr["user"], net.addr["user"], net.addr["provider"], net.auth(), gas_limit=30_000)
    before = net.ledger.snapshot()
    receipt = net.ledger.execute_atomic(tx)
    assert receipt.status_text() == "REVERTED(OutOfGas)" and receipt.gas_used == 30_000
    assert net.ledger.snapshot() == before


def test_unknown_operation(net):
    receipt = net.ledger.execute_atomic(Transaction(bytes(20), [Call(net.addr["user"], "selfdestruct")]))
    assert receipt.status_text() == "REVERTED(UnknownOperation)"
    with pytest.raises(ValueError):
        Transaction(bytes(20), [])


def test_determinism(pki):
    a, b = Net(pki), Net(pki)
    assert a.ledger.snapshot() == b.ledger.snapshot()
    tx = defi_flow_transaction(a.addr["user"], a.addr["user"], a.addr["provider"], a.auth())
    assert a.ledger.execute_atomic(tx) == b.ledger.execute_atomic(tx)
    assert a.ledger.snapshot() == b.ledger.snapshot()


def test_snapshot_round_trip(net):
    snap = net.ledger.snapshot()
    assert Ledger.restore(snap).snapshot() == snap
    assert LedgerState.from_bytes(snap) == net.ledger.state


def test_block_time_monotone(net):
    with pytest.raises(ValueError):
        net.ledger.set_block_time(BT - 1)


@settings(max_examples=25, deadline=None)
@given(ops=st.lists(st.tuples(st.sampled_from(["receive", "advance", "replay"]),
                              st.integers(0, 1_200), st.integers(0, 3)), max_size=8))
def test_conservation_and_atomicity(pki, ops):
    net = Net(pki)
    supply = net.ledger.total_supply()
    sent = []
    for kind, value, n in ops:
        if kind == "advance":
            net.ledger.advance_time(value)
            continue
        if kind == "replay" and sent:
            auth = sent[0]
        else:
            bt = net.ledger.block_time
            auth = net.auth(value=value, va=bt - 1, vb=bt + 100, nonce=bytes([n]) * 32)
        before = net.ledger.snapshot()
        receipt = net.ledger.execute_atomic(Transaction(net.addr["provider"], [
            Call(net.addr["provider"], "receive_with_authorization", {"auth": auth})]))
        if receipt.committed:
            sent.append(auth)
        else:
            assert net.ledger.snapshot() == before
        assert net.ledger.total_supply() == supply
