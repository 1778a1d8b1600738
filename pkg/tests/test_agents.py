import pytest

from sealchain.agents import (
    AgentProfile,
    AgentRegistry,
    Facilitator,
    InMemoryTransport,
    ProviderEndpoint,
    ProtocolTrace,
    ServiceOffer,
    ServiceRequest,
    ServiceResponse,
    TraceStep,
    discover,
    facilitator_settle,
    run_consumer,
    run_provider,
    validate_counterparty,
)
from sealchain.errors import NoMatch, NoSeal
from sealchain.ledger import Ledger, sign_authorization
from sealchain.scenario import PartySpec, ScenarioSpec, _agent_profiles, build_world, run_agent_scenario
from sealchain.trustlist import AnchorMode, ChainOutcome


def profile(name, *services):
    return AgentProfile(name.encode().ljust(20, b"\x00"), f"agent://{name}", None, tuple(services))


def test_discover():
    a = profile("a", ServiceOffer("inference", 5))
    b = profile("b", ServiceOffer("inference", 3))
    assert discover(AgentRegistry([a]), "inference") is a
    assert discover(AgentRegistry([a, b]), "inference") is a
    with pytest.raises(NoMatch):
        discover(AgentRegistry(), "inference")
    with pytest.raises(NoMatch):
        discover(AgentRegistry([a]), "storage")


def spec(**kw):
    consumer = kw.pop("consumer", PartySpec(balance=1_000))
    provider = kw.pop("provider", PartySpec())
    return ScenarioSpec(consumer=consumer, provider=provider, **kw)


@pytest.mark.parametrize("anchor", list(AnchorMode))
def test_happy_path(anchor):
    run = run_agent_scenario(spec(anchor=anchor))
    trace = run.trace
    assert trace.served and [s.step for s in trace.steps] == list(range(1, 9))
    assert run.balances_after["consumer"] == run.balances_before["consumer"] - 100
    assert run.balances_after["provider"] == run.balances_before["provider"] + 100
    assert trace.to_text().splitlines()[0] == "step=1 actor=consumer outcome=DISCOVERED:agent://provider"
    assert trace.to_text().endswith("terminal=SERVED\n")


def test_unsealed_provider_aborts_without_authorization():
    run = run_agent_scenario(spec(provider=PartySpec(fault="unsealed")))
    assert run.terminal == "ABORTED(3, NoSeal)"
    assert run.trace.authorization is None
    assert run.trace.outcome_of(2) == "NO-SEAL-FIELD"
    assert run.facilitator_calls == 0 and run.balances_after == run.balances_before


def test_withdrawn_provider():
    run = run_agent_scenario(spec(provider=PartySpec(fault="withdrawn-qtsp")))
    assert run.terminal == "ABORTED(3, QTSP-WITHDRAWN)"


def test_invalid_consumer_rejected_before_facilitator():
    for fault in ("expired", "revoked", "bad-seal", "unlisted-qtsp"):
        run = run_agent_scenario(spec(consumer=PartySpec(fault=fault, balance=1_000)))
        assert run.terminal.startswith("ABORTED(6, "), (fault, run.terminal)
        assert run.facilitator_calls == 0
        assert run.balances_after == run.balances_before


def test_replay_rejected_at_settlement():
    run = run_agent_scenario(spec(replay=True))
    assert run.traces[0].served
    assert run.terminal == "ABORTED(7, SettlementFailed(NonceReused))"
    assert run.facilitator_calls == 2


def test_underfunded_consumer():
    run = run_agent_scenario(spec(consumer=PartySpec(balance=50)))
    assert run.terminal == "ABORTED(7, SettlementFailed(InsufficientBalance))"
    assert run.balances_after == run.balances_before


def test_run_provider_directly():
    world = build_world(spec())
    consumer, provider = _agent_profiles(world)
    facilitator = Facilitator(world.ledger)
    bt = world.ledger.block_time
    auth = sign_authorization(consumer.controlling_key, consumer.agent_contract, provider.agent_contract,
                              100, bt - 1, bt + 60, b"\x07" * 32)
    trust = world.trust_config()
    wrong_price = ServiceRequest("inference", b"", sign_authorization(
        consumer.controlling_key, consumer.agent_contract, provider.agent_contract, 99, bt - 1, bt + 60, b"\x08" * 32))
    assert run_provider(provider, wrong_price, world.ledger, trust, facilitator).status_text() == "REJECTED(PriceMismatch)"
    assert run_provider(provider, ServiceRequest("storage", b"", auth), world.ledger, trust,
                        facilitator).status_text() == "REJECTED(UnknownService)"
    assert facilitator.calls == 0
    resp = run_provider(provider, ServiceRequest("inference", b"x", auth), world.ledger, trust, facilitator)
    assert resp.served and [s.step for s in resp.steps] == [5, 6, 7, 8]
    again = run_provider(provider, ServiceRequest("inference", b"x", auth), world.ledger, trust, facilitator)
    assert again.status_text() == "REJECTED(SettlementFailed(NonceReused))"
    assert ServiceResponse.from_wire(resp.to_wire()) == resp


def test_facilitator_settle_errors():
    world = build_world(spec(consumer=PartySpec(balance=10)))
    c, p = world.parties["consumer"], world.parties["provider"]
    bt = world.ledger.block_time
    expired = sign_authorization(c.key, c.address, p.address, 5, bt - 100, bt, b"\x01" * 32)
    assert facilitator_settle(world.ledger, expired, p.address).status_text() == "REVERTED(AuthExpired)"
    too_much = sign_authorization(c.key, c.address, p.address, 11, bt - 1, bt + 5, b"\x02" * 32)
    assert facilitator_settle(world.ledger, too_much, p.address).status_text() == "REVERTED(InsufficientBalance)"
    ok = sign_authorization(c.key, c.address, p.address, 10, bt - 1, bt + 5, b"\x03" * 32)
    assert facilitator_settle(world.ledger, ok, p.address).committed


def test_off_chain_validation_does_not_touch_ledger():
    world = build_world(spec())
    before = world.ledger.snapshot()
    report = validate_counterparty(world.ledger, world.parties["provider"].address, world.trust_config())
    assert report.outcome is ChainOutcome.VALID
    assert world.ledger.snapshot() == before
    with pytest.raises(NoSeal):
        validate_counterparty(build_world(spec(provider=PartySpec(fault="unsealed"))).ledger,
                              world.parties["provider"].address, world.trust_config())


def test_trace_replayable_from_snapshot():
    world = build_world(spec())
    snap = world.ledger.snapshot()
    texts = []
    for _ in range(2):
        ledger = Ledger.restore(snap)
        consumer, provider = _agent_profiles(world)
        transport = InMemoryTransport()
        ProviderEndpoint(provider, ledger, world.trust_config(), Facilitator(ledger)).attach(transport)
        texts.append(run_consumer(consumer, provider, ledger, world.trust_config(), transport,
                                  service_id="inference", params=b"p").to_text())
    assert texts[0] == texts[1] and "terminal=SERVED" in texts[0]


def test_trace_order_enforced():
    trace = ProtocolTrace()
    trace.record(1, "consumer", "X")
    with pytest.raises(ValueError):
        trace.record(1, "consumer", "Y")
    assert TraceStep(3, "consumer", "VALID").line() == "step=3 actor=consumer outcome=VALID"
