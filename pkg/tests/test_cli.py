import io
from pathlib import Path

import pytest

from sealchain.cli import dispatch

ROOT = Path(__file__).resolve().parents[1]
ADDR = "00" * 19 + "01"
CODE = "ab" * 32


def run(ws, *argv):
    out = io.StringIO()
    code = dispatch(["--workspace", str(ws), *argv], out=out)
    return code, out.getvalue()


@pytest.fixture
def ws(tmp_path):
    steps = [
        ("keygen", "--out", "operator"),
        ("qtsp", "init", "--name", "Trust Co", "--serial", "7", "--not-before", "0", "--not-after", "10000000"),
        ("keygen", "--out", "acme"),
        ("cert", "issue", "--issuer", "Trust Co", "--subject", "acme", "--seal", "--lpid", "LEI-ACME",
         "--serial", "42", "--not-before", "100", "--not-after", "900000"),
        ("seal", "create", "--target-chain", "1", "--address", ADDR, "--code-hash", CODE, "--cert", "acme",
         "--signing-time", "1000"),
        ("lotl", "build", "--operator", "operator", "--qtsp", "Trust Co", "--sequence", "1",
         "--issued-at", "500", "--out", "eu"),
        ("lotl", "build", "--operator", "operator", "--qtsp", "Trust Co:WITHDRAWN", "--sequence", "2",
         "--issued-at", "600", "--out", "eu-withdrawn"),
    ]
    for argv in steps:
        code, text = run(tmp_path, *argv)
        assert code == 0, (argv, text)
    return tmp_path


def verify_args(lotl="eu", address=ADDR):
    return ["verify", "--envelope", "acme", "--target-chain", "1", "--address", address, "--code-hash", CODE,
            "--lotl", lotl, "--operator-key", "operator"]


def test_verify_valid(ws):
    code, text = run(ws, *verify_args())
    assert code == 0 and text == "VALID path=[42, 7]\n"
    assert run(ws, "seal", *verify_args()) == (0, text)


def test_verify_negative_results(ws):
    code, text = run(ws, *verify_args("eu-withdrawn"))
    assert code == 1 and text.startswith("QTSP-WITHDRAWN")
    code, text = run(ws, *verify_args(address="00" * 20))
    assert code == 1 and "DIGEST-MISMATCH" in text
    code, text = run(ws, *verify_args(), "--at", "900000")
    assert code == 1 and text.startswith("EXPIRED")


def test_revocation_via_cli(ws):
    assert run(ws, "cert", "revoke", "--issuer", "Trust Co", "--revoke", "42", "--issued-at", "700")[0] == 0
    code, text = run(ws, *verify_args(), "--crl", "Trust Co")
    assert code == 1 and text.startswith("REVOKED")


def test_usage_errors(ws):
    assert run(ws, "frobnicate")[0] == 2
    assert run(ws, *verify_args(lotl="missing"))[0] == 2
    assert run(ws, "seal", "create", "--target-chain", "1", "--address", "zz", "--code-hash", CODE,
               "--cert", "acme")[0] == 2
    assert run(ws, "cert", "issue", "--issuer", "acme", "--subject", "x", "--key", "acme", "--seal",
               "--not-before", "1", "--not-after", "2")[0] == 2


def test_no_overwrite_without_force(ws):
    before = (ws / "keys" / "acme.key").read_bytes()
    assert run(ws, "--seed", "9", "keygen", "--out", "acme")[0] == 2
    assert (ws / "keys" / "acme.key").read_bytes() == before
    assert run(ws, "--seed", "9", "--force", "keygen", "--out", "acme")[0] == 0
    assert (ws / "keys" / "acme.key").read_bytes() != before


def test_lotl_show_byte_stable(ws):
    first = run(ws, "lotl", "show", "--lotl", "eu")
    assert first == run(ws, "lotl", "show", "--lotl", "eu")
    assert first[0] == 0
    assert first[1].splitlines()[1] == "Trust Co\tserial=7\tstatus=GRANTED\tvalid=[0,10000000)"


def test_lotl_show_flags_duplicates(ws):
    run(ws, "lotl", "build", "--operator", "operator", "--qtsp", "Trust Co", "--qtsp", "Trust Co",
        "--sequence", "3", "--issued-at", "1", "--out", "dup")
    assert run(ws, "lotl", "show", "--lotl", "dup")[0] == 1


def test_ledger_workflow(ws):
    assert run(ws, "ledger", "init", "--chain-id", "1", "--block-time", "2000", "--operator-key", "operator")[0] == 0
    code, address = run(ws, "ledger", "deploy", "--code-hash", CODE, "--deployer", "11" * 20, "--role", "PROVIDER")
    address = address.strip()
    assert code == 0 and len(address) == 40
    code, _ = run(ws, "seal", "create", "--target-chain", "1", "--address", address, "--code-hash", CODE,
                  "--cert", "acme", "--out", "onchain", "--signing-time", "1000")
    assert code == 0
    assert run(ws, "ledger", "write-seal", "--contract", address, "--envelope", "onchain", "--cert", "acme")[0] == 0
    assert run(ws, "ledger", "validate", "--contract", address)[0] == 2  # nothing mirrored yet
    assert run(ws, "lotl", "mirror", "--lotl", "eu", "--operator-key", "operator")[0] == 0
    assert run(ws, "lotl", "mirror", "--lotl", "eu", "--operator-key", "operator")[0] == 2  # rollback
    assert run(ws, "ledger", "validate", "--contract", address) == (0, "VALID path=[42, 7]\n")
    assert run(ws, "lotl", "mirror", "--lotl", "eu-withdrawn", "--operator-key", "operator")[0] == 0
    code, text = run(ws, "ledger", "validate", "--contract", address)
    assert code == 1 and text.startswith("QTSP-WITHDRAWN")
    code, text = run(ws, "ledger", "snapshot", "--out", str(ws / "copy.ledger"))
    assert code == 0 and (ws / "copy.ledger").read_bytes() == (ws / "ledger.ledger").read_bytes()


@pytest.mark.parametrize("path", sorted((ROOT / "scenarios").glob("*.scn")), ids=lambda p: p.stem)
def test_sim_commands(tmp_path, path):
    command = "defi-flow" if "flow=defi" in path.read_text() else "agent-flow"
    first = run(tmp_path, "sim", command, "--scenario", str(path))
    assert first[0] == 0 and first[1].rstrip().endswith("MATCH")
    assert first == run(tmp_path, "sim", command, "--scenario", str(path))


def test_sim_mismatch_and_bad_file(tmp_path):
    bad = tmp_path / "x.scn"
    bad.write_text("flow=agent\nconsumer.balance=1000\nexpect=ABORTED(3, NoSeal)\n")
    code, text = run(tmp_path, "sim", "agent-flow", "--scenario", str(bad))
    assert code == 1 and "MISMATCH" in text
    bad.write_text("flow=agent\nnonsense\n")
    assert run(tmp_path, "sim", "agent-flow", "--scenario", str(bad))[0] == 2
    assert run(tmp_path, "sim", "agent-flow", "--scenario", str(tmp_path / "none.scn"))[0] == 2
