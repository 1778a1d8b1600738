"""Command-line front end.

Exit status: 0 success, 1 a negative verification result, 2 usage or input
errors. Files live in a workspace directory::

    keys/<name>.key   32-byte private scalar     keys/<name>.pub   64-byte x||y
    certs/<name>.cert certificate DER            certs/<name>.crl  revocation list DER
    lists/<name>.lotl trust list DER             seals/<name>.seal envelope DER
    ledger.ledger     ledger snapshot
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cades import SealEnvelope, SealStatus, create_seal, locate_index, pack_seal_field, verify_seal
from .certificates import (
    CertFlag,
    CertificateRecord,
    CertificateRequest,
    RevocationList,
    build_revocation_list,
    issue_certificate,
    self_issue_qtsp,
)
from .crypto import PrivateScalar, PublicPoint, keygen, sha256
from .errors import SealChainError
from .identity import ZERO_DIGEST, LegalPersonId, SealTarget
from .ledger import Ledger, Role
from .scenario import ScenarioError, ScenarioSpec, run_agent_scenario, run_defi_scenario
from .trustlist import (
    ChainOutcome,
    ChainReport,
    QtspEntry,
    QtspStatus,
    TrustList,
    build_trust_list,
    duplicate_names,
    validate_chain,
)

DEFAULT_SEED = 0


class UsageError(Exception):
    """Bad invocation or unusable input; maps to exit status 2."""


class Workspace:
    def __init__(self, root: Path, force: bool = False):
        self.root = Path(root)
        self.force = force

    def path(self, kind: str, name: str) -> Path:
        folder, ext = {
            "key": ("keys", ".key"),
            "pub": ("keys", ".pub"),
            "cert": ("certs", ".cert"),
            "crl": ("certs", ".crl"),
            "lotl": ("lists", ".lotl"),
            "seal": ("seals", ".seal"),
        }[kind]
        if not name or "/" in name or name.startswith("."):
            raise UsageError(f"invalid {kind} name {name!r}")
        return self.root / folder / f"{name}{ext}"

    @property
    def ledger_path(self) -> Path:
        return self.root / "ledger.ledger"

    def read(self, path: Path) -> bytes:
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise UsageError(f"missing file {path}") from None

    def write(self, path: Path, data: bytes, *, replace: bool = False) -> None:
        if path.exists() and not (replace or self.force):
            raise UsageError(f"{path} exists; pass --force to overwrite")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)

    def private_key(self, name: str) -> PrivateScalar:
        return PrivateScalar.from_bytes(self.read(self.path("key", name)))

    def public_key(self, name: str) -> PublicPoint:
        return PublicPoint.decode(self.read(self.path("pub", name)))

    def cert(self, name: str) -> CertificateRecord:
        return CertificateRecord.from_der(self.read(self.path("cert", name)))

    def trust_list(self, name: str) -> TrustList:
        return TrustList.from_der(self.read(self.path("lotl", name)))

    def ledger(self) -> Ledger:
        return Ledger.restore(self.read(self.ledger_path))

    def save_ledger(self, ledger: Ledger) -> None:
        self.write(self.ledger_path, ledger.snapshot(), replace=True)


def _hex(text: str, size: int, what: str) -> bytes:
    try:
        raw = bytes.fromhex(text.removeprefix("0x"))
    except ValueError:
        raise UsageError(f"{what} must be hex") from None
    if len(raw) != size:
        raise UsageError(f"{what} must be {size} bytes")
    return raw


def _target(args) -> SealTarget:
    meta = _hex(args.metadata_digest, 32, "metadata digest") if args.metadata_digest else ZERO_DIGEST
    return SealTarget(
        args.target_chain, _hex(args.address, 20, "address"), _hex(args.code_hash, 32, "code hash"), meta
    )


def _seeded_key(seed: int, name: str):
    return keygen(sha256(f"cli-key:{seed}:{name}".encode()))


def _save_keypair(ws: Workspace, name: str, seed: int) -> PublicPoint:
    key, pub = _seeded_key(seed, name)
    ws.write(ws.path("key", name), key.to_bytes())
    ws.write(ws.path("pub", name), pub.encode())
    return pub


# -- handlers -----------------------------------------------------------------

def cmd_keygen(ws, args, out):
    pub = _save_keypair(ws, args.out, args.seed)
    print(f"{args.out} {pub.encode().hex()}", file=out)
    return 0


def cmd_qtsp_init(ws, args, out):
    if not ws.path("key", args.name).exists():
        _save_keypair(ws, args.name, args.seed)
    key = ws.private_key(args.name)
    cert = self_issue_qtsp(key, args.name, args.serial, args.not_before, args.not_after)
    ws.write(ws.path("cert", args.name), cert.to_der())
    print(f"{args.name} serial={cert.serial} valid=[{cert.not_before},{cert.not_after})", file=out)
    return 0


def cmd_cert_issue(ws, args, out):
    issuer_key = ws.private_key(args.issuer)
    issuer_cert = ws.cert(args.issuer)
    subject_pub = ws.public_key(args.key or args.subject)
    flag = CertFlag.QUALIFIED_SEAL if args.seal else CertFlag.IS_QTSP
    serial = args.serial if args.serial is not None else int.from_bytes(sha256(args.subject.encode())[:4], "big")
    request = CertificateRequest(
        serial, args.subject, args.not_before, args.not_after, subject_pub, frozenset({flag}),
        LegalPersonId(args.lpid) if args.lpid else None,
    )
    cert = issue_certificate(issuer_key, issuer_cert, request)
    ws.write(ws.path("cert", args.out or args.subject), cert.to_der())
    print(f"{args.subject} serial={cert.serial} issuer={cert.issuer_name}", file=out)
    return 0


def cmd_crl_issue(ws, args, out):
    rl = build_revocation_list(ws.private_key(args.issuer), ws.cert(args.issuer), args.revoke, args.issued_at)
    ws.write(ws.path("crl", args.out or args.issuer), rl.to_der())
    print(f"{args.issuer} revoked={len(rl.revoked_serials)}", file=out)
    return 0


def cmd_seal_create(ws, args, out):
    cert = ws.cert(args.cert)
    key = ws.private_key(args.key or args.cert)
    signing_time = cert.not_before if args.signing_time is None else args.signing_time
    env, idx = create_seal(_target(args), key, cert, signing_time)
    ws.write(ws.path("seal", args.out or args.cert), env.to_der())
    print(
        f"sealed digest={env.signed_attrs.message_digest.hex()} r_offset={idx.r_offset} "
        f"s_offset={idx.s_offset}",
        file=out,
    )
    return 0


def cmd_seal_verify(ws, args, out):
    env = SealEnvelope.from_der(ws.read(ws.path("seal", args.envelope)))
    cert = env.certificate
    at = env.signed_attrs.signing_time if args.at is None else args.at
    status = verify_seal(env, _target(args), cert)
    if status is not SealStatus.VALID:
        report = ChainReport(ChainOutcome.SEAL_CERT_INVALID, at, (), str(status))
    else:
        rl = RevocationList.from_der(ws.read(ws.path("crl", args.crl))) if args.crl else None
        report = validate_chain(cert, ws.trust_list(args.lotl), ws.public_key(args.operator_key), rl, at)
    print(report.summary(), file=out)
    return 0 if report.valid else 1


def cmd_lotl_build(ws, args, out):
    entries = []
    for item in args.qtsp:
        name, _, status = item.partition(":")
        entries.append(QtspEntry(name, ws.cert(name), QtspStatus(status or "GRANTED")))
    tl = build_trust_list(ws.private_key(args.operator), entries, args.sequence, args.issued_at)
    ws.write(ws.path("lotl", args.out), tl.to_der())
    print(f"{args.out} sequence={tl.sequence_number} entries={len(tl.entries)}", file=out)
    return 0


def cmd_lotl_show(ws, args, out):
    tl = ws.trust_list(args.lotl)
    print(f"sequence={tl.sequence_number} issued_at={tl.issued_at} operator={tl.operator_key_digest.hex()}", file=out)
    dump = tl.text_dump()
    if dump:
        print(dump.rstrip("\n"), file=out)
    dups = duplicate_names(tl)
    for name in dups:
        print(f"lint: duplicate QTSP name {name}; lookups use the first entry", file=sys.stderr)
    return 1 if dups else 0


def cmd_lotl_mirror(ws, args, out):
    ledger = ws.ledger()
    tl = ws.trust_list(args.lotl)
    ledger.mirror_trust_list(tl, ws.public_key(args.operator_key))
    ws.save_ledger(ledger)
    print(f"mirrored sequence={tl.sequence_number}", file=out)
    return 0


def cmd_ledger_init(ws, args, out):
    ledger = Ledger(args.chain_id, block_time=args.block_time, operator_key=ws.public_key(args.operator_key))
    ws.write(ws.ledger_path, ledger.snapshot())
    print(f"ledger chain_id={args.chain_id} block_time={args.block_time}", file=out)
    return 0


def cmd_ledger_deploy(ws, args, out):
    ledger = ws.ledger()
    address = ledger.deploy_contract(
        _hex(args.code_hash, 32, "code hash"), Role(args.role), _hex(args.deployer, 20, "deployer")
    )
    ws.save_ledger(ledger)
    print(address.hex(), file=out)
    return 0


def cmd_ledger_write_seal(ws, args, out):
    ledger = ws.ledger()
    env_bytes = ws.read(ws.path("seal", args.envelope))
    cert_bytes = ws.read(ws.path("cert", args.cert))
    meta = _hex(args.metadata_digest, 32, "metadata digest") if args.metadata_digest else ZERO_DIGEST
    ledger.write_seal_field(
        _hex(args.contract, 20, "contract"), pack_seal_field(env_bytes, locate_index(env_bytes)), cert_bytes, meta
    )
    ws.save_ledger(ledger)
    print(f"SealWritten contract={args.contract.removeprefix('0x')}", file=out)
    return 0


def cmd_ledger_validate(ws, args, out):
    report = ws.ledger().onchain_validate(_hex(args.contract, 20, "contract"), args.at)
    print(report.summary(), file=out)
    return 0 if report.valid else 1


def cmd_ledger_snapshot(ws, args, out):
    image = ws.read(ws.ledger_path)
    if args.out:
        ws.write(Path(args.out), image)
    state = Ledger.restore(image).state
    print(
        f"snapshot sha256={sha256(image).hex()} bytes={len(image)} chain_id={state.chain_id} "
        f"block_time={state.block_time} contracts={len(state.contracts)}",
        file=out,
    )
    return 0


def _run_sim(args, out, runner):
    try:
        spec = ScenarioSpec.parse(Path(args.scenario).read_text())
    except FileNotFoundError:
        raise UsageError(f"missing scenario file {args.scenario}") from None
    except ScenarioError as exc:
        raise UsageError(f"scenario: {exc}") from None
    run = runner(spec)
    out.write(run.log())
    print(f"result={run.terminal}", file=out)
    if spec.expect is not None:
        matched = run.terminal == spec.expect
        print(f"expect={spec.expect} {'MATCH' if matched else 'MISMATCH'}", file=out)
        return 0 if matched else 1
    return 0 if run.terminal in ("SERVED", "COMMITTED") else 1


def cmd_sim_agent(ws, args, out):
    return _run_sim(args, out, run_agent_scenario)


def cmd_sim_defi(ws, args, out):
    return _run_sim(args, out, run_defi_scenario)


# -- parser -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _target_args(p):
    p.add_argument("--target-chain", type=int, required=True)
    p.add_argument("--address", required=True, help="20-byte contract address, hex")
    p.add_argument("--code-hash", required=True, help="32-byte code hash, hex")
    p.add_argument("--metadata-digest", help="32-byte metadata digest, hex (default all zero)")


def _verify_args(p):
    p.add_argument("--envelope", required=True)
    _target_args(p)
    p.add_argument("--lotl", required=True)
    p.add_argument("--operator-key", required=True, help="name of the pinned operator public key")
    p.add_argument("--crl")
    p.add_argument("--at", type=int, help="validation time (default: the envelope's signing time)")
    p.set_defaults(handler=cmd_seal_verify)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sealchain", description="Seal contract identities and validate them against a trust list.")
    parser.add_argument("--workspace", default=".", help="workspace directory (default: .)")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for key generation")
    parser.add_argument("--force", action="store_true", help="allow overwriting existing files")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="generate a P-256 keypair")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_keygen)

    qtsp = sub.add_parser("qtsp").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = qtsp.add_parser("init", help="create a QTSP key and self-issued service certificate")
    p.add_argument("--name", required=True)
    p.add_argument("--serial", type=int, default=1)
    p.add_argument("--not-before", type=int, required=True)
    p.add_argument("--not-after", type=int, required=True)
    p.set_defaults(handler=cmd_qtsp_init)

    cert = sub.add_parser("cert").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = cert.add_parser("issue", help="issue a certificate from a QTSP")
    p.add_argument("--issuer", required=True)
    p.add_argument("--subject", required=True)
    kind = p.add_mutually_exclusive_group(required=True)
    kind.add_argument("--seal", action="store_true")
    kind.add_argument("--qtsp", action="store_true")
    p.add_argument("--lpid")
    p.add_argument("--key", help="subject public key name (default: subject)")
    p.add_argument("--serial", type=int)
    p.add_argument("--not-before", type=int, required=True)
    p.add_argument("--not-after", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_cert_issue)
    p = cert.add_parser("revoke", help="publish a signed revocation list")
    p.add_argument("--issuer", required=True)
    p.add_argument("--revoke", type=int, action="append", default=[])
    p.add_argument("--issued-at", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_crl_issue)

    seal = sub.add_parser("seal").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = seal.add_parser("create", help="seal a contract identity")
    _target_args(p)
    p.add_argument("--cert", required=True)
    p.add_argument("--key")
    p.add_argument("--signing-time", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_seal_create)
    _verify_args(seal.add_parser("verify", help="verify a seal and its trust chain"))
    _verify_args(sub.add_parser("verify", help="alias of seal verify"))

    lotl = sub.add_parser("lotl").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = lotl.add_parser("build", help="build and sign a trust list")
    p.add_argument("--operator", required=True)
    p.add_argument("--qtsp", action="append", default=[], help="NAME or NAME:WITHDRAWN, repeatable")
    p.add_argument("--sequence", type=int, required=True)
    p.add_argument("--issued-at", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_lotl_build)
    p = lotl.add_parser("show", help="print a trust list")
    p.add_argument("--lotl", required=True)
    p.set_defaults(handler=cmd_lotl_show)
    p = lotl.add_parser("mirror", help="mirror a trust list into the workspace ledger")
    p.add_argument("--lotl", required=True)
    p.add_argument("--operator-key", required=True)
    p.set_defaults(handler=cmd_lotl_mirror)

    ledger = sub.add_parser("ledger").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = ledger.add_parser("init")
    p.add_argument("--chain-id", type=int, required=True)
    p.add_argument("--block-time", type=int, default=0)
    p.add_argument("--operator-key", required=True)
    p.set_defaults(handler=cmd_ledger_init)
    p = ledger.add_parser("deploy")
    p.add_argument("--code-hash", required=True)
    p.add_argument("--role", choices=[r.value for r in Role], default=Role.PLAIN.value)
    p.add_argument("--deployer", required=True)
    p.set_defaults(handler=cmd_ledger_deploy)
    p = ledger.add_parser("write-seal")
    p.add_argument("--contract", required=True)
    p.add_argument("--envelope", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--metadata-digest")
    p.set_defaults(handler=cmd_ledger_write_seal)
    p = ledger.add_parser("validate")
    p.add_argument("--contract", required=True)
    p.add_argument("--at", type=int)
    p.set_defaults(handler=cmd_ledger_validate)
    p = ledger.add_parser("snapshot")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_ledger_snapshot)

    sim = sub.add_parser("sim").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = sim.add_parser("agent-flow", help="run an agent payment scenario")
    p.add_argument("--scenario", required=True)
    p.set_defaults(handler=cmd_sim_agent)
    p = sim.add_parser("defi-flow", help="run an atomic DeFi scenario")
    p.add_argument("--scenario", required=True)
    p.set_defaults(handler=cmd_sim_defi)
    return parser


def dispatch(argv, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    ws = Workspace(Path(args.workspace), force=args.force)
    try:
        return args.handler(ws, args, out)
    except (UsageError, SealChainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    raise SystemExit(main())
