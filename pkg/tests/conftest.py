import hashlib
from dataclasses import dataclass

import pytest

from sealchain.certificates import CertFlag, CertificateRequest, issue_certificate, self_issue_qtsp
from sealchain.crypto import keygen
from sealchain.identity import LegalPersonId, SealTarget
from sealchain.trustlist import QtspEntry, build_trust_list


def seeded(label: str):
    return keygen(hashlib.sha256(label.encode()).digest())


@dataclass
class Pki:
    operator_key: object
    operator_pub: object
    qtsp_key: object
    qtsp_cert: object
    leaf_key: object
    leaf_cert: object
    trust_list: object
    target: SealTarget


@pytest.fixture(scope="session")
def pki() -> Pki:
    op_key, op_pub = seeded("operator")
    q_key, _ = seeded("qtsp")
    q_cert = self_issue_qtsp(q_key, "Trust Services Ltd", 7, 1_000, 5_000_000)
    leaf_key, leaf_pub = seeded("leaf")
    leaf_cert = issue_certificate(q_key, q_cert, CertificateRequest(
        4242, "Acme Payments SA", 10_000, 2_000_000, leaf_pub,
        frozenset({CertFlag.QUALIFIED_SEAL}), LegalPersonId("LEI-5299000ACME0000001"),
    ))
    tl = build_trust_list(op_key, [QtspEntry("Trust Services Ltd", q_cert)], 1, 5_000)
    target = SealTarget(1, bytes(range(20)), hashlib.sha256(b"contract code").digest())
    return Pki(op_key, op_pub, q_key, q_cert, leaf_key, leaf_cert, tl, target)


_ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_lines() -> list:
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
