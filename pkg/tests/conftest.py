import random
from datetime import date, datetime, timezone
from ipaddress import IPv4Address
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from seclaas import accumulator as acc
from seclaas.crypto import generate_keypair, generate_keys
from seclaas.model import LogEntry

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
DAY = date(2012, 11, 19)
IP = IPv4Address("11.1.0.5")

# criterion number -> [outcomes]; filled by tests marked with `acceptance`
_ACCEPTANCE: dict = {}
_TITLES = {
    1: "threat-model matrix",
    2: "chain soundness",
    3: "RSA accumulator correctness",
    4: "Bloom behaviour",
    5: "performance shape",
    6: "storage arithmetic",
    7: "crash consistency",
    8: "end-to-end CLI",
}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for name, args in getattr(report, "acceptance", ()):
        _ACCEPTANCE.setdefault(args, []).append((name, report.passed))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marks = [m.args[0] for m in item.iter_markers("acceptance")]
    rep.acceptance = [(item.nodeid, n) for n in marks]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        results = _ACCEPTANCE[n]
        ok = all(passed for _, passed in results)
        tr.write_line(f"criterion {n} ({_TITLES.get(n, '?')}): {'PASS' if ok else 'FAIL'} "
                      f"[{sum(p for _, p in results)}/{len(results)} checks]")
        for name, passed in results:
            if not passed:
                tr.write_line(f"    failed: {name}")


@pytest.fixture(scope="session")
def keys():
    return generate_keys()


@pytest.fixture(scope="session")
def other_keys():
    return generate_keys()


@pytest.fixture(scope="session")
def attacker_key():
    return generate_keypair()


@pytest.fixture(scope="session")
def bloom_params():
    return acc.derive_bloom_params(5000, 0.01)


@pytest.fixture(scope="session")
def rsa32():
    return acc.generate_rsa_params(32, random.Random(32))


@pytest.fixture(scope="session")
def rsa64():
    return acc.generate_rsa_params(64, random.Random(64))


@pytest.fixture(scope="session")
def sample_entry():
    return LogEntry(IPv4Address("11.1.0.5"), IPv4Address("74.125.130.106"),
                    datetime(2012, 11, 19, 13, 43, 43, 222391, tzinfo=timezone.utc), 80, "bob-41d2e8b0")
