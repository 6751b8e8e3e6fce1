import random

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from encgraph import paillier, rlwe

settings.register_profile(
    "crypto", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("crypto")


@pytest.fixture(scope="session")
def toy_keys():
    """n = 35 from p = 5, q = 7."""
    return paillier.keypair_from_primes(5, 7)


@pytest.fixture(scope="session")
def keys512():
    return paillier.keygen(512, seed=1)


@pytest.fixture(scope="session")
def keys1024():
    return paillier.keygen(1024, seed=2)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_she():
    params = rlwe.small_params()
    return params, rlwe.she_keygen(params, 0)


# -- acceptance summary --------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
    param = item.callspec.id if hasattr(item, "callspec") else ""
    _CRITERIA[(number, param)] = (f"{title} [{param}]" if param else title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, param in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[(number, param)]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}")
