import numpy as np
import pytest

from eegdistract.data import RawSession
from eegdistract.synth import GeneratorProfile, generate_session


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def short_profile():
    return GeneratorProfile(duration_s=60.0, participants=3, block_range_s=(10.0, 20.0))


@pytest.fixture(scope="session")
def short_session(short_profile):
    return generate_session(short_profile, participant_id=7, seed=11)


def make_session(n=512, pid=1, task=0, seed=0):
    r = np.random.default_rng(seed)
    return RawSession(pid, r.normal(size=(n, 14)), np.full(n, task, dtype=np.int64))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
