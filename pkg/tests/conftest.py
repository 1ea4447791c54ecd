import numpy as np
import pytest

from jumpheight.model import TimeSeries, Unit
from jumpheight.synth import SynthJumpSpec, generate, write_session

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail, status=None):
    status = status or ("PASS" if passed else "FAIL")
    line = f"criterion {number}: {status} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def px(values, rate=30.0):
    return TimeSeries(np.asarray(values, dtype=float), rate, Unit.PIXELS)


def mm(values, rate=100.0):
    return TimeSeries(np.asarray(values, dtype=float), rate, Unit.MILLIMETRES)


@pytest.fixture(scope="session")
def clean_session():
    return generate(SynthJumpSpec())


@pytest.fixture
def clean_manifest(tmp_path, clean_session):
    return write_session(clean_session, tmp_path)
