import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fractalwave.energy import build_system  # noqa: E402
from fractalwave.spectrum import solve_spectrum  # noqa: E402
from fractalwave.topology import load_spec  # noqa: E402


@pytest.fixture(scope="session")
def interval():
    return load_spec("interval")


@pytest.fixture(scope="session")
def gasket():
    return load_spec("gasket")


@pytest.fixture(scope="session")
def hata():
    return load_spec("hata")


@pytest.fixture(scope="session")
def interval_D10():
    return solve_spectrum(build_system(load_spec("interval"), 10, "D"))


@pytest.fixture(scope="session")
def gasket_D5():
    return solve_spectrum(build_system(load_spec("gasket"), 5, "D"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
