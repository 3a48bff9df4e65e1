import math
from pathlib import Path

import pytest

from nvnmr.spinsys import Nucleus, SpinSystem, get_isotope

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"

# Reference nucleus: 13C Larmor 2.09321 MHz, a_par 4.02350 MHz, a_perp 251.35 kHz
REF_LARMOR = 2.09321e6
REF_A_PAR = 4.02350e6
REF_A_PERP = 251.35e3
REF_B0 = REF_LARMOR / (10.70840e6)

ACCEPTANCE = {}


@pytest.fixture
def c13():
    return get_isotope("13C")


@pytest.fixture
def ref_system(c13):
    return SpinSystem(REF_B0, (Nucleus(c13, REF_A_PAR, REF_A_PERP),))


@pytest.fixture
def weak_system(c13):
    """Weakly coupled 13C where the closed forms hold to ~1e-7."""
    return SpinSystem(REF_B0, (Nucleus(c13, 0.0, 200.0),))


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {line}")


def approx_rel(a, b):
    return abs(a - b) / abs(b) if b else math.inf
