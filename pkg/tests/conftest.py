from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from approxfa.matrix_io import read_matrix

FIXTURES = Path(__file__).parent / "fixtures"
FIG_DIR = FIXTURES / "n10_m5_c2"

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_spd(rng, n, floor=0.5):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + floor * np.eye(n)


def random_orthogonal(rng, k):
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


def random_factor(rng, n, k, d_low=0.2):
    from approxfa import FactorParams

    return FactorParams(rng.standard_normal((n, k)), d_low + rng.random(n))


def fig_sigma(seed):
    """Committed n=10, m=5, c=2 target for ``seed``."""
    return read_matrix(FIG_DIR / f"sigma_{seed:02d}.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
