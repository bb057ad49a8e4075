import numpy as np
import pytest

from manoma.channel import ChannelGeometry


def random_geometry(rng, L, scale=1.0):
    theta = rng.uniform(0, np.pi, L)
    phi = rng.uniform(0, np.pi, L)
    prv = scale * (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2 * L)
    return ChannelGeometry(theta, phi, prv, 75.0)


def random_positions(rng, M, A=3.0):
    return rng.uniform(0, A, (M, 2))


def random_bf(rng, K, M, power=1.0):
    W = rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))
    return W * np.sqrt(power / np.sum(np.abs(W) ** 2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance summary ---------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}
N_CRITERIA = 8


def report_criterion(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"criterion {n}: NOT RUN | deselected or errored before reporting"))
