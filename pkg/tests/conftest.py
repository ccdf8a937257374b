import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ktf", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ktf")


def dense_diff(N, order):
    """Order-``order`` forward difference matrix built from the identity."""
    if N <= order:
        return np.zeros((0, N))
    return np.diff(np.eye(N), n=order, axis=0)


def dense_penalty(dims, k):
    """Stacked Kronecker penalty assembled with dense ``np.kron``; first
    factor acts on axis 1 under last-axis-fastest vectorization."""
    blocks = []
    for j in range(len(dims)):
        M = np.ones((1, 1))
        for l, N in enumerate(dims):
            M = np.kron(M, dense_diff(N, k + 1) if l == j else np.eye(N))
        blocks.append(M)
    return np.vstack(blocks)


def random_poly(rng, dims, k, designs=None):
    """Random polynomial of max degree ``k`` (per coordinate) on the lattice."""
    if designs is None:
        designs = [np.arange(1, N + 1) / N for N in dims]
    grids = np.meshgrid(*designs, indexing="ij")
    out = np.zeros(tuple(dims))
    for powers in np.ndindex(*([k + 1] * len(dims))):
        term = rng.uniform(-1, 1) * np.ones(tuple(dims))
        for g, p in zip(grids, powers):
            term = term * g ** p
        out += term
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
