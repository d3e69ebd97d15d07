import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dpfi.config import preset
from dpfi.model import AffinePath, MarketSpec, TimeGrid, UncertaintyModel, make_seller
from dpfi.solver import solve_equilibrium

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_seller_market(n=64, alphas=(3000, 3000), betas=((180, -4), (180, -4)), gammas=((36, -2), (36, -2)),
                      K=(2500, 3000), tau=0.8, rho=0.0):
    grid = TimeGrid(1.0, 10.0, n)
    sellers = [
        make_seller(AffinePath(alphas[s]), AffinePath(*betas[s]), {1 - s: AffinePath(*gammas[s])}, K[s], grid=grid)
        for s in range(2)
    ]
    return MarketSpec(grid, rho, sellers, UncertaintyModel(AffinePath(3.0, 0.1), tau))


def monopoly_market(n=64, alpha=1000.0, beta=50.0, xi0=3.0, tau=0.8, K=2500.0, rho=0.0):
    grid = TimeGrid(1.0, 10.0, n)
    return MarketSpec(grid, rho, [make_seller(alpha, beta, {}, K, grid=grid)], UncertaintyModel(AffinePath(xi0), tau))


@pytest.fixture(scope="session")
def ex811():
    return preset("ex-8.1.1")


@pytest.fixture(scope="session")
def ex811_robust(ex811):
    return solve_equilibrium(ex811.market, "robust", (), ex811.solver)


@pytest.fixture(scope="session")
def ex82():
    return preset("ex-8.2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict = {}


@pytest.fixture(scope="session")
def record():
    """Record the outcome of an acceptance criterion for the end-of-run summary."""

    def _record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}"
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
