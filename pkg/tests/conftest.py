import numpy as np
import pytest

from contagion_reinsurance import MarkDistribution, ModelParams, SelfExcitation

U01 = MarkDistribution.uniform(0.0, 1.0)


def poisson_params(beta=2.0, horizon=1.0, eta=1.0, r=0.0):
    """Constant intensity beta: no shocks, no self-excitation, lambda0 = beta."""
    return ModelParams(
        alpha=1.0, beta=beta, lambda0=beta, rho=0.0, r=r, eta=eta, horizon=horizon,
        claim_dist=U01, ext_dist=MarkDistribution.point_mass(0.0),
    )


def contagion_params(horizon=1.0, eta=1.0, r=0.0):
    return ModelParams(
        alpha=2.0, beta=1.0, lambda0=1.0, rho=0.5, r=r, eta=eta, horizon=horizon,
        claim_dist=U01, ext_dist=U01, self_excitation=SelfExcitation.linear(1.0),
    )


@pytest.fixture
def poisson():
    return poisson_params()


@pytest.fixture
def contagion():
    return contagion_params()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one verdict line per acceptance criterion, shown after the test run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
