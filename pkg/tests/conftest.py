import numpy as np
import pytest

from mfgmaster.model import (
    CouplingKernel,
    EllipticCoefficient,
    Hamiltonian,
    MfgModel,
    build_grid,
    reference_model,
)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ref_small():
    return reference_model(41, 81)


def decoupled_model(n_x=31, n_t=41, c0=0.7):
    """F = 0, G = c0 (constant), H = sqrt(1+p^2) - 1."""
    grid = build_grid(n_x, n_t)
    return MfgModel(grid, EllipticCoefficient.constant(grid), Hamiltonian.sqrt1p(),
                    CouplingKernel.zero(grid), CouplingKernel.from_cos_coeffs(grid, [c0]))


def uncoupled_zero_model(n_x=31, n_t=41):
    """F = G = 0: the value function vanishes identically."""
    grid = build_grid(n_x, n_t)
    return MfgModel(grid, EllipticCoefficient.constant(grid), Hamiltonian.sqrt1p(),
                    CouplingKernel.zero(grid), CouplingKernel.zero(grid))
