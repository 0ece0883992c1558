import numpy as np
import pytest

from sdeirrev.model import DiffusionModel, Domain, LangevinSpec, ModelSpec, PotentialModel


@pytest.fixture
def quad_additive():
    return ModelSpec.overdamped(PotentialModel.quadratic(1), DiffusionModel.additive(1.0, 1))


@pytest.fixture
def sigma_eps_model():
    return ModelSpec.overdamped(PotentialModel.quadratic(1), DiffusionModel.sigma_eps(1.0))


@pytest.fixture
def quartic_torus():
    beta = 20.0
    return ModelSpec.overdamped(PotentialModel.quartic_radial(beta, 2),
                                DiffusionModel.additive(np.sqrt(2 / beta), 2), Domain.torus(4.0))


@pytest.fixture
def harmonic_langevin():
    spec = LangevinSpec(n_particles=5, dim=1, mass=1.0, gamma=4.0, sigma=0.1)
    return ModelSpec.langevin_model(PotentialModel.quadratic(5), spec)


def sigma_eps(eps=1.0, scale=1.0):
    return ModelSpec.overdamped(PotentialModel.quadratic(1, scale), DiffusionModel.sigma_eps(eps))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
