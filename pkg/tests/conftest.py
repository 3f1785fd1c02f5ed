import numpy as np
import pytest

from lorentzheads import data, geometry


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_manifold_point(rng, n, scale=1.0):
    return geometry.exp_map_origin(rng.normal(0.0, scale, n))


def random_tangent(rng, x, scale=1.0, max_norm=3.0):
    u = geometry.tangent_project(x, rng.normal(0.0, scale, x.shape[0]))
    nrm = np.sqrt(max(geometry.lorentz_inner(u, u), 0.0))
    if nrm > max_norm:
        u = u * (max_norm / nrm)
    return u


# filled by tests/test_acceptance.py; echoed after the run so the
# per-criterion verdicts survive output capturing
acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_dataset():
    """Compact hierarchical dataset shared across training tests."""
    return data.generate(
        num_features=8, num_super=3, num_classes=6, num_samples=1200, seed=7
    )
