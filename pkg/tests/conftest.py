"""Shared fixtures: small disordered systems reused across test modules."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fermilat import build_hamiltonian, eigendecompose, make_box, sample_potential

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def chain13():
    """13-site disordered 1d chain: (box, potential, eigensystem)."""
    box = make_box(1, 6)
    pot = sample_potential(box, 11, dist="uniform")
    es = eigendecompose(build_hamiltonian(box, pot, 1.0))
    return box, pot, es


@pytest.fixture(scope="session")
def square5():
    """5x5 disordered 2d block: (box, potential, eigensystem)."""
    box = make_box(2, 2)
    pot = sample_potential(box, 4, dist="uniform")
    es = eigendecompose(build_hamiltonian(box, pot, 0.8))
    return box, pot, es


@pytest.fixture(scope="session")
def two_site():
    """Boxless 2-site chain with spectrum {1, 3}."""
    return eigendecompose(np.array([[2.0, -1.0], [-1.0, 2.0]]))


def fermi(e, beta):
    return 1.0 / (1.0 + np.exp(beta * np.asarray(e, dtype=float)))
