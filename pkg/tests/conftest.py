import numpy as np
import pytest

from composita.harmonics import build_quadrature


@pytest.fixture(scope="session")
def rule_s2_44():
    """Shared S^2 rule, exact through degree 44."""
    return build_quadrature(2, 44)


@pytest.fixture(scope="session")
def rule_s2_80():
    """Shared S^2 rule for filtered-approximation tests (degree 80)."""
    return build_quadrature(2, 80)


@pytest.fixture(scope="session")
def north():
    return np.array([0.0, 0.0, 1.0])
