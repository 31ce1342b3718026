import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from func.fem2d import Material, buildMeshCantilever  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def material():
    return Material()


@pytest.fixture(scope="session")
def smallCantilever():
    """H = 1, element size 0.2: 10 x 5 quads."""
    return buildMeshCantilever(1.0, 0.2)
