import math

import numpy as np
import pytest

from seglab.acceptance import Suite
from seglab.grid import MultiField, PolarGrid2D


@pytest.fixture(scope="session")
def suite():
    """Acceptance suite shared across test modules so expensive solves run once."""
    return Suite()


@pytest.fixture
def small_grid():
    return PolarGrid2D(32, 64, 1.0)


def psi_pair(grid: PolarGrid2D, d: float = 1.0) -> MultiField:
    """(Psi_d^+, Psi_d^-) for integer d: the positive and negative parts."""
    rr, tt = grid.mesh()
    psi = rr**d * np.sin(d * tt) / math.sqrt(math.pi)
    return MultiField(grid, np.stack([np.maximum(psi, 0.0), np.maximum(-psi, 0.0)]))
