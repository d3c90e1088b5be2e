import numpy as np
import pytest

from refugia.geometry import GridSpec, RefugeShape, build_geometry
from refugia.operators import ModelParams

CENTER_RECT = RefugeShape.rectangle((0.5, 0.5), (0.125, 0.125))


@pytest.fixture(scope="session")
def geom16():
    return build_geometry(GridSpec(16, 16), CENTER_RECT)


@pytest.fixture(scope="session")
def geom32():
    return build_geometry(GridSpec(32, 32), CENTER_RECT)


@pytest.fixture(scope="session")
def geom64():
    return build_geometry(GridSpec(64, 64), CENTER_RECT)


@pytest.fixture(scope="session")
def params_a():
    """The standard parameter set: threshold at mu = 1."""
    return ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=1.0)


def smooth_positive(grid, rng, base=1.0, wobble=0.1, floor=0.05):
    """Smooth strictly positive profile from a few low Neumann modes."""
    X, Y = grid.cell_centers()
    f = base * np.ones_like(X)
    for kx in range(3):
        for ky in range(3):
            if kx == ky == 0:
                continue
            f = f + wobble * rng.normal() * np.cos(np.pi * kx * X / grid.lx) * np.cos(
                np.pi * ky * Y / grid.ly
            )
    return np.maximum(f, floor)
