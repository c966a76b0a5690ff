import numpy as np
import pytest

from coatrack import geometry, observation


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)


@pytest.fixture(scope="session")
def array_20x20():
    return geometry.make_rectangular_array(20, 20, 0.005, [0.0, 0.0, 1.0])


@pytest.fixture(scope="session")
def model_20x20(array_20x20):
    return observation.MeasurementModel(array_20x20, 0.01, np.deg2rad(20.0))


def random_geometry(rng, max_antennas=30, scale=0.2):
    """Random antenna cloud with antenna 0 at the reference."""
    reference = rng.normal(size=3)
    n = int(rng.integers(1, max_antennas))
    antennas = reference + rng.normal(scale=scale, size=(n, 3))
    antennas[0] = reference
    return geometry.ArrayGeometry.from_positions(reference, antennas)
