import numpy as np
import pytest

from cbrec import geometry as G
from cbrec import pipeline as PL


@pytest.fixture(scope="session")
def small_geom():
    return G.circular_orbit(16, 66.0, 199.0, 10.0)


@pytest.fixture(scope="session")
def tiny_cfg():
    """Deliberately small end-to-end configuration for operator tests."""
    orbit = G.circular_orbit(16, 66.0, 199.0, 8.0)
    det = G.DetectorGrid(32, 32, (1.8, 1.8))
    vol = G.VolumeGrid(16, 16, 16, 1.0)
    lines = PL.default_line_grid(det, orbit.detector_fov_radius)
    return PL.PipelineConfig(orbit=orbit, detector=det, lines=lines, volume=vol)


def weighted_dot(a, b, weight):
    return float(np.sum(np.asarray(a) * np.asarray(b)) * weight)
