import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from surffpt.sampling import sample_cloud
from surffpt.surfaces import FlatDisk, Sphere, Torus

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def sphere_cloud():
    return sample_cloud(Sphere(1.0), 0.08)


@pytest.fixture(scope="session")
def torus_cloud():
    return sample_cloud(Torus(0.7, 0.3), 0.06)


@pytest.fixture(scope="session")
def disk_cloud():
    return sample_cloud(FlatDisk(1.0), 0.05, boundary="edge::1e-9")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
