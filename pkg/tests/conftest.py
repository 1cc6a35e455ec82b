import numpy as np
import pytest

from rmcflab.experiments import torus_parent
from rmcflab.flow import TruncationConfig
from rmcflab.geometry import build_circle, build_sphere_profile
from rmcflab.shrinkers import angenent_torus
from rmcflab.spectral import ConeParams, decomposition, split


@pytest.fixture(scope="session")
def circle():
    return build_circle(np.sqrt(2.0), 256)


@pytest.fixture(scope="session")
def sphere():
    return build_sphere_profile(2.0, 256)


@pytest.fixture(scope="session")
def torus():
    return angenent_torus(256)


@pytest.fixture(scope="session")
def dec(torus):
    return decomposition(torus)


@pytest.fixture(scope="session")
def splitting(dec):
    return split(dec, "two")


@pytest.fixture(scope="session")
def cone(splitting):
    return ConeParams(1.0, splitting, 1e-2)


@pytest.fixture(scope="session")
def truncation():
    return TruncationConfig(1e-2)


@pytest.fixture(scope="session")
def parent(torus):
    return torus_parent(torus)
