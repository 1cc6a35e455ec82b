import numpy as np
import pytest

from rmcflab.errors import ShootingError
from rmcflab.geometry import f_functional
from rmcflab.shrinkers import (ShootingConfig, angenent_torus,
                               shrinker_residual, solve_torus_profile)


def test_torus_residual_small(torus):
    res = shrinker_residual(torus)
    assert np.max(np.abs(res.values)) <= 1e-8


def test_torus_profile_shape(torus):
    assert torus.kind == "torus"
    assert torus.n_nodes == 256
    r = torus.position[:, 0]
    assert np.min(r) > 0.0
    # profile is a closed loop away from the axis, radii within known bounds
    assert 0.3 < np.min(r) < np.max(r) < 3.5


def test_torus_profile_symmetric(torus):
    # reflection z -> -z maps the node set to itself
    n = torus.n_nodes
    mirror = (-np.arange(n)) % n
    assert np.max(np.abs(torus.position[:, 1]
                         + torus.position[mirror, 1])) < 1e-8
    assert np.max(np.abs(torus.position[:, 0]
                         - torus.position[mirror, 0])) < 1e-8


def test_torus_gaussian_area_regression(torus):
    assert abs(f_functional(torus) - 23.263074449594487) < 1e-9


def test_torus_cache_returns_same_object(torus):
    assert angenent_torus(256) is torus


def test_shooting_deterministic():
    a = solve_torus_profile(ShootingConfig(n=64))
    b = solve_torus_profile(ShootingConfig(n=64))
    assert np.max(np.abs(a.position - b.position)) == 0.0


def test_shooting_config_validation():
    with pytest.raises(ShootingError):
        ShootingConfig(initial_radius_guess=-1.0)
    with pytest.raises(ShootingError):
        ShootingConfig(tolerance=1.0)
