import numpy as np
import pytest

from rmcflab.errors import GraphError, GridError
from rmcflab.geometry import (GraphFunction, abs_sin_weights, build_circle,
                              f_functional, fourier_deriv, gaussian_inner,
                              gaussian_norm, graph_geometry, graph_surface,
                              load_geometry, periodic_d1, periodic_d2,
                              save_geometry)


def test_circle_gaussian_area_closed_form(circle):
    exact = 2.0 * np.pi * np.sqrt(2.0) * np.exp(-0.5)
    assert abs(f_functional(circle) - exact) < 1e-12


def test_sphere_gaussian_area_closed_form(sphere):
    exact = 16.0 * np.pi * np.exp(-1.0)
    assert abs(f_functional(sphere) - exact) < 1e-10


def test_periodic_derivatives_on_trig():
    n = 256
    h = 2.0 * np.pi / n
    theta = h * np.arange(n)
    f = np.sin(3.0 * theta)
    # 4th order: error ~ h^4 k^5 / 30 at this resolution
    assert np.max(np.abs(periodic_d1(f, h) - 3.0 * np.cos(3.0 * theta))) < 1e-5
    assert np.max(np.abs(periodic_d2(f, h) + 9.0 * np.sin(3.0 * theta))) < 1e-4
    # and the error really is 4th order: doubling n gains a factor 16
    f2 = np.sin(3.0 * 2.0 * np.pi * np.arange(2 * n) / (2 * n))
    theta2 = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    err1 = np.max(np.abs(periodic_d1(f, h) - 3.0 * np.cos(3.0 * theta)))
    err2 = np.max(np.abs(periodic_d1(f2, h / 2.0)
                         - 3.0 * np.cos(3.0 * theta2)))
    assert err2 < err1 / 12.0


def test_fourier_deriv_spectral_exactness():
    n = 128
    h = 2.0 * np.pi / n
    theta = h * np.arange(n)
    f = np.cos(5.0 * theta)
    d1 = fourier_deriv(f, h, order=1)
    assert np.max(np.abs(d1 + 5.0 * np.sin(5.0 * theta))) < 1e-11
    d2 = fourier_deriv(f, h, order=2)
    assert np.max(np.abs(d2 + 25.0 * np.cos(5.0 * theta))) < 1e-10


def test_abs_sin_quadrature():
    n = 128
    theta = 2.0 * np.pi * np.arange(n) / n
    w = abs_sin_weights(theta)
    # int_0^{2pi} |sin t| dt = 4, int |sin t| cos^2 t dt = 4/3
    assert abs(np.sum(w) - 4.0) < 1e-12
    assert abs(np.sum(w * np.cos(theta) ** 2) - 4.0 / 3.0) < 1e-12


def test_concentric_graph_matches_circle(circle):
    c = 0.05
    pos = graph_surface(circle, np.full(circle.n_nodes, c))
    radii = np.hypot(pos[:, 0], pos[:, 1])
    assert np.max(np.abs(radii - (np.sqrt(2.0) + c))) < 1e-13
    bigger = build_circle(np.sqrt(2.0) + c, circle.n_nodes)
    gg = graph_geometry(circle, np.full(circle.n_nodes, c))
    # the graph geometry recomputes weights numerically from positions
    assert abs(f_functional(gg) - f_functional(bigger)) < 1e-6


def test_graph_exceeding_tubular_radius_rejected(torus):
    big = np.full(torus.n_nodes, 2.0 * torus.tubular_radius())
    with pytest.raises(GraphError):
        graph_surface(torus, big)


def test_graph_values_shape_checked(circle):
    with pytest.raises(GridError):
        GraphFunction(circle, np.zeros(circle.n_nodes + 2))


def test_gaussian_inner_norm_consistency(circle):
    rng = np.random.default_rng(3)
    u = rng.standard_normal(circle.n_nodes)
    v = rng.standard_normal(circle.n_nodes)
    ip = gaussian_inner(u, v, circle)
    assert abs(ip - gaussian_inner(v, u, circle)) < 1e-14
    assert abs(gaussian_norm(u, circle) ** 2
               - gaussian_inner(u, u, circle)) < 1e-12


def test_geometry_roundtrip(tmp_path, torus):
    path = tmp_path / "torus.csv"
    save_geometry(torus, path)
    back = load_geometry(path)
    assert back.kind == torus.kind
    assert np.max(np.abs(back.position - torus.position)) == 0.0
    assert np.max(np.abs(back.params - torus.params)) == 0.0
