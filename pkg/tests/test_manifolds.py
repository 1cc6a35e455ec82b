import numpy as np
import pytest

from rmcflab.errors import GridError
from rmcflab.manifolds import (chart_build, chart_main_mask, lp_center,
                               lp_stable, lp_unstable, phi_one, phi_two,
                               positivity_constant)
from rmcflab.spectral import decomposition, split


def test_phi_functions_series():
    assert abs(phi_one(0.0) - 1.0) < 1e-12
    assert abs(phi_one(1e-8) - 1.0) < 1e-7
    z = 0.3
    assert abs(phi_one(z) - (np.exp(z) - 1.0) / z) < 1e-14
    assert abs(phi_two(z) - (np.exp(z) - 1.0 - z) / z ** 2) < 1e-13
    assert abs(phi_two(0.0) - 0.5) < 1e-12


def test_stable_orbit_decays(torus, truncation):
    dec = decomposition(torus)
    sp3 = split(dec, "three")
    c0 = np.zeros(dec.n_modes)
    c0[np.flatnonzero(sp3.mask("stable"))[0]] = 1e-3
    orbit, w = lp_stable(torus, truncation, c0, horizon=10.0)
    assert orbit.residual < 1e-10
    norms = orbit.norms()
    assert norms[-1] < 1e-3 * norms[0]
    # chart value is quadratically small in the input
    orbit2, w2 = lp_stable(torus, truncation, 0.5 * c0, horizon=10.0)
    ratio = np.linalg.norm(w) / np.linalg.norm(w2)
    assert 3.0 < ratio < 5.0


def test_unstable_orbit_decays_backward(torus, truncation):
    dec = decomposition(torus)
    sp3 = split(dec, "three")
    c0 = np.zeros(dec.n_modes)
    c0[np.flatnonzero(sp3.mask("unstable"))[0]] = 1e-3
    orbit, _ = lp_unstable(torus, truncation, c0, horizon=10.0)
    norms = orbit.norms()
    # backward grid: earliest time first, anchor at the end
    assert norms[0] < 1e-3 * norms[-1]
    assert abs(norms[-1] - 1e-3) < 1e-6


def test_center_chart_trivial_on_torus(torus, truncation):
    orbit, w = lp_center(torus, truncation, np.zeros(
        decomposition(torus).n_modes))
    assert np.max(np.abs(orbit.coeffs)) == 0.0
    assert np.max(np.abs(w)) == 0.0


def test_input_with_complement_components_rejected(torus, truncation):
    dec = decomposition(torus)
    c0 = 1e-3 * np.ones(dec.n_modes)
    with pytest.raises(GridError):
        lp_stable(torus, truncation, c0)


def test_chart_build_certificates(torus, truncation):
    chart = chart_build("stable", torus, truncation, n_samples=4, seed=0,
                        horizon=10.0)
    cert = chart.certificates
    assert cert["max_fixed_point_residual"] <= 1e-8
    assert cert["n_failures"] == 0
    assert cert["tangency_slope"] >= 1.9
    assert cert["lipschitz"] <= 0.2
    assert all(r < 0.0 for r in cert["decay_rates"])


def test_chart_main_masks(torus):
    dec = decomposition(torus)
    sp3 = split(dec, "three")
    cu = chart_main_mask(torus, "center_unstable")
    assert np.array_equal(cu, sp3.mask("center") | sp3.mask("unstable"))
    with pytest.raises(GridError):
        chart_main_mask(torus, "sideways")


def test_positivity_constant(dec):
    k = positivity_constant(dec)
    assert k > 0.0 and np.isfinite(k)
