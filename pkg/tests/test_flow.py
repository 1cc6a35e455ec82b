import numpy as np
import pytest
import scipy.integrate

from rmcflab.errors import GridError
from rmcflab.flow import (TruncationConfig, conservation_diagnostics,
                          energy_estimate, quintic_smoothstep,
                          rmcf_over_flow, rmcf_over_shrinker, truncated_rmcf,
                          variational_flow)
from rmcflab.geometry import gaussian_norm
from rmcflab.spectral import decomposition


def test_quintic_smoothstep_profile():
    assert quintic_smoothstep(0.0) == 1.0
    assert quintic_smoothstep(1.0) == 1.0
    assert quintic_smoothstep(2.0) == 0.0
    assert quintic_smoothstep(3.0) == 0.0
    s = np.linspace(0.0, 2.5, 101)
    v = quintic_smoothstep(s)
    assert np.all(np.diff(v) <= 1e-14)


def test_truncation_config_validation():
    with pytest.raises(GridError):
        TruncationConfig(0.0)
    trunc = TruncationConfig(1e-2)
    assert trunc.chi(5e-3) == 1.0
    assert trunc.chi(3e-2) == 0.0


def test_concentric_circle_matches_radius_ode(circle):
    c0 = 1e-2
    traj = rmcf_over_shrinker(circle, np.full(circle.n_nodes, c0),
                              (0.0, 1.0), dt=1e-3)
    sol = scipy.integrate.solve_ivp(
        lambda _t, r: r / 2.0 - 1.0 / r, (0.0, 1.0),
        [np.sqrt(2.0) + c0], rtol=1e-12, atol=1e-14, dense_output=True)
    model = sol.sol(traj.times)[0] - np.sqrt(2.0)
    assert np.max(np.abs(traj.values[:, 0] - model)) < 1e-6
    # concentric data stays concentric
    spread = np.max(traj.values, axis=1) - np.min(traj.values, axis=1)
    assert np.max(spread) < 1e-12


def test_zero_graph_is_fixed(torus):
    traj = rmcf_over_shrinker(torus, np.zeros(torus.n_nodes), (0.0, 5.0),
                              dt=1e-2)
    assert np.max(np.abs(traj.values)) <= 1e-10


def test_small_data_close_to_linear_flow(torus):
    dec = decomposition(torus)
    u0 = 1e-6 * dec.eigenfunctions[:, 5]
    nl = rmcf_over_shrinker(torus, u0, (0.0, 0.5), dt=1e-3)
    lin = variational_flow(torus, u0, (0.0, 0.5), dt=1e-3)
    gap = gaussian_norm(nl.final_values - lin.final_values, torus)
    # quadratic in the data size: far below the data scale itself
    assert gap < 1e-4 * gaussian_norm(u0, torus)


def test_variational_flow_exact_on_modes(torus):
    dec = decomposition(torus)
    u0 = dec.eigenfunctions[:, 4]
    lam = dec.eigenvalues[4]
    lin = variational_flow(torus, u0, (0.0, 1.0), dt=1e-2)
    assert np.max(np.abs(lin.final_values - np.exp(lam) * u0)) < 1e-9


def test_variational_flow_bundle(torus):
    dec = decomposition(torus)
    bundle = dec.eigenfunctions[:, 4:6]
    lin = variational_flow(torus, bundle, (0.0, 1.0), dt=1e-2)
    for j, mode in enumerate((4, 5)):
        lam = dec.eigenvalues[mode]
        assert np.max(np.abs(lin.final_values[:, j]
                             - np.exp(lam) * bundle[:, j])) < 1e-9


def test_f_monotone_along_nonlinear_flow(torus):
    dec = decomposition(torus)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(dec.n_modes) * np.exp(-0.25 * np.arange(dec.n_modes))
    u0 = dec.reconstruct(c)
    u0 *= 5e-3 / gaussian_norm(u0, torus)
    traj = rmcf_over_shrinker(torus, u0, (0.0, 1.0), dt=1e-2)
    diag = conservation_diagnostics(traj)
    assert diag["monotonicity_defect"] <= 1e-1
    est = energy_estimate(traj)
    assert est["inequality_holds"]


def test_truncated_flow_is_linear_beyond_cutoff(torus, truncation):
    dec = decomposition(torus)
    # data far above 2 delta: chi = 0 and the flow is exactly linear
    u0 = 5e-2 * dec.eigenfunctions[:, 6]
    tr = truncated_rmcf(torus, u0, (0.0, 0.2), truncation, dt=1e-3)
    lin = variational_flow(torus, u0, (0.0, 0.2), dt=1e-3)
    assert np.max(np.abs(tr.final_values - lin.final_values)) < 1e-10


def test_rmcf_over_constant_parent_matches_static(torus, parent):
    from rmcflab.flow import FlowTrajectory
    const = FlowTrajectory(torus, np.array([0.0, 1.0]),
                           np.zeros((2, torus.n_nodes)))
    dec = decomposition(torus)
    v0 = 1e-4 * dec.eigenfunctions[:, 4]
    over_parent = rmcf_over_flow(const, v0, (0.0, 0.5), dt=1e-3)
    static = rmcf_over_shrinker(torus, v0, (0.0, 0.5), dt=1e-3)
    assert np.max(np.abs(over_parent.final_values
                         - static.final_values)) < 1e-12


def test_time_span_must_increase(torus):
    with pytest.raises(GridError):
        rmcf_over_shrinker(torus, np.zeros(torus.n_nodes), (1.0, 0.0))
