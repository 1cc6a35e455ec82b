"""End-to-end acceptance suite.

Each test pins one headline property of the laboratory with explicit
tolerances and a wall-clock budget.  Fitted constants are asserted only
against stability criteria, never against invented ground truth.
"""

import time

import numpy as np
import pytest
import scipy.integrate

from rmcflab import experiments as ex
from rmcflab.flow import (TruncationConfig, conservation_diagnostics,
                          rmcf_over_shrinker, truncated_rmcf,
                          variational_flow)
from rmcflab.geometry import (build_circle, build_sphere_profile,
                              f_functional, gaussian_norm, graph_geometry)
from rmcflab.manifolds import chart_build, lp_center_unstable
from rmcflab.shrinkers import angenent_torus
from rmcflab.spectral import combined_morse_index, decomposition, split


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds
        self.start = time.monotonic()

    def check(self):
        elapsed = time.monotonic() - self.start
        assert elapsed < self.seconds, "over budget: %.1fs" % elapsed


def test_criterion_1_circle_spectrum(circle):
    budget = Budget(5.0)
    dec = decomposition(circle)
    k = np.arange(1, 9)
    model = np.sort(np.concatenate([[1.0],
                                    np.repeat(1.0 - k ** 2 / 2.0, 2)]))[::-1]
    assert np.max(np.abs(dec.eigenvalues[:len(model)] - model)) <= 1e-6
    assert dec.morse_index == 3
    budget.check()


def test_criterion_2_sphere_spectrum(sphere):
    budget = Budget(10.0)
    dec = decomposition(sphere)
    ell = np.arange(0, 9)
    model = 1.0 - ell * (ell + 1) / 4.0
    assert np.max(np.abs(dec.eigenvalues[:len(model)] - model)) <= 1e-6
    assert combined_morse_index(sphere) == 4
    budget.check()


def test_criterion_3_torus_shrinker(torus, dec):
    budget = Budget(120.0)
    assert np.max(np.abs(torus.shrinker_residual_values())) <= 1e-8
    fine = angenent_torus(512)
    th = fine.params
    h = 1e-5
    worst = 0.0
    for u in (np.ones(fine.n_nodes), np.cos(th), np.sin(th),
              np.cos(2.0 * th), np.sin(2.0 * th)):
        u = u / gaussian_norm(u, fine)
        d = (f_functional(graph_geometry(fine, h * u))
             - f_functional(graph_geometry(fine, -h * u))) / (2.0 * h)
        worst = max(worst, abs(d))
    assert worst <= 1e-6
    assert dec.eigenvalues[0] > 1.0
    assert combined_morse_index(torus) > 4
    budget.check()


def test_criterion_4_flow_correctness(circle, torus, dec):
    budget = Budget(120.0)
    c0 = 1e-2
    traj = rmcf_over_shrinker(circle, np.full(circle.n_nodes, c0),
                              (0.0, 1.0), dt=1e-3)
    sol = scipy.integrate.solve_ivp(
        lambda _t, r: r / 2.0 - 1.0 / r, (0.0, 1.0),
        [np.sqrt(2.0) + c0], rtol=1e-12, atol=1e-14, dense_output=True)
    model = sol.sol(traj.times)[0] - np.sqrt(2.0)
    assert np.max(np.abs(traj.values[:, 0] - model)) <= 1e-6

    dt = 1e-2
    zero = rmcf_over_shrinker(torus, np.zeros(torus.n_nodes), (0.0, 50.0),
                              dt=dt)
    assert np.max(np.abs(zero.values)) <= 1e-8

    worst = 0.0
    for trial in range(10):
        u0 = ex.smooth_random(dec, ex._rng(0, trial), norm=5e-3)
        tr = rmcf_over_shrinker(torus, u0, (0.0, 1.0), dt=dt)
        worst = max(worst,
                    conservation_diagnostics(tr)["monotonicity_defect"])
    assert worst <= 10.0 * dt
    budget.check()


def test_criterion_5_linearization_gap(circle, torus, dec):
    budget = Budget(300.0)
    deltas = (1e-2, 5e-3, 2.5e-3)
    v0c = ex.smooth_random(decomposition(circle), ex._rng(0, 1))
    rep_c = ex.linearization_gap_experiment(circle, v0c, deltas)
    assert rep_c.passed
    assert rep_c.constants["slope"] >= 1.5
    v0t = ex.smooth_random(dec, ex._rng(0, 1))
    rep_t = ex.linearization_gap_experiment(torus, v0t, deltas)
    assert rep_t.passed
    assert rep_t.constants["slope"] >= 1.5
    budget.check()


def test_criterion_6_harnack_liyau(parent, torus):
    budget = Budget(600.0)
    rep = ex.harnack_experiment(parent, trials=10)
    assert rep.passed
    assert np.isfinite(rep.constants["fitted_c"])

    n = torus.n_nodes
    d = np.minimum(np.abs(np.arange(n) - n // 3),
                   n - np.abs(np.arange(n) - n // 3)) * torus.spacing
    v0 = 1.0 + 999.0 * np.exp(-(d / 0.1) ** 2)
    coarse = ex.liyau_check(parent, v0, dt=1e-2)
    fine = ex.liyau_check(parent, v0, dt=5e-3)
    assert coarse.passed and fine.passed
    c0, c1 = coarse.constants["c_fitted"], fine.constants["c_fitted"]
    assert abs(c1 - c0) <= 0.10 * max(c0, c1)
    budget.check()


def test_criterion_7_cone_invariance(torus, splitting, cone):
    budget = Budget(600.0)
    rep = ex.cone_invariance_experiment(torus, splitting, cone, trials=50,
                                        pairs=25)
    assert rep.passed
    names = [a["name"] for a in rep.assertions]
    assert "saturated_growth_near_lambda1" in names
    assert "difference_pairs" in names
    budget.check()


def test_criterion_8_invariant_manifolds(torus, truncation, dec):
    budget = Budget(900.0)
    for kind in ("stable", "unstable", "center", "center_unstable"):
        chart = chart_build(kind, torus, truncation, n_samples=16, seed=0)
        cert = chart.certificates
        assert cert["max_fixed_point_residual"] <= 1e-8
        assert cert["n_failures"] == 0
        assert cert["lipschitz"] <= 0.2
        if np.isfinite(cert["tangency_slope"]):
            assert cert["tangency_slope"] >= 1.9
        if kind == "stable":
            assert all(r < 0.0 for r in cert["decay_rates"])
        if kind == "unstable":
            assert all(r > 0.0 for r in cert["decay_rates"])

    # attraction to the center-unstable manifold along a truncated flow
    sp3 = split(dec, "three")
    cu = sp3.mask("center") | sp3.mask("unstable")
    st = sp3.mask("stable")
    c0 = np.zeros(dec.n_modes)
    c0[np.flatnonzero(cu)[0]] = 1e-6
    c0[np.flatnonzero(st)[0]] = 1e-3
    traj = truncated_rmcf(torus, dec.reconstruct(c0), (0.0, 2.0), truncation,
                          dt=2e-3)
    ts = np.linspace(0.25, 2.0, 8)
    dists = []
    for t in ts:
        c = dec.coefficients(traj.value_at(t))
        _, w = lp_center_unstable(torus, truncation, np.where(cu, c, 0.0))
        dists.append(float(np.linalg.norm(np.where(st, c, 0.0) - w)))
    slope, log_c = np.polyfit(ts, np.log(dists), 1)
    eta = -slope
    assert eta > 0.0
    assert np.exp(log_c) <= 10.0
    budget.check()


def test_criterion_9_drift_dichotomy(parent, splitting, dec, torus):
    budget = Budget(600.0)
    phi1 = dec.eigenfunctions[:, 0]
    v_orth, _ = ex.prepare_orthogonal_datum(parent, dec.eigenfunctions[:, 1],
                                            10.0)
    data = [v_orth, -phi1]
    for i in range(11):
        r = ex.smooth_random(dec, ex._rng(2, i))
        data.append(1.0 + 0.4 * (r - np.mean(r)))
    for i in range(10):
        data.append(ex.smooth_random(dec, ex._rng(3, i)))
    eps_grid = (0.0, 1e-3, -1e-3, 3e-3, -3e-3, 1e-2, -1e-2)
    rep = ex.drift_experiment(parent, data, phi1, eps_grid, splitting)
    assert rep.passed
    assert len(data) + len(eps_grid) == 30
    assert rep.constants["exceptional_eps_count"] <= 1
    budget.check()


def test_criterion_10_entropy(circle, sphere, torus):
    budget = Budget(600.0)
    for geom in (circle, sphere, torus):
        lam = ex.entropy(geom).value
        f0 = f_functional(geom)
        assert abs(lam - f0) <= 1e-6 * f0
    rep = ex.entropy_decrease_experiment(
        torus, (0.02, -0.02, 0.01, -0.01, 0.005, -0.005))
    assert rep.passed
    budget.check()


def test_criterion_11_global_pipeline(torus, splitting, cone, dec):
    budget = Budget(1200.0)
    phi1 = dec.eigenfunctions[:, 0]
    rep = ex.global_genericity_pipeline(torus, phi1, [1e-4], splitting, cone)
    assert rep.passed
    names = [a["name"] for a in rep.assertions]
    assert any(n.startswith("f_drop_exceeds_bound") for n in names)
    assert any(n.startswith("entropy_drop") for n in names)

    v_sc = dec.eigenfunctions[:, 1] - 0.001 * phi1
    assert np.min(v_sc) < 0.0 < np.max(v_sc)
    rep_sc = ex.global_genericity_pipeline(
        torus, v_sc, [1e-5], splitting, cone, w0=phi1,
        eps_grid=(0.0, 0.05, -0.05, 0.1, -0.1, 0.2, -0.2))
    assert rep_sc.passed
    budget.check()


def test_criterion_12_ancient_limit(torus):
    budget = Budget(900.0)
    rep = ex.ancient_limit_experiment(torus)
    assert rep.passed
    exits = np.asarray(rep.series["exit_times"])
    assert np.all(np.diff(exits) > 0.0)
    budget.check()
