import numpy as np
import pytest

from rmcflab.errors import GridError
from rmcflab.geometry import GraphFunction
from rmcflab.spectral import (ConeParams, certify_contraction,
                              certify_expansion, combined_morse_index,
                              cone_membership, decomposition, norm_suite,
                              semigroup_apply, split)


def test_circle_spectrum_closed_form(circle):
    dec = decomposition(circle)
    k = np.arange(1, 9)
    model = np.sort(np.concatenate([[1.0],
                                    np.repeat(1.0 - k ** 2 / 2.0, 2)]))[::-1]
    assert np.max(np.abs(dec.eigenvalues[:len(model)] - model)) < 1e-6
    assert dec.morse_index == 3


def test_sphere_spectrum_closed_form(sphere):
    dec = decomposition(sphere)
    ell = np.arange(0, 9)
    model = 1.0 - ell * (ell + 1) / 4.0
    assert np.max(np.abs(dec.eigenvalues[:len(model)] - model)) < 1e-6
    assert combined_morse_index(sphere) == 4


def test_torus_leading_eigenvalues(dec):
    lam = dec.eigenvalues
    assert abs(lam[0] - 3.7398) < 2e-3
    assert abs(lam[1] - 1.0) < 1e-5
    assert abs(lam[2] - 0.5) < 1e-5
    assert lam[3] < 0.0


def test_torus_combined_index(torus):
    assert combined_morse_index(torus) == 9


def test_eigenbasis_certificates(dec):
    assert dec.orthonormality_defect() < 1e-8
    assert np.max(dec.eigen_residuals()[:32]) < 1e-6
    assert dec.first_eigenfunction_positive()


def test_two_way_splitting(splitting, dec):
    assert np.sum(splitting.mask("plus")) == 1
    r = splitting.rates
    assert dec.eigenvalues[1] < r["gamma"] < r["beta"] < dec.eigenvalues[0]
    assert r["eta"] > 0.0
    ok, worst = certify_contraction(splitting, (0.5, 1.0, 2.0))
    assert ok and worst <= 1.0 + 1e-12
    ok, gap = certify_expansion(splitting, (0.5, 1.0, 2.0))
    assert ok and gap > 0.0


def test_three_way_splitting(dec):
    sp3 = split(dec, "three")
    lam = dec.eigenvalues
    assert np.all(lam[sp3.mask("unstable")] > 0.0)
    assert np.all(lam[sp3.mask("stable")] < 0.0)
    total = (sp3.mask("unstable") | sp3.mask("center") | sp3.mask("stable"))
    assert np.all(total)


def test_unknown_splitting_mode(dec):
    with pytest.raises(GridError):
        split(dec, "four")


def test_semigroup_matches_eigenvalue(dec, torus):
    phi = GraphFunction(torus, dec.eigenfunctions[:, 2])
    lam = dec.eigenvalues[2]
    out = semigroup_apply(dec, 0.7, phi)
    assert np.max(np.abs(out.values - np.exp(0.7 * lam) * phi.values)) < 1e-10


def test_cone_params_and_membership(splitting, cone, dec, torus):
    assert abs(cone.kappa_bar - 293.09) < 0.5
    assert not cone.clamped
    inside, margin = cone_membership(
        GraphFunction(torus, dec.eigenfunctions[:, 0]), splitting, cone)
    assert inside and margin > 0.0
    outside, _ = cone_membership(
        GraphFunction(torus, dec.eigenfunctions[:, 3]), splitting, cone)
    assert not outside


def test_clamped_kappa(splitting):
    big = ConeParams(1e6, splitting, 1e-2)
    assert big.clamped
    assert big.kappa == big.kappa_bar


def test_norm_suite_scaling(torus):
    u = 1e-3 * np.ones(torus.n_nodes)
    rep = norm_suite(u, torus)
    rep2 = norm_suite(2.0 * u, torus)
    assert rep.c4 > 0.0
    assert abs(rep2.c4 / rep.c4 - 2.0) < 1e-10
