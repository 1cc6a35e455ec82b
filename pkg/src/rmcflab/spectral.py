"""Linearized operator, weighted eigenproblem, splittings and cone predicates.

The operator Delta - <x, grad .>/2 + (|A|^2 + 1/2) is assembled in divergence
form: the diffusion+drift part is exp(|x|^2/4) div(exp(-|x|^2/4) grad u), whose
discrete quadratic form is built from a staggered spectral first derivative and
midpoint coefficients.  The matrix is symmetric w.r.t. the Gaussian mass matrix
by construction, so discrete self-adjointness is structural, not approximate.

Azimuthal Fourier blocks of rotational surfaces add a -m^2/r^2 potential; the
sphere's doubled-meridian representation is reduced to the physical parity
sector (-1)^m before solving.
"""

import numpy as np
import scipy.linalg

from .errors import GapError, GridError, IllPosedError
from .geometry import (GraphFunction, fourier_deriv, fourier_halfshift,
                       gaussian_inner, stagger_deriv_matrix)

_STAGGER_CACHE = {}


def _stagger(n):
    if n not in _STAGGER_CACHE:
        _STAGGER_CACHE[n] = stagger_deriv_matrix(n)
    return _STAGGER_CACHE[n]


class OperatorMatrix:
    """Dense symmetric representation of L in the weighted inner product.

    ``matrix`` is A with A_ij = <e_i, L e_j>_W; the nodal action of L is
    W^{-1} A.  ``weights`` is the diagonal of the Gaussian mass matrix W.
    """

    def __init__(self, matrix, weights, geometry, azimuthal_mode=0):
        self.matrix = matrix
        self.weights = weights
        self.geometry = geometry
        self.azimuthal_mode = azimuthal_mode

    def apply(self, u):
        """Nodal action L u = W^{-1} A u."""
        return (self.matrix @ np.asarray(u, dtype=float)) / self.weights

    def symmetry_defect(self):
        a = self.matrix
        return float(np.max(np.abs(a - a.T)) / np.max(np.abs(a)))


def assemble_linearized_operator(geometry, azimuthal_mode=0):
    """Assemble L (or its azimuthal Fourier block) on the given surface."""
    n = geometry.n_nodes
    s_mat = _stagger(n)
    coeff = geometry.stiff_weights_mid * fourier_halfshift(geometry.stiff_density)
    stiff = s_mat.T @ (coeff[:, None] * s_mat)
    pot = geometry.second_fundamental_sq + 0.5
    if azimuthal_mode != 0:
        if geometry.kind == "curve":
            raise GridError("plane curves have no azimuthal modes")
        pot = pot - azimuthal_mode ** 2 / geometry.position[:, 0] ** 2
    a = -stiff + np.diag(geometry.gauss_weights * pot)
    a = 0.5 * (a + a.T)
    return OperatorMatrix(a, geometry.gauss_weights, geometry, azimuthal_mode)


def _sphere_parity_lift(n, parity):
    """Unnormalized lift matrix from the half grid to a parity sector."""
    half = n // 2
    lift = np.zeros((n, half))
    for j in range(half):
        lift[j, j] = 1.0
        lift[n - 1 - j, j] = parity
    return lift


class SpectralDecomposition:
    """Eigenpairs of L, sorted descending, W-orthonormal."""

    def __init__(self, eigenvalues, eigenfunctions, op, zero_tol):
        self.eigenvalues = eigenvalues
        self.eigenfunctions = eigenfunctions
        self.op = op
        self.geometry = op.geometry
        self.weights = op.weights
        self.zero_tol = zero_tol
        self.azimuthal_mode = op.azimuthal_mode

    @property
    def morse_index(self):
        return int(np.sum(self.eigenvalues > self.zero_tol))

    @property
    def n_modes(self):
        return len(self.eigenvalues)

    def coefficients(self, u):
        vals = u.values if isinstance(u, GraphFunction) else np.asarray(u, float)
        return self.eigenfunctions.T @ (self.weights * vals)

    def reconstruct(self, coeffs):
        return self.eigenfunctions @ np.asarray(coeffs, dtype=float)

    def first_eigenfunction_positive(self):
        phi1 = self.eigenfunctions[:, 0]
        return bool(np.min(phi1) > 0.0 or np.max(phi1) < 0.0)

    def eigen_residuals(self):
        lphi = np.column_stack([self.op.apply(self.eigenfunctions[:, i])
                                for i in range(self.n_modes)])
        defect = lphi - self.eigenfunctions * self.eigenvalues[None, :]
        return np.sqrt(np.maximum(
            np.sum(defect ** 2 * self.weights[:, None], axis=0), 0.0))

    def orthonormality_defect(self):
        gram = self.eigenfunctions.T @ (self.weights[:, None] * self.eigenfunctions)
        return float(np.max(np.abs(gram - np.eye(self.n_modes))))


def eigendecompose(op, k=None):
    """Top-k eigenpairs (default: all) of the weighted eigenproblem."""
    geometry = op.geometry
    n = geometry.n_nodes
    if k is None:
        k = n
    if k > n:
        raise GridError("requested %d eigenpairs on a grid of %d nodes" % (k, n))
    if geometry.kind == "sphere":
        parity = 1 if op.azimuthal_mode % 2 == 0 else -1
        lift = _sphere_parity_lift(n, parity)
        a_sec = lift.T @ op.matrix @ lift
        w_sec = 2.0 * op.weights[: n // 2]
        vals, vecs = scipy.linalg.eigh(0.5 * (a_sec + a_sec.T), np.diag(w_sec))
        vecs = lift @ vecs
    else:
        vals, vecs = scipy.linalg.eigh(op.matrix, np.diag(op.weights))
    order = np.argsort(vals)[::-1][:k]
    vals = vals[order]
    vecs = vecs[:, order]
    # deterministic sign: largest-magnitude node positive
    for i in range(vecs.shape[1]):
        jmax = int(np.argmax(np.abs(vecs[:, i])))
        if vecs[jmax, i] < 0.0:
            vecs[:, i] = -vecs[:, i]
    zero_tol = 1e-6 * max(abs(vals[0]), 1.0)
    return SpectralDecomposition(vals, vecs, op, zero_tol)


def decomposition(geometry, azimuthal_mode=0):
    """Cached full decomposition of a geometry's operator block."""
    key = ("dec", azimuthal_mode)
    if key not in geometry._cache:
        op = assemble_linearized_operator(geometry, azimuthal_mode)
        geometry._cache[key] = eigendecompose(op)
    return geometry._cache[key]


def combined_morse_index(geometry, max_mode=16):
    """Morse index summed over azimuthal blocks (multiplicity 2 for m >= 1)."""
    dec0 = decomposition(geometry, 0)
    total = dec0.morse_index
    if geometry.kind == "curve":
        return total
    for m in range(1, max_mode + 1):
        dec = decomposition(geometry, m)
        if dec.eigenvalues[0] <= dec0.zero_tol:
            break
        total += 2 * int(np.sum(dec.eigenvalues > dec0.zero_tol))
    return total


# ---------------------------------------------------------------------------
# splittings

class SpectralSplitting:
    """Two-way (span phi_1 vs rest) or three-way (sign of lambda) splitting."""

    def __init__(self, dec, mode, masks, rates):
        self.dec = dec
        self.mode = mode
        self.masks = masks          # dict name -> boolean mask over modes
        self.rates = rates          # dict with gamma, beta, eta, omega

    def mask(self, part):
        return self.masks[part]

    def project_coeffs(self, u, part):
        c = self.dec.coefficients(u)
        out = np.zeros_like(c)
        m = self.masks[part]
        out[m] = c[m]
        return out

    def project(self, u, part):
        return self.dec.reconstruct(self.project_coeffs(u, part))

    def part_norm(self, u, part):
        c = self.dec.coefficients(u)
        return float(np.linalg.norm(c[self.masks[part]]))

    def norm(self, u):
        c = self.dec.coefficients(u)
        return float(np.linalg.norm(c))


def split(dec, mode, rates=None, zero_tol=None):
    """Build a validated splitting of a decomposition."""
    ztol = dec.zero_tol if zero_tol is None else zero_tol
    lam = dec.eigenvalues
    n = len(lam)
    if mode == "two":
        if n < 2 or not lam[0] > lam[1] + 10.0 * ztol:
            raise GapError("leading eigenvalue not simple: lambda1=%.8f "
                           "lambda2=%.8f" % (lam[0], lam[1] if n > 1 else np.nan))
        plus = np.zeros(n, dtype=bool)
        plus[0] = True
        masks = {"plus": plus, "minus": ~plus}
        lam1, lam2 = lam[0], lam[1]
        defaults = default_rates(lam1, lam2, lam[lam < -ztol])
        rates = {**defaults, **(rates or {})}
        if not (lam2 < rates["gamma"] < rates["beta"] < lam1 < rates["omega"]):
            raise GapError("rate chain lambda2 < gamma < beta < lambda1 < omega "
                           "violated: %r" % (rates,))
        if not rates["eta"] > 0.0:
            raise GapError("eta must be a positive decay-rate magnitude")
    elif mode == "three":
        unstable = lam > ztol
        center = np.abs(lam) <= ztol
        stable = lam < -ztol
        masks = {"unstable": unstable, "center": center, "stable": stable}
        defaults = default_rates(lam[0], lam[1] if n > 1 else lam[0] - 1.0,
                                 lam[stable])
        rates = {**defaults, **(rates or {})}
    else:
        raise GridError("unknown splitting mode %r" % (mode,))
    return SpectralSplitting(dec, mode, masks, rates)


def default_rates(lam1, lam2, stable_lams):
    gap = lam1 - lam2
    first_stable = float(stable_lams[0]) if len(stable_lams) else -1.0
    return {
        "gamma": lam2 + 0.25 * gap,
        "beta": lam2 + 0.75 * gap,
        "eta": min(0.1, abs(first_stable) / 2.0),
        "omega": lam1 + 1.0,
    }


# ---------------------------------------------------------------------------
# semigroup, Lyapunov norm, cone

def semigroup_apply(dec, t, u):
    """Exact modal propagation e^{Lt} u; backward time only on finite blocks."""
    c = dec.coefficients(u)
    if t < 0.0:
        decaying = dec.eigenvalues < -dec.zero_tol
        tail = np.linalg.norm(c[decaying])
        if tail > 1e-12 * max(np.linalg.norm(c), 1e-300):
            raise IllPosedError("backward flow requested for data with "
                                "infinite-dimensional (stable) content")
        c = c.copy()
        c[decaying] = 0.0
    out = dec.reconstruct(np.exp(dec.eigenvalues * t) * c)
    base = u.base if isinstance(u, GraphFunction) else dec.geometry
    return GraphFunction(base, out)


def lyapunov_norm(u, splitting):
    """sup_t e^{-gamma t} ||e^{L_- t} u_-||; attained at t = 0 diagonally."""
    if splitting.mode != "two":
        raise GridError("Lyapunov norm requires a two-way splitting")
    return splitting.part_norm(u, "minus")


def certify_contraction(splitting, times, trials=20, seed=0):
    """Check ||e^{L_- t} u_-|| <= e^{gamma t} ||u_-|| on random minus-data."""
    dec = splitting.dec
    rng = np.random.default_rng(seed)
    gamma = splitting.rates["gamma"]
    ok = True
    worst = -np.inf
    for _ in range(trials):
        c = rng.standard_normal(dec.n_modes)
        c[splitting.masks["plus"]] = 0.0
        for t in times:
            ratio = (np.linalg.norm(np.exp(dec.eigenvalues * t) * c)
                     / np.linalg.norm(c))
            excess = ratio / np.exp(gamma * t)
            worst = max(worst, excess)
            ok = ok and excess <= 1.0 + 1e-12
    return ok, worst


def certify_expansion(splitting, times):
    """||e^{L_+ t} phi_1|| / ||phi_1|| = e^{lambda_1 t} >= e^{beta t}."""
    lam1 = splitting.dec.eigenvalues[0]
    beta = splitting.rates["beta"]
    return all(np.exp(lam1 * t) >= np.exp(beta * t) for t in times), lam1 - beta


class ConeParams:
    """kappa and its saturation value kappa_bar for the expansion cone."""

    def __init__(self, kappa, splitting, delta, c_one=1.0):
        self.kappa_bar = kappa_bar_value(splitting, delta, c_one)
        self.clamped = kappa > self.kappa_bar
        self.kappa = min(kappa, self.kappa_bar)
        self.delta = delta
        self.c_one = c_one


def kappa_bar_value(splitting, delta, c_one=1.0):
    r = splitting.rates
    return (1.0 / (2.0 * c_one * delta)) * np.exp(r["eta"] + r["gamma"] / 2.0) \
        * (np.exp(r["beta"] / 2.0) - np.exp(r["gamma"] / 2.0))


def cone_membership(u, splitting, cone):
    """(inside, margin) for kappa ||u_-|| < ||u_+|| in the working norm."""
    plus = splitting.part_norm(u, "plus")
    minus = splitting.part_norm(u, "minus")
    margin = plus - cone.kappa * minus
    return margin > 0.0, margin


# ---------------------------------------------------------------------------
# norm suite

class NormReport:
    """Discrete C^0..C^4, Hoelder quotient and weighted-L^2 surrogates."""

    def __init__(self, sups, holder, l2, alpha):
        self.sups = sups            # [sup|u|, sup|u'|, ..., sup|u''''|]
        self.holder = holder
        self.l2 = l2
        self.alpha = alpha

    @property
    def c0(self):
        return self.sups[0]

    @property
    def c2(self):
        return sum(self.sups[:3])

    @property
    def c4(self):
        return sum(self.sups[:5])

    @property
    def c2alpha(self):
        return self.c2 + self.holder

    def as_dict(self):
        return {"c0": self.c0, "c2": self.c2, "c4": self.c4,
                "c2alpha": self.c2alpha, "holder": self.holder,
                "l2": self.l2, "alpha": self.alpha}


def norm_suite(u, geometry=None, alpha=0.25):
    """Norm surrogates of a grid function (arclength derivatives, spectral)."""
    if isinstance(u, GraphFunction):
        geometry = u.base
        vals = u.values
    else:
        vals = np.asarray(u, dtype=float)
    h = geometry.spacing
    jac = geometry.jacobian
    sups = [float(np.max(np.abs(vals)))]
    d = vals
    for _ in range(4):
        d = fourier_deriv(d, h) / jac      # d/ds = (1/J) d/dtheta
        sups.append(float(np.max(np.abs(d))))
    d2 = fourier_deriv(fourier_deriv(vals, h) / jac, h) / jac
    s = np.concatenate([[0.0], np.cumsum(jac * h)])
    total = s[-1]
    s = s[:-1]
    ds = np.abs(s[:, None] - s[None, :])
    ds = np.minimum(ds, total - ds)
    np.fill_diagonal(ds, np.inf)
    quot = np.abs(d2[:, None] - d2[None, :]) / ds ** alpha
    holder = float(np.max(quot))
    return NormReport(sups, holder, gaussian_norm_of(vals, geometry), alpha)


def gaussian_norm_of(vals, geometry):
    return float(np.sqrt(max(gaussian_inner(vals, vals, geometry), 0.0)))
