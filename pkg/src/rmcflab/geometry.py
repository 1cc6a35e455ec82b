"""Discrete closed curves and rotational profiles with Gaussian-weighted calculus.

Surfaces are stored as periodic parameter grids in a profile plane:

* ``curve``  -- a closed plane curve (x, y), surface dimension 1.
* ``torus``  -- a rotational profile loop (r, z) with r > 0, dimension 2.
* ``sphere`` -- a rotational profile through the axis, stored as a doubled
  meridian loop with signed radius.  Nodes sit at theta = (j + 1/2) h, so the
  poles (where the signed radius vanishes) fall between grid points and no
  one-sided stencils are needed.  Physical functions carry a parity under the
  deck transformation j -> N-1-j.

All derivative work is boundary-free: 4th-order periodic central differences
for geometric quantities, trigonometric interpolation for midpoint data.
"""

import csv
import io

import numpy as np

from .errors import GeometryError, GraphError, GridError

KINDS = ("curve", "torus", "sphere")


# ---------------------------------------------------------------------------
# periodic discrete calculus

def periodic_d1(values, spacing):
    """4th-order periodic first derivative along axis 0."""
    f = np.asarray(values, dtype=float)
    fp1 = np.roll(f, -1, axis=0)
    fp2 = np.roll(f, -2, axis=0)
    fm1 = np.roll(f, 1, axis=0)
    fm2 = np.roll(f, 2, axis=0)
    return (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * spacing)


def periodic_d2(values, spacing):
    """4th-order periodic second derivative along axis 0."""
    f = np.asarray(values, dtype=float)
    fp1 = np.roll(f, -1, axis=0)
    fp2 = np.roll(f, -2, axis=0)
    fm1 = np.roll(f, 1, axis=0)
    fm2 = np.roll(f, 2, axis=0)
    return (-fp2 + 16.0 * fp1 - 30.0 * f + 16.0 * fm1 - fm2) / (12.0 * spacing ** 2)


def fourier_halfshift(values):
    """Evaluate a smooth periodic nodal function on the half-staggered grid.

    Trigonometric interpolation; input at theta_j, output at theta_j + h/2.
    """
    f = np.asarray(values, dtype=float)
    n = f.shape[0]
    coef = np.fft.rfft(f)
    k = np.arange(coef.shape[0])
    mult = np.exp(1j * np.pi * k / n)
    if n % 2 == 0:
        # Nyquist mode: cos(N theta/2) vanishes on the staggered grid.
        mult[-1] = 0.0
    return np.fft.irfft(coef * mult, n)


def fourier_deriv(values, spacing, order=1):
    """Spectral periodic derivative on the nodal grid (for norm surrogates)."""
    f = np.asarray(values, dtype=float)
    n = f.shape[0]
    coef = np.fft.rfft(f)
    k = np.arange(coef.shape[0]) * (2.0 * np.pi / (n * spacing))
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[-1] = 0.0
    return np.fft.irfft(coef * mult, n)


def stagger_deriv_matrix(n):
    """Spectral d/dtheta mapping node values to midpoint values, as a matrix.

    Includes the Nyquist sawtooth (mapped to -(N/2) (-1)^m), so the matrix has
    no spurious null vectors besides constants; this is what keeps the
    divergence-form operator free of checkerboard eigenmodes.
    """
    k = np.arange(n // 2 + 1)
    mult = 1j * k * np.exp(1j * np.pi * k / n)
    coef = np.fft.rfft(np.eye(n), axis=0)
    return np.fft.irfft(mult[:, None] * coef, n, axis=0)


def abs_sin_weights(thetas):
    """Product-quadrature weights for integrals of |sin(theta)| * smooth.

    Returns w with sum_j w_j g(theta_j) ~ int |sin theta| g dtheta, spectrally
    accurate for smooth periodic g.  Built from the analytic Fourier series of
    |sin| truncated at the grid bandwidth.
    """
    thetas = np.asarray(thetas, dtype=float)
    n = thetas.shape[0]
    h = 2.0 * np.pi / n
    kmax = n // 2
    ks = np.arange(2, kmax + 1, 2)
    # Fourier coefficients of |sin|: sigma_k = 2/(pi(1-k^2)) for even k.
    sig = 2.0 / (np.pi * (1.0 - ks.astype(float) ** 2))
    w = np.full(n, 2.0 / np.pi)
    factors = np.where(ks == kmax, 1.0, 2.0)
    w = w + np.cos(np.outer(thetas, ks)) @ (factors * sig)
    return h * w


# ---------------------------------------------------------------------------
# core surface type

class ShrinkerGeometry:
    """A discretized closed shrinker candidate with cached quantities.

    Attributes: kind, params, spacing, position (N, 2), tangent, normal,
    jacobian, profile_curvature, mean_curvature, second_fundamental_sq,
    area_weights, gauss_weights, plus assembly helpers (stiff_density,
    stiff_weights_mid) used by the spectral module.
    """

    def __init__(self, kind, params, position):
        if kind not in KINDS:
            raise GeometryError("unknown surface kind %r" % (kind,))
        params = np.asarray(params, dtype=float)
        position = np.asarray(position, dtype=float)
        n = params.shape[0]
        if n < 16 or n % 2 != 0:
            raise GridError("grid size %d must be even and >= 16" % n)
        if position.shape != (n, 2):
            raise GridError("position shape %r does not match grid" % (position.shape,))
        self.kind = kind
        self.params = params
        self.spacing = 2.0 * np.pi / n
        self.position = position
        self._cache = {}
        self._compute()

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def default_params(kind, n):
        h = 2.0 * np.pi / n
        if kind == "sphere":
            return (np.arange(n) + 0.5) * h
        return np.arange(n) * h

    @classmethod
    def from_positions(cls, kind, position, params=None):
        position = np.asarray(position, dtype=float)
        if params is None:
            params = cls.default_params(kind, position.shape[0])
        return cls(kind, params, position)

    def _compute(self):
        h = self.spacing
        pos = self.position
        xp = periodic_d1(pos, h)
        jac = np.hypot(xp[:, 0], xp[:, 1])
        if np.min(jac) <= 1e-12 * np.max(jac):
            raise GeometryError("vanishing tangent: degenerate parametrization")
        tangent = xp / jac[:, None]
        xpp = periodic_d2(pos, h)
        cross = xp[:, 0] * xpp[:, 1] - xp[:, 1] * xpp[:, 0]
        kappa = cross / jac ** 3
        normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])

        self.tangent = tangent
        self.normal = normal
        self.jacobian = jac
        self.profile_curvature = kappa
        sq = pos[:, 0] ** 2 + pos[:, 1] ** 2
        self.sq_norm = sq
        expw = np.exp(-sq / 4.0)

        if self.kind == "curve":
            self.mean_curvature = kappa.copy()
            self.second_fundamental_sq = kappa ** 2
            self.area_weights = jac * h
            self.stiff_density = expw / jac
            self.stiff_weights_mid = np.full(len(jac), h)
        else:
            r = pos[:, 0]
            if self.kind == "torus":
                if np.min(r) <= 0.0:
                    raise GeometryError("rotational profile must stay in r > 0")
                kaz = normal[:, 0] / r
                self.area_weights = 2.0 * np.pi * r * jac * h
                self.stiff_density = 2.0 * np.pi * r * expw / jac
                self.stiff_weights_mid = np.full(len(jac), h)
            else:
                self._check_axis_regular()
                sin_t = np.sin(self.params)
                ratio = r / sin_t
                if np.min(ratio) <= 0.0:
                    raise GeometryError("sphere profile has wrong radial sign pattern")
                kaz = normal[:, 0] / r
                w_sin = abs_sin_weights(self.params)
                if np.min(w_sin) <= 0.0:
                    raise GeometryError("non-positive axis quadrature weight")
                # half of the doubled cover, times the 2 pi r azimuthal factor
                self.area_weights = np.pi * w_sin * ratio * jac
                self.axis_ratio = ratio
                self.stiff_density = np.pi * ratio * expw / jac
                self.stiff_weights_mid = abs_sin_weights(self.params + 0.5 * h)
            self.azimuthal_curvature = kaz
            self.mean_curvature = kappa + kaz
            self.second_fundamental_sq = kappa ** 2 + kaz ** 2

        if np.min(self.area_weights) <= 0.0:
            raise GeometryError("non-positive area weight")
        self.gauss_weights = self.area_weights * expw

    def _check_axis_regular(self):
        pos = self.position
        mirror = pos[::-1]
        scale = np.max(np.abs(pos))
        if (np.max(np.abs(pos[:, 0] + mirror[:, 0])) > 1e-6 * scale
                or np.max(np.abs(pos[:, 1] - mirror[:, 1])) > 1e-6 * scale):
            raise GeometryError("sphere profile violates axis regularity "
                                "(doubled meridian must close through the axis)")

    # -- derived quantities --------------------------------------------------

    @property
    def n_nodes(self):
        return self.params.shape[0]

    @property
    def surface_dim(self):
        return 1 if self.kind == "curve" else 2

    def support(self):
        """<x, n> at every node (profile-plane inner product)."""
        return np.sum(self.position * self.normal, axis=1)

    def shrinker_residual_values(self):
        return self.mean_curvature - 0.5 * self.support()

    def principal_curvature_max(self):
        k = np.abs(self.profile_curvature)
        if self.kind != "curve":
            k = np.maximum(k, np.abs(self.azimuthal_curvature))
        return k

    def tubular_radius(self):
        """Half the lesser of the focal distance and the strand separation."""
        if "tubular" in self._cache:
            return self._cache["tubular"]
        focal = 1.0 / np.max(self.principal_curvature_max())
        pts = self.position.copy()
        if self.kind == "sphere":
            pts[:, 0] = np.abs(pts[:, 0])
        n = self.n_nodes
        idx = np.arange(n)
        sep = np.abs(idx[:, None] - idx[None, :])
        sep = np.minimum(sep, n - sep)
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        far = sep >= n // 8
        if self.kind == "sphere":
            # exclude deck-transform twins (i, n-1-i) of the doubled meridian
            msep = np.abs((idx[:, None] + idx[None, :] - (n - 1)) % n)
            msep = np.minimum(msep, n - msep)
            far &= msep >= n // 8
        strand = np.sqrt(np.min(d2[far])) if np.any(far) else np.inf
        rad = 0.5 * min(focal, strand)
        self._cache["tubular"] = rad
        return rad


class GraphQuantities:
    """Pulled-back quantities of a normal graph (Lemma A.3 data)."""

    def __init__(self, speed_w, area_ratio_nu, support_eta, mean_curvature_hu,
                 normal_u, geometry):
        self.speed_w = speed_w
        self.area_ratio_nu = area_ratio_nu
        self.support_eta = support_eta
        self.mean_curvature_hu = mean_curvature_hu
        self.normal_u = normal_u
        self.geometry = geometry


class GraphFunction:
    """Scalar function on a shrinker's parameter grid (a normal graph)."""

    def __init__(self, base, values, coeffs=None):
        self.base = base
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (base.n_nodes,):
            raise GridError("graph values do not match the base grid")
        self.coeffs = coeffs

    @classmethod
    def zero(cls, base):
        return cls(base, np.zeros(base.n_nodes))

    def copy(self):
        return GraphFunction(self.base, self.values.copy(), self.coeffs)


# ---------------------------------------------------------------------------
# constructors

def build_circle(radius, n):
    """Circle of the given radius; quantities overridden with closed forms."""
    if radius <= 0.0:
        raise GeometryError("radius must be positive")
    if n < 16 or n % 2 != 0:
        raise GridError("grid size %d must be even and >= 16" % n)
    params = ShrinkerGeometry.default_params("curve", n)
    pos = radius * np.column_stack([np.cos(params), np.sin(params)])
    geom = ShrinkerGeometry("curve", params, pos)
    # exact closed forms for the canonical instance
    geom.tangent = np.column_stack([-np.sin(params), np.cos(params)])
    geom.normal = np.column_stack([np.cos(params), np.sin(params)])
    geom.jacobian = np.full(n, radius)
    geom.profile_curvature = np.full(n, 1.0 / radius)
    geom.mean_curvature = np.full(n, 1.0 / radius)
    geom.second_fundamental_sq = np.full(n, 1.0 / radius ** 2)
    geom.sq_norm = np.full(n, radius ** 2)
    geom.area_weights = np.full(n, radius * geom.spacing)
    geom.gauss_weights = geom.area_weights * np.exp(-radius ** 2 / 4.0)
    geom.stiff_density = np.full(n, np.exp(-radius ** 2 / 4.0) / radius)
    return geom


def build_sphere_profile(radius, n):
    """Round sphere as a doubled meridian profile with staggered nodes."""
    if radius <= 0.0:
        raise GeometryError("radius must be positive")
    if n < 16 or n % 2 != 0:
        raise GridError("grid size %d must be even and >= 16" % n)
    params = ShrinkerGeometry.default_params("sphere", n)
    pos = radius * np.column_stack([np.sin(params), -np.cos(params)])
    geom = ShrinkerGeometry("sphere", params, pos)
    geom.tangent = np.column_stack([np.cos(params), np.sin(params)])
    geom.normal = pos / radius
    geom.jacobian = np.full(n, radius)
    geom.profile_curvature = np.full(n, 1.0 / radius)
    geom.azimuthal_curvature = np.full(n, 1.0 / radius)
    geom.mean_curvature = np.full(n, 2.0 / radius)
    geom.second_fundamental_sq = np.full(n, 2.0 / radius ** 2)
    geom.sq_norm = np.full(n, radius ** 2)
    geom.axis_ratio = np.full(n, radius)
    w_sin = abs_sin_weights(params)
    geom.area_weights = np.pi * w_sin * radius ** 2
    geom.gauss_weights = geom.area_weights * np.exp(-radius ** 2 / 4.0)
    geom.stiff_density = np.full(n, np.pi * np.exp(-radius ** 2 / 4.0))
    return geom


def geometric_quantities(positions, kind, params=None):
    """(normal, H, |A|^2, area weights) of a closed discrete curve/profile."""
    geom = ShrinkerGeometry.from_positions(kind, positions, params)
    return (geom.normal, geom.mean_curvature, geom.second_fundamental_sq,
            geom.area_weights)


# ---------------------------------------------------------------------------
# graphs over a base

def _graph_values(u):
    if isinstance(u, GraphFunction):
        return u.values
    return np.asarray(u, dtype=float)


def graph_surface(base, u, check=True):
    """Positions of the normal graph {x + u(x) n(x)} over the base."""
    vals = _graph_values(u)
    if vals.shape != (base.n_nodes,):
        raise GridError("graph values do not match the base grid")
    if check:
        sup = np.max(np.abs(vals))
        if sup > base.tubular_radius():
            raise GraphError("graph sup-norm %.3e exceeds tubular radius %.3e"
                             % (sup, base.tubular_radius()))
    return base.position + vals[:, None] * base.normal


def graph_geometry(base, u, check=True):
    pos = graph_surface(base, u, check=check)
    return ShrinkerGeometry(base.kind, base.params, pos)


def graph_quantities(base, u, check=True):
    """Pulled-back w, nu, eta, H, n of the graph surface, at base nodes."""
    gg = graph_geometry(base, u, check=check)
    dots = np.sum(base.normal * gg.normal, axis=1)
    if np.min(dots) <= 0.0:
        raise GraphError("graph normal turned perpendicular to the base normal")
    speed_w = 1.0 / dots
    nu = (gg.jacobian / base.jacobian)
    if base.kind == "torus":
        nu = nu * (gg.position[:, 0] / base.position[:, 0])
    elif base.kind == "sphere":
        nu = nu * (gg.axis_ratio / base.axis_ratio)
    eta = np.sum(gg.position * gg.normal, axis=1)
    return GraphQuantities(speed_w, nu, eta, gg.mean_curvature, gg.normal, gg)


# ---------------------------------------------------------------------------
# Gaussian-weighted integrals

def f_functional(geom_or_positions, kind=None):
    """Gaussian area F(M) = int exp(-|x|^2/4) dmu (unnormalized convention)."""
    geom = geom_or_positions
    if not isinstance(geom, ShrinkerGeometry):
        if kind is None:
            raise GeometryError("kind required when passing raw positions")
        geom = ShrinkerGeometry.from_positions(kind, geom_or_positions)
    return float(np.sum(geom.gauss_weights))


def f_functional_normalized(geom):
    """Secondary field: F divided by (4 pi)^(n/2) for cross-literature use."""
    return f_functional(geom) / (4.0 * np.pi) ** (geom.surface_dim / 2.0)


def gaussian_inner(u, v, geom):
    uv = _graph_values(u)
    vv = _graph_values(v)
    if uv.shape != (geom.n_nodes,) or vv.shape != (geom.n_nodes,):
        raise GridError("inner-product arguments do not match the grid")
    return float(np.sum(uv * vv * geom.gauss_weights))


def gaussian_norm(u, geom):
    return float(np.sqrt(max(gaussian_inner(u, u, geom), 0.0)))


# ---------------------------------------------------------------------------
# surface files

def save_geometry(geom, path):
    """CSV with a (kind, N) header row and (param, x0, x1) node rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([geom.kind, str(geom.n_nodes)])
        writer.writerow(["param", "x0", "x1"])
        for j in range(geom.n_nodes):
            writer.writerow([repr(float(geom.params[j])),
                             repr(float(geom.position[j, 0])),
                             repr(float(geom.position[j, 1]))])


def load_geometry(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        kind = head[0]
        n = int(head[1])
        next(reader)  # column header
        rows = [(float(a), float(b), float(c)) for a, b, c in reader]
    if len(rows) != n:
        raise GridError("surface file row count %d does not match header %d"
                        % (len(rows), n))
    data = np.array(rows)
    return ShrinkerGeometry(kind, data[:, 0], data[:, 1:3])


def geometry_to_csv_bytes(geom):
    buf = io.StringIO(newline="")
    writer = csv.writer(buf)
    writer.writerow([geom.kind, str(geom.n_nodes)])
    writer.writerow(["param", "x0", "x1"])
    for j in range(geom.n_nodes):
        writer.writerow([repr(float(geom.params[j])), repr(float(geom.position[j, 0])),
                         repr(float(geom.position[j, 1]))])
    return buf.getvalue().encode("utf-8")
