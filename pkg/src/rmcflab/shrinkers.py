"""Shrinker solving: residual certificates, torus shooting, Newton refinement.

The rotational shrinker profile satisfies, in arclength parametrization,

    r' = cos(psi),  z' = sin(psi),
    psi' = (r sin(psi) - z cos(psi))/2 - sin(psi)/r,

which is H = <x, n>/2 written for the profile angle psi.  A closed torus
profile is found by shooting from the outer equator (r0, 0) with psi = pi/2
and matching the angle at the next z = 0 crossing, then mirrored across z = 0
and polished by Newton iteration on the discrete residual.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import RefinementError, ShootingError
from .geometry import GraphFunction, ShrinkerGeometry
from .spectral import assemble_linearized_operator, eigendecompose


class ShootingConfig:
    """Parameters for the torus profile shooting solve."""

    def __init__(self, initial_radius_guess=3.3, tolerance=1e-12,
                 max_bisection=80, n=256):
        if initial_radius_guess <= 0.0:
            raise ShootingError("initial radius guess must be positive")
        if not 0.0 < tolerance <= 1e-6:
            raise ShootingError("integration tolerance must lie in (0, 1e-6]")
        self.initial_radius_guess = initial_radius_guess
        self.tolerance = tolerance
        self.max_bisection = max_bisection
        self.n = n


def shrinker_residual(geometry):
    """Per-node residual H - <x, n>/2 as a graph function."""
    return GraphFunction(geometry, geometry.shrinker_residual_values())


def _profile_rhs(_s, state):
    r, z, psi = state
    sp, cp = np.sin(psi), np.cos(psi)
    return [cp, sp, 0.5 * (r * sp - z * cp) - sp / r]


def _shoot_half(r0, tol):
    """Integrate from the outer equator to the next z = 0 crossing."""

    def crossing(_s, state):
        return state[1]

    crossing.terminal = True
    crossing.direction = -1
    sol = solve_ivp(_profile_rhs, (0.0, 40.0), [r0, 0.0, np.pi / 2.0],
                    rtol=tol, atol=tol, dense_output=True, events=crossing)
    if not sol.t_events[0].size:
        raise ShootingError("profile from r0=%.6f never returned to z = 0" % r0)
    return sol, float(sol.t_events[0][0])


def _closure_angle(r0, tol):
    sol, s_end = _shoot_half(r0, tol)
    psi_end = sol.sol(s_end)[2]
    return psi_end - 1.5 * np.pi


def solve_torus_profile(config=None):
    """Closed embedded rotational shrinker profile (Angenent-type torus)."""
    config = config or ShootingConfig()
    tol = config.tolerance
    guess = config.initial_radius_guess
    # Keep the scan above the sphere separatrix (outer radius 2), where the
    # closure angle has a spurious zero; the torus root has a short half-arc.
    scan = np.linspace(max(0.75 * guess, 2.2), 1.45 * guess, 25)
    vals = []
    for r0 in scan:
        try:
            vals.append(_closure_angle(r0, 1e-9))
        except ShootingError:
            vals.append(np.nan)
    bracket = None
    for a, b, fa, fb in zip(scan[:-1], scan[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0.0:
            bracket = (a, b)
            break
    if bracket is None:
        raise ShootingError("no sign change of the closure angle in the "
                            "scanned bracket %.3f..%.3f" % (scan[0], scan[-1]))
    r_star = brentq(lambda r: _closure_angle(r, tol), *bracket,
                    xtol=1e-13, rtol=1e-15, maxiter=config.max_bisection)
    sol, s_end = _shoot_half(r_star, tol)

    n = config.n
    total = 2.0 * s_end
    pos = np.zeros((n, 2))
    for j in range(n // 2 + 1):
        r, z, _ = sol.sol(total * j / n)
        pos[j] = (r, z)
    for j in range(n // 2 + 1, n):
        pos[j] = (pos[n - j, 0], -pos[n - j, 1])
    pos[0, 1] = 0.0
    pos[n // 2, 1] = 0.0
    geom = ShrinkerGeometry.from_positions("torus", pos)
    return refine_shrinker(geom, symmetrize=True)


def refine_shrinker(geometry, tol=1e-10, max_iter=40, kernel_tol=1e-6,
                    symmetrize=False):
    """Newton iteration on the residual as a normal-graph correction.

    Each step solves the linearization (dResidual = -L) in the complement of
    near-kernel eigenspaces (|lambda| < kernel_tol), then rebuilds the surface.
    """
    cur = geometry
    res = cur.shrinker_residual_values()
    best = float(np.max(np.abs(res)))
    if best <= tol:
        return cur
    if best > 0.75:
        raise RefinementError("residual %.3e too large for Newton" % best)
    n = cur.n_nodes
    mirror = (-np.arange(n)) % n
    for _ in range(max_iter):
        dec = eigendecompose(assemble_linearized_operator(cur))
        coeffs = dec.coefficients(res)
        lam = dec.eigenvalues
        keep = np.abs(lam) >= kernel_tol
        step = np.zeros_like(coeffs)
        step[keep] = coeffs[keep] / lam[keep]
        du = dec.reconstruct(step)
        if symmetrize:
            du = 0.5 * (du + du[mirror])
        cand = ShrinkerGeometry(cur.kind, cur.params,
                                cur.position + du[:, None] * cur.normal)
        cand_res = cand.shrinker_residual_values()
        cand_max = float(np.max(np.abs(cand_res)))
        if cand_max >= best and best <= 1e-9:
            break
        cur, res, best = cand, cand_res, cand_max
        if best <= tol:
            break
    if best > 1e-8:
        raise RefinementError("Newton stalled at residual %.3e" % best)
    return cur


_TORUS_CACHE = {}


def angenent_torus(n=256):
    """Cached default torus shrinker at the given resolution."""
    if n not in _TORUS_CACHE:
        _TORUS_CACHE[n] = solve_torus_profile(ShootingConfig(n=n))
    return _TORUS_CACHE[n]
