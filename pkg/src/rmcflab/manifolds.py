"""Invariant-manifold charts by Lyapunov-Perron fixed-point iteration.

Trajectories live in the eigenbasis of the base operator (a Galerkin system of
modal coefficients).  A chart solve prescribes the main-block value at the
anchor time and closes the complement blocks with Duhamel integrals toward the
far ends of the horizon; the exponential kernels are evaluated exactly per
grid interval (piecewise-linear quadrature of the nonlinearity), so the
discretization error sits entirely in the nonlinearity samples.

Chart kinds: stable (forward horizon), unstable (backward horizon), center
(two-sided), center_unstable (center solve with the center and unstable
blocks merged, backward horizon).
"""

import numpy as np

from .errors import (ContractionError, GapError, GridError, HorizonError)
from .geometry import GraphFunction
from .flow import graph_flow_rhs
from .spectral import decomposition, split

DEFAULT_HORIZON = 14.0
DEFAULT_DT = 0.05


def phi_one(z):
    """(e^z - 1)/z, stable for small z."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    out = np.where(small, 1.0 + z / 2.0 + z ** 2 / 6.0, np.expm1(zs) / zs)
    return out


def phi_two(z):
    """(e^z - 1 - z)/z^2, stable for small z."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    out = np.where(small, 0.5 + z / 6.0 + z ** 2 / 24.0,
                   (np.expm1(zs) - zs) / zs ** 2)
    return out


class ModalSystem:
    """Truncated graph-flow nonlinearity in modal coordinates."""

    def __init__(self, base, truncation):
        self.base = base
        self.truncation = truncation
        self.dec = decomposition(base)
        self.lam = self.dec.eigenvalues

    @property
    def n_modes(self):
        return self.dec.n_modes

    def nonlinearity(self, c):
        """Modal coefficients of chi(||c||/delta) Q at the modal point c."""
        chi = self.truncation.chi(float(np.linalg.norm(c)))
        if chi == 0.0:
            return np.zeros_like(c)
        u = self.dec.reconstruct(c)
        rhs = graph_flow_rhs(self.base, u)
        return chi * (self.dec.coefficients(rhs) - self.lam * c)


class LPOrbit:
    """Fixed-point trajectory of a Lyapunov-Perron solve."""

    def __init__(self, times, coeffs, anchor_index, roles, shift, sweeps,
                 residual, tail_bound, contraction_ratio, dec=None):
        self.times = times
        self.coeffs = coeffs            # (n_times, n_modes)
        self.anchor_index = anchor_index
        self.roles = roles
        self.shift = shift
        self.sweeps = sweeps
        self.residual = residual
        self.tail_bound = tail_bound
        self.contraction_ratio = contraction_ratio
        self.dec = dec

    def norms(self):
        return np.linalg.norm(self.coeffs, axis=1)

    def anchor_value(self):
        return self.coeffs[self.anchor_index]

    def complement_value(self):
        """w-value: complement components of the anchor state."""
        mask = ~self.roles["main"]
        out = np.zeros(self.coeffs.shape[1])
        out[mask] = self.coeffs[self.anchor_index, mask]
        return out

    def values_at_anchor(self):
        if self.dec is None:
            raise GridError("orbit has no attached decomposition")
        return GraphFunction(self.dec.geometry,
                             self.dec.reconstruct(self.anchor_value()))


def lp_fixed_point(lam, q_func, roles, c0, t_grid, anchor_index,
                   shift=0.0, tol=1e-12, max_sweeps=60):
    """Jacobi-style Picard iteration for a Lyapunov-Perron operator.

    ``roles`` maps 'main' / 'from_start' / 'from_end' to boolean mode masks:
    the main block is prescribed at the anchor and carried by its own
    semigroup plus Duhamel terms; 'from_start' blocks integrate from the grid
    start (past tail dropped), 'from_end' blocks from the grid end (future
    tail dropped).  The nonlinearity enters as e^{eps t} q(e^{-eps t} c).
    """
    lam = np.asarray(lam, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    n_modes = len(lam)
    n_t = len(t_grid)
    if n_t < 3:
        raise GridError("Lyapunov-Perron grid needs at least 3 points")
    dt = t_grid[1] - t_grid[0]
    if np.max(np.abs(np.diff(t_grid) - dt)) > 1e-12 * max(abs(dt), 1.0):
        raise GridError("Lyapunov-Perron grid must be uniform")
    main = roles.get("main", np.zeros(n_modes, dtype=bool))
    fstart = roles.get("from_start", np.zeros(n_modes, dtype=bool))
    fend = roles.get("from_end", np.zeros(n_modes, dtype=bool))
    if np.any(main & fstart) or np.any(main & fend) or np.any(fstart & fend):
        raise GridError("mode roles must be disjoint")
    if not np.all(main | fstart | fend):
        raise GridError("every mode needs a role")

    # clip the kernel arguments: backward kernels are only ever applied to
    # modes with nonnegative rates, so the clipped entries are never read
    z = np.clip(lam * dt, -700.0, 50.0)
    e_fwd = np.exp(z)
    w_fwd_prev = dt * (phi_one(z) - phi_two(z))
    w_fwd_next = dt * phi_two(z)
    zm = -z
    e_bwd = np.exp(zm)
    w_bwd_here = dt * phi_two(zm)
    w_bwd_next = dt * (phi_one(zm) - phi_two(zm))

    shifts = np.exp(shift * t_grid)
    coeffs = np.zeros((n_t, n_modes))
    coeffs[:, main] = (np.exp(np.outer(t_grid - t_grid[anchor_index],
                                       lam[main])) * c0[main][None, :])
    qs = np.empty_like(coeffs)
    ratios = []
    prev_dist = None
    for sweep in range(1, max_sweeps + 1):
        for k in range(n_t):
            qs[k] = shifts[k] * q_func(t_grid[k], coeffs[k] / shifts[k])
        new = np.zeros_like(coeffs)
        # main block: semigroup from the anchor plus Duhamel both ways
        new[anchor_index, main] = c0[main]
        for k in range(anchor_index, n_t - 1):
            new[k + 1, main] = (e_fwd * new[k] + w_fwd_prev * qs[k]
                                + w_fwd_next * qs[k + 1])[main]
        for k in range(anchor_index - 1, -1, -1):
            new[k, main] = (e_bwd * new[k + 1] - w_bwd_here * qs[k]
                            - w_bwd_next * qs[k + 1])[main]
        # decaying blocks integrated up from the grid start
        if np.any(fstart):
            for k in range(n_t - 1):
                new[k + 1, fstart] = (e_fwd * new[k] + w_fwd_prev * qs[k]
                                      + w_fwd_next * qs[k + 1])[fstart]
        # growing blocks integrated down from the grid end
        if np.any(fend):
            for k in range(n_t - 2, -1, -1):
                new[k, fend] = (e_bwd * new[k + 1] - w_bwd_here * qs[k]
                                - w_bwd_next * qs[k + 1])[fend]
        dist = float(np.max(np.linalg.norm(new - coeffs, axis=1)))
        coeffs = new
        if prev_dist is not None and prev_dist > 0.0:
            ratios.append(dist / prev_dist)
        prev_dist = dist
        scale = max(float(np.max(np.linalg.norm(coeffs, axis=1))), 1e-300)
        if dist <= tol * max(scale, 1.0):
            break
    else:
        raise ContractionError(
            "no convergence in %d sweeps; last ratio %.3f"
            % (max_sweeps, ratios[-1] if ratios else np.nan))
    if len(ratios) >= 2 and min(ratios[1:]) > 0.5:
        raise ContractionError("iterate distance not halving: ratio %.3f"
                               % min(ratios[1:]))

    # dropped-tail certificate at the open ends
    tail = 0.0
    if np.any(fend):
        rate = np.maximum(lam[fend], 0.05)
        tail = max(tail, float(np.max(np.abs(qs[-1, fend]) / rate)))
    if np.any(fstart):
        rate = np.maximum(-lam[fstart], 0.05)
        tail = max(tail, float(np.max(np.abs(qs[0, fstart]) / rate)))
    if tail > 1e-10:
        raise HorizonError("dropped-tail bound %.3e exceeds 1e-10" % tail)

    ratio = float(max(ratios[1:], default=0.0)) if len(ratios) > 1 else 0.0
    return LPOrbit(t_grid, coeffs, anchor_index, roles, shift, sweep,
                   dist, tail, ratio)


# ---------------------------------------------------------------------------
# chart solvers on a base geometry

def _three_way(base):
    dec = decomposition(base)
    return dec, split(dec, "three")


def _default_shift(lam, main):
    """0.05 times the dichotomy gap between the main block and the rest."""
    if np.all(main) or not np.any(main):
        return 0.0
    gap = float(np.min(np.abs(lam[main][:, None] - lam[~main][None, :])))
    return 0.05 * gap


def _as_modal(u, dec):
    if isinstance(u, GraphFunction) or (np.ndim(u) == 1
                                        and len(u) == dec.n_modes):
        if isinstance(u, GraphFunction):
            return dec.coefficients(u)
        return np.asarray(u, dtype=float)
    raise GridError("expected a modal coefficient vector or GraphFunction")


def _solve_chart(base, truncation, c_in, roles_of, t_grid, anchor_index,
                 shift=None, tol=1e-12, max_sweeps=60):
    system = ModalSystem(base, truncation)
    dec = system.dec
    c0 = _as_modal(c_in, dec)
    roles = roles_of(dec)
    main = roles["main"]
    stray = float(np.linalg.norm(c0[~main]))
    if stray > 1e-12 * max(float(np.linalg.norm(c0)), 1.0):
        raise GridError("input point has complement components (%.3e)" % stray)
    c0 = np.where(main, c0, 0.0)
    eps = _default_shift(dec.eigenvalues, main) if shift is None else shift

    def q_func(_t, c):
        return system.nonlinearity(c)

    orbit = lp_fixed_point(dec.eigenvalues, q_func, roles, c0, t_grid,
                           anchor_index, shift=eps, tol=tol,
                           max_sweeps=max_sweeps)
    orbit.dec = dec
    return orbit, orbit.complement_value()


def lp_stable(base, truncation, u1_0, horizon=DEFAULT_HORIZON, dt=DEFAULT_DT,
              shift=None, **kwargs):
    """Stable-chart solve: main block prescribed at t = 0, forward horizon."""
    def roles_of(dec):
        sp3 = split(dec, "three")
        return {"main": sp3.mask("stable"),
                "from_end": sp3.mask("unstable") | sp3.mask("center")}
    n = int(round(horizon / dt))
    t_grid = dt * np.arange(n + 1)
    return _solve_chart(base, truncation, u1_0, roles_of, t_grid, 0,
                        shift=shift, **kwargs)


def lp_unstable(base, truncation, u2_0, horizon=DEFAULT_HORIZON,
                dt=DEFAULT_DT, shift=None, **kwargs):
    """Unstable-chart solve: main block prescribed at t = 0, backward horizon."""
    def roles_of(dec):
        sp3 = split(dec, "three")
        return {"main": sp3.mask("unstable"),
                "from_start": sp3.mask("stable") | sp3.mask("center")}
    n = int(round(horizon / dt))
    t_grid = dt * np.arange(n + 1) - horizon
    return _solve_chart(base, truncation, u2_0, roles_of, t_grid, n,
                        shift=shift, **kwargs)


def lp_center(base, truncation, uc_0, horizon=DEFAULT_HORIZON, dt=DEFAULT_DT,
              shift=None, **kwargs):
    """Center-chart solve on a two-sided horizon.

    With an empty discrete center space this returns the trivial orbit.
    """
    dec = decomposition(base)
    sp3 = split(dec, "three")
    if not np.any(sp3.mask("center")):
        n = int(round(horizon / dt))
        t_grid = dt * np.arange(2 * n + 1) - horizon
        roles = {"main": sp3.mask("center"),
                 "from_start": sp3.mask("stable"),
                 "from_end": sp3.mask("unstable")}
        orbit = LPOrbit(t_grid, np.zeros((len(t_grid), dec.n_modes)), n,
                        roles, 0.0, 0, 0.0, 0.0, 0.0, dec)
        return orbit, orbit.complement_value()

    def roles_of(dec_):
        s3 = split(dec_, "three")
        return {"main": s3.mask("center"),
                "from_start": s3.mask("stable"),
                "from_end": s3.mask("unstable")}
    n = int(round(horizon / dt))
    t_grid = dt * np.arange(2 * n + 1) - horizon
    return _solve_chart(base, truncation, uc_0, roles_of, t_grid, n,
                        shift=shift, **kwargs)


def lp_center_unstable(base, truncation, ucu_0, horizon=DEFAULT_HORIZON,
                       dt=DEFAULT_DT, shift=None, **kwargs):
    """Center-unstable solve: center and unstable blocks merged as main."""
    def roles_of(dec):
        sp3 = split(dec, "three")
        return {"main": sp3.mask("center") | sp3.mask("unstable"),
                "from_start": sp3.mask("stable")}
    n = int(round(horizon / dt))
    t_grid = dt * np.arange(n + 1) - horizon
    return _solve_chart(base, truncation, ucu_0, roles_of, t_grid, n,
                        shift=shift, **kwargs)


_CHART_SOLVERS = {
    "stable": lp_stable,
    "unstable": lp_unstable,
    "center": lp_center,
    "center_unstable": lp_center_unstable,
}


def chart_main_mask(base, kind):
    dec, sp3 = _three_way(base)
    if kind == "stable":
        return sp3.mask("stable")
    if kind == "unstable":
        return sp3.mask("unstable")
    if kind == "center":
        return sp3.mask("center")
    if kind == "center_unstable":
        return sp3.mask("center") | sp3.mask("unstable")
    raise GridError("unknown chart kind %r" % (kind,))


class ManifoldChart:
    """Sampled chart map with Lipschitz / tangency / dynamics certificates."""

    def __init__(self, kind, base, truncation, main_mask, samples,
                 certificates, failures=None):
        self.kind = kind
        self.base = base
        self.truncation = truncation
        self.main_mask = main_mask
        self.samples = samples          # list of dicts: input, w, radius, orbit
        self.certificates = certificates
        self.failures = failures or []

    def lipschitz_constant(self):
        worst = 0.0
        for i in range(len(self.samples)):
            for j in range(i + 1, len(self.samples)):
                dx = np.linalg.norm(self.samples[i]["input"]
                                    - self.samples[j]["input"])
                if dx == 0.0:
                    continue
                dw = np.linalg.norm(self.samples[i]["w"]
                                    - self.samples[j]["w"])
                worst = max(worst, dw / dx)
        return worst

    def tangency_slope(self):
        radii = sorted({s["radius"] for s in self.samples})
        if len(radii) < 2:
            return np.nan
        r_small, r_big = radii[0], radii[1]
        slopes = []
        by_dir = {}
        for s in self.samples:
            key = tuple(np.round(s["direction"], 12))
            by_dir.setdefault(key, {})[s["radius"]] = s
        for pair in by_dir.values():
            if r_small in pair and r_big in pair:
                w_s = np.linalg.norm(pair[r_small]["w"])
                w_b = np.linalg.norm(pair[r_big]["w"])
                if w_s > 0.0 and w_b > 0.0:
                    slopes.append(np.log(w_b / w_s) / np.log(r_big / r_small))
        return float(np.min(slopes)) if slopes else np.nan


def chart_build(kind, base, truncation, radii=(1e-3, 5e-4), n_samples=16,
                seed=0, horizon=DEFAULT_HORIZON, dt=DEFAULT_DT, shift=None):
    """Sweep a pointwise chart solver over sampled inputs, with certificates."""
    if n_samples < 1:
        raise GridError("chart needs at least one sample")
    solver = _CHART_SOLVERS.get(kind)
    if solver is None:
        raise GridError("unknown chart kind %r" % (kind,))
    dec = decomposition(base)
    main = chart_main_mask(base, kind)
    if not np.any(main):
        # empty main block (no discrete center modes): the chart is the
        # single point w = 0 and all certificates are trivial
        orbit, w = solver(base, truncation, np.zeros(dec.n_modes),
                          horizon=horizon, dt=dt, shift=shift)
        samples = [{"input": np.zeros(dec.n_modes), "w": w, "radius": 0.0,
                    "direction": np.zeros(0), "orbit": orbit}]
        certificates = {"max_fixed_point_residual": float(orbit.residual),
                        "lipschitz": 0.0, "tangency_slope": np.nan,
                        "max_contraction_ratio": 0.0, "decay_rates": [],
                        "n_failures": 0}
        return ManifoldChart(kind, base, truncation, main, samples,
                             certificates, [])
    rng = np.random.default_rng(seed)
    idx = np.flatnonzero(main)
    directions = []
    for _ in range(n_samples):
        d = rng.standard_normal(len(idx))
        # damp high modes so samples are smooth graph directions
        d = d * np.exp(-0.1 * np.arange(len(idx)))
        d /= np.linalg.norm(d)
        directions.append(d)

    samples = []
    failures = []
    residuals = []
    orbits = []
    for d in directions:
        for r in sorted(radii, reverse=True):
            c0 = np.zeros(dec.n_modes)
            c0[idx] = r * d
            try:
                orbit, w = solver(base, truncation, c0, horizon=horizon,
                                  dt=dt, shift=shift)
            except Exception as err:   # noqa: BLE001 - partial chart reporting
                failures.append({"radius": r, "error": str(err)})
                continue
            samples.append({"input": c0, "w": w, "radius": r,
                            "direction": d, "orbit": orbit})
            residuals.append(orbit.residual)
            orbits.append(orbit)

    certificates = {}
    if samples:
        chart = ManifoldChart(kind, base, truncation, main, samples,
                              certificates, failures)
        certificates["max_fixed_point_residual"] = float(np.max(residuals))
        certificates["lipschitz"] = chart.lipschitz_constant()
        certificates["tangency_slope"] = chart.tangency_slope()
        certificates["max_contraction_ratio"] = float(
            max(o.contraction_ratio for o in orbits))
        certificates["decay_rates"] = _orbit_rates(orbits, kind)
        certificates["n_failures"] = len(failures)
        return chart
    raise ContractionError("all %d chart samples failed" % (n_samples,))


def _orbit_rates(orbits, kind):
    """Fitted exponential rates of the sampled orbits (sign per chart kind)."""
    rates = []
    for o in orbits:
        norms = o.norms()
        keep = norms > 1e-300
        if np.sum(keep) < 2:
            continue
        t = o.times[keep]
        slope = np.polyfit(t, np.log(norms[keep]), 1)[0]
        rates.append(slope)
    return rates


def positivity_constant(dec):
    """Smallest K certifying positivity inside the cone at the chart scale.

    K = 2 max_i>=2 ||phi_i||_inf / min phi_1; if ||u-|| <= ||u+||/K the
    reconstructed graph is pointwise positive for positive phi_1 content.
    """
    phi1 = dec.eigenfunctions[:, 0]
    lo = float(np.min(phi1))
    if lo <= 0.0:
        phi1 = -phi1
        lo = float(np.min(phi1))
    if lo <= 0.0:
        raise GapError("leading eigenfunction is not signed")
    comp = float(np.max(np.abs(dec.eigenfunctions[:, 1:])))
    return 2.0 * comp / lo
