"""Dynamical experiments: cones, Harnack/Li-Yau, drift, entropy, pipeline.

Each experiment returns an ExperimentReport: named assertions with their
tolerances and measured values, fitted constants, and the raw series needed
for plots.  Everything is deterministic given (config, seed).
"""

import numpy as np
import scipy.optimize
import scipy.special

from .errors import CompositionError, GeometryError, GridError
from .flow import (FlowTrajectory, TruncationConfig, rmcf_over_flow,
                   truncated_rmcf, variational_flow)
from .geometry import (GraphFunction, ShrinkerGeometry, f_functional,
                       gaussian_norm, graph_geometry)
from .manifolds import lp_stable, lp_unstable
from .spectral import decomposition, norm_suite, split


class ExperimentReport:
    """Assertion list + fitted constants + series for one experiment."""

    def __init__(self, name, inputs=None):
        self.name = name
        self.inputs = dict(inputs or {})
        self.assertions = []
        self.constants = {}
        self.series = {}
        self.warnings = []

    def check(self, name, passed, tolerance=None, value=None):
        self.assertions.append({
            "name": name, "passed": bool(passed),
            "tolerance": tolerance,
            "value": None if value is None else float(value)})
        return bool(passed)

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)

    def as_dict(self):
        return {"name": self.name, "inputs": self.inputs,
                "assertions": self.assertions, "constants": self.constants,
                "warnings": self.warnings, "passed": self.passed}


def _rng(seed, trial=0):
    return np.random.default_rng(np.random.SeedSequence(seed,
                                                        spawn_key=(trial,)))


def smooth_random(dec, rng, damp=0.25, norm=1.0):
    """Random function with exponentially damped modal content."""
    c = rng.standard_normal(dec.n_modes) * np.exp(-damp * np.arange(dec.n_modes))
    u = dec.reconstruct(c)
    return u * (norm / gaussian_norm(u, dec.geometry))


# ---------------------------------------------------------------------------
# transplantation and graph composition

def transplant(f, g):
    """Re-label a function on the graph of f as a function on f's base."""
    vals = g.values if isinstance(g, GraphFunction) else np.asarray(g, float)
    if vals.shape != (f.base.n_nodes,):
        raise GridError("transplant arguments do not share the grid")
    return GraphFunction(f.base, vals.copy())


def _trig_eval(coef, n, theta, deriv=0):
    """Evaluate a trig interpolant (rfft coefficients) and derivatives."""
    k = np.arange(coef.shape[0])
    fac = (1j * k) ** deriv
    if n % 2 == 0 and deriv % 2 == 1:
        fac = fac.copy()
        fac[-1] = 0.0
    weights = np.ones(coef.shape[0])
    weights[1:] = 2.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return np.real(np.sum(weights * fac * coef * np.exp(1j * k * theta))) / n


def compose_graphs(base, f, g, max_newton=40, tol=1e-13):
    """Express the graph of g over the graph of f as one graph over the base.

    Per base node, a 1D Newton solve finds the parameter at which the
    composed surface crosses that node's normal line.
    """
    fv = f.values if isinstance(f, GraphFunction) else np.asarray(f, float)
    gv = g.values if isinstance(g, GraphFunction) else np.asarray(g, float)
    mid = graph_geometry(base, fv)
    comp = mid.position + gv[:, None] * mid.normal
    n = base.n_nodes
    cx = np.fft.rfft(comp[:, 0])
    cy = np.fft.rfft(comp[:, 1])

    out = np.empty(n)
    tub = base.tubular_radius()
    for i in range(n):
        th = base.params[i]
        xi = base.position[i]
        ti = base.tangent[i]
        ni = base.normal[i]
        for _ in range(max_newton):
            p = np.array([_trig_eval(cx, n, th), _trig_eval(cy, n, th)])
            h = np.dot(p - xi, ti)
            if abs(h) <= tol * max(1.0, np.linalg.norm(xi)):
                break
            dp = np.array([_trig_eval(cx, n, th, 1), _trig_eval(cy, n, th, 1)])
            slope = np.dot(dp, ti)
            if slope == 0.0:
                raise CompositionError("flat tangential residual at node %d" % i)
            th = th - h / slope
        else:
            raise CompositionError("projection Newton stalled at node %d" % i)
        out[i] = np.dot(p - xi, ni)
        if abs(out[i]) > tub:
            raise CompositionError("composed graph leaves the tubular "
                                   "neighbourhood at node %d" % i)
    return GraphFunction(base, out)


# ---------------------------------------------------------------------------
# entropy

class EntropyResult:
    def __init__(self, value, x0, t0, trace):
        self.value = value
        self.x0 = np.asarray(x0, dtype=float)
        self.t0 = float(t0)
        self.trace = trace


def gaussian_area_shifted(geom, x0, t0):
    """F of the dilated translate t0^{-1}(M - x0).

    For rotational surfaces the azimuthal integral of the off-axis
    translation is a modified Bessel factor, evaluated exactly.
    """
    pos = geom.position
    if geom.kind == "curve":
        x0 = np.asarray(x0, dtype=float)
        d2 = np.sum((pos - x0[None, :]) ** 2, axis=1)
        return float(np.sum(geom.area_weights * np.exp(-d2 / (4.0 * t0 ** 2)))
                     / t0)
    a, b, c = (float(x0[0]), float(x0[1]), float(x0[2]))
    rho = np.hypot(a, b)
    r = np.abs(pos[:, 0])
    z = pos[:, 1]
    d2 = r ** 2 + rho ** 2 + (z - c) ** 2
    arg = r * rho / (2.0 * t0 ** 2)
    # area_weights carry the on-axis azimuthal circumference already
    bessel = scipy.special.i0e(arg) * np.exp(arg - d2 / (4.0 * t0 ** 2)
                                             + geom.sq_norm / 4.0)
    return float(np.sum(geom.gauss_weights * bessel) / t0 ** 2)


class EntropySearchConfig:
    def __init__(self, t_bounds=(0.2, 5.0), box_factor=3.0, lattice=3,
                 fatol=1e-12, maxiter=400):
        self.t_bounds = t_bounds
        self.box_factor = box_factor
        self.lattice = lattice
        self.fatol = fatol
        self.maxiter = maxiter


def entropy(geom, config=None):
    """Supremum of Gaussian area over translations and dilations."""
    config = config or EntropySearchConfig()
    diam = float(np.max(np.abs(geom.position))) * config.box_factor
    t_lo, t_hi = config.t_bounds
    n_trans = 2 if geom.kind == "curve" else 3

    def objective(p):
        t0 = p[-1]
        if not t_lo <= t0 <= t_hi:
            return np.inf
        x0 = p[:-1]
        if np.max(np.abs(x0)) > diam:
            return np.inf
        return -gaussian_area_shifted(geom, x0, t0)

    axes = [np.linspace(-diam, diam, config.lattice)] * n_trans
    axes.append(np.array([t_lo, 1.0, t_hi]))
    trace = []
    best = (f_functional(geom), np.zeros(n_trans), 1.0)  # identity point
    for start in np.stack(np.meshgrid(*axes), axis=-1).reshape(-1, n_trans + 1):
        res = scipy.optimize.minimize(
            objective, start, method="Nelder-Mead",
            options={"fatol": config.fatol, "xatol": 1e-8,
                     "maxiter": config.maxiter})
        val = -res.fun
        trace.append((start.tolist(), float(val)))
        if val > best[0]:
            best = (float(val), res.x[:-1].copy(), float(res.x[-1]))
    result = EntropyResult(best[0], best[1], best[2], trace)
    if np.max(np.abs(result.x0)) > 0.99 * diam and config.box_factor <= 3.0:
        bigger = EntropySearchConfig(config.t_bounds, 2.0 * config.box_factor,
                                     config.lattice, config.fatol,
                                     config.maxiter)
        result = entropy(geom, bigger)
        if np.max(np.abs(result.x0)) > 0.99 * bigger.box_factor \
                * float(np.max(np.abs(geom.position))):
            result.trace.append(("warning", "argmax on enlarged box edge"))
    return result


def entropy_decrease_experiment(base, s_grid, config=None, seed=0):
    """F and entropy drop along the leading eigenfunction of a shrinker.

    The quadratic model for the drop is lambda_1 s^2 / 2 for the unit-norm
    eigenfunction (verified against the circle's closed form).
    """
    rep = ExperimentReport("entropy_decrease", {"s_grid": list(s_grid)})
    dec = decomposition(base)
    lam1 = dec.eigenvalues[0]
    rep.constants["lambda_1"] = float(lam1)
    if base.kind == "curve" or lam1 <= 1.0:
        raise GeometryError("experiment expects a non-spherical shrinker "
                            "with lambda_1 > 1")
    phi1 = dec.eigenfunctions[:, 0]
    f0 = f_functional(base)
    drops = {}
    for s in s_grid:
        fs = f_functional(graph_geometry(base, s * phi1))
        drops[s] = f0 - fs
        if s != 0.0:
            rep.check("f_decreases_s=%g" % s, fs < f0, 0.0, f0 - fs)
    rep.series["drops"] = drops
    small = sorted({abs(s) for s in s_grid if s != 0.0})[:2]
    for s in small:
        model = 0.5 * lam1 * s ** 2
        rel = abs(drops[s] - model) / model
        rep.check("second_variation_fit_s=%g" % s, rel <= 0.05, 0.05, rel)
    # stable-direction control: F increases
    stable_idx = int(np.flatnonzero(dec.eigenvalues < -dec.zero_tol)[0])
    phis = dec.eigenfunctions[:, stable_idx]
    s_c = min(abs(s) for s in small)
    f_up = f_functional(graph_geometry(base, s_c * phis))
    rep.check("stable_direction_f_increases", f_up > f0, 0.0, f_up - f0)
    # entropy comparison at the two smallest |s|, both signs
    lam_base = entropy(base, config).value
    rep.constants["entropy_base"] = lam_base
    for s in small:
        for sg in (s, -s):
            lam_s = entropy(graph_geometry(base, sg * phi1), config).value
            rep.check("entropy_drop_s=%g" % sg, lam_s < lam_base, 0.0,
                      lam_base - lam_s)
    return rep


# ---------------------------------------------------------------------------
# converging parent trajectories

_PARENT_CACHE = {}


def torus_parent(base, t_end=14.0, radius=2e-3, seed=0, damp=0.25, dt=5e-2):
    """Converging trajectory on the stable manifold, realized from the chart.

    One-step re-integration of a chart point is hopeless over long horizons
    (roundoff in the unstable direction grows like exp(lambda_1 t)); the
    chart fixed point is the well-posed representation, so its orbit is
    realized directly as a trajectory over the static base.
    """
    key = (id(base), t_end, radius, seed, damp, dt)
    if key in _PARENT_CACHE:
        return _PARENT_CACHE[key]
    dec = decomposition(base)
    trunc = TruncationConfig(1e-2)
    rng = _rng(seed, 0)
    lam = dec.eigenvalues
    stable = lam < -dec.zero_tol
    c0 = np.zeros(dec.n_modes)
    c0[stable] = rng.standard_normal(int(np.sum(stable))) \
        * np.exp(-damp * np.arange(int(np.sum(stable))))
    c0 *= radius / np.linalg.norm(c0)
    orbit, _ = lp_stable(base, trunc, c0, horizon=t_end, dt=dt)
    values = orbit.coeffs @ dec.eigenfunctions.T
    diag = {"norm": np.linalg.norm(orbit.coeffs, axis=1),
            "residual_sup": np.empty(len(orbit.times)),
            "f_value": np.empty(len(orbit.times))}
    for i in range(len(orbit.times)):
        geom = graph_geometry(base, values[i])
        diag["residual_sup"][i] = float(np.max(np.abs(
            geom.shrinker_residual_values())))
        diag["f_value"][i] = f_functional(geom)
    traj = FlowTrajectory(base, orbit.times, values, diag, scheme="lp-stable")
    _PARENT_CACHE[key] = traj
    return traj


# ---------------------------------------------------------------------------
# cone invariance

def cone_invariance_experiment(base, splitting, cone, trials=50, n_steps=5,
                               pairs=25, seed=0, dt_cap=1e-2):
    """Sharpening of the expansion cone under the time-one truncated flow."""
    rep = ExperimentReport("cone_invariance",
                           {"trials": trials, "n_steps": n_steps,
                            "pairs": pairs, "kappa": cone.kappa,
                            "delta": cone.delta})
    dec = splitting.dec
    base_geom = dec.geometry
    delta = cone.delta
    trunc = TruncationConfig(delta)
    beta, gamma = splitting.rates["beta"], splitting.rates["gamma"]
    sharpen = np.sqrt(np.exp(beta - gamma))
    rep.constants["sharpening_target"] = float(sharpen)
    rep.constants["kappa_bar"] = float(cone.kappa_bar)
    lam1 = dec.eigenvalues[0]
    plus = splitting.masks["plus"]

    def boundary_point(rng):
        c = np.zeros(dec.n_modes)
        cm = rng.standard_normal(dec.n_modes) \
            * np.exp(-0.25 * np.arange(dec.n_modes))
        cm[plus] = 0.0
        cm /= np.linalg.norm(cm)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        # kappa ||u-|| = ||u+||, total norm delta/2
        c[~plus] = cm[~plus]
        c[plus] = sign * cone.kappa
        c *= (delta / 2.0) / np.linalg.norm(c)
        return c

    def kappa_of(c):
        p = float(np.linalg.norm(c[plus]))
        m = float(np.linalg.norm(c[~plus]))
        return p / m if m > 0.0 else np.inf

    if cone.clamped:
        rep.warnings.append("requested kappa exceeded kappa_bar; clamped to "
                            "%.6g" % cone.kappa_bar)

    ok_sharpen = 0
    growth_rates = []
    saturated_rates = []
    for trial in range(trials):
        rng = _rng(seed, trial)
        c = boundary_point(rng)
        u = dec.reconstruct(c)
        traj = truncated_rmcf(base_geom, u, (0.0, n_steps), trunc,
                              dt_cap=dt_cap)
        ks, ps = [], []
        for t in range(n_steps + 1):
            ct = dec.coefficients(traj.value_at(float(t)))
            ks.append(kappa_of(ct))
            ps.append(float(np.linalg.norm(ct[plus])))
        stepwise = all(
            ks[i + 1] >= min(cone.kappa_bar, ks[i] * sharpen)
            for i in range(n_steps))
        if stepwise:
            ok_sharpen += 1
        growth_rates.append(np.log(ps[-1] / ps[0]) / n_steps)
        sat = next((i for i, k in enumerate(ks) if k >= cone.kappa_bar), None)
        if sat is not None and sat < n_steps:
            saturated_rates.append(np.log(ps[-1] / ps[sat]) / (n_steps - sat))
    rep.check("sharpening_all_trials", ok_sharpen == trials, None, ok_sharpen)
    rep.constants["min_growth_rate"] = float(np.min(growth_rates))
    rep.check("plus_growth_at_least_beta",
              np.min(growth_rates) >= beta - 10.0 * delta, beta,
              np.min(growth_rates))
    fitted_c = max(0.0, (beta - float(np.min(growth_rates))) / delta)
    rep.constants["growth_defect_c"] = fitted_c
    rep.check("all_trials_saturate", len(saturated_rates) == trials, None,
              len(saturated_rates))
    if saturated_rates:
        worst = float(max(abs(r - lam1) for r in saturated_rates))
        rep.constants["saturated_rate_spread"] = worst
        rep.check("saturated_growth_near_lambda1", worst <= 0.1 * lam1,
                  0.1, worst)

    # eigenmode control: growth rate = lambda_1 within 2 percent
    c1 = np.zeros(dec.n_modes)
    c1[0] = delta / 2.0
    tr1 = truncated_rmcf(base_geom, dec.reconstruct(c1), (0.0, n_steps),
                         trunc, dt_cap=dt_cap)
    p0 = np.linalg.norm(dec.coefficients(tr1.value_at(0.0))[plus])
    p1 = np.linalg.norm(dec.coefficients(tr1.value_at(float(n_steps)))[plus])
    rate1 = np.log(p1 / p0) / n_steps
    rep.check("eigenmode_rate", abs(rate1 - lam1) <= 0.02 * lam1, 0.02, rate1)

    # difference version on pairs
    ok_pairs = 0
    for trial in range(pairs):
        rng = _rng(seed + 1, trial)
        c_base = np.zeros(dec.n_modes)
        cm = rng.standard_normal(dec.n_modes) \
            * np.exp(-0.25 * np.arange(dec.n_modes))
        c_base = cm * (delta / 4.0) / np.linalg.norm(cm)
        d = boundary_point(rng) * 0.2
        u1 = dec.reconstruct(c_base)
        u2 = dec.reconstruct(c_base + d)
        t1 = truncated_rmcf(base_geom, u1, (0.0, 1.0), trunc, dt_cap=dt_cap)
        t2 = truncated_rmcf(base_geom, u2, (0.0, 1.0), trunc, dt_cap=dt_cap)
        dd = dec.coefficients(t2.final_values - t1.final_values)
        if kappa_of(dd) >= min(cone.kappa_bar, kappa_of(d) * sharpen):
            ok_pairs += 1
    rep.check("difference_pairs", ok_pairs == pairs, None, ok_pairs)
    return rep


# ---------------------------------------------------------------------------
# Harnack and Li-Yau

def harnack_experiment(parent, trials=10, t_span=(0.0, 8.0), dt=2e-2,
                       peak_ratio=1e3, seed=0):
    """Uniform max/min bound for positive solutions of the variational flow."""
    rep = ExperimentReport("harnack", {"trials": trials, "t_span": t_span,
                                       "dt": dt, "peak_ratio": peak_ratio})
    res0 = parent.diagnostics["residual_sup"]
    rep.check("parent_converges",
              np.nanmin(res0) < 1e-6 and res0[-1] < res0[0], 1e-6,
              np.nanmin(res0))
    n = parent.values.shape[1]
    basegeom = parent.root_geometry
    cols = []
    for trial in range(trials):
        rng = _rng(seed, trial)
        bump_at = rng.integers(0, n)
        width = 0.05 + 0.1 * rng.random()
        d = np.minimum(np.abs(np.arange(n) - bump_at), n - np.abs(
            np.arange(n) - bump_at)) * basegeom.spacing
        v0 = 1.0 + (peak_ratio - 1.0) * np.exp(-(d / width) ** 2)
        if basegeom.kind == "sphere":
            v0 = 0.5 * (v0 + v0[::-1])
        cols.append(v0)
    v0s = np.column_stack(cols)
    if np.min(v0s) <= 0.0:
        raise GeometryError("positive initial data required")
    traj = variational_flow(parent, v0s, t_span, scheme="expm", dt=dt)
    ratios = np.array([[np.max(v[:, j]) / np.min(v[:, j])
                        for j in range(trials)] for v in traj.values])
    rep.series["times"] = traj.times
    rep.series["ratios"] = ratios
    t_tilde = 0.5 * (t_span[0] + t_span[1])
    late = traj.times >= t_tilde
    fitted_c = float(np.max(ratios[late]))
    rep.constants["fitted_c"] = fitted_c
    rep.constants["t_tilde"] = t_tilde
    rep.check("uniform_bound_after_t_tilde",
              np.all(ratios[late] <= fitted_c + 1e-12), None, fitted_c)
    quarter = traj.times >= t_span[1] - 0.25 * (t_span[1] - t_span[0])
    tail = ratios[quarter]
    variation = float(np.max((np.max(tail, axis=0) - np.min(tail, axis=0))
                             / np.min(tail, axis=0)))
    rep.check("tail_variation", variation <= 0.05, 0.05, variation)
    rep.check("positivity_preserved", np.min(traj.values) > 0.0, 0.0,
              float(np.min(traj.values)))
    return rep


def _log_gradient_sq(vals, geom):
    from .geometry import fourier_deriv
    d = fourier_deriv(np.log(vals), geom.spacing) / geom.jacobian
    return d ** 2


def liyau_check(parent, v0, window=(0.05, 2.0), dt=1e-2):
    """Smallest C with d/dt log v >= |grad log v|^2/2 - C - C/t on the window."""
    rep = ExperimentReport("liyau", {"window": window, "dt": dt})
    vals0 = v0.values if isinstance(v0, GraphFunction) else np.asarray(v0, float)
    if np.min(vals0) <= 0.0:
        raise GeometryError("positive initial data required")
    t0, t1 = window
    traj = variational_flow(parent, vals0, (0.0, t1 + dt), scheme="expm", dt=dt)
    if np.min(traj.values) <= 0.0:
        raise GeometryError("positivity lost along the flow; reduce dt")
    times = traj.times
    keep = (times >= t0) & (times <= t1)
    idx = np.flatnonzero(keep)
    need_const = []
    need_with_t = []
    for k in idx:
        if k == 0 or k + 1 >= len(times):
            continue
        geom_k = parent.geometry_at(times[k]) if not isinstance(
            parent, ShrinkerGeometry) else parent
        dlog = (np.log(traj.values[k + 1]) - np.log(traj.values[k - 1])) \
            / (times[k + 1] - times[k - 1])
        g = dlog - 0.5 * _log_gradient_sq(traj.values[k], geom_k)
        worst = -float(np.min(g))
        need_const.append(worst)
        need_with_t.append(worst / (1.0 + 1.0 / times[k]))
    c_fit = max(0.0, max(need_with_t))
    c_const_only = max(0.0, max(need_const))
    rep.constants["c_fitted"] = float(c_fit)
    rep.constants["c_without_time_term"] = float(c_const_only)
    rep.check("finite_c_exists", c_fit <= 1e3, 1e3, c_fit)
    return rep


# ---------------------------------------------------------------------------
# drift dichotomy and PosDom

def prepare_orthogonal_datum(parent, shape, horizon, dt=2e-2):
    """Tune the phi_1 content of ``shape`` so its evolution at the horizon
    is orthogonal to phi_1 of the limit shrinker."""
    basegeom = parent.root_geometry
    dec = decomposition(basegeom)
    phi1 = dec.eigenfunctions[:, 0]
    bundle = np.column_stack([shape, phi1])
    traj = variational_flow(parent, bundle, (0.0, horizon), scheme="expm",
                            dt=dt)
    cT = dec.coefficients(traj.final_values[:, 0])
    c1T = dec.coefficients(traj.final_values[:, 1])
    mu = -cT[0] / c1T[0]
    return shape + mu * phi1, mu


def drift_experiment(parent, v0_list, w0, eps_grid, splitting, kappa=1.0,
                     t_span=(0.0, 10.0), dt=2e-2, gap_c=None):
    """Growth-rate vs cone-recurrence dichotomy and the positive-domination
    sweep over perturbation sizes eps."""
    rep = ExperimentReport("drift", {"n_data": len(v0_list),
                                     "eps_grid": list(eps_grid),
                                     "kappa": kappa, "t_span": t_span})
    basegeom = parent.root_geometry
    dec = splitting.dec
    lam1, lam2 = dec.eigenvalues[0], dec.eigenvalues[1]
    c_gap = gap_c if gap_c is not None else 0.5 * (lam1 - lam2)
    rep.constants["gap_c"] = float(c_gap)
    w0v = w0.values if isinstance(w0, GraphFunction) else np.asarray(w0, float)
    if np.min(w0v) <= 0.0:
        raise GeometryError("positive direction w0 required")
    plus = splitting.masks["plus"]

    cols = [np.asarray(v, float) for v in v0_list]
    n_main = len(cols)
    for eps in eps_grid:
        cols.append(cols[0] + eps * w0v)  # sweep around the first datum
    bundle = np.column_stack(cols)
    traj = variational_flow(parent, bundle, t_span, scheme="expm", dt=dt)

    check_times = np.arange(1.0, t_span[1] + 1e-9, 0.5)

    def analyze(j):
        memberships = []
        for t in check_times:
            c = dec.coefficients(traj.value_at(t)[:, j])
            p = np.abs(c[plus][0])
            m = np.linalg.norm(c[~plus])
            if p > kappa * m:
                memberships.append(t)
        recur = _recurs(memberships)
        vT = traj.final_values[:, j]
        exponent = np.log(gaussian_norm(vT, basegeom)
                          / gaussian_norm(bundle[:, j], basegeom)) / t_span[1]
        return recur, float(exponent), memberships

    violations = 0
    records = []
    for j in range(n_main):
        recur, exponent, _ = analyze(j)
        fast = exponent >= lam1 - c_gap
        if fast != recur:
            violations += 1
        records.append({"index": j, "recurs": recur, "exponent": exponent})
    rep.series["dichotomy"] = records
    rep.check("dichotomy_violations", violations == 0, 0, violations)

    fails = 0
    for k in range(len(eps_grid)):
        recur, exponent, _ = analyze(n_main + k)
        if not recur:
            fails += 1
    rep.constants["exceptional_eps_count"] = fails
    rep.check("posdom_sweep", fails <= 1, 1, fails)

    # positive datum: complement dominated by the phi_1 projection
    pos_idx = [j for j in range(n_main) if np.min(bundle[:, j]) > 0.0]
    if pos_idx:
        j = pos_idx[0]
        t_prime = 1.0
        ratios = []
        for t in check_times[check_times >= t_prime]:
            c = dec.coefficients(traj.value_at(t)[:, j])
            ratios.append(np.linalg.norm(c[~plus]) / abs(c[plus][0]))
        rep.constants["positive_projection_c"] = float(np.max(ratios))
        rep.constants["positive_projection_t_prime"] = t_prime
        rep.check("positive_projection_bounded",
                  np.max(ratios) < np.inf and ratios[-1] <= ratios[0] + 1e-9,
                  None, float(np.max(ratios)))
    return rep


def _recurs(membership_times, needed=3, min_gap=1.0):
    """At least ``needed`` membership times pairwise separated by min_gap."""
    count = 0
    last = -np.inf
    for t in membership_times:
        if t >= last + min_gap:
            count += 1
            last = t
    return count >= needed


# ---------------------------------------------------------------------------
# linearization gap

def linearization_gap_experiment(parent, v0, deltas, t_end=1.0, dt=1e-3):
    """Slope of log || v - v* ||(T) against log delta; quadratic target."""
    rep = ExperimentReport("linearization_gap",
                           {"deltas": list(deltas), "t_end": t_end, "dt": dt})
    base = parent if isinstance(parent, ShrinkerGeometry) \
        else parent.root_geometry
    v0v = v0.values if isinstance(v0, GraphFunction) else np.asarray(v0, float)
    v0v = v0v / gaussian_norm(v0v, base)
    errs = []
    used = []
    for d in deltas:
        try:
            nl = rmcf_over_flow(parent, d * v0v, (0.0, t_end), dt=dt)
        except Exception as err:  # noqa: BLE001 - drop with warning per design
            rep.warnings.append("delta %g dropped: %s" % (d, err))
            continue
        if nl.exit_time is not None:
            rep.warnings.append("delta %g exited at t=%.3f" % (d, nl.exit_time))
            continue
        lin = variational_flow(parent, d * v0v, (0.0, t_end), dt=dt)
        errs.append(gaussian_norm(nl.final_values - lin.final_values, base))
        used.append(d)
    if len(used) < 2:
        raise GridError("not enough deltas survived for a slope fit")
    slope = float(np.polyfit(np.log(used), np.log(errs), 1)[0])
    rep.constants["slope"] = slope
    rep.series["deltas"] = used
    rep.series["errors"] = errs
    rep.check("slope_at_least_1.5", slope >= 1.5, 1.5, slope)
    rep.check("ratio_vanishes",
              errs[-1] / used[-1] < errs[0] / used[0], None,
              errs[-1] / used[-1])
    return rep


# ---------------------------------------------------------------------------
# global genericity pipeline

def global_genericity_pipeline(base, v0, eta_grid, splitting, cone, w0=None,
                               eps_grid=(), horizon=14.0, parent_radius=3e-5,
                               parent_damp=1.0, seed=0):
    """Four-step run: perturb a converging flow, localize, track the cone
    exit, and certify the Gaussian-area and entropy drop at exit.

    The parent radius is small because lambda_1 far exceeds the slowest
    stable rate: the perturbation must still be sub-delta when the parent
    graph is already C4-small, which fixes the scale ordering.
    """
    rep = ExperimentReport("pipeline", {"eta_grid": list(np.atleast_1d(
        eta_grid)) if v0 is not None else [], "horizon": horizon,
        "parent_radius": parent_radius})
    dec = splitting.dec
    plus = splitting.masks["plus"]
    delta = cone.delta
    trunc = TruncationConfig(delta)
    lam1 = dec.eigenvalues[0]
    parent = torus_parent(base, t_end=horizon, radius=parent_radius,
                          damp=parent_damp, seed=seed)
    res = parent.diagnostics["residual_sup"]
    rep.check("parent_certified", np.min(res) < 1e-6 and res[-1] < res[0],
              1e-6, float(np.min(res)))
    f0 = GraphFunction(base, parent.values[0])

    # Step 2 preliminaries: localization time where the parent is C4-small
    loc_grid = np.arange(0.0, horizon + 1e-9, 0.1)
    t_loc = next((t for t in loc_grid
                  if norm_suite(parent.value_at(t), base).c4 <= delta / 10.0),
                 None)
    rep.check("localization_time_found", t_loc is not None, delta / 10.0,
              t_loc if t_loc is not None else -1.0)
    rep.constants["t_localization"] = t_loc
    if t_loc is None:
        return rep

    if v0 is None:
        # control: the unperturbed surface flows along the stable chart;
        # its norms decrease and never reach the exit band
        norms = parent.diagnostics["norm"]
        rep.check("control_no_exit", float(np.max(norms)) < 0.8 * delta,
                  0.8 * delta, float(np.max(norms)))
        rep.check("control_converges", norms[-1] < norms[0], None,
                  float(norms[-1]))
        rep.constants["outcome"] = "converged, no exit"
        return rep

    v0v = v0.values if isinstance(v0, GraphFunction) else np.asarray(v0, float)
    sign_changing = np.min(v0v) < 0.0 < np.max(v0v)
    if sign_changing and w0 is not None and len(eps_grid):
        # PosDom augmentation: pick the smallest |eps| whose linearized
        # evolution enters the cone by the localization time
        w0v = w0.values if isinstance(w0, GraphFunction) else np.asarray(
            w0, float)
        cols = np.column_stack([v0v + e * w0v for e in eps_grid])
        lin = variational_flow(parent, cols, (0.0, max(t_loc, 1.0) + 1.0),
                               scheme="expm", dt=2e-2)
        chosen = None
        for e in sorted(eps_grid, key=abs):
            j = list(eps_grid).index(e)
            c = dec.coefficients(lin.final_values[:, j])
            if abs(c[plus][0]) > cone.kappa * np.linalg.norm(c[~plus]):
                chosen = e
                break
        rep.check("augmentation_found", chosen is not None, None,
                  chosen if chosen is not None else np.nan)
        rep.constants["eps_star"] = chosen
        if chosen is None:
            return rep
        v0v = v0v + chosen * w0v

    lam_sigma = None
    for eta in np.atleast_1d(eta_grid):
        tag = "eta=%g" % eta
        # Step 1: perturbed initial surface as a graph over the shrinker
        u0 = compose_graphs(base, f0, eta * v0v).values
        traj = truncated_rmcf(base, u0, (0.0, horizon), trunc,
                              splitting=splitting)
        norms = traj.diagnostics["norm"]

        # Step 2: linearization gap at the localization time, cone entry
        vstar = variational_flow(parent, v0v, (0.0, t_loc + 1e-3), dt=1e-2)
        diff_loc = traj.value_at(t_loc) - parent.value_at(t_loc)
        gap = gaussian_norm(diff_loc - eta * vstar.value_at(t_loc), base) \
            / max(eta * gaussian_norm(vstar.value_at(t_loc), base), 1e-300)
        rep.constants["linearization_gap_%s" % tag] = float(gap)
        rep.check("linearization_gap_small_%s" % tag, gap <= 0.5, 0.5, gap)

        entry = None
        kappas = []
        for i, t in enumerate(traj.times):
            if t < t_loc:
                continue
            c = dec.coefficients(traj.values[i] - parent.value_at(t))
            p = abs(c[plus][0])
            m = float(np.linalg.norm(c[~plus]))
            k = p / m if m > 0.0 else np.inf
            if entry is None and p > cone.kappa * m:
                entry = t
            if entry is not None:
                kappas.append((t, k))
        rep.check("cone_entry_%s" % tag, entry is not None, None,
                  entry if entry is not None else -1.0)
        rep.constants["t_cone_entry_%s" % tag] = entry

        # Step 3: exit through the delta band, first crossing, sharpening
        cross = np.flatnonzero(norms >= delta)
        if cross.size == 0 or entry is None:
            rep.check("exit_reached_%s" % tag, False, None,
                      float(np.max(norms)))
            continue
        i_exit = int(cross[0])
        t_exit = float(traj.times[i_exit])
        n_exit = float(norms[i_exit])
        rep.constants["t_exit_%s" % tag] = t_exit
        rep.check("exit_in_band_%s" % tag,
                  0.8 * delta <= n_exit <= 1.2 * delta, (0.8, 1.2), n_exit)
        # sharpening is meaningful only up to saturation; above kappa_bar the
        # minus part is noise-level and the raw ratio fluctuates
        in_window = [min(k, cone.kappa_bar) for t, k in kappas if t <= t_exit]
        sharpening = all(b >= 0.99 * a for a, b in zip(in_window,
                                                       in_window[1:]))
        rep.check("cone_sharpens_%s" % tag,
                  sharpening and in_window[-1] >= in_window[0], None,
                  in_window[-1])
        rep.constants["kappa_at_exit_%s" % tag] = \
            [k for t, k in kappas if t <= t_exit][-1]

        # Step 4: Gaussian-area and entropy drop at exit
        exit_geom = graph_geometry(base, traj.values[i_exit])
        f_sigma = f_functional(base)
        f_exit = f_functional(exit_geom)
        bound = lam1 * delta ** 2 / 4.0
        rep.constants["f_drop_%s" % tag] = f_sigma - f_exit
        rep.check("f_drop_exceeds_bound_%s" % tag, f_sigma - f_exit > bound,
                  bound, f_sigma - f_exit)
        if lam_sigma is None:
            lam_sigma = entropy(base).value
        lam_exit = entropy(exit_geom).value
        rep.constants["entropy_drop_%s" % tag] = lam_sigma - lam_exit
        rep.check("entropy_drop_%s" % tag, lam_exit < lam_sigma, None,
                  lam_sigma - lam_exit)
    return rep


# ---------------------------------------------------------------------------
# ancient limit

def ancient_limit_experiment(base, shape=None, sizes=(1e-9, 1e-10, 1e-11),
                             delta=1e-2, t_back=5.0, dt=1e-3,
                             horizon_pad=1.0):
    """Alignment of vanishing-size exits onto the unstable phi_1 orbit.

    The default shape mixes a small second-mode component into phi_1: large
    admixtures would spoil positivity of the limit candidate at t = -t_back
    (the residue grows backward like exp((lambda_1 - lambda_2) |t|)), while
    a pure phi_1 datum converges below the time-interpolation noise floor
    and leaves nothing for the Cauchy measurement.  The sizes must be small
    enough that exit times exceed t_back.
    """
    rep = ExperimentReport("ancient_limit", {"sizes": list(sizes),
                                             "delta": delta,
                                             "t_back": t_back})
    dec = decomposition(base)
    lam1 = dec.eigenvalues[0]
    phi1 = dec.eigenfunctions[:, 0]
    if shape is None:
        shape = phi1 + 0.02 * dec.eigenfunctions[:, 1]
    trunc = TruncationConfig(delta)
    sizes = sorted(sizes, reverse=True)
    trajs = []
    exits = []
    for s in sizes:
        t_max = np.log(delta / s) / lam1 + horizon_pad
        tr = truncated_rmcf(base, s * shape, (0.0, t_max), trunc, dt=dt)
        norms = tr.diagnostics["norm"]
        cross = np.flatnonzero(norms >= delta)
        if cross.size == 0:
            raise GeometryError("size %g never reached delta" % s)
        i = int(cross[0])
        # interpolated first crossing of ||u|| = delta
        if i > 0:
            n0, n1 = norms[i - 1], norms[i]
            t_exit = tr.times[i - 1] + (delta - n0) / (n1 - n0) \
                * (tr.times[i] - tr.times[i - 1])
        else:
            t_exit = tr.times[i]
        trajs.append(tr)
        exits.append(float(t_exit))
    rep.series["exit_times"] = exits
    rep.check("exit_times_increasing",
              all(b > a for a, b in zip(exits, exits[1:])), None, exits[-1])
    gap_model = np.log(sizes[0] / sizes[1]) / lam1
    gaps = np.diff(exits)
    rep.constants["gap_model"] = float(gap_model)
    rep.check("exit_gap_matches_rate",
              np.all(np.abs(gaps - gap_model) <= 0.1 * gap_model), 0.1,
              float(np.max(np.abs(gaps - gap_model))))

    t_rel = -t_back + (t_back / 50.0) * np.arange(51)
    aligned = []
    for tr, te in zip(trajs, exits):
        aligned.append(np.array([tr.value_at(te + t) for t in t_rel]))
    dists = []
    for a, b in zip(aligned[:-1], aligned[1:]):
        dists.append(float(np.max(np.sqrt(
            np.sum((a - b) ** 2 * base.gauss_weights[None, :], axis=1)))))
    rep.series["cauchy_distances"] = dists
    rep.check("cauchy_decrease",
              all(d2 <= d1 / 2.0 for d1, d2 in zip(dists, dists[1:])),
              2.0, dists[-1] / dists[0] if dists[0] > 0 else 0.0)
    limit = aligned[-1]
    rep.check("limit_positive", float(np.min(limit)) > 0.0, 0.0,
              float(np.min(limit)))

    # unstable-chart orbit anchored at delta phi_1
    c0 = np.zeros(dec.n_modes)
    c0[0] = delta
    orbit, _ = lp_unstable(base, trunc, c0, horizon=t_back)
    chart_vals = np.array([dec.reconstruct(
        orbit.coeffs[np.argmin(np.abs(orbit.times - t))]) for t in t_rel])
    dist_chart = float(np.max(np.sqrt(np.sum(
        (limit - chart_vals) ** 2 * base.gauss_weights[None, :], axis=1))))
    rep.constants["chart_distance"] = dist_chart
    rep.check("chart_distance", dist_chart <= 0.05 * delta, 0.05 * delta,
              dist_chart)
    return rep
