"""Command line front end: spectrum | flow | manifolds | experiment | all.

Exit codes: 0 all assertions pass, 1 assertion failure, 2 usage or config
error, 3 numeric failure inside a run.
"""

import argparse
import configparser
import os
import sys
import time

EXPERIMENT_NAMES = ("cone", "liyau", "harnack", "drift", "linearization",
                    "entropy", "pipeline", "ancient")


def load_config(path=None):
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#",))
    defaults = os.path.join(os.path.dirname(__file__), "defaults.cfg")
    with open(defaults, "r", encoding="utf-8") as fh:
        cfg.read_file(fh)
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError("config file %r not found" % path)
        cfg.read(path)
    return cfg


def config_text(cfg):
    parts = []
    for section in sorted(cfg.sections()):
        parts.append("[%s]" % section)
        for key in sorted(cfg[section]):
            parts.append("%s=%s" % (key, cfg[section][key]))
    return "\n".join(parts)


def _floats(raw):
    return [float(tok) for tok in raw.split(",") if tok.strip()]


class Workspace:
    """Lazily built shared objects: torus, decomposition, cone, parent."""

    def __init__(self, cfg, seed):
        self.cfg = cfg
        self.seed = seed
        self._cache = {}

    def torus(self):
        if "torus" not in self._cache:
            from .shrinkers import angenent_torus
            self._cache["torus"] = angenent_torus(
                self.cfg.getint("grid", "n_torus"))
        return self._cache["torus"]

    def dec(self):
        if "dec" not in self._cache:
            from .spectral import decomposition
            self._cache["dec"] = decomposition(self.torus())
        return self._cache["dec"]

    def splitting(self):
        if "split" not in self._cache:
            from .spectral import split
            self._cache["split"] = split(self.dec(), "two")
        return self._cache["split"]

    def cone(self):
        if "cone" not in self._cache:
            from .spectral import ConeParams
            self._cache["cone"] = ConeParams(
                self.cfg.getfloat("cone", "kappa"), self.splitting(),
                self.cfg.getfloat("truncation", "delta"))
        return self._cache["cone"]

    def parent(self):
        if "parent" not in self._cache:
            from .experiments import torus_parent
            self._cache["parent"] = torus_parent(self.torus(), seed=self.seed)
        return self._cache["parent"]


# ---------------------------------------------------------------------------
# command implementations; each returns (report, extra artifact writers)

def run_spectrum(ws, args, out_dir, man):
    import numpy as np
    from .artifacts import write_csv, write_svg
    from .experiments import ExperimentReport
    from .geometry import build_circle, build_sphere_profile
    from .spectral import combined_morse_index, decomposition

    cfg = ws.cfg
    surface = getattr(args, "surface", None) or cfg.get("spectrum", "surface")
    tol = cfg.getfloat("spectrum", "eigen_tol")
    rep = ExperimentReport("spectrum", {"surface": surface})
    if surface == "circle":
        radius = getattr(args, "radius", None) or cfg.getfloat(
            "spectrum", "radius")
        n = getattr(args, "n", None) or cfg.getint("grid", "n_circle")
        geom = build_circle(radius, n)
        dec = decomposition(geom)
        k = np.arange(1, 9)
        model = np.sort(np.concatenate([[1.0], np.repeat(1 - k ** 2 / 2.0,
                                                         2)]))[::-1]
        err = float(np.max(np.abs(dec.eigenvalues[:len(model)] - model)))
        rep.check("closed_form_match", err <= tol, tol, err)
        rep.check("morse_index", dec.morse_index == 3, 3, dec.morse_index)
    elif surface == "sphere":
        n = getattr(args, "n", None) or cfg.getint("grid", "n_sphere")
        geom = build_sphere_profile(2.0, n)
        dec = decomposition(geom)
        ell = np.arange(0, 9)
        model = 1.0 - ell * (ell + 1) / 4.0
        err = float(np.max(np.abs(dec.eigenvalues[:len(model)] - model)))
        rep.check("closed_form_match", err <= tol, tol, err)
        idx = combined_morse_index(geom)
        rep.check("combined_morse_index", idx == 4, 4, idx)
    elif surface == "torus":
        geom = ws.torus()
        dec = ws.dec()
        rep.check("lambda1_above_one", dec.eigenvalues[0] > 1.0, 1.0,
                  dec.eigenvalues[0])
        idx = combined_morse_index(geom)
        rep.check("index_above_sphere_value", idx > 4, 4, idx)
        rep.constants["combined_morse_index"] = idx
    else:
        raise ValueError("unknown surface %r" % surface)
    rep.constants["eigenvalues_head"] = [float(v)
                                         for v in dec.eigenvalues[:12]]
    path = write_csv(os.path.join(out_dir, "spectrum_%s.csv" % surface),
                     {"index": np.arange(dec.n_modes),
                      "eigenvalue": dec.eigenvalues})
    man.add_output(path)
    path = write_svg(os.path.join(out_dir, "spectrum_%s.svg" % surface),
                     {"eigenvalues": (np.arange(24), dec.eigenvalues[:24])},
                     title="leading spectrum: %s" % surface)
    man.add_output(path)
    return rep


def run_flow(ws, args, out_dir, man):
    import numpy as np
    import scipy.integrate
    from .artifacts import write_csv, write_svg
    from .experiments import ExperimentReport, _rng, smooth_random
    from .flow import conservation_diagnostics, rmcf_over_shrinker
    from .geometry import build_circle

    cfg = ws.cfg
    rep = ExperimentReport("flow")
    dt_cap = cfg.getfloat("flow", "dt_cap")

    # concentric circle against the radius ODE
    base = build_circle(np.sqrt(2.0), cfg.getint("grid", "n_circle"))
    c0 = 1e-2
    traj = rmcf_over_shrinker(base, np.full(base.n_nodes, c0), (0.0, 1.0),
                              dt=1e-3)
    sol = scipy.integrate.solve_ivp(
        lambda _t, r: r / 2.0 - 1.0 / r, (0.0, 1.0),
        [np.sqrt(2.0) + c0], rtol=1e-12, atol=1e-14, dense_output=True)
    model = sol.sol(traj.times)[0] - np.sqrt(2.0)
    err = float(np.max(np.abs(traj.values[:, 0] - model)))
    rep.check("circle_ode_match", err <= cfg.getfloat("flow", "ode_tol"),
              cfg.getfloat("flow", "ode_tol"), err)

    # zero graph stays put on the torus
    tor = ws.torus()
    t_zero = cfg.getfloat("flow", "zero_graph_t_end")
    zero = rmcf_over_shrinker(tor, np.zeros(tor.n_nodes), (0.0, t_zero),
                              dt=dt_cap)
    drift = float(np.max(np.abs(zero.values)))
    rep.check("zero_graph_fixed", drift <= cfg.getfloat(
        "flow", "zero_graph_tol"), cfg.getfloat("flow", "zero_graph_tol"),
        drift)

    # Gaussian area monotone along random nonlinear trajectories
    dec = ws.dec()
    worst = 0.0
    norm_series = {}
    for trial in range(cfg.getint("flow", "n_random")):
        u0 = smooth_random(dec, _rng(ws.seed, trial), norm=5e-3)
        tr = rmcf_over_shrinker(tor, u0, (0.0, 1.0), dt=dt_cap)
        diag = conservation_diagnostics(tr)
        worst = max(worst, diag["monotonicity_defect"])
        if trial < 3:
            norm_series["trial %d" % trial] = (tr.times,
                                               tr.diagnostics["norm"])
    rep.constants["monotonicity_defect"] = worst
    rep.check("f_monotone_up_to_dt", worst <= 10.0 * dt_cap, 10.0 * dt_cap,
              worst)
    path = write_csv(os.path.join(out_dir, "flow_circle.csv"),
                     {"t": traj.times, "u0": traj.values[:, 0],
                      "ode": model})
    man.add_output(path)
    path = write_svg(os.path.join(out_dir, "flow_norms.svg"), norm_series,
                     title="graph norms along random trajectories")
    man.add_output(path)
    return rep


def run_manifolds(ws, args, out_dir, man):
    import numpy as np
    from .artifacts import write_csv, write_svg
    from .experiments import ExperimentReport
    from .flow import TruncationConfig
    from .manifolds import chart_build

    cfg = ws.cfg
    rep = ExperimentReport("manifolds")
    tor = ws.torus()
    trunc = TruncationConfig(cfg.getfloat("truncation", "delta"))
    radii = tuple(_floats(cfg.get("manifolds", "radii")))
    res_tol = cfg.getfloat("manifolds", "residual_tol")
    decay_series = {}
    for kind in ("stable", "unstable", "center", "center_unstable"):
        chart = chart_build(kind, tor, trunc, radii=radii,
                            n_samples=cfg.getint("manifolds", "n_samples"),
                            seed=ws.seed,
                            horizon=cfg.getfloat("manifolds", "horizon"),
                            dt=cfg.getfloat("manifolds", "dt"))
        cert = chart.certificates
        rep.check("%s_residual" % kind,
                  cert["max_fixed_point_residual"] <= res_tol, res_tol,
                  cert["max_fixed_point_residual"])
        rep.check("%s_no_failures" % kind, cert["n_failures"] == 0, 0,
                  cert["n_failures"])
        if np.isfinite(cert.get("tangency_slope", np.nan)):
            rep.check("%s_tangency" % kind, cert["tangency_slope"]
                      >= cfg.getfloat("manifolds", "tangency_min"),
                      cfg.getfloat("manifolds", "tangency_min"),
                      cert["tangency_slope"])
        rep.check("%s_lipschitz" % kind, cert["lipschitz"]
                  <= cfg.getfloat("manifolds", "lipschitz_max"),
                  cfg.getfloat("manifolds", "lipschitz_max"),
                  cert["lipschitz"])
        rep.constants[kind] = {k: v for k, v in cert.items()}
        orbit = chart.samples[0]["orbit"]
        decay_series[kind] = (orbit.times, np.maximum(orbit.norms(), 1e-300))
    path = write_svg(os.path.join(out_dir, "chart_orbits.svg"), decay_series,
                     title="chart orbit norms", log_y=True)
    man.add_output(path)
    k0, (t0, n0) = next(iter(decay_series.items()))
    path = write_csv(os.path.join(out_dir, "chart_orbit_%s.csv" % k0),
                     {"t": t0, "norm": n0})
    man.add_output(path)
    return rep


def run_experiment(ws, name, args, out_dir, man):
    import numpy as np
    from .artifacts import write_csv, write_svg
    from . import experiments as ex

    cfg = ws.cfg
    tor = ws.torus()
    dec = ws.dec()
    phi1 = dec.eigenfunctions[:, 0]
    extra = []

    if name == "cone":
        trials = getattr(args, "trials", None) or cfg.getint("cone", "trials")
        rep = ex.cone_invariance_experiment(
            tor, ws.splitting(), ws.cone(), trials=trials,
            n_steps=cfg.getint("cone", "n_steps"),
            pairs=cfg.getint("cone", "pairs"), seed=ws.seed)
    elif name == "liyau":
        n = tor.n_nodes
        d = np.minimum(np.abs(np.arange(n) - n // 3),
                       n - np.abs(np.arange(n) - n // 3)) * tor.spacing
        v0 = 1.0 + 999.0 * np.exp(-(d / 0.1) ** 2)
        rep = ex.liyau_check(ws.parent(), v0,
                             window=(cfg.getfloat("liyau", "window_lo"),
                                     cfg.getfloat("liyau", "window_hi")),
                             dt=cfg.getfloat("liyau", "dt"))
    elif name == "harnack":
        trials = getattr(args, "trials", None) or cfg.getint("harnack",
                                                             "trials")
        rep = ex.harnack_experiment(
            ws.parent(), trials=trials,
            t_span=(0.0, cfg.getfloat("harnack", "t_end")),
            dt=cfg.getfloat("harnack", "dt"),
            peak_ratio=cfg.getfloat("harnack", "peak_ratio"), seed=ws.seed)
        ratios = rep.series["ratios"]
        extra.append(("harnack_ratios.svg", {"trial %d" % j: (
            rep.series["times"], ratios[:, j]) for j in range(min(
                ratios.shape[1], 4))}, {"title": "max/min ratios",
                                        "log_y": True}))
    elif name == "drift":
        t_end = cfg.getfloat("drift", "t_end")
        v_orth, _ = ex.prepare_orthogonal_datum(ws.parent(),
                                               dec.eigenfunctions[:, 1],
                                               t_end)
        data = [v_orth]
        for i in range(cfg.getint("drift", "n_positive")):
            r = ex.smooth_random(dec, ex._rng(ws.seed + 2, i))
            data.append(1.0 + 0.4 * (r - np.mean(r)))
        data.append(-phi1)
        rep = ex.drift_experiment(ws.parent(), data, phi1,
                                  _floats(cfg.get("drift", "eps_grid")),
                                  ws.splitting(), t_span=(0.0, t_end))
    elif name == "linearization":
        rng = ex._rng(ws.seed, 1)
        v0 = ex.smooth_random(dec, rng)
        rep = ex.linearization_gap_experiment(
            tor, v0, _floats(cfg.get("linearization", "deltas")),
            t_end=cfg.getfloat("linearization", "t_end"),
            dt=cfg.getfloat("linearization", "dt"))
    elif name == "entropy":
        rep = ex.entropy_decrease_experiment(
            tor, _floats(cfg.get("entropy", "s_grid")), seed=ws.seed)
    elif name == "pipeline":
        rep = ex.global_genericity_pipeline(
            tor, phi1, [cfg.getfloat("pipeline", "eta")], ws.splitting(),
            ws.cone(), parent_radius=cfg.getfloat("pipeline",
                                                  "parent_radius"),
            seed=ws.seed)
        v_sc = dec.eigenfunctions[:, 1] - 0.001 * phi1
        rep2 = ex.global_genericity_pipeline(
            tor, v_sc, [cfg.getfloat("pipeline", "eta_signchange")],
            ws.splitting(), ws.cone(), w0=phi1,
            eps_grid=_floats(cfg.get("pipeline", "eps_grid")),
            parent_radius=cfg.getfloat("pipeline", "parent_radius"),
            seed=ws.seed)
        for a in rep2.assertions:
            rep.check("signchange_" + a["name"], a["passed"], a["tolerance"],
                      a["value"])
        rep.constants.update({"signchange_" + k: v
                              for k, v in rep2.constants.items()})
        rep3 = ex.global_genericity_pipeline(
            tor, None, [], ws.splitting(), ws.cone(),
            parent_radius=cfg.getfloat("pipeline", "parent_radius"),
            seed=ws.seed)
        for a in rep3.assertions:
            rep.check("control_" + a["name"], a["passed"], a["tolerance"],
                      a["value"])
    elif name == "ancient":
        rep = ex.ancient_limit_experiment(
            tor, sizes=_floats(cfg.get("ancient", "sizes")),
            delta=cfg.getfloat("truncation", "delta"),
            t_back=cfg.getfloat("ancient", "t_back"),
            dt=cfg.getfloat("ancient", "dt"))
        extra.append(("ancient_exits.csv",
                      {"size": sorted(_floats(cfg.get("ancient", "sizes")),
                                      reverse=True),
                       "exit_time": rep.series["exit_times"]}, None))
    else:
        raise ValueError("unknown experiment %r" % name)

    for fname, payload, kwargs in [(f, p, k) for f, p, k in extra]:
        path = os.path.join(out_dir, fname)
        if fname.endswith(".svg"):
            write_svg(path, payload, **(kwargs or {}))
        else:
            write_csv(path, payload)
        man.add_output(path)
    return rep


# ---------------------------------------------------------------------------
# driver

def _write_report(rep, out_dir, man):
    from .artifacts import write_json
    path = write_json(os.path.join(out_dir, "%s.json" % rep.name),
                      rep.as_dict())
    man.add_output(path)
    return rep.passed


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rmcflab",
        description="numerical laboratory for rescaled mean curvature flow "
                    "near closed self-shrinkers")
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_spec = sub.add_parser("spectrum")
    p_spec.add_argument("--surface", choices=("circle", "sphere", "torus"))
    p_spec.add_argument("--radius", type=float)
    p_spec.add_argument("--n", type=int)
    sub.add_parser("flow")
    sub.add_parser("manifolds")
    p_exp = sub.add_parser("experiment")
    p_exp.add_argument("name", choices=EXPERIMENT_NAMES)
    p_exp.add_argument("--trials", type=int)
    p_all = sub.add_parser("all")
    p_all.add_argument("--suite", choices=("desk",), default="desk")

    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0

    try:
        cfg = load_config(args.config)
    except (OSError, configparser.Error) as err:
        print("config error: %s" % err, file=sys.stderr)
        return 2

    threads = args.threads if args.threads is not None \
        else cfg.getint("common", "threads")
    if threads and threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)

    seed = args.seed if args.seed is not None else cfg.getint("common",
                                                              "seed")
    out_dir = args.out or cfg.get("common", "out")
    os.makedirs(out_dir, exist_ok=True)

    from . import __version__
    from .artifacts import RunManifest
    from .errors import RmcflabError

    man = RunManifest(" ".join(argv if argv is not None else sys.argv[1:]),
                      config_text(cfg), seed, __version__)
    if args.config:
        man.add_input(args.config)
    ws = Workspace(cfg, seed)
    start = time.time()

    try:
        passed = True
        if args.command == "spectrum":
            passed = _write_report(run_spectrum(ws, args, out_dir, man),
                                   out_dir, man)
        elif args.command == "flow":
            passed = _write_report(run_flow(ws, args, out_dir, man),
                                   out_dir, man)
        elif args.command == "manifolds":
            passed = _write_report(run_manifolds(ws, args, out_dir, man),
                                   out_dir, man)
        elif args.command == "experiment":
            passed = _write_report(
                run_experiment(ws, args.name, args, out_dir, man),
                out_dir, man)
        elif args.command == "all":
            for surface in ("circle", "sphere", "torus"):
                ns = argparse.Namespace(surface=surface, radius=None, n=None)
                passed &= _write_report(run_spectrum(ws, ns, out_dir, man),
                                        out_dir, man)
            passed &= _write_report(run_flow(ws, args, out_dir, man),
                                    out_dir, man)
            passed &= _write_report(run_manifolds(ws, args, out_dir, man),
                                    out_dir, man)
            for name in EXPERIMENT_NAMES:
                ns = argparse.Namespace(trials=None)
                passed &= _write_report(
                    run_experiment(ws, name, ns, out_dir, man), out_dir, man)
    except (ValueError, KeyError, configparser.Error) as err:
        print("usage/config error: %s" % err, file=sys.stderr)
        return 2
    except RmcflabError as err:
        print("numeric failure: %s" % err, file=sys.stderr)
        man.passed = False
        man.wall_clock_s = time.time() - start
        man.write(os.path.join(out_dir, "manifest.json"))
        return 3

    man.passed = bool(passed)
    man.wall_clock_s = time.time() - start
    man.write(os.path.join(out_dir, "manifest.json"))
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
