"""Command-line driver: sweeps and figure data tables.

Every subcommand writes a CSV table with a ``# key: value`` metadata header
(artifact version, resolved configuration and its hash, unit statement and
convergence summary).  Settings come from, in increasing precedence, the
built-in defaults, a flat ``key = value`` file given with ``--config``, and
explicit command-line flags.

Exit status: 0 on success, 2 for configuration errors, 3 when a numerical
failure occurred (the partial table is still written).
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import math
import os
import sys

import numpy as np

from . import __version__
from .cooperative import (
    band_structure,
    cooperative_response,
    gamma_normal_incidence,
    kk_grid,
    kk_reconstruct_delta,
)
from .core import K0
from .errors import CoopScatError, ContractViolation
from .finite import (
    BeamSpec,
    disorder_ensemble,
    extract_rt,
    far_field_order_powers,
    field_at,
    perfect_array,
    saturation_estimate,
    solve_dipoles,
)
from .lattice import KParallel, bz_path
from .scatter import EmitterParams, pol_basis, scattering_matrix
from .table import ResultTable, config_hash, read_config_file

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# command -> defaults for options whose meaning depends on the command
COMMAND_DEFAULTS = {
    "sweep-lattice": {"a_min": 0.1, "a_max": 0.98, "a_step": 0.005},
    "map-detuning": {"a_min": 0.1, "a_max": 0.98, "n_a": 160,
                     "delta_min": -15.0, "delta_max": 15.0, "n_delta": 120},
    "angle-map": {"a": 0.2, "n_k": 81},
    "bands": {"a": 0.2, "points": 60},
    "beam": {"a": 0.2, "nx": 26, "ny": 26, "pol": "x", "extent": 8.0, "resolution": 0.25},
    "disorder": {"a": 0.3, "nx": 16, "ny": 16, "dr": "0.0,0.02", "samples": 200,
                 "disorder_mode": "3d", "seed": 12345},
    "saturation": {"a": 0.49, "waist": 1.5},
    "kk-check": {"x": "0.2,0.3,0.5,0.8", "u_max": 4.0, "u_step": 1e-3},
}


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


# ---------------------------------------------------------------------------
# point workers (top-level so they pickle for the process pool)
# ---------------------------------------------------------------------------

def _safe(fn, *args):
    try:
        return "ok", fn(*args)
    except CoopScatError as exc:
        return type(exc).__name__, str(exc)


def _sweep_point(args):
    a, delta, gamma_nr, tol, method, on_res = args

    def work():
        c = cooperative_response(a, tol=tol, method=method)
        d = c.delta_tensor[0, 0] if on_res else delta
        r = scattering_matrix(c, EmitterParams(gamma_nr=gamma_nr), d, 0.0, 0.0)
        return {"a": a, "delta": d, "T": r.T[0, 0], "R": r.R[0, 0],
                "Delta": c.delta_tensor[0, 0], "Gamma": c.gamma_tensor[0, 0],
                "err": c.convergence_report.get("error_estimate", 0.0),
                "xcheck": c.convergence_report["gamma_crosscheck"]}

    return _safe(work)


def _detuning_column(args):
    a, deltas, gamma_nr, tol, method = args

    def work():
        c = cooperative_response(a, tol=tol, method=method)
        p = EmitterParams(gamma_nr=gamma_nr)
        out = [(d, scattering_matrix(c, p, d, 0.0, 0.0).R[0, 0], "grid") for d in deltas]
        dres = c.delta_tensor[0, 0]
        out.append((dres, scattering_matrix(c, p, dres, 0.0, 0.0).R[0, 0], "resonance"))
        return {"a": a, "Delta": dres, "Gamma": c.gamma_tensor[0, 0], "rows": out,
                "err": c.convergence_report.get("error_estimate", 0.0)}

    return _safe(work)


def _angle_point(args):
    a, kx, ky, delta, gamma_nr, tol, method = args

    def work():
        kp = KParallel(kx, ky)
        c = cooperative_response(a, kpar=kp, tol=tol, method=method)
        r = scattering_matrix(c, EmitterParams(gamma_nr=gamma_nr), delta)
        phi = kp.phi if kp.norm > 0 else 0.0
        b = pol_basis(kp.theta, phi)
        return {"R": r.R, "T": r.T,
                "Delta_ss": b.e_s_minus @ c.delta_tensor @ b.e_s_plus,
                "Delta_pp": b.e_p_minus @ c.delta_tensor @ b.e_p_plus,
                "err": c.convergence_report.get("error_estimate", 0.0)}

    return _safe(work)


def _kk_point(args):
    x, u, gam, u_min, u_max, tol, method = args

    def work():
        val, err = kk_reconstruct_delta(u, gam, x, u_min, u_max)
        direct = cooperative_response(x, tol=tol, method=method).delta_tensor[0, 0]
        return val, err, direct

    return _safe(work)


def _pool_map(fn, items, jobs):
    if jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sweep_lattice(cfg):
    """Normal-incidence T, R, Delta, Gamma versus a/lambda at fixed detuning."""
    a_vals = np.round(np.arange(cfg["a_min"], cfg["a_max"] + 1e-12, cfg["a_step"]), 12)
    thresholds = [1.0, math.sqrt(2.0), 2.0]
    too_close = [float(a) for a in a_vals if min(abs(a - t) for t in thresholds) < 1e-3]
    if too_close:
        raise ContractViolation("a/lambda grid comes within 1e-3 of a threshold: %s" % too_close)
    items = [(float(a), cfg["delta"], cfg["gamma_nr"], cfg["tol"], cfg["method"],
              cfg["on_resonance"]) for a in a_vals]
    table = ResultTable(
        ["a", "delta", "T", "R", "Delta", "Gamma"],
        units={"a": "lambda", "delta": "gamma", "Delta": "gamma", "Gamma": "gamma",
               "T": "intensity fraction", "R": "intensity fraction"},
    )
    errs, xchk = [0.0], [0.0]
    for a, (status, res) in zip(a_vals, _pool_map(_sweep_point, items, cfg["jobs"])):
        if status == "ok":
            table.add(**res)
            errs.append(res["err"])
            xchk.append(res["xcheck"])
        else:
            table.add(status=status, a=float(a))
    table.meta["convergence"] = {"max_error_estimate": max(errs), "max_gamma_crosscheck": max(xchk)}
    return table


def cmd_map_detuning(cfg):
    """Reflection map over (a/lambda, delta) plus the Delta(a) curve."""
    a_vals = np.linspace(cfg["a_min"], cfg["a_max"], int(cfg["n_a"]))
    deltas = np.linspace(cfg["delta_min"], cfg["delta_max"], int(cfg["n_delta"]))
    items = [(float(a), deltas, cfg["gamma_nr"], cfg["tol"], cfg["method"]) for a in a_vals]
    table = ResultTable(
        ["a", "delta", "R", "Delta", "Gamma", "kind"],
        units={"a": "lambda", "delta": "gamma", "Delta": "gamma", "Gamma": "gamma"},
    )
    errs = [0.0]
    for a, (status, res) in zip(a_vals, _pool_map(_detuning_column, items, cfg["jobs"])):
        if status != "ok":
            table.add(status=status, a=float(a))
            continue
        errs.append(res["err"])
        for d, R, kind in res["rows"]:
            table.add(a=float(a), delta=float(d), R=float(R), Delta=float(res["Delta"]),
                      Gamma=float(res["Gamma"]), kind=kind)
    table.meta["convergence"] = {"max_error_estimate": max(errs)}
    return table


def cmd_angle_map(cfg):
    """R/T and projected shifts on an n x n grid over the light-cone disk."""
    n = int(cfg["n_k"])
    ks = np.linspace(-K0, K0, n)
    kcap = K0 * math.sin(math.radians(89.9))
    pts = [(kx, ky) for kx in ks for ky in ks if math.hypot(kx, ky) < kcap]
    items = [(cfg["a"], kx, ky, cfg["delta"], cfg["gamma_nr"], cfg["tol"], cfg["method"])
             for kx, ky in pts]
    cols = ["kx", "ky", "R_pp", "R_ps", "R_sp", "R_ss", "T_pp", "T_ps", "T_sp", "T_ss",
            "Delta_pp", "Delta_ss"]
    table = ResultTable(cols, units={"kx": "k", "ky": "k", "Delta_pp": "gamma",
                                     "Delta_ss": "gamma"})
    errs = [0.0]
    for (kx, ky), (status, res) in zip(pts, _pool_map(_angle_point, items, cfg["jobs"])):
        row = {"kx": kx / K0, "ky": ky / K0}
        if status != "ok":
            table.add(status=status, **row)
            continue
        errs.append(res["err"])
        for i, mu in enumerate("ps"):
            for j, nu in enumerate("ps"):
                row["R_%s%s" % (mu, nu)] = float(res["R"][i, j])
                row["T_%s%s" % (mu, nu)] = float(res["T"][i, j])
        row["Delta_pp"] = float(res["Delta_pp"])
        row["Delta_ss"] = float(res["Delta_ss"])
        table.add(**row)
    table.meta["convergence"] = {"max_error_estimate": max(errs)}
    table.meta["a"] = cfg["a"]
    return table


def cmd_bands(cfg):
    """Delta and Gamma eigenvalue tracks along Gamma-X-M-Gamma."""
    path = bz_path(cfg["a"], int(cfg["points"]))
    bs = band_structure(cfg["a"], K0, path, tol=cfg["tol"], method=cfg["method"])
    cols = ["index", "kx", "ky", "kpar", "band1", "band2", "band_z", "gamma1", "gamma2",
            "gamma3", "v1x", "v1y", "v2x", "v2y", "inside_light_cone", "z_polarized"]
    table = ResultTable(cols, units={"kx": "k", "ky": "k", "kpar": "k", "band1": "gamma",
                                     "band2": "gamma", "band_z": "gamma", "gamma1": "gamma",
                                     "gamma2": "gamma", "gamma3": "gamma"})
    for i, kp in enumerate(path):
        row = {"index": i, "kx": kp.kx / K0, "ky": kp.ky / K0, "kpar": kp.norm / K0,
               "inside_light_cone": bool(bs.light_cone_mask[i])}
        if i in bs.failures:
            table.add(status=bs.failures[i].split(":")[0], **row)
            continue
        b = bs.bands[i]
        g = bs.gamma_bands[i]
        v = bs.polarizations[i]
        row.update(band1=float(b[0]), band2=float(b[1]), band_z=float(b[2]),
                   gamma1=float(g[0]), gamma2=float(g[1]), gamma3=float(g[2]),
                   v1x=float(v[0, 0]), v1y=float(v[1, 0]), v2x=float(v[0, 1]),
                   v2y=float(v[1, 1]), z_polarized=bool(bs.z_band_flag[i]))
        table.add(**row)
    table.meta["a"] = cfg["a"]
    return table


def cmd_beam(cfg):
    """Intensity map on the xz-plane for a Gaussian beam on a finite array."""
    a, nx, ny = cfg["a"], int(cfg["nx"]), int(cfg["ny"])
    theta = math.radians(cfg["theta"])
    w0 = cfg["waist"]
    if w0 is None:
        w0 = max(0.5, 0.3 * a * math.sqrt(nx * ny) * math.cos(theta))
    pol = cfg["pol"]
    if theta > 0 and pol in ("x", "y"):
        pol = "p" if pol == "x" else "s"
    delta = cfg["delta"]
    if cfg["on_resonance"]:
        delta = float(cooperative_response(a, tol=cfg["tol"], method=cfg["method"]).delta_tensor[0, 0])
    arr = perfect_array(nx, ny, a, EmitterParams(gamma_nr=cfg["gamma_nr"]), delta)
    beam = BeamSpec(w0=w0, theta=theta, pol=pol)
    sol = solve_dipoles(arr, beam)
    rt = extract_rt(arr, beam, solution=sol)
    ext, step = cfg["extent"], cfg["resolution"]
    xs = np.arange(-ext, ext + 1e-9, step)
    zs = np.arange(-ext, ext + 1e-9, step)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    pts = np.stack([gx.ravel(), np.zeros(gx.size), gz.ravel() + 1e-7], -1)
    # keep clear of the emitters in the z = 0 plane
    pts[np.abs(pts[:, 2]) < 1e-3, 2] = 1e-3
    e_tot = field_at(sol, arr, pts)
    table = ResultTable(["x", "z", "intensity"], units={"x": "lambda", "z": "lambda",
                                                       "intensity": "|E0|^2"})
    for p, e in zip(pts, e_tot):
        table.add(x=float(p[0]), z=float(p[2]), intensity=float(np.sum(np.abs(e) ** 2)))
    kp = KParallel.from_angles(theta, 0.0)
    summary = {"T_num": rt.T, "R_num": rt.R, "waist": w0, "delta": delta,
               "residual": sol.residual, "warnings": rt.warnings}
    if kp.norm < K0 and a * (1.0 + math.sin(theta)) >= 1.0:
        summary["reflected_order_power"] = {
            str(k): v for k, v in far_field_order_powers(sol, arr, a, kp, -1).items()
        }
    table.meta["summary"] = summary
    return table


def cmd_disorder(cfg):
    """Ensemble statistics of the disorder-induced shift for each dr/a."""
    table = ResultTable(
        ["dr_over_a", "samples", "mean_shift", "stderr", "delta_ordered", "predicted",
         "z_score", "z_score_negative_sign"],
        units={"mean_shift": "gamma", "stderr": "gamma", "delta_ordered": "gamma",
               "predicted": "gamma"},
    )
    for frac in _floats(cfg["dr"]):
        try:
            st = disorder_ensemble(int(cfg["nx"]), int(cfg["ny"]), cfg["a"], frac * cfg["a"],
                                   int(cfg["samples"]), cfg["seed"], cfg["disorder_mode"])
        except CoopScatError as exc:
            table.add(status=type(exc).__name__, dr_over_a=frac)
            continue
        zneg = (st.mean + st.predicted) / st.stderr if st.stderr > 0 else 0.0
        table.add(dr_over_a=frac, samples=st.n_samples, mean_shift=st.mean,
                  stderr=st.stderr, delta_ordered=st.delta_ordered, predicted=st.predicted,
                  z_score=st.z_score, z_score_negative_sign=zneg)
    table.meta["rng"] = "numpy PCG64 via SeedSequence(seed).spawn(samples)"
    return table


def cmd_saturation(cfg):
    """Photon number and power scale for saturating the array."""
    est = saturation_estimate(cfg["a"], cfg["waist"] if cfg["waist"] is not None else 1.5)
    table = ResultTable(
        ["a", "waist", "P0", "N_photons", "Gamma_plus_gamma", "W_sat", "sum_Pn"],
        units={"a": "lambda", "waist": "lambda", "Gamma_plus_gamma": "gamma",
               "W_sat": "hbar omega_a gamma"},
    )
    table.add(a=cfg["a"], waist=cfg["waist"] if cfg["waist"] is not None else 1.5, P0=est.p0,
              N_photons=est.n_photons, Gamma_plus_gamma=est.gamma_total, W_sat=est.w_sat,
              sum_Pn=est.power_sum)
    return table


def cmd_kk(cfg):
    """Kramers-Kronig reconstruction of Delta(a/lambda) against the direct sum."""
    grid = kk_grid(cfg["u_max"], step=cfg["u_step"])
    gam = gamma_normal_incidence(grid.u)
    xs = _floats(cfg["x"])
    items = [(x, grid.u, gam, grid.u_min, grid.u_max, cfg["tol"], cfg["method"]) for x in xs]
    table = ResultTable(
        ["x", "delta_kk", "truncation_error", "delta_direct", "difference", "within_tolerance"],
        units={"x": "lambda", "delta_kk": "gamma", "truncation_error": "gamma",
               "delta_direct": "gamma", "difference": "gamma"},
    )
    for x, (status, res) in zip(xs, _pool_map(_kk_point, items, cfg["jobs"])):
        if status != "ok":
            table.add(status=status, x=x)
            continue
        val, err, direct = res
        diff = val - direct
        table.add(x=x, delta_kk=val, truncation_error=err, delta_direct=direct,
                  difference=diff, within_tolerance=abs(diff) <= 0.05 * abs(direct) + err)
    table.meta["grid_points"] = int(grid.u.size)
    return table


COMMANDS = {
    "sweep-lattice": cmd_sweep_lattice,
    "map-detuning": cmd_map_detuning,
    "angle-map": cmd_angle_map,
    "bands": cmd_bands,
    "beam": cmd_beam,
    "disorder": cmd_disorder,
    "saturation": cmd_saturation,
    "kk-check": cmd_kk,
}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--a", type=float, help="lattice constant a/lambda")
    p.add_argument("--delta", type=float, help="detuning delta/gamma (default 0)")
    p.add_argument("--gamma-nr", type=float, help="non-radiative width / gamma (default 0)")
    p.add_argument("--theta", type=float, help="incidence polar angle in degrees (default 0)")
    p.add_argument("--phi", type=float, help="incidence azimuth in degrees (default 0)")
    p.add_argument("--pol", choices=["p", "s", "x", "y"], help="incident polarization")
    p.add_argument("--waist", type=float, help="beam waist w0/lambda")
    p.add_argument("--nx", type=int, help="sites along x")
    p.add_argument("--ny", type=int, help="sites along y")
    p.add_argument("--tol", type=float, help="lattice-sum tolerance (default 1e-3)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--method", choices=["ewald", "damped"], help="lattice-sum engine")
    p.add_argument("--on-resonance", action="store_const", const=True, default=None,
                   help="set delta to the normal-incidence Delta(a)")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--sidecar", action="store_const", const=True, default=None,
                   help="also write OUT.json with the metadata")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")


EXTRA = {
    "sweep-lattice": [("--a-min", float), ("--a-max", float), ("--a-step", float)],
    "map-detuning": [("--a-min", float), ("--a-max", float), ("--n-a", int),
                     ("--delta-min", float), ("--delta-max", float), ("--n-delta", int)],
    "angle-map": [("--n-k", int)],
    "bands": [("--points", int)],
    "beam": [("--extent", float), ("--resolution", float)],
    "disorder": [("--dr", str), ("--samples", int), ("--disorder-mode", str)],
    "saturation": [],
    "kk-check": [("--x", str), ("--u-max", float), ("--u-step", float)],
}

BASE_DEFAULTS = {"delta": 0.0, "gamma_nr": 0.0, "theta": 0.0, "phi": 0.0, "pol": "x",
                 "waist": None, "nx": 26, "ny": 26, "tol": 1e-3, "seed": 0,
                 "method": "ewald", "on_resonance": False, "sidecar": False,
                 "jobs": os.cpu_count() or 1, "a": 0.2}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="coopscat",
        description="Coupled-dipole scattering by square arrays of point emitters.",
    )
    parser.add_argument("--version", action="version", version="coopscat %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.strip().splitlines()[0])
        _add_common(p)
        for flag, typ in EXTRA[name]:
            p.add_argument(flag, type=typ)
    return parser


def _coerce(key, value, reference):
    if value is None or not isinstance(value, str):
        return value
    ref = reference.get(key)
    if isinstance(ref, bool) or key in ("on_resonance", "sidecar"):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(ref, int) and not isinstance(ref, bool):
        return int(value)
    if isinstance(ref, float) or key in ("waist", "a", "delta"):
        return float(value)
    return value


def resolve_config(ns):
    """Merge defaults, config file and explicit flags into one dict."""
    cmd = ns.command
    cfg = dict(BASE_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(cmd, {}))
    known = set(cfg) | {k for k in vars(ns)}
    if ns.config:
        try:
            filed = read_config_file(ns.config)
        except OSError as exc:
            raise ContractViolation("cannot read config file: %s" % exc)
        unknown = sorted(set(filed) - known)
        if unknown:
            raise ContractViolation("unknown config keys: %s" % ", ".join(unknown))
        for key, val in filed.items():
            try:
                cfg[key] = _coerce(key, val, cfg)
            except ValueError:
                raise ContractViolation("bad value for %s: %r" % (key, val))
    for key, val in vars(ns).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    cfg["command"] = cmd
    if cfg.get("tol", 1e-3) < 1e-6:
        raise ContractViolation("tol must be >= 1e-6")
    if cfg.get("jobs", 1) < 1:
        raise ContractViolation("--jobs must be positive")
    return cfg


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
    except ContractViolation as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    runnable = {k: v for k, v in cfg.items() if k not in ("out", "jobs", "sidecar")}
    try:
        table = COMMANDS[cfg["command"]](cfg)
    except ContractViolation as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except CoopScatError as exc:
        print("numeric failure: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return EXIT_NUMERIC
    table.meta["command"] = cfg["command"]
    table.meta["config"] = runnable
    table.meta["config_hash"] = config_hash(runnable)
    if cfg.get("out"):
        table.write(cfg["out"], sidecar=cfg.get("sidecar", False))
    else:
        sys.stdout.write(table.to_csv())
    if table.n_failed:
        print("%d point(s) failed; see status column" % table.n_failed, file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
