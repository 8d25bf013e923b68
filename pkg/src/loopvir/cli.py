"""Command-line front end: ``loopvir verify|hierarchy|simulate|converge``.

Each command reads an optional JSON config, applies flag overrides, writes
its outputs into ``--out`` and finishes with ``manifest.json``.  Exit codes:
0 when every check passes, 1 on a failed check or numerical failure, 2 on a
usage or configuration error.
"""
import argparse
import csv
import dataclasses
import datetime
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .algebra import (AlgebraElement, DualPoint, coad_defect, coad_sign, cocycle_defect,
                      jacobi_defect, pair)
from .errors import BlowUpError, ConfigError, LoopvirError, ResonanceError, SolvabilityError
from .magri import (FrozenPoint, Functional, GradientPair, TangentField, bracket_const,
                    casimir_H0, closure_defect, h1_closed_form, ham_lie,
                    hierarchy_gradients, involution, ladder_defect, magri_reconstruct,
                    pencil_jacobi_defect, quadratic_functionals, tangent_defect)
from .spectral import (MEAN_FREE, SpectralField, dealias_cutoff, derive, norm, wavenumbers,
                       write_snapshot)
from . import solver

SQRT2 = math.sqrt(2.0)

# configuration -----------------------------------------------------------------------

VERIFY_DEFAULTS = {
    "grid": 16,
    "band": 3,
    "hierarchy_grid": 32,
    "hierarchy_band": 2,
    "seeds": [0, 1, 2],
    "c": SQRT2,
    "lambdas": [-1.0, 0.5, 2.0],
    "modes": None,
    "tolerances": {
        "coadjoint": 1e-10, "jacobi": 1e-9, "cocycle_GF": 1e-10, "cocycle_loop": 1e-10,
        "casimir": 1e-10, "eq15": 1e-12, "ladder": 1e-9, "h1_homotopy": 1e-8,
        "involution": 1e-7, "closure": 1e-6, "pencil_jacobi": 1e-7,
    },
}

HIERARCHY_DEFAULTS = {"grid": 32, "band": 2, "seed": 0, "k_max": 3, "c": SQRT2, "nodes": 32}

SIMULATE_DEFAULTS = {"tolerances": {"H0": 1e-8, "H1": 1e-6}}

CONVERGE_DEFAULTS = {
    "equation": "eq1",
    "temporal": {"n": 16, "t_final": 1.0, "dts": [0.2, 0.1, 0.05, 0.025]},
    "spatial": {"grids": [16, 32], "dt": 0.01, "t_final": 0.5},
    "order_target": 4.0,
    "order_tolerance": 0.2,
    "ratio_min": 1e3,
}


def _merge(defaults, given, where=""):
    out = json.loads(json.dumps(defaults))
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


# output helpers ----------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: NaN and infinities become null, numpy scalars become floats."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    _atomic_write(path, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc)
    else:
        t = datetime.datetime.now(datetime.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out, command, config_path, seed, started, files):
    digests = {os.path.relpath(f, out).replace(os.sep, "/"): _digest(f) for f in sorted(files)}
    write_json(os.path.join(out, "manifest.json"), {
        "command": command,
        "config": config_path,
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": _timestamp(),
        "outputs": digests,
    })


# verify ------------------------------------------------------------------------------


def _entry(check, grid, seed, defect, tol, **extra):
    ok = defect is not None and math.isfinite(defect) and defect < tol
    return {"check": check, "grid": grid, "seed": seed, "defect": defect,
            "tolerance": tol, "pass": bool(ok), **extra}


def _failure(check, grid, seed, tol, exc, **extra):
    e = {"check": check, "grid": grid, "seed": seed, "defect": None, "tolerance": tol,
         "pass": False, "error": str(exc), **extra}
    if isinstance(exc, ResonanceError):
        e["modes"] = [list(m) for m in exc.modes]
    return e


def _modes_field(n, modes, seed, stream):
    """Real field built from the listed (kx, ky) modes with seeded coefficients."""
    g = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))
    c = np.zeros((n, n), dtype=complex)
    for kx, ky in modes:
        z = g.standard_normal() + 1j * g.standard_normal()
        c[kx % n, ky % n] += z
        c[-kx % n, -ky % n] += np.conj(z)
    return SpectralField(c)


def _hier_point(cfg, seed):
    n = cfg["hierarchy_grid"]
    if cfg["modes"]:
        return DualPoint(_modes_field(n, cfg["modes"], seed, (0,)),
                         _modes_field(n, cfg["modes"], seed, (1,)))
    return DualPoint.random(n, seed, cfg["hierarchy_band"], with_charges=False)


def _linear_functional(Y):
    """G(m) = <Y, m>, whose differential is Y itself."""
    return Functional("G", lambda m: GradientPair(Y.f, Y.a), lambda m: pair(Y, m))


def _algebra_checks(cfg, seed):
    n, b = cfg["grid"], cfg["band"]
    X = AlgebraElement.random(n, seed, b, stream=(0,))
    Y = AlgebraElement.random(n, seed, b, stream=(1,))
    Z = AlgebraElement.random(n, seed, b, stream=(2,))
    m = DualPoint.random(n, seed, b, stream=(3,))
    return [
        ("coadjoint", lambda: coad_defect(X, m, Y), {}),
        ("jacobi", lambda: jacobi_defect(X, Y, Z), {}),
        ("cocycle_GF", lambda: cocycle_defect("GF", X, Y, Z), {}),
        ("cocycle_loop", lambda: cocycle_defect("loop", X, Y, Z), {}),
    ]


def _hierarchy_checks(cfg, seed):
    c = cfg["c"]
    fp = FrozenPoint(c)
    n = cfg["hierarchy_grid"]
    m = _hier_point(cfg, seed)
    H0 = casimir_H0()

    def eq15():
        X = ham_lie(H0, m)
        fx = derive(m.g, "x")
        expected = TangentField(fx, fx * 2.0 + derive(m.b, "x"))
        return tangent_defect(X, expected)

    def casimir():
        Y = AlgebraElement.random(n, seed, cfg["hierarchy_band"], stream=(5,), with_center=False)
        G = _linear_functional(Y)
        worst = abs(bracket_const(H0, G, fp, m)) / (1.0 + Y.norm())
        H1 = h1_closed_form(c, MEAN_FREE, validate=False)
        worst = max(worst, abs(bracket_const(H0, H1, fp, m)) / (1.0 + H1.gradient(m).norm()))
        return worst

    def ladder(k):
        return lambda: ladder_defect(k, m, fp)

    def homotopy():
        H1 = h1_closed_form(c, MEAN_FREE, validate=False)
        v, w = H1.value(m), magri_reconstruct(1, m, fp)
        return abs(v - w) / max(abs(v), 1e-300)

    def inv():
        lie, const = involution(m, fp, 2)
        return float(max(lie.max(), const.max()))

    def pencil(lam):
        def run():
            mm = DualPoint.random(cfg["grid"], seed, 2, stream=(7,))
            return pencil_jacobi_defect(lam, *quadratic_functionals(), mm, fp)
        return run

    checks = [("eq15", eq15, {}), ("casimir", casimir, {}),
              ("ladder", ladder(1), {"k": 1}), ("ladder", ladder(2), {"k": 2}),
              ("h1_homotopy", homotopy, {}), ("involution", inv, {"k_max": 2}),
              ("closure", lambda: max(closure_defect(k, m, fp, seed) for k in (1, 2)), {"k_max": 2})]
    checks += [("pencil_jacobi", pencil(lam), {"lambda": lam}) for lam in cfg["lambdas"]]
    return checks


def cmd_verify(cfg, only):
    tol = cfg["tolerances"]
    entries = []
    sigma = coad_sign()
    for seed in cfg["seeds"]:
        for group, grid in ((_algebra_checks(cfg, seed), cfg["grid"]),
                            (_hierarchy_checks(cfg, seed), cfg["hierarchy_grid"])):
            for name, fn, extra in group:
                if only and name not in only:
                    continue
                g = cfg["grid"] if name == "pencil_jacobi" else grid
                try:
                    entries.append(_entry(name, g, seed, float(fn()), tol[name], **extra))
                except (ResonanceError, SolvabilityError) as exc:
                    entries.append(_failure(name, g, seed, tol[name], exc, **extra))
    ok = bool(entries) and all(e["pass"] for e in entries)
    return {"command": "verify", "sigma": sigma, "config": cfg, "checks": entries, "pass": ok}


# hierarchy ---------------------------------------------------------------------------


def cmd_hierarchy(cfg):
    k_max = int(cfg["k_max"])
    if not 0 <= k_max <= 3:
        raise ConfigError("k_max must lie in 0..3")
    n, seed = cfg["grid"], cfg["seed"]
    fp = FrozenPoint(cfg["c"])
    m = DualPoint.random(n, seed, cfg["band"], with_charges=False)
    grads = hierarchy_gradients(m, fp, k_max)
    lie, const = involution(m, fp, k_max, grads)
    header = (["k", "seed", "value", "ladder_defect", "closure_defect"]
              + [f"lie_{l}" for l in range(k_max + 1)] + [f"const_{l}" for l in range(k_max + 1)])
    rows = []
    for k in range(k_max + 1):
        value = magri_reconstruct(k, m, fp, nodes=cfg["nodes"])
        closure = 0.0 if k == 0 else closure_defect(k, m, fp, seed)
        rows.append([k, seed, float(value), float(ladder_defect(k, m, fp, grads)), float(closure)]
                    + [float(x) for x in lie[k]] + [float(x) for x in const[k]])
    return header, rows


# simulate ----------------------------------------------------------------------------


def _sim_config(cfg):
    fields = {f.name for f in dataclasses.fields(solver.SimConfig)}
    kwargs = {k: v for k, v in cfg.items() if k in fields}
    return solver.SimConfig(**kwargs)


def _tail(phi):
    """Largest coefficient in the outer three shells below the dealiasing cutoff."""
    kx = np.abs(wavenumbers(phi.nx))[:, None]
    ky = np.abs(wavenumbers(phi.ny))[None, :]
    shell = np.maximum(kx, ky) >= dealias_cutoff(min(phi.nx, phi.ny)) - 2
    return float(np.abs(phi.coef)[shell].max(initial=0.0))


def cmd_simulate(cfg, out):
    sc = _sim_config(cfg)
    tol = cfg["tolerances"]
    snapdir = os.path.join(out, "snapshots")
    os.makedirs(snapdir, exist_ok=True)
    files = []
    state0 = solver.initial_state(sc)
    scale = solver.monitor_scale(sc, state0.u, state0.v)
    summary = {"command": "simulate", "config": sc.to_dict(), "tolerances": tol}
    try:
        final, log, snaps = solver.run(sc, state0)
    except BlowUpError as exc:
        summary.update({"pass": False, "error": str(exc), "last_good_t": exc.last_good_t})
        return summary, files, 1
    except (ResonanceError, SolvabilityError) as exc:
        summary.update({"pass": False, "error": str(exc)})
        return summary, files, 1
    path = os.path.join(out, "conservation.csv")
    write_csv(path, ["t", "H0", "H1", "H2", "xmean_defect"], log.rows())
    files.append(path)
    for i, (t, u, v) in enumerate(snaps):
        for name, fld in (("u", u), ("v", v)):
            if fld is None:
                continue
            p = os.path.join(snapdir, f"{name}_{i:05d}.csv")
            write_snapshot(p, fld, t, name)
            files.append(p)
    drifts = {h: log.drift(h, scale) for h in ("H0", "H1", "H2")}
    flags = {h: bool(drifts[h] < tol[h]) for h in tol}
    summary.update({
        "final_t": final.t,
        "final_norms": {"u": norm(final.u), "v": None if final.v is None else norm(final.v)},
        "spectral_tail": {"u": _tail(final.u), "v": None if final.v is None else _tail(final.v)},
        "drift": drifts,
        "drift_scale": scale,
        "max_xmean_defect": max(log.xmean_defect),
        "checks": flags,
        "pass": all(flags.values()),
    })
    return summary, files, 0 if summary["pass"] else 1


# converge ----------------------------------------------------------------------------


def cmd_converge(cfg, seed):
    eq = cfg["equation"]
    if eq not in ("eq1", "eq2", "family"):
        raise ConfigError("converge supports eq1, eq2 and family")
    tp, sp = cfg["temporal"], cfg["spatial"]
    base = solver.SimConfig(equation=eq, n=tp["n"], dt=tp["dts"][0], t_final=tp["t_final"],
                            stride=10**9, seed=seed)
    dts, terr, order = solver.temporal_study(solver.sin_sin_cos(), base, tuple(tp["dts"]))
    sbase = solver.SimConfig(equation=eq, n=sp["grids"][0], dt=sp["dt"], t_final=sp["t_final"],
                             stride=10**9, seed=seed)
    grids, serr, ratio = solver.spatial_study(solver.analytic_wave(), sbase, tuple(sp["grids"]))
    rows = ([["temporal", float(dt), float(e)] for dt, e in zip(dts, terr)]
            + [["spatial", int(g), float(e)] for g, e in zip(grids, serr)])
    ok_t = abs(order - cfg["order_target"]) <= cfg["order_tolerance"]
    ok_s = ratio >= cfg["ratio_min"]
    report = {"command": "converge", "config": cfg, "temporal_order": order,
              "spatial_ratio": ratio, "checks": {"temporal": bool(ok_t), "spatial": bool(ok_s)},
              "pass": bool(ok_t and ok_s)}
    return rows, report


# entry point -------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="loopvir", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"loopvir {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("verify", "run the algebraic and Hamiltonian identity checks"),
                       ("hierarchy", "tabulate H_0..H_kmax with ladder and involution defects"),
                       ("simulate", "integrate an equation and log conserved quantities"),
                       ("converge", "manufactured-solution convergence orders")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int, help="override the seed")
        s.add_argument("--grid", type=int, help="override the grid size")
        s.add_argument("--c", type=float, help="override the parameter c")
        s.add_argument("--out", default=".", help="output directory (default: .)")
        if name == "verify":
            s.add_argument("--only", action="append", help="run only the named check (repeatable)")
    return p


def _apply_overrides(command, cfg, args):
    if command == "verify":
        if args.seed is not None:
            cfg["seeds"] = [args.seed]
        if args.grid is not None:
            cfg["grid"] = cfg["hierarchy_grid"] = args.grid
    elif command == "hierarchy" or command == "simulate":
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.grid is not None:
            cfg["grid" if command == "hierarchy" else "n"] = args.grid
    elif command == "converge":
        if args.grid is not None:
            cfg["temporal"]["n"] = args.grid
    if args.c is not None and command != "converge":
        cfg["c"] = args.c
    return cfg


def _config_for(command, raw):
    if command == "verify":
        return _merge(VERIFY_DEFAULTS, raw)
    if command == "hierarchy":
        return _merge(HIERARCHY_DEFAULTS, raw)
    if command == "converge":
        return _merge(CONVERGE_DEFAULTS, raw)
    sim_keys = {f.name for f in dataclasses.fields(solver.SimConfig)}
    defaults = {**{k: v for k, v in dataclasses.asdict(solver.SimConfig()).items()},
                **SIMULATE_DEFAULTS}
    bad = set(raw) - sim_keys - set(SIMULATE_DEFAULTS)
    if bad:
        raise ConfigError(f"unknown config keys {sorted(bad)}")
    return _merge(defaults, raw)


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = _timestamp()
    out = args.out
    try:
        cfg = _apply_overrides(args.command, _config_for(args.command, load_config(args.config)), args)
        os.makedirs(out, exist_ok=True)
        files = []
        code = 0
        seed = None
        if args.command == "verify":
            seed = cfg["seeds"]
            report = cmd_verify(cfg, set(args.only or ()))
            code = 0 if report["pass"] else 1
            for e in report["checks"]:
                print(f"{e['check']:<14} grid={e['grid']:<3} seed={e['seed']:<3} "
                      f"defect={e['defect']!s:<24} {'pass' if e['pass'] else 'FAIL'}")
                if "modes" in e:
                    print(f"  resonant modes: {e['modes']}", file=sys.stderr)
        elif args.command == "hierarchy":
            seed = cfg["seed"]
            try:
                header, rows = cmd_hierarchy(cfg)
            except ResonanceError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
            path = os.path.join(out, "hierarchy.csv")
            write_csv(path, header, rows)
            files.append(path)
            report = None
        elif args.command == "simulate":
            seed = cfg["seed"]
            report, files, code = cmd_simulate(cfg, out)
            if "error" in report:
                print(f"error: {report['error']}", file=sys.stderr)
        else:
            seed = args.seed if args.seed is not None else 0
            rows, report = cmd_converge(cfg, seed)
            path = os.path.join(out, "convergence.csv")
            write_csv(path, ["kind", "parameter", "max_error"], rows)
            files.append(path)
            code = 0 if report["pass"] else 1
            print(f"temporal order {report['temporal_order']:.4f}; "
                  f"spatial error ratio {report['spatial_ratio']:.3e}")
        if report is not None:
            path = os.path.join(out, "report.json")
            write_json(path, report)
            files.append(path)
        write_manifest(out, args.command, args.config, seed, started, files)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TypeError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LoopvirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
