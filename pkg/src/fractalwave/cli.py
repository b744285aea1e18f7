"""Command-line front end.

Every subcommand reads an optional JSON config (``--config``); flags given on
the command line override its keys.  Artifacts go to ``--out``, or to
``$FRACTALWAVE_OUT``, or to ``./fractalwave-out``.

Exit status: 0 success, 1 invalid input (or failed acceptance in ``report``),
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, StructureError

OUT_ENV = "FRACTALWAVE_OUT"
DEFAULT_OUT = "fractalwave-out"

DEFAULTS = {
    "preset": None,
    "fractal": None,
    "level": 6,
    "b": "N",
    "beta": 1.0,
    "modes": None,
    "seed": 0,
    "t_end": 1.0,
    "n_out": 11,
    "times": None,
    "vertices": None,
    "eigenvectors": False,
    "method": "dense",
    "weyl_window": None,
    "lam": [1.0],
    "kind": "temporal",
    "t": 2.0,
    "s": 2.0,
    "lags": None,
    "lag_range": [1e-4, 1e-2, 9],
    "vertex": None,
    "pairs": None,
    "window": None,
    "steps": 1000,
    "probes": 4,
    "presets": None,
    "criteria": None,
    "out": None,
}


class ConfigError(ValueError):
    pass


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return 1


def load_config(path) -> dict:
    """Parse a JSON config, reporting problems as ``file:line: message``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    norm = {}
    for key, val in data.items():
        k = key.replace("-", "_")
        if k not in DEFAULTS:
            raise ConfigError(f"{path}:{_line_of(text, key)}: unknown key {key!r}")
        norm[k] = val
    norm["_lines"] = {k.replace("-", "_"): _line_of(text, k) for k in data}
    norm["_path"] = str(path)
    return norm


def _merge(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    lines, src = {}, None
    if getattr(args, "config", None):
        file_cfg = load_config(args.config)
        lines, src = file_cfg.pop("_lines"), file_cfg.pop("_path")
        cfg.update(file_cfg)
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            cfg[k] = v
    cfg["_lines"], cfg["_path"] = lines, src
    return cfg


def _bad(cfg: dict, key: str, msg: str) -> ConfigError:
    if cfg.get("_path") and key in cfg["_lines"]:
        return ConfigError(f"{cfg['_path']}:{cfg['_lines'][key]}: {key}: {msg}")
    return ConfigError(f"--{key.replace('_', '-')}: {msg}")


def _spec(cfg):
    from .topology import load_spec

    src = cfg["fractal"] or cfg["preset"]
    if not src:
        raise ConfigError("no fractal given: use --preset NAME or --fractal FILE")
    return load_spec(src)


def _outdir(cfg) -> Path:
    out = Path(cfg["out"] or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int(cfg, key, lo=None):
    try:
        v = int(cfg[key])
    except (TypeError, ValueError):
        raise _bad(cfg, key, f"expected an integer, got {cfg[key]!r}") from None
    if lo is not None and v < lo:
        raise _bad(cfg, key, f"must be >= {lo}, got {v}")
    return v


def _float(cfg, key, lo=None):
    try:
        v = float(cfg[key])
    except (TypeError, ValueError):
        raise _bad(cfg, key, f"expected a number, got {cfg[key]!r}") from None
    if lo is not None and v < lo:
        raise _bad(cfg, key, f"must be >= {lo}, got {v}")
    return v


def _floats(cfg, key):
    val = cfg[key]
    if isinstance(val, str):
        val = [x for x in val.split(",") if x.strip()]
    try:
        return np.array([float(x) for x in val])
    except (TypeError, ValueError):
        raise _bad(cfg, key, f"expected a list of numbers, got {val!r}") from None


def _b(cfg):
    b = cfg["b"]
    return b if isinstance(b, (str, list, tuple)) else str(b)


def _system(cfg, spec):
    from .energy import build_system

    level = _int(cfg, "level", 1)
    return build_system(spec, level, _b(cfg))


def _spectrum(cfg, system, default_all=True):
    from .spectrum import solve_spectrum

    K = cfg["modes"]
    if K is None and not default_all:
        K = min(system.dim, 200)
    K = system.dim if K is None else _int(dict(cfg, modes=K), "modes", 1)
    if K > system.dim:
        raise _bad(cfg, "modes", f"only {system.dim} modes at this level and boundary condition")
    return solve_spectrum(system, K, method=cfg["method"])


def _times(cfg):
    if cfg["times"] is not None:
        times = _floats(cfg, "times")
    else:
        t_end = _float(cfg, "t_end", 0.0)
        times = np.linspace(0.0, t_end, _int(cfg, "n_out", 2))
    if np.any(np.diff(times) <= 0):
        raise _bad(cfg, "times", "output times must be increasing")
    return times


def _lags(cfg):
    if cfg["lags"] is not None:
        return _floats(cfg, "lags")
    lo, hi, n = cfg["lag_range"]
    return np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(n))


def _emit(payload: dict, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


# --- subcommands ------------------------------------------------------------


def cmd_validate(cfg) -> int:
    from .energy import HarmonicStructure, dimension_exponents, verify_harmonic_structure
    from .topology import verify_gluing

    spec = _spec(cfg)
    glue = verify_gluing(spec)
    hs = HarmonicStructure.from_spec(spec)
    harm = verify_harmonic_structure(spec, hs)
    dims = dimension_exponents(hs.r)
    report = {
        "fractal": spec.name,
        "gluing": glue,
        "harmonic_residual": harm["residual"],
        "harmonic_pass": harm["pass"],
        "d_H": dims.d_H,
        "d_s": dims.d_s,
    }
    _emit(report, _outdir(cfg) / "validate.json")
    print(f"{spec.name}: {glue['n_vertices_level1']} level-1 vertices, {glue['identifications']} gluings")
    print(f"Schur residual {harm['residual']:.3e} ({'ok' if harm['pass'] else 'FAILED'})")
    print(f"d_H = {dims.d_H:.6f}, d_s = {dims.d_s:.6f}")
    return 0 if harm["pass"] else 1


def cmd_spectrum(cfg) -> int:
    from .energy import dimension_exponents
    from .spectrum import weyl_diagnostics, write_eigenvectors_csv, write_spectrum_csv

    spec = _spec(cfg)
    system = _system(cfg, spec)
    sp = _spectrum(cfg, system)
    out = _outdir(cfg)
    write_spectrum_csv(out / "spectrum.csv", sp)
    if cfg["eigenvectors"]:
        write_eigenvectors_csv(out / "eigenvectors.csv", sp)
    lo = 2 if system.is_neumann else 1
    window = cfg["weyl_window"] or [lo, min(sp.K, 50)]
    summary = {"fractal": spec.name, "level": system.level, "b": sp.b, "K": sp.K, "lambda_1": sp.lam[0]}
    if window[1] - window[0] >= 2:
        fit = weyl_diagnostics(sp, dimension_exponents(spec.harmonic["r"]), tuple(window))
        summary["weyl"] = {
            "window": list(fit.window),
            "slope": fit.slope,
            "d_s_estimate": fit.d_s_estimate,
            "d_s_reference": fit.d_s_reference,
        }
    _emit(summary, out / "spectrum.json")
    print(f"{sp.K} eigenvalues written; lambda_1 = {sp.lam[0]:.6g}")
    return 0


def cmd_kernel(cfg) -> int:
    from .kernel import damped_V, damped_Vdot, int_V2

    beta = _float(cfg, "beta", 0.0)
    lams = _floats(cfg, "lam")
    if np.any(lams < 0):
        raise _bad(cfg, "lam", "eigenvalues must be >= 0")
    times = _times(cfg)
    path = _outdir(cfg) / "kernel.csv"
    with open(path, "w") as fh:
        fh.write("lambda,t,V,Vdot,int_V2\n")
        for lam in lams:
            V = damped_V(lam, times, beta)
            Vd = damped_Vdot(lam, times, beta)
            I = int_V2(lam, times, beta)
            for row in zip(times, V, Vd, I):
                fh.write(f"{float(lam)!r}," + ",".join(repr(float(x)) for x in row) + "\n")
    print(f"kernel table for {len(lams)} eigenvalue(s) at {len(times)} times written to {path}")
    return 0


def cmd_simulate(cfg) -> int:
    from .simulate import field_at, init_simulation, run_schedule

    spec = _spec(cfg)
    system = _system(cfg, spec)
    sp = _spectrum(cfg, system, default_all=False)
    beta = _float(cfg, "beta", 0.0)
    seed = _int(cfg, "seed", 0)
    times = _times(cfg)
    if times[0] < 0:
        raise _bad(cfg, "times", "times must be >= 0")
    cx = system.complex
    vertices = cfg["vertices"] or list(range(cx.n_vertices))
    idx = [cx.lookup(v) for v in vertices]
    state = init_simulation(sp, beta, sp.K, seed)
    out = _outdir(cfg)
    with open(out / "trajectory.csv", "w") as fh:
        fh.write("t,vertex_id,u\n")
        for st in run_schedule(state, times):
            smp = field_at(st, idx)
            for name, u in zip(smp.vertices, smp.values[0]):
                fh.write(f"{float(st.t)!r},{name},{float(u)!r}\n")
    _emit(
        {"fractal": spec.name, "level": system.level, "b": sp.b, "beta": beta, "K": sp.K, "seed": seed,
         "times": times},
        out / "simulate.json",
    )
    print(f"trajectory of {len(idx)} vertices at {len(times)} times written to {out / 'trajectory.csv'}")
    return 0


def cmd_variogram(cfg) -> int:
    from . import regularity as rg

    spec = _spec(cfg)
    system = _system(cfg, spec)
    beta = _float(cfg, "beta", 0.0)
    kind = cfg["kind"]
    method = cfg["method"]
    cx = system.complex
    if kind == "spatial":
        sp = _spectrum(cfg, system)
        if cfg["pairs"]:
            pairs = [tuple(p) for p in cfg["pairs"]]
        else:
            word = tuple((i % spec.M) + 1 for i in range(1, system.level))
            pairs = rg.cell_edge_pairs(cx, word, range(1, system.level))
        table = rg.spatial_variogram_exact(sp, beta, _float(cfg, "t", 0.0), pairs)
    elif kind in ("temporal", "l2"):
        s = _float(cfg, "s", 0.0)
        lags = _lags(cfg)
        if kind == "temporal":
            x = cfg["vertex"] or ((1,), spec.boundary[1])
            if method == "lanczos":
                table = rg.temporal_variogram_lanczos(system, beta, x, s, lags, _int(cfg, "steps", 1))
            else:
                table = rg.temporal_variogram_exact(_spectrum(cfg, system), beta, x, s, lags)
        elif method == "lanczos":
            table = rg.l2_modulus_slq(
                system, beta, s, lags, _int(cfg, "steps", 1), _int(cfg, "probes", 1), _int(cfg, "seed", 0)
            )
        else:
            table = rg.l2_modulus_exact(_spectrum(cfg, system), beta, s, lags)
    else:
        raise _bad(cfg, "kind", f"expected spatial, temporal or l2, got {kind!r}")
    out = _outdir(cfg)
    rg.write_variogram_csv(out / "variogram.csv", table)
    fit = rg.fit_exponent(table, cfg["window"])
    rg.write_fit_json(out / "fit.json", fit, {"kind": kind, "meta": table.meta})
    print(f"{kind} variogram: slope {fit.slope:.4f} +/- {fit.half_width:.4f} over {fit.window}")
    return 0


def cmd_equilibrium(cfg) -> int:
    from .equilibrium import equilibrium_gap, write_equilibrium_csv

    spec = _spec(cfg)
    beta = _float(cfg, "beta", 0.0)
    if beta == 0:
        raise _bad(cfg, "beta", "beta = 0 has no stationary law: mode variances grow linearly in t")
    system = _system(cfg, spec)
    sp = _spectrum(cfg, system, default_all=False)
    times = _floats(cfg, "times") if cfg["times"] is not None else np.array([1.0, 2.0, 5.0, 10.0])
    rep = equilibrium_gap(sp, beta, times)
    out = _outdir(cfg)
    write_equilibrium_csv(out / "equilibrium.csv", rep)
    _emit(
        {
            "fractal": spec.name,
            "level": system.level,
            "b": rep.b,
            "beta": beta,
            "K": sp.K,
            "total": rep.total,
            "weyl_tail": rep.weyl_tail,
            "zero_mode_rate": rep.zero_mode_rate,
            "times": rep.times,
            "total_gap": rep.total_gap,
            "gap_bound": rep.bound,
        },
        out / "equilibrium.json",
    )
    print(f"stationary E||u||^2 over {len(rep.modes)} modes: {rep.total:.6g}")
    if rep.zero_mode_rate is not None:
        print(f"zero mode excluded; its variance grows at rate {rep.zero_mode_rate:.6g} per unit time")
    return 0


def cmd_report(cfg) -> int:
    from .acceptance import CRITERIA, run_all

    presets = cfg["presets"] or ([cfg["preset"]] if cfg["preset"] else None)
    crit = cfg["criteria"]
    if crit is not None:
        crit = [int(c) for c in (crit.split(",") if isinstance(crit, str) else crit)]
        unknown = [c for c in crit if c not in CRITERIA]
        if unknown:
            raise _bad(cfg, "criteria", f"unknown criteria {unknown}")
    results = run_all(crit, presets)
    out = _outdir(cfg)
    lines = [r.line() for r in results]
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    _emit(
        {"criteria": [{"number": r.number, "title": r.title, "passed": r.passed, "summary": r.summary,
                       "metrics": r.metrics, "seconds": r.seconds} for r in results]},
        out / "report.json",
    )
    print("\n".join(lines))
    return 0 if n_pass == len(results) else 1


COMMANDS = {
    "validate": (cmd_validate, "check the fractal encoding and harmonic structure"),
    "spectrum": (cmd_spectrum, "eigenvalues (and optionally eigenvectors) at level n"),
    "kernel": (cmd_kernel, "tabulate V, dV/dt and the integral of V^2"),
    "simulate": (cmd_simulate, "sample one trajectory of the truncated field"),
    "variogram": (cmd_variogram, "exact spatial/temporal/L2 variograms and their slope"),
    "equilibrium": (cmd_equilibrium, "stationary variances and equilibrium gaps"),
    "report": (cmd_report, "run the acceptance checks and write a pass/fail summary"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fractalwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config; flags override its keys")
        p.add_argument("--preset", help="preset fractal: interval, gasket or hata")
        p.add_argument("--fractal", help="path to a fractal spec JSON file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        if name in ("spectrum", "simulate", "variogram", "equilibrium"):
            p.add_argument("--level", type=int)
            p.add_argument("--b", help="boundary condition: N, D or a label set such as {p1,p2}")
            p.add_argument("--modes", type=int, help="number of modes K")
            p.add_argument("--method", choices=["dense", "sparse", "lanczos"])
        if name in ("kernel", "simulate", "variogram", "equilibrium"):
            p.add_argument("--beta", type=float)
        if name in ("kernel", "simulate", "equilibrium"):
            p.add_argument("--times", help="comma-separated output times")
        if name in ("kernel", "simulate"):
            p.add_argument("--t-end", dest="t_end", type=float)
            p.add_argument("--n-out", dest="n_out", type=int)
        if name in ("simulate", "variogram"):
            p.add_argument("--seed", type=int)
        if name == "spectrum":
            p.add_argument("--eigenvectors", action="store_true", default=None)
        if name == "kernel":
            p.add_argument("--lam", help="comma-separated eigenvalues")
        if name == "variogram":
            p.add_argument("--kind", choices=["spatial", "temporal", "l2"])
            p.add_argument("--t", type=float, help="time for spatial variograms")
            p.add_argument("--s", type=float, help="base time for temporal variograms")
            p.add_argument("--lags", help="comma-separated lags")
            p.add_argument("--vertex", help="vertex name for temporal variograms, e.g. 1:p2")
            p.add_argument("--steps", type=int, help="Lanczos steps")
            p.add_argument("--probes", type=int, help="trace probes for --kind l2 --method lanczos")
        if name == "report":
            p.add_argument("--criteria", help="comma-separated criterion numbers")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = _merge(args)
        if cfg["method"] == "lanczos" and args.command not in ("variogram",):
            raise _bad(cfg, "method", "lanczos is only available for variograms")
        return fn(cfg)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, StructureError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
