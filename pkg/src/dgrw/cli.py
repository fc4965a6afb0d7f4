"""Command-line front end.

Every run that produces a series writes a CSV (``t,observable,estimate,std_error``)
and a JSON manifest from which the run can be replayed bit-for-bit.
"""
from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import amplify, grid, oracle, trajectory
from .core import ModelParams, ParameterError, derive_params, load_config, preset_params, PRESETS
from .gaussian import GaussianState

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GRID = 3
EXIT_QUADRATURE = 4
EXIT_FIXED_POINT = 5

# localization panels: (preset, gamma in units of r_c^2, grid spacing)
PANELS = {
    "a": ("grw1986", 1.0, "log"),
    "b": ("grw1986", 1e-6, "log"),
    "c": ("macro_1g", 1e6, "linear"),
    "d": ("macro_1g", 1e12, "linear"),
}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _git_rev():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {key: _jsonable(val) for key, val in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _params_from_dict(d):
    d = {key: (float(val) if isinstance(val, str) else val) for key, val in d.items()}
    return ModelParams.from_dict(d)


# -- argument handling ----------------------------------------------------------

def _add_param_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="key = value parameter file")
    p.add_argument("--lambda-rate", type=float)
    p.add_argument("--r-c", type=float)
    p.add_argument("--v-eta", type=float)
    p.add_argument("--mass", type=float)
    p.add_argument("--k", type=float, help="scaled run: dissipation parameter")
    p.add_argument("--eps-hat", type=float, help="scaled run: hbar/(M lambda r_c^2)")


def _add_grid_args(p):
    p.add_argument("--t-start", type=float, default=0.0)
    p.add_argument("--t-stop", type=float)
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--spacing", choices=("linear", "log"))
    p.add_argument("--scaled-time", action="store_true", help="times given in units of 1/lambda")


def _add_state_args(p):
    p.add_argument("--gamma", type=float, default=1.0, help="initial width in units of r_c^2")
    p.add_argument("--gamma-imag", type=float, default=0.0)
    p.add_argument("--x0", type=float, default=0.0, help="initial alpha in units of r_c")
    p.add_argument("--p0", type=float, default=0.0, help="initial beta in units of hbar/r_c")


def _add_run_args(p):
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.add_argument("--manifest", help="manifest path (default: CSV path + .json)")


def build_parser():
    ap = _Parser(prog="dgrw", description="Dissipative GRW collapse simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="print parameters and derived constants")
    _add_param_args(p)

    p = sub.add_parser("ensemble", help="Monte Carlo ensemble statistics")
    _add_param_args(p)
    _add_grid_args(p)
    _add_state_args(p)
    _add_run_args(p)

    p = sub.add_parser("variance", help="expected position variance from jump times only")
    _add_param_args(p)
    _add_grid_args(p)
    _add_state_args(p)
    _add_run_args(p)

    p = sub.add_parser("oracle", help="closed-form predictions as JSON")
    _add_param_args(p)
    _add_state_args(p)
    p.add_argument("--kind", required=True, choices=oracle.KINDS)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--lambda-eff", type=float)
    p.add_argument("--h0", type=float)

    p = sub.add_parser("grid-born", help="superposition collapse frequencies")
    _add_param_args(p)
    p.add_argument("--alpha", type=float, default=10.0, help="peak offset in units of r_c")
    p.add_argument("--gamma", type=float, default=1e-3, help="peak width in units of r_c^2")
    p.add_argument("--c-plus-sq", type=float, default=0.5)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("amplify", help="rigid-body reduction and two-particle tables")
    p.add_argument("action", choices=("reduce", "two-particle"))
    p.add_argument("body", nargs="?", help="body spec JSON (reduce)")
    p.add_argument("--v-eta", type=float)
    p.add_argument("--r-c", type=float, default=1e-7)
    p.add_argument("--mass", type=float, default=1e-27, help="particle mass (two-particle)")
    p.add_argument("--gamma-cm", type=float, default=5e-29)
    p.add_argument("--gamma-rel", type=float, default=5e-29)
    p.add_argument("--alpha", type=float, default=1e-15)
    p.add_argument("--y", type=float, nargs="*", default=[-3e-7, -1e-7, 0.0, 1e-7, 3e-7])

    p = sub.add_parser("fig2", help="expected position variance for one panel of the localization figure")
    p.add_argument("--panel", required=True, choices=sorted(PANELS))
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--t-stop", type=float, help="last time in units of 1/lambda")
    _add_run_args(p)

    p = sub.add_parser("replay", help="re-run a manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    return ap


def params_from_args(a) -> ModelParams:
    if a.k is not None or a.eps_hat is not None:
        if a.k is None or a.eps_hat is None:
            raise ConfigError("--k and --eps-hat must be given together")
        from .core import scaled_params
        return scaled_params(a.k, a.eps_hat)
    overrides = {"lambda_rate": a.lambda_rate, "r_c": a.r_c, "v_eta": a.v_eta, "mass": a.mass}
    overrides = {key: v for key, v in overrides.items() if v is not None}
    if a.config:
        base = load_config(a.config)
        return base.with_(**overrides) if overrides else base
    if a.preset:
        return preset_params(a.preset, **overrides)
    return ModelParams(**overrides)


def time_grid(start, stop, points, spacing):
    if stop is None or points < 1 or stop < start:
        raise ConfigError("need --t-stop >= --t-start and --points >= 1")
    if spacing == "log":
        if start <= 0:
            # a log grid starting at zero: first point 0, the rest log-spaced
            lo = stop * 1e-6
            return np.concatenate([[0.0], np.geomspace(lo, stop, points - 1)])
        return np.geomspace(start, stop, points)
    return np.linspace(start, stop, points)


def _default_spacing(params: ModelParams):
    # micro systems evolve over many decades of time
    return "log" if params.lambda_rate < 1.0 else "linear"


# -- runs -----------------------------------------------------------------------

def _state_from(cfg, params: ModelParams):
    r = params.r_c
    return GaussianState(cfg["x0"] * r, cfg["p0"] * params.hbar / r,
                         complex(cfg["gamma"], cfg["gamma_imag"]) * r * r)


def execute(config: dict, threads=None):
    """Run a serialized config; returns (csv_text, manifest dict)."""
    params = _params_from_dict(config["params"])
    tg = np.array(config["t_grid"], dtype=float)
    n_traj = int(config["n_traj"])
    seed = int(config["seed"])
    cmd = config["command"]
    s0 = _state_from(config["state"], params)
    t0 = time.perf_counter()
    extra = []
    if cmd == "ensemble":
        ser = trajectory.ensemble_statistics(params, s0, tg, n_traj, seed, threads=threads)
        text = ser.to_csv()
    elif cmd in ("variance", "fig2"):
        est, se = trajectory.expected_variance_timeonly(params, s0.gamma, tg, n_traj, seed,
                                                        threads=threads)
        ser = trajectory.EnsembleSeries(tg, n_traj, {"var_x_psi": est}, {"var_x_psi": se})
        if cmd == "fig2":
            free = oracle.free_variance(s0, tg, params)
            extra = [(float(t), "var_x_free", float(v), 0.0) for t, v in zip(tg, free)]
        rows = sorted(list(ser.to_rows()) + extra, key=lambda r: r[0])
        lines = ["t,observable,estimate,std_error"]
        lines += [f"{t:.17g},{key},{e:.17g},{s:.17g}" for t, key, e, s in rows]
        text = "\n".join(lines) + "\n"
    else:
        raise ConfigError(f"command {cmd!r} cannot be replayed")
    wall = time.perf_counter() - t0
    manifest = {
        "params": _jsonable(params.as_dict()),
        "derived": _jsonable(derive_params(params).as_dict()),
        "seed": seed,
        "n_traj": n_traj,
        "t_grid": tg.tolist(),
        "git_rev": _git_rev(),
        "wall_seconds": wall,
        "config": _jsonable(config),
    }
    return text, manifest


def _series_config(a, command):
    params = params_from_args(a)
    spacing = a.spacing or _default_spacing(params)
    tg = time_grid(a.t_start, a.t_stop, a.points, spacing)
    if a.scaled_time:
        tg = tg / params.lambda_rate
    return {
        "command": command,
        "params": _jsonable(params.as_dict()),
        "t_grid": tg.tolist(),
        "n_traj": a.n_traj,
        "seed": a.seed,
        "state": {"x0": a.x0, "p0": a.p0, "gamma": a.gamma, "gamma_imag": a.gamma_imag},
    }


def _fig2_config(a):
    preset, gam, spacing = PANELS[a.panel]
    params = preset_params(preset)
    if spacing == "log":
        stop = a.t_stop if a.t_stop is not None else 1e2
        tg = time_grid(0.0, stop, a.points, "log")
    else:
        stop = a.t_stop if a.t_stop is not None else 20.0
        tg = time_grid(0.0, stop, a.points, "linear")
    return {
        "command": "fig2",
        "panel": a.panel,
        "params": _jsonable(params.as_dict()),
        "t_grid": (tg / params.lambda_rate).tolist(),
        "n_traj": a.n_traj,
        "seed": a.seed,
        "state": {"x0": 0.0, "p0": 0.0, "gamma": gam, "gamma_imag": 0.0},
    }


def _write_outputs(text, manifest, out, manifest_path):
    if out:
        Path(out).write_text(text)
        mpath = manifest_path or (str(out) + ".json")
        Path(mpath).write_text(json.dumps(manifest, indent=2))
    else:
        sys.stdout.write(text)
        if manifest_path:
            Path(manifest_path).write_text(json.dumps(manifest, indent=2))


def _cmd_params(a):
    p = params_from_args(a)
    print(json.dumps({"params": _jsonable(p.as_dict()), "derived": _jsonable(derive_params(p).as_dict())},
                     indent=2))


def _cmd_oracle(a):
    params = params_from_args(a)
    s0 = _state_from({"x0": a.x0, "p0": a.p0, "gamma": a.gamma, "gamma_imag": a.gamma_imag}, params)
    pred = oracle.predict(a.kind, params, s0=s0, t=a.t, nu=a.nu, mu=a.mu, lambda_eff=a.lambda_eff,
                          h0=a.h0)
    print(json.dumps(_jsonable(pred.as_dict()), indent=2))


def _cmd_grid_born(a):
    params = params_from_args(a)
    r = params.r_c
    cp = math.sqrt(a.c_plus_sq)
    cm = math.sqrt(1.0 - a.c_plus_sq)
    res = grid.superposition_experiment(a.alpha * r, a.gamma * r * r, cp, cm, params, a.n_samples,
                                        a.seed, n=a.n)
    text = res.to_json()
    if a.out:
        Path(a.out).write_text(text)
    print(text)


def _cmd_amplify(a):
    if a.action == "reduce":
        if not a.body:
            raise ConfigError("reduce needs a body spec file")
        body = amplify.BodySpec.load(a.body)
        p = amplify.rigid_body_reduce(body, v_eta=a.v_eta, r_c=a.r_c)
        print(json.dumps({"params": _jsonable(p.as_dict()), "derived": _jsonable(derive_params(p).as_dict())},
                         indent=2))
        return
    kw = {"mass": a.mass, "r_c": a.r_c}
    if a.v_eta is not None:
        kw["v_eta"] = a.v_eta
    p = ModelParams(**kw)
    s = amplify.TwoParticleGaussian(a.gamma_cm, a.gamma_rel, a.alpha)
    approx = amplify.two_particle_post_variances_and_density(s, p.k, p.r_c)
    print("y,mean_x_cm,mean_x_rel,approx_x_cm,approx_x_rel,var_cm,var_rel,regime_valid")
    for y in a.y:
        cm, rel = amplify.two_particle_jump_means(s, y, p.k, p.r_c)
        lcm, lrel = amplify.two_particle_means_limit(a.alpha, y, p.k)
        print(f"{y:.17g},{cm:.17g},{rel:.17g},{lcm:.17g},{lrel:.17g},"
              f"{approx.var_cm:.17g},{approx.var_rel:.17g},{int(approx.valid)}")


def _cmd_series(a, command):
    config = _fig2_config(a) if command == "fig2" else _series_config(a, command)
    threads = a.threads if a.threads is not None else trajectory.default_threads()
    text, manifest = execute(config, threads=threads)
    _write_outputs(text, manifest, a.out, a.manifest)


def _cmd_replay(a):
    manifest = json.loads(Path(a.manifest).read_text())
    if "config" not in manifest:
        raise ConfigError("manifest has no config section")
    threads = a.threads if a.threads is not None else trajectory.default_threads()
    text, new_manifest = execute(manifest["config"], threads=threads)
    _write_outputs(text, new_manifest, a.out, None)


def _fail(code, kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def run(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, "config", e)
    except SystemExit as e:
        return int(e.code) if e.code else EXIT_OK
    try:
        if a.command == "params":
            _cmd_params(a)
        elif a.command == "oracle":
            _cmd_oracle(a)
        elif a.command == "grid-born":
            _cmd_grid_born(a)
        elif a.command == "amplify":
            _cmd_amplify(a)
        elif a.command in ("ensemble", "variance", "fig2"):
            _cmd_series(a, a.command)
        elif a.command == "replay":
            _cmd_replay(a)
    except grid.GridError as e:
        return _fail(EXIT_GRID, "grid", e)
    except oracle.QuadratureError as e:
        return _fail(EXIT_QUADRATURE, "quadrature", e)
    except oracle.FixedPointError as e:
        return _fail(EXIT_FIXED_POINT, "fixed_point", e)
    except (ConfigError, ParameterError, grid.RegimeError, amplify.NonRigidBodyError,
            ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        return _fail(EXIT_CONFIG, "config", e)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
