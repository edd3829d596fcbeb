"""Batch front door: config parsing, orchestration, and data emission.

Every experiment resolves its parameters from built-in defaults, an
optional flat key=value config file, and repeatable --param overrides
(in that order of increasing precedence), then writes plot-ready tables
plus a run manifest.  Identical resolved config and seed produce
bit-identical data files regardless of worker count; volatile facts
(wall time) live only in the manifest.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classical import SDEConfig, lyapunov_benettin, lyapunov_van_kampen, phase_diagram
from .errors import ConfigError, ConvergenceError, NumericalError, SovlabError
from .otoc import dissipation_time, dissipative_otoc
from .sov import min_sov_state, sov_eigensystem, sov_matrices
from .spin import SpinSpec, lmg_hamiltonian, spin_operators
from .superop import LindbladSpec
from .validation import run_all

_INV_SQRT3 = 1.0 / math.sqrt(3.0)

# Per-experiment parameter schema: name -> default.  Types are inferred
# from the defaults; unknown keys are rejected.
DEFAULTS = {
    "quantum-sov": {
        "S": 20.0, "Omega": 1.0, "gamma": 2.0,
        "ax": _INV_SQRT3, "ay": _INV_SQRT3, "az": _INV_SQRT3,
        "jump": "hlmg",
        "t_min": 0.002, "t_max": 0.6, "n_times": 60, "spacing": "geom",
        "conv_tol": 1e-2,
    },
    "otoc": {
        "S": 20.0, "Omega": 1.0, "gamma": 2.0,
        "ax": _INV_SQRT3, "ay": _INV_SQRT3, "az": _INV_SQRT3,
        "jump": "hlmg",
        "t_min": 0.002, "t_max": 0.6, "n_times": 60, "spacing": "geom",
        "normalization": "per_dim",
    },
    "min-state": {
        "S": 20.0, "Omega": 1.0, "gamma": 2.0,
        "ax": _INV_SQRT3, "ay": _INV_SQRT3, "az": _INV_SQRT3,
        "jump": "hlmg",
        "t_max": 0.6, "conv_tol": 1e-2,
    },
    "classical-lyapunov": {
        "Omega": 1.0, "gamma": 0.25,
        "M": 200, "dt": 1e-3, "t_max": 20.0,
        "renorm_interval": 0.5, "delta0": 1e-8, "discard": 2,
        "x0q": 1e-3, "x0p": 0.0, "seed": 0,
    },
    "phase-diagram": {
        "omega_min": 0.05, "omega_max": 3.95, "n_omega": 40,
        "gamma_min": 0.0, "gamma_max": 1.45, "n_gamma": 30,
        "M": 100, "dt": 1e-3, "t_max": 20.0,
        "renorm_interval": 0.5, "delta0": 1e-8,
        "x0q": 1e-3, "x0p": 0.0, "seed": 0,
    },
    "validate": {},
}

EXPERIMENTS = tuple(DEFAULTS)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read a flat key=value file; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _coerce(experiment: str, key: str, raw: str):
    defaults = DEFAULTS[experiment]
    if key not in defaults:
        raise ConfigError(f"unknown parameter {key!r} for {experiment} "
                          f"(known: {', '.join(sorted(defaults)) or 'none'})")
    default = defaults[key]
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"parameter {key!r}: cannot parse {raw!r}") from exc
    return raw


def resolve_params(experiment: str, file_params: dict[str, str],
                   overrides: dict[str, str]) -> dict:
    params = dict(DEFAULTS[experiment])
    for source in (file_params, overrides):
        for key, raw in source.items():
            params[key] = _coerce(experiment, key, raw)
    _validate_params(experiment, params)
    return params


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _validate_params(experiment: str, p: dict) -> None:
    if "S" in p:
        two_s = 2.0 * p["S"]
        _require(p["S"] > 0 and abs(two_s - round(two_s)) < 1e-12,
                 "S must be a positive integer or half-integer")
        _require(p["S"] <= 200, "S too large for dense superoperators")
    if "Omega" in p:
        _require(p["Omega"] > 0, "Omega must be > 0")
    if "gamma" in p:
        _require(p["gamma"] >= 0, "gamma must be >= 0")
    if "jump" in p:
        _require(p["jump"] in ("hlmg", "sx"), "jump must be 'hlmg' or 'sx'")
    if "normalization" in p:
        _require(p["normalization"] in ("per_dim", "unnormalized"),
                 "normalization must be 'per_dim' or 'unnormalized'")
    if "spacing" in p:
        _require(p["spacing"] in ("geom", "linear"),
                 "spacing must be 'geom' or 'linear'")
    if {"ax", "ay", "az"} <= p.keys():
        _require(abs(p["ax"]) + abs(p["ay"]) + abs(p["az"]) > 0,
                 "observable coefficients must not all vanish")
    if "t_min" in p:
        _require(0 < p["t_min"] < p["t_max"], "need 0 < t_min < t_max")
    if "t_max" in p:
        _require(p["t_max"] > 0, "t_max must be > 0")
    if "n_times" in p:
        _require(p["n_times"] >= 2, "n_times must be >= 2")
    if "M" in p:
        _require(p["M"] >= 1, "M must be >= 1")
    if "dt" in p:
        _require(p["dt"] > 0, "dt must be > 0")
        _require(p["t_max"] >= p["dt"], "t_max must cover at least one step")
    if "renorm_interval" in p:
        _require(p["renorm_interval"] >= p["dt"],
                 "renorm_interval must be >= dt")
    if "delta0" in p:
        _require(p["delta0"] > 0, "delta0 must be > 0")
    if "discard" in p:
        _require(p["discard"] >= 0, "discard must be >= 0")
    if "conv_tol" in p:
        _require(p["conv_tol"] > 0, "conv_tol must be > 0")
    if "seed" in p:
        _require(0 <= p["seed"] < 2 ** 64, "seed must fit in uint64")
    if "n_omega" in p:
        _require(p["n_omega"] >= 1 and p["n_gamma"] >= 1,
                 "grid sizes must be >= 1")
        _require(p["omega_min"] > 0, "omega_min must be > 0")
        _require(p["omega_max"] >= p["omega_min"], "omega_max < omega_min")
        _require(p["gamma_min"] >= 0, "gamma_min must be >= 0")
        _require(p["gamma_max"] >= p["gamma_min"], "gamma_max < gamma_min")


def config_hash(experiment: str, params: dict) -> str:
    """Stable identity of the computation.

    Worker counts, output paths, and emission format do not change the
    numbers, so they are excluded; everything else (including seeds)
    enters the digest.
    """
    canon = json.dumps({"experiment": experiment, "params": params},
                       sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def emit(out_dir: Path, name: str, columns: list[str], rows, fmt: str,
         chash: str) -> list[str]:
    """Write one result table; returns the file names written.

    CSV is RFC-4180 (CRLF, header row, '.' decimal) preceded by a single
    comment line that names the manifest and the config hash.  The
    structured variant is JSON carrying the same rows losslessly.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        path = out_dir / f"{name}.csv"
        lines = [f"# manifest: manifest.json config_hash={chash}"]
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(_format_cell(v) for v in row))
        path.write_bytes(("\r\n".join(lines) + "\r\n").encode("utf-8"))
        written.append(path.name)
    else:
        path = out_dir / f"{name}.json"
        payload = {
            "manifest_ref": {"file": "manifest.json", "config_hash": chash},
            "columns": columns,
            "rows": [[v if isinstance(v, str) else
                      (bool(v) if isinstance(v, (bool, np.bool_)) else
                       (int(v) if isinstance(v, (int, np.integer)) else float(v)))
                      for v in row] for row in rows],
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                        encoding="utf-8")
        written.append(path.name)
    return written


def read_structured(path: str | Path) -> dict:
    """Re-ingest a structured emission; values round-trip exactly."""
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _observable(params: dict):
    spin = SpinSpec(S=params["S"])
    sx, sy, sz = [np.asarray(o) for o in spin_operators(spin)]
    h0 = np.asarray(lmg_hamiltonian(spin, Omega=params["Omega"]))
    a = params["ax"] * sx + params["ay"] * sy + params["az"] * sz
    jump = h0 if params["jump"] == "hlmg" else sx
    return h0, jump, a


def _time_grid(params: dict) -> np.ndarray:
    if params["spacing"] == "geom":
        return np.geomspace(params["t_min"], params["t_max"], params["n_times"])
    return np.linspace(params["t_min"], params["t_max"], params["n_times"])


def run_quantum_sov(params: dict):
    h0, jump, a = _observable(params)
    spec = LindbladSpec(h0, jump, params["gamma"])
    times = _time_grid(params)
    mats = sov_matrices(spec, a, times)
    series = sov_eigensystem(times, mats)
    result = min_sov_state(spec, a, params["t_max"], conv_tol=params["conv_tol"])
    if not result.converged:
        raise ConvergenceError("minimal-SOV state iteration did not converge")
    psi = result.state
    expect = np.einsum("i,tij,j->t", psi.conj(), mats, psi).real
    dim = mats.shape[1]
    columns = ["t"] + [f"lambda_{k}" for k in range(dim)] + ["minstate_expectation"]
    rows = [[t] + list(series.eigenvalues[i]) + [expect[i]]
            for i, t in enumerate(times)]
    return columns, rows, {"minstate_eigenvalue": float(result.eigenvalue),
                           "minstate_overlap": float(result.overlap)}


def run_otoc(params: dict):
    h0, jump, a = _observable(params)
    spec = LindbladSpec(h0, jump, params["gamma"])
    times = _time_grid(params)
    series = dissipative_otoc(spec, a, times, normalization=params["normalization"])
    ana = dissipation_time(a, jump, params["gamma"], dim=h0.shape[0],
                           normalization=params["normalization"])
    model = ana.C0 * np.exp(-times / ana.tau_D)
    columns = ["t", "C_t", "C0_exp_model"]
    rows = [[t, series.values[i], model[i]] for i, t in enumerate(times)]
    return columns, rows, {"C0": float(ana.C0), "tau_D": float(ana.tau_D)}


def run_min_state(params: dict):
    h0, jump, a = _observable(params)
    spec = LindbladSpec(h0, jump, params["gamma"])
    result = min_sov_state(spec, a, params["t_max"], conv_tol=params["conv_tol"])
    if not result.converged:
        raise ConvergenceError("minimal-SOV state iteration did not converge")
    columns = ["m", "re_amplitude", "im_amplitude"]
    rows = [[k, z.real, z.imag] for k, z in enumerate(result.state)]
    return columns, rows, {"eigenvalue": float(result.eigenvalue),
                           "overlap": float(result.overlap),
                           "degenerate": bool(result.degenerate)}


def run_classical_lyapunov(params: dict, workers: int):
    cfg = SDEConfig(dt=params["dt"],
                    n_steps=int(round(params["t_max"] / params["dt"])),
                    seed=params["seed"])
    est = lyapunov_benettin(params["Omega"], params["gamma"],
                            x0=(params["x0q"], params["x0p"]), config=cfg,
                            delta0=params["delta0"],
                            renorm_interval=params["renorm_interval"],
                            realizations=params["M"],
                            discard_intervals=params["discard"])
    if not math.isfinite(est.value):
        raise NumericalError(f"Lyapunov estimate is not finite: {est.note}")
    vk = lyapunov_van_kampen(params["Omega"], params["gamma"])
    columns = ["Omega", "gamma", "lambda", "stderr", "n_blowups",
               "reliable", "lambda_van_kampen"]
    rows = [[params["Omega"], params["gamma"], est.value, est.stderr,
             est.n_blowups, bool(est.reliable), vk.value]]
    return columns, rows, {"realizations": est.realizations, "method": est.method}


def run_phase_diagram(params: dict, workers: int):
    omegas = np.linspace(params["omega_min"], params["omega_max"], params["n_omega"])
    gammas = np.linspace(params["gamma_min"], params["gamma_max"], params["n_gamma"])
    cfg = SDEConfig(dt=params["dt"],
                    n_steps=int(round(params["t_max"] / params["dt"])),
                    seed=params["seed"])
    grid = phase_diagram(omegas, gammas, config=cfg, realizations=params["M"],
                         x0=(params["x0q"], params["x0p"]),
                         delta0=params["delta0"],
                         renorm_interval=params["renorm_interval"],
                         workers=workers)
    columns = ["Omega", "gamma", "lambda", "stderr", "n_blowups"]
    rows = []
    for i, om in enumerate(omegas):
        for j, ga in enumerate(gammas):
            rows.append([om, ga, grid.values[i, j], grid.stderrs[i, j],
                         int(grid.n_blowups[i, j])])
    return columns, rows, {"n_cells": int(omegas.size * gammas.size)}


def run_validate():
    results = run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
    failures = [r for r in results if not r.passed]
    print(f"{len(results) - len(failures)}/{len(results)} checks passed")
    if failures:
        raise NumericalError(
            "validation failures: " + ", ".join(r.name for r in failures))
    columns = ["check", "passed", "detail"]
    rows = [[r.name, bool(r.passed), r.detail] for r in results]
    return columns, rows, {}


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="sovlab",
        description="Operator-variance and Lyapunov experiments for "
                    "white-noise-driven systems.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="flat key=value parameter file")
    parser.add_argument("--param", action="append", default=[],
                        metavar="KEY=VALUE", help="override one parameter")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", choices=("csv", "structured"),
                        default="csv")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes (fallback: SOVLAB_THREADS)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed parameter")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv)
    started = time.time()
    try:
        file_params = parse_config_file(args.config) if args.config else {}
        overrides = {}
        for item in args.param:
            if "=" not in item:
                raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        if args.seed is not None:
            if "seed" not in DEFAULTS[args.experiment]:
                raise ConfigError(
                    f"{args.experiment} does not take a seed")
            overrides["seed"] = str(args.seed)
        params = resolve_params(args.experiment, file_params, overrides)

        threads = args.threads
        if threads is None:
            env = os.environ.get("SOVLAB_THREADS", "").strip()
            threads = int(env) if env else 1
        if threads < 1:
            raise ConfigError("--threads must be >= 1")

        if args.experiment == "quantum-sov":
            columns, rows, extra = run_quantum_sov(params)
        elif args.experiment == "otoc":
            columns, rows, extra = run_otoc(params)
        elif args.experiment == "min-state":
            columns, rows, extra = run_min_state(params)
        elif args.experiment == "classical-lyapunov":
            columns, rows, extra = run_classical_lyapunov(params, threads)
        elif args.experiment == "phase-diagram":
            columns, rows, extra = run_phase_diagram(params, threads)
        else:
            columns, rows, extra = run_validate()

        chash = config_hash(args.experiment, params)
        out_dir = Path(args.out)
        data_files = emit(out_dir, args.experiment, columns, rows,
                          args.format, chash)
        manifest = {
            "experiment": args.experiment,
            "params": params,
            "config_hash": chash,
            "version": __version__,
            "data_files": data_files,
            "wall_time_s": round(time.time() - started, 3),
        }
        manifest.update(extra)
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=1) + "\n",
            encoding="utf-8")
        return 0
    except ConfigError as exc:
        _fail("config", exc)
        return 2
    except (NumericalError, ValueError, np.linalg.LinAlgError) as exc:
        _fail("numerical", exc)
        return 3
    except ConvergenceError as exc:
        _fail("convergence", exc)
        return 4


def _fail(kind: str, exc: Exception) -> None:
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
