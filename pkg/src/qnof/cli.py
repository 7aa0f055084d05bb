"""Command-line entry point.

Image tasks (``mc``, ``rpca``, ``rmc``) read a PNG, corrupt it, recover it and
write ``reconstructed.png``, ``observed.png`` and ``metrics.json``. Benchmark
tasks (``table1``, ``phase-diagram``) write CSV tables and a JSON summary.
Wall-clock times go to ``timing.json`` so that the other artifacts are
byte-identical across reruns with the same settings.

Settings resolve as command-line flags, then ``--config`` JSON, then
defaults. Errors are printed to stderr as one JSON object and the process
exits with status 2 (invalid input) or 1 (runtime failure).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import imaging, synthbench
from .qsvd import numeric_rank, singular_values
from .quaternion import fro_norm
from .solvers import SolverParams, solve_mc, solve_rmc, solve_rpca
from .synthbench import PHASE_LEVELS, PHASE_RANKS

IMAGE_TASKS = ("mc", "rpca", "rmc")
BENCH_TASKS = ("table1", "phase-diagram")
IMAGE_STOP_TOL = 1e-4

# flag dest -> SolverParams field
_PARAM_FLAGS = {"lam": "lam", "rho": "rho", "mu": "mu", "beta0": "beta0", "max_iters": "max_iters", "tol": "stop_tol"}


class ConfigError(ValueError):
    """Invalid command-line or config-file settings."""


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--seed", type=int)
    g.add_argument("--config", type=Path, help="JSON file with defaults for any flag")
    g.add_argument("--out", type=Path, help="output directory (default: current directory)")
    g.add_argument("--lambda", dest="lam", type=float, help="QNOF weight")
    g.add_argument("--rho", type=float, help="sparsity weight")
    g.add_argument("--mu", type=float, help="penalty growth factor (> 1)")
    g.add_argument("--beta0", type=float, help="initial penalty")
    g.add_argument("--max-iters", dest="max_iters", type=int)
    g.add_argument("--tol", type=float, help="stopping tolerance")

    image = argparse.ArgumentParser(add_help=False)
    gi = image.add_argument_group("image")
    gi.add_argument("--input", type=Path, help="8-bit RGB PNG")
    gi.add_argument("--miss", type=float, help="fraction of pixels to hide")
    gi.add_argument("--impulse", type=float, help="fraction of pixels hit by impulse noise")
    gi.add_argument("--mask", type=Path, help="PNG mask, white = observed")
    gi.add_argument("--impulse-model", dest="impulse_model", choices=("random", "salt-pepper"))

    bench = argparse.ArgumentParser(add_help=False)
    gb = bench.add_argument_group("benchmark")
    gb.add_argument("--n", type=int)
    gb.add_argument("--ranks", type=_int_list)
    gb.add_argument("--trials", type=int)

    parser = argparse.ArgumentParser(prog="qnof", description="Quaternion low-rank recovery with the QNOF regulariser.")
    sub = parser.add_subparsers(dest="task", required=True)
    sub.add_parser("mc", parents=[common, image], help="color image completion")
    sub.add_parser("rpca", parents=[common, image], help="impulse noise removal")
    sub.add_parser("rmc", parents=[common, image], help="completion plus impulse noise removal")
    t1 = sub.add_parser("table1", parents=[common, bench], help="rank / error table at fixed corruption")
    t1.add_argument("--miss", type=float)
    t1.add_argument("--impulse", type=float)
    ph = sub.add_parser("phase-diagram", parents=[common, bench], help="exact-recovery rates over rank and corruption")
    ph.add_argument("--levels", type=_float_list)
    ph.add_argument("--vary", choices=("noise", "miss"))
    ph.add_argument("--fixed", type=float, help="level of the corruption that is held fixed")
    return parser


def _defaults(task: str) -> dict:
    d = {"seed": 0, "out": Path("."), "params": {}}
    if task in IMAGE_TASKS:
        d.update(miss=0.0, impulse=0.0, impulse_model="random", input=None, mask=None)
    elif task == "table1":
        d.update(n=50, ranks=[2, 4, 6, 8, 10], trials=10, miss=0.05, impulse=0.05)
    else:
        d.update(n=50, ranks=list(PHASE_RANKS), trials=10, levels=list(PHASE_LEVELS), vary="noise", fixed=0.05)
    return d


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over the defaults."""
    cfg = _defaults(args.task)
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        raw = dict(raw)
        params = raw.pop("params", {})
        if not isinstance(params, dict):
            raise ConfigError("config 'params' must be an object")
        cfg["params"].update({("lam" if k == "lambda" else k): v for k, v in params.items()})
        for key, val in raw.items():
            key = key.replace("-", "_")
            if key == "task":
                continue
            key = "lam" if key == "lambda" else key
            if key in _PARAM_FLAGS:
                cfg["params"][_PARAM_FLAGS[key]] = val
                continue
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for task {args.task}")
            cfg[key] = val
    for key, val in vars(args).items():
        if val is None or key in ("task", "config"):
            continue
        if key in _PARAM_FLAGS:
            cfg["params"][_PARAM_FLAGS[key]] = val
        else:
            cfg[key] = val
    for key in ("out", "input", "mask"):
        if cfg.get(key) is not None:
            cfg[key] = Path(cfg[key])
    return cfg


def _check_rate(name: str, val) -> float:
    try:
        val = float(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if not 0.0 <= val < 1.0:
        raise ConfigError(f"{name} must lie in [0, 1), got {val}")
    return val


def _solver_params(cfg: dict, base: SolverParams) -> SolverParams:
    fields = base.to_dict()
    fields["lam"] = fields.pop("lambda")
    fields.update(cfg["params"])
    try:
        return SolverParams.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver parameters: {exc}") from exc


def _finite(x):
    # JSON has no infinity; identical images report psnr as null
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_image_task(cfg: dict) -> dict:
    task = cfg["task"]
    if cfg["input"] is None:
        raise ConfigError(f"{task} needs --input")
    miss = _check_rate("miss rate", cfg["miss"])
    impulse = _check_rate("impulse rate", cfg["impulse"])
    if task == "mc" and cfg["mask"] is None and miss == 0.0:
        raise ConfigError("mc needs --miss or --mask")
    if task == "rpca" and (cfg["mask"] is not None or miss > 0.0):
        raise ConfigError("rpca works on fully observed images; use rmc for missing pixels")
    params = _solver_params(cfg, SolverParams(stop_tol=IMAGE_STOP_TOL))
    try:
        img = imaging.read_png(cfg["input"])
    except (OSError, ValueError) as exc:
        raise FileNotFoundError(f"cannot read image {cfg['input']}: {exc}") from exc
    mask = None
    if cfg["mask"] is not None:
        try:
            mask = imaging.read_mask(cfg["mask"], img.shape)
        except OSError as exc:
            raise FileNotFoundError(f"cannot read mask {cfg['mask']}: {exc}") from exc
    spec = imaging.CorruptionSpec(miss, impulse, int(cfg["seed"]), cfg["impulse_model"])
    observed, omega, truth = imaging.corrupt_image(img, spec, mask=mask)

    t0 = time.perf_counter()
    if task == "mc":
        res = solve_mc(observed, omega, params)
    elif task == "rpca":
        res = solve_rpca(observed, params)
    else:
        res = solve_rmc(observed, omega, params)
    wall = time.perf_counter() - t0

    out_img = imaging.quat_to_image(res.X)
    obs_img = imaging.quat_to_image(observed)
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    imaging.write_png(out_img, out / "reconstructed.png")
    imaging.write_png(obs_img, out / "observed.png")
    metrics = {
        "task": task,
        "psnr_db": _finite(imaging.psnr(img, out_img)),
        "ssim": imaging.ssim(img, out_img),
        "rel_error": fro_norm(res.X - truth) / fro_norm(truth) if fro_norm(truth) > 0 else None,
        "recovered_rank": numeric_rank(singular_values(res.X)),
        "iterations": res.iterations,
        "converged": res.converged,
        "params": res.params.to_dict(),
        "input": {"path": str(cfg["input"]), "height": img.height, "width": img.width},
        "corruption": {"miss_rate": miss, "impulse_rate": impulse, "impulse_model": spec.impulse,
                       "mask": None if cfg["mask"] is None else str(cfg["mask"]), "seed": spec.seed,
                       "observed_fraction": float(omega.mean())},
        "observed_psnr_db": _finite(imaging.psnr(img, obs_img)),
        "observed_ssim": imaging.ssim(img, obs_img),
        "residuals": {"feasibility": float(res.trace.feasibility[-1]), "rel_change": float(res.trace.rel_change[-1])},
        "warning": None if res.converged else f"solver stopped after max_iters={res.params.max_iters} without meeting the tolerance",
    }
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "timing.json", {"wall_time_s": wall})
    return metrics


def run_table1(cfg: dict) -> dict:
    n, ranks, trials = int(cfg["n"]), [int(r) for r in cfg["ranks"]], int(cfg["trials"])
    miss = _check_rate("miss rate", cfg["miss"])
    impulse = _check_rate("impulse rate", cfg["impulse"])
    if not ranks or any(not 1 <= r <= n for r in ranks):
        raise ConfigError(f"ranks must lie in [1, {n}]")
    if trials < 1:
        raise ConfigError("trials must be positive")
    params = _solver_params(cfg, synthbench.synth_params(n))
    summaries, records = synthbench.table1(n, ranks, trials, int(cfg["seed"]), params, miss, impulse)
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    synthbench.write_csv(records, out / "table1_trials.csv")
    _write_summary(out / "table1.csv", summaries)
    metrics = {
        "task": "table1",
        "rel_error": max(s.median_rel_error for s in summaries),
        "recovered_rank": [s.median_recovered_rank for s in summaries],
        "iterations": int(np.median([r.iterations for r in records])),
        "converged": all(r.success for r in records),
        "params": params.to_dict(),
        "n": n, "ranks": ranks, "trials": trials, "miss_rate": miss, "noise_rate": impulse, "seed": int(cfg["seed"]),
        "psnr_db": None, "ssim": None,
        "cells": [{"rank": s.rank, "median_rel_error": s.median_rel_error, "rank_matches": s.rank_matches,
                   "successes": s.successes} for s in summaries],
    }
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "timing.json", {"wall_time_s": sum(s.wall_time_s for s in summaries),
                                      "per_rank_s": {str(s.rank): s.wall_time_s for s in summaries}})
    return metrics


def _write_summary(path: Path, summaries) -> None:
    lines = ["n,rank,recovered_rank,rel_error,rank_matches,successes,trials"]
    for s in summaries:
        lines.append(f"{s.n},{s.rank},{s.median_recovered_rank:g},{s.median_rel_error:.4e},"
                     f"{s.rank_matches},{s.successes},{s.trials}")
    path.write_text("\n".join(lines) + "\n")


def run_phase(cfg: dict) -> dict:
    n, ranks, trials = int(cfg["n"]), [int(r) for r in cfg["ranks"]], int(cfg["trials"])
    levels = [_check_rate("level", v) for v in cfg["levels"]]
    fixed = _check_rate("fixed level", cfg["fixed"])
    if cfg["vary"] not in ("noise", "miss"):
        raise ConfigError("vary must be 'noise' or 'miss'")
    if not ranks or any(not 1 <= r <= n for r in ranks):
        raise ConfigError(f"ranks must lie in [1, {n}]")
    params = _solver_params(cfg, synthbench.synth_params(n))
    pd = synthbench.phase_diagram(n, ranks, levels, cfg["vary"], fixed, trials, int(cfg["seed"]), params)
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    synthbench.write_csv(pd.records, out / "phase_trials.csv")
    lines = ["rank,level,miss_rate,noise_rate,recovery_rate,successes,trials"]
    for c in pd.cells:
        lines.append(f"{c.rank},{c.level:g},{c.miss_rate:g},{c.noise_rate:g},{c.recovery_rate:g},{c.successes},{c.trials}")
    (out / "phase.csv").write_text("\n".join(lines) + "\n")
    metrics = {
        "task": "phase-diagram",
        "psnr_db": None, "ssim": None, "rel_error": None, "recovered_rank": None,
        "iterations": int(np.median([r.iterations for r in pd.records])),
        "converged": None,
        "params": params.to_dict(),
        "n": n, "ranks": ranks, "levels": levels, "vary": pd.vary, "fixed": fixed, "trials": trials,
        "seed": int(cfg["seed"]),
        "rates": pd.rates.tolist(),
    }
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "timing.json", {"wall_time_s": sum(r.wall_time_ms for r in pd.records) / 1e3})
    return metrics


def run(cfg: dict) -> dict:
    task = cfg["task"]
    if task in IMAGE_TASKS:
        return run_image_task(cfg)
    if task == "table1":
        return run_table1(cfg)
    return run_phase(cfg)


def _fail(kind: str, msg: str, status: int) -> int:
    print(json.dumps({"error": kind, "message": msg}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        cfg["task"] = args.task
        metrics = run(cfg)
    except ConfigError as exc:
        return _fail("invalid_config", str(exc), 2)
    except FileNotFoundError as exc:
        return _fail("unreadable_input", str(exc), 2)
    except ValueError as exc:
        return _fail("invalid_input", str(exc), 2)
    except Exception as exc:  # pragma: no cover - unexpected runtime failures
        return _fail(type(exc).__name__, str(exc), 1)
    summary = {k: metrics.get(k) for k in ("task", "psnr_db", "ssim", "rel_error", "iterations", "converged")}
    print(json.dumps(summary))
    if metrics.get("warning"):
        print(json.dumps({"warning": metrics["warning"]}), file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
