"""Command-line front end: ``momsens {simulate,oracle,local,sobol} MODEL [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .closure import build_moment_system, simulate
from .cme import oracle_moments
from .csvio import model_hash, render_csv
from .integrate import DEFAULT_ABS_TOL, DEFAULT_REL_TOL, default_grid
from .local import DEFAULT_FD_STEP, DEFAULT_PERTURBATION, local_sensitivity, perturbation_sweep
from .model import ModelError, parse_model, shipped_model_path
from .sobol import DEFAULT_N, ESTIMATORS, sobol_analysis, worker_count

COMMANDS = ("simulate", "oracle", "local", "sobol")


@dataclass
class RunConfig:
    command: str
    model: str
    t_end: float = 10.0
    points: int = 101
    rel_tol: float = DEFAULT_REL_TOL
    abs_tol: float = DEFAULT_ABS_TOL
    perturb: float = DEFAULT_PERTURBATION
    fd_step: float = DEFAULT_FD_STEP
    n: int = DEFAULT_N
    seed: int = 0
    estimator: str = "martinez"
    bound: str | None = None
    diagonal_covariance: bool = False
    out: str | None = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momsens", description=__doc__)
    parser.add_argument("--version", action="version", version=f"momsens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate the closed moment equations",
        "oracle": "solve the truncated master equation and diff against the closure",
        "local": "perturbation sweep and normalised finite-difference sensitivities",
        "sobol": "first-order and total Sobol' indices over the parameter box",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("model", help="model file (bare names of shipped models also work)")
        p.add_argument("--t-end", type=float, default=10.0)
        p.add_argument("--points", type=int, default=101)
        p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
        p.add_argument("--abs-tol", type=float, default=DEFAULT_ABS_TOL)
        p.add_argument("--diagonal-covariance", action="store_true",
                       help="pin covariances between different species to zero")
        p.add_argument("--out", help="output CSV path (default: stdout)")
        if name == "oracle":
            p.add_argument("--bound", help="max count per species: one integer or a comma list")
        if name == "local":
            p.add_argument("--perturb", type=float, default=DEFAULT_PERTURBATION)
            p.add_argument("--fd-step", type=float, default=DEFAULT_FD_STEP)
        if name == "sobol":
            p.add_argument("--n", type=int, default=DEFAULT_N)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--estimator", choices=ESTIMATORS, default="martinez")
    return parser


def _read_model(path: str) -> tuple[str, str]:
    p = Path(path)
    if not p.exists():
        try:
            p = shipped_model_path(p.name)
        except FileNotFoundError:
            raise FileNotFoundError(f"file not found: {path}") from None
    return str(p), p.read_text()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def run(cfg: RunConfig) -> int:
    path, text = _read_model(cfg.model)
    network = parse_model(text)
    system = build_moment_system(network, cfg.diagonal_covariance)
    grid = default_grid(cfg.t_end, cfg.points)
    meta = {
        "tool": f"momsens {__version__}",
        "model": path,
        "model_sha256": model_hash(text),
        "config": asdict(cfg),
    }
    tol = dict(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)

    if cfg.command == "simulate":
        traj = simulate(system, None, grid, **tol)
        meta["metadata"] = traj.metadata
        rows = (list(r) for r in np.column_stack([traj.times, traj.states]))
        _emit(render_csv(("t",) + system.names, rows, meta), cfg.out)

    elif cfg.command == "oracle":
        bound = None if cfg.bound is None else [int(b) for b in cfg.bound.split(",")]
        closure = simulate(system, None, grid, **tol)
        ref = oracle_moments(network, None, grid, bound, system)
        meta["oracle"] = {"n_states": ref.metadata["n_states"], "bound": ref.metadata["bound"],
                          "max_mass_loss": float(np.max(ref.metadata["mass_loss"]))}
        cols = ("t",) + system.names + tuple(f"diff_{n}" for n in system.names) + ("mass_loss",)
        body = np.column_stack([grid, ref.states, ref.states - closure.states, ref.metadata["mass_loss"]])
        _emit(render_csv(cols, (list(r) for r in body), meta), cfg.out)

    elif cfg.command == "local":
        sweep = perturbation_sweep(system, None, cfg.perturb, grid, **tol)
        report = local_sensitivity(system, None, cfg.fd_step, grid)
        meta["omega_theta"] = report.omega_theta.tolist()
        meta["omega_y"] = report.omega_y.tolist()
        text_rsf = render_csv(("t", "output", "param", "S_raw", "S_normalized"), report.rows(), meta)
        sweep_rows = (
            [t, run_name] + list(traj.states[j])
            for run_name, traj in sweep.items()
            for j, t in enumerate(traj.times)
        )
        text_sweep = render_csv(("t", "run") + system.names, sweep_rows, meta)
        if cfg.out is None:
            sys.stdout.write(text_rsf)
        else:
            out = Path(cfg.out)
            out.write_text(text_rsf)
            out.with_name(f"{out.stem}_sweep{out.suffix or '.csv'}").write_text(text_sweep)

    elif cfg.command == "sobol":
        meta["threads"] = worker_count()
        report = sobol_analysis(system, cfg.n, cfg.seed, cfg.estimator, grid)
        meta["excluded_samples"] = report.n_excluded
        cols = ("t", "output", "param", "S_first", "S_total", "estimator", "n", "seed")
        _emit(render_csv(cols, report.rows(), meta), cfg.out)
    return 0


def _error(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fields = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    cfg = RunConfig(**fields)
    try:
        return run(cfg)
    except FileNotFoundError as exc:
        return _error("file_not_found", exc, 1)
    except ModelError as exc:
        return _error("model_error", exc, 1)
    except (ValueError, RuntimeError) as exc:
        return _error("runtime_error", exc, 3)


if __name__ == "__main__":
    sys.exit(main())
