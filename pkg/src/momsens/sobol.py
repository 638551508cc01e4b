"""Variance-based (Sobol') sensitivity with a pick-and-freeze design.

Two sample matrices ``A`` and ``B`` are drawn uniformly over the parameter
box; ``AB[i]`` is ``A`` with column ``i`` taken from ``B``.  Each output at
each time is treated as its own scalar model output.

Estimators, with ``y_X`` the outputs on matrix ``X`` and ``rho`` the sample
Pearson correlation:

* Martinez: ``S_i = rho(y_B, y_ABi)``, ``S_Ti = 1 - rho(y_A, y_ABi)``
* Jansen: ``S_Ti = mean((y_A - y_ABi)**2) / (2 V)``,
  ``S_i = 1 - mean((y_B - y_ABi)**2) / (2 V)`` with ``V`` the variance of the
  pooled ``y_A, y_B``.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .closure import MomentSystem, build_moment_system, simulate_many
from .integrate import DEFAULT_ABS_TOL, DEFAULT_REL_TOL, default_grid
from .model import ReactionNetwork

log = logging.getLogger(__name__)

ESTIMATORS = ("martinez", "jansen")
DEFAULT_N = 15000
# Rows are integrated in fixed-size chunks; the chunking never depends on the
# worker count, which keeps results bit-identical across thread settings.
CHUNK_ROWS = 4096
MAX_FAILED_FRACTION = 0.01


@dataclass(frozen=True)
class ParameterBox:
    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (len(self.names),) or hi.shape != lo.shape:
            raise ValueError("bounds must match the parameter names")
        if np.any(~(lo < hi)):
            raise ValueError("degenerate box: every lower bound must be below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_network(cls, network: ReactionNetwork) -> "ParameterBox":
        b = network.bounds
        return cls(tuple(network.parameter_names), b[:, 0], b[:, 1])

    @property
    def k(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class PickFreezeDesign:
    box: ParameterBox
    n: int
    seed: int
    A: np.ndarray
    B: np.ndarray
    AB: np.ndarray  # (k, n, k)

    def matrices(self) -> np.ndarray:
        """All evaluation points stacked as ``[A, B, AB_1, ..., AB_k]``."""
        return np.concatenate([self.A[None], self.B[None], self.AB], axis=0)


def sample_design(box: ParameterBox, n: int, seed: int) -> PickFreezeDesign:
    """Draw ``A`` then ``B`` from a seeded PCG64 stream and build the hybrids."""
    if n < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    width = box.upper - box.lower
    A = box.lower + width * rng.random((n, box.k))
    B = box.lower + width * rng.random((n, box.k))
    AB = np.repeat(A[None], box.k, axis=0)
    for i in range(box.k):
        AB[i, :, i] = B[:, i]
    return PickFreezeDesign(box, n, seed, A, B, AB)


@dataclass
class DesignOutputs:
    """Model outputs for every design row.

    ``y`` has shape ``(k + 2, n, n_times, n_outputs)`` in the order
    ``A, B, AB_1..AB_k``; ``valid`` flags rows whose integration succeeded.
    """

    design: PickFreezeDesign
    times: np.ndarray
    outputs: tuple[str, ...]
    y: np.ndarray
    valid: np.ndarray
    errors: list

    @property
    def n_failed(self) -> int:
        return int((~self.valid).sum())


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("MOMSENS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def evaluate_design(
    design: PickFreezeDesign,
    system: ReactionNetwork | MomentSystem,
    grid=None,
    workers: int | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> DesignOutputs:
    """Integrate the moment equations once per design row (``n (k + 2)`` runs).

    Raises
    ------
    RuntimeError
        If more than 1% of rows fail to integrate.
    """
    if isinstance(system, ReactionNetwork):
        system = build_moment_system(system)
    if design.box.names != tuple(system.network.parameter_names):
        raise ValueError("design parameters do not match the network")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    mats = design.matrices()
    rows = mats.reshape(-1, design.box.k)
    chunks = [rows[s:s + CHUNK_ROWS] for s in range(0, rows.shape[0], CHUNK_ROWS)]

    def run(chunk):
        return simulate_many(system, chunk, grid, rel_tol, abs_tol)

    n_workers = min(worker_count(workers), len(chunks))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    states = np.concatenate([r.states for r in results], axis=0)
    ok = np.concatenate([r.ok for r in results])
    errors = [e for r in results for e in r.errors]
    failed = np.flatnonzero(~ok)
    if failed.size > MAX_FAILED_FRACTION * ok.size:
        detail = "; ".join(f"row {r} theta={rows[r].tolist()}: {errors[r]}" for r in failed[:5])
        raise RuntimeError(f"{failed.size} of {ok.size} design rows failed to integrate ({detail})")
    if failed.size:
        log.warning("%d design rows failed and are excluded", failed.size)
    shape = (mats.shape[0], design.n)
    return DesignOutputs(
        design, grid, system.names,
        states.reshape(shape + states.shape[1:]), ok.reshape(shape),
        [errors[r] for r in failed],
    )


def _degenerate(*ys) -> np.ndarray:
    flags = False
    for y in ys:
        var = y.var(axis=0)
        scale = np.abs(y.mean(axis=0))
        flags = flags | (var <= (1e-12 * scale) ** 2)
    return flags


def martinez(yA, yB, yAB):
    """Correlation-based first-order and total indices.

    ``yA``, ``yB`` have shape ``(n, ...)`` and ``yAB`` ``(k, n, ...)``.  Returns
    ``(first, total)`` each of shape ``(k, ...)``; NaN where an output has no
    variance.
    """
    yA, yB, yAB = (np.asarray(a, dtype=float) for a in (yA, yB, yAB))
    first = np.empty(yAB.shape[:1] + yAB.shape[2:])
    total = np.empty_like(first)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(yAB.shape[0]):
            bad = _degenerate(yA, yB, yAB[i])
            first[i] = np.where(bad, np.nan, _corr(yB, yAB[i]))
            total[i] = np.where(bad, np.nan, 1.0 - _corr(yA, yAB[i]))
    return first, total


def _corr(u, v):
    du = u - u.mean(axis=0)
    dv = v - v.mean(axis=0)
    return (du * dv).sum(axis=0) / np.sqrt((du * du).sum(axis=0) * (dv * dv).sum(axis=0))


def jansen(yA, yB, yAB):
    """Squared-difference first-order and total indices (same shapes as :func:`martinez`)."""
    yA, yB, yAB = (np.asarray(a, dtype=float) for a in (yA, yB, yAB))
    first = np.empty(yAB.shape[:1] + yAB.shape[2:])
    total = np.empty_like(first)
    var = np.concatenate([yA, yB], axis=0).var(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(yAB.shape[0]):
            bad = _degenerate(yA, yB, yAB[i])
            total[i] = np.where(bad, np.nan, 0.5 * ((yA - yAB[i]) ** 2).mean(axis=0) / var)
            first[i] = np.where(bad, np.nan, 1.0 - 0.5 * ((yB - yAB[i]) ** 2).mean(axis=0) / var)
    return first, total


_ESTIMATOR_FUNCS = {"martinez": martinez, "jansen": jansen}


@dataclass
class SobolReport:
    """Time-resolved indices; ``first``/``total`` have shape ``(n_times, k, n_outputs)``.

    NaN marks an index that is undefined because the output had no variance.
    """

    times: np.ndarray
    parameters: tuple[str, ...]
    outputs: tuple[str, ...]
    first: np.ndarray
    total: np.ndarray
    estimator: str
    n: int
    seed: int
    n_excluded: int = 0

    def curve(self, output: str, param: str, total: bool = True) -> np.ndarray:
        data = self.total if total else self.first
        return data[:, self.parameters.index(param), self.outputs.index(output)]

    def rows(self):
        """``(t, output, param, S_first, S_total, estimator, n, seed)`` records."""
        for ti, t in enumerate(self.times):
            for oi, out in enumerate(self.outputs):
                for pi, par in enumerate(self.parameters):
                    yield (t, out, par, self.first[ti, pi, oi], self.total[ti, pi, oi],
                           self.estimator, self.n, self.seed)


def _indices(outputs: DesignOutputs, estimator: str) -> SobolReport:
    func = _ESTIMATOR_FUNCS[estimator]
    y, valid = outputs.y, outputs.valid
    k = outputs.design.box.k
    if valid.all():
        first, total = func(y[0], y[1], y[2:])
    else:
        first = np.empty((k,) + y.shape[2:])
        total = np.empty_like(first)
        for i in range(k):
            keep = valid[0] & valid[1] & valid[2 + i]
            if keep.sum() < 2:
                first[i] = total[i] = np.nan
                continue
            f, tt = func(y[0][keep], y[1][keep], y[2 + i][keep][None])
            first[i], total[i] = f[0], tt[0]
    d = outputs.design
    return SobolReport(
        outputs.times, d.box.names, outputs.outputs,
        np.moveaxis(first, 0, 1), np.moveaxis(total, 0, 1),
        estimator, d.n, d.seed, int((~valid.all(axis=0)).sum()),
    )


def martinez_indices(outputs: DesignOutputs) -> SobolReport:
    return _indices(outputs, "martinez")


def jansen_indices(outputs: DesignOutputs) -> SobolReport:
    return _indices(outputs, "jansen")


def sobol_analysis(
    network: ReactionNetwork | MomentSystem,
    n: int = DEFAULT_N,
    seed: int = 0,
    estimator: str = "martinez",
    grid=None,
    box: ParameterBox | None = None,
    workers: int | None = None,
) -> SobolReport:
    """Sample, evaluate and estimate in one call."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    system = network if isinstance(network, MomentSystem) else build_moment_system(network)
    box = ParameterBox.from_network(system.network) if box is None else box
    outputs = evaluate_design(sample_design(box, n, seed), system, grid, workers)
    return _indices(outputs, estimator)
