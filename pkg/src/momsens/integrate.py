"""Explicit adaptive Runge-Kutta integration (Dormand-Prince 5(4)).

The core routine advances a *batch* of independent initial-value problems
at once.  Every row carries its own time, step size and error control, so a
row's trajectory does not depend on which other rows share the batch.  Steps
are clipped to land exactly on the requested output times; no interpolation
is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Dormand & Prince (1980), 5th-order solution with embedded 4th-order estimate.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
DEFAULT_REL_TOL = 1e-8
DEFAULT_ABS_TOL = 1e-10


class IntegrationError(RuntimeError):
    """Integration could not proceed; ``time`` is where it stopped."""

    def __init__(self, message: str, time: float | None = None):
        self.time = time
        super().__init__(message if time is None else f"{message} at t={time:.17g}")


@dataclass
class Trajectory:
    """States on an output grid.  ``states[j]`` is the state at ``times[j]``."""

    times: np.ndarray
    states: np.ndarray
    names: tuple[str, ...] | None = None
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        if self.names is None:
            raise KeyError(name)
        return self.states[:, self.names.index(name)]


@dataclass
class BatchResult:
    times: np.ndarray
    states: np.ndarray  # (rows, times, dim); NaN after a failure
    ok: np.ndarray
    errors: list
    n_steps: np.ndarray
    n_rejected: np.ndarray


def default_grid(t_end: float = 10.0, points: int = 101) -> np.ndarray:
    return np.linspace(0.0, t_end, points)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("time grid must be a non-empty 1-D array")
    if grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def _rms(e: np.ndarray) -> np.ndarray:
    # column-by-column so the per-row result does not depend on batch size
    acc = np.zeros(e.shape[0])
    for j in range(e.shape[1]):
        acc += e[:, j] * e[:, j]
    return np.sqrt(acc / e.shape[1])


def _initial_step(rhs, t, y, f, args, rel_tol, abs_tol, span):
    sc = abs_tol + rel_tol * np.abs(y)
    d0 = _rms(y / sc)
    d1 = _rms(f / sc)
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
    h0 = np.minimum(h0, span)
    y1 = y + h0[:, None] * f
    f1 = rhs(t + h0, y1, *args)
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = _rms((f1 - f) / sc) / h0
        big = np.maximum(d1, d2)
        h1 = np.where(big <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / big) ** 0.2)
    h = np.minimum(100 * h0, h1)
    h = np.where(np.isfinite(h) & (h > 0), h, 1e-6)
    return np.minimum(h, span)


def integrate_batch(
    rhs,
    y0,
    grid,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    args: tuple = (),
    shared_steps: bool = False,
    max_steps: int = 200_000,
) -> BatchResult:
    """Integrate ``m`` independent systems ``y' = rhs(t, y, *args)``.

    Parameters
    ----------
    rhs
        Called as ``rhs(t, y, *args)`` with ``t`` of shape ``(r,)``, ``y`` of
        shape ``(r, d)`` and every array in ``args`` sliced to the same ``r``
        rows.  Must return an ``(r, d)`` array.
    y0
        Initial states, shape ``(m, d)``.
    grid
        Output times, strictly increasing from 0.
    shared_steps
        Force every row onto one common step sequence, accepting a step only
        when all rows pass the error test.  Used when rows are differenced
        against each other (finite-difference sensitivities).

    Returns
    -------
    BatchResult
        Rows that fail keep NaN from the failure time onwards and carry a
        message in ``errors``; nothing is raised.
    """
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be positive")
    grid = _check_grid(grid)
    y = np.array(y0, dtype=float)
    if y.ndim != 2:
        raise ValueError("y0 must have shape (rows, dim)")
    m, d = y.shape
    args = tuple(np.asarray(a) for a in args)
    n_t = grid.size

    out = np.full((m, n_t, d), np.nan)
    out[:, 0] = y
    ok = np.ones(m, dtype=bool)
    errors: list = [None] * m
    n_steps = np.zeros(m, dtype=np.int64)
    n_rej = np.zeros(m, dtype=np.int64)
    if n_t == 1 or m == 0:
        return BatchResult(grid, out, ok, errors, n_steps, n_rej)

    t = np.zeros(m)
    nxt = np.ones(m, dtype=np.int64)
    f = np.asarray(rhs(t, y, *args), dtype=float)
    bad = ~np.all(np.isfinite(f), axis=1) | ~np.all(np.isfinite(y), axis=1)
    for r in np.flatnonzero(bad):
        ok[r] = False
        errors[r] = "non-finite right-hand side at t=0"
    h = _initial_step(rhs, t, y, f, args, rel_tol, abs_tol, grid[-1])
    if shared_steps:
        h[:] = h.min()
    nonfinite = np.zeros(m, dtype=bool)
    active = np.flatnonzero(ok)
    eps = np.finfo(float).eps

    while active.size:
        ta, ya, fa, ha = t[active], y[active], f[active], h[active]
        aa = tuple(a[active] for a in args)
        target = grid[nxt[active]]
        gap = target - ta
        hit = ha >= gap
        hs = np.where(hit, gap, ha)

        ks = [fa]
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(1, 7):
                yi = ya.copy()
                for j, a in enumerate(_A[s]):
                    if a != 0.0:
                        yi += (hs * a)[:, None] * ks[j]
                ts = np.where((s >= 5) & hit, target, ta + _C[s] * hs)
                ks.append(np.asarray(rhs(ts, yi, *aa), dtype=float))
            y_new = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
            err = np.zeros_like(ya)
            for j in range(7):
                if _E[j] != 0.0:
                    err += (hs * _E[j])[:, None] * ks[j]
            sc = abs_tol + rel_tol * np.maximum(np.abs(ya), np.abs(y_new))
            en = _rms(err / sc)
        finite = np.isfinite(en) & np.all(np.isfinite(ks[6]), axis=1)
        en = np.where(finite, en, np.inf)
        if shared_steps:
            en[:] = en.max()
            finite[:] = finite.all()
        accept = en <= 1.0

        with np.errstate(divide="ignore"):
            factor = np.where(en == 0.0, MAX_FACTOR, SAFETY * en ** -0.2)
        factor = np.clip(factor, MIN_FACTOR, MAX_FACTOR)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h_next = hs * factor
        h_next = np.where(hit & accept, np.maximum(h_next, ha), h_next)
        if shared_steps:
            h_next[:] = h_next.min()

        n_steps[active] += 1
        n_rej[active] += ~accept
        nonfinite[active] = ~finite

        acc = active[accept]
        if acc.size:
            hit_a = hit[accept]
            t[acc] = np.where(hit_a, target[accept], ta[accept] + hs[accept])
            y[acc] = y_new[accept]
            f[acc] = ks[6][accept]
            rec = acc[hit_a]
            out[rec, nxt[rec]] = y[rec]
            nxt[rec] += 1
        h[active] = h_next

        done = nxt[active] >= n_t
        tiny = h[active] < 16 * eps * np.maximum(np.abs(t[active]), 1.0)
        exhausted = n_steps[active] >= max_steps
        failed = ~done & (tiny | exhausted)
        for r in active[failed]:
            ok[r] = False
            if nonfinite[r]:
                reason = "non-finite right-hand side"
            elif n_steps[r] >= max_steps:
                reason = f"step limit {max_steps} reached"
            else:
                reason = "step size underflow"
            errors[r] = f"{reason} at t={t[r]:.17g}"
        active = active[~done & ~failed]

    return BatchResult(grid, out, ok, errors, n_steps, n_rej)


def integrate(
    rhs,
    initial,
    grid,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> Trajectory:
    """Integrate one system ``y' = rhs(t, y)`` and return its states on ``grid``.

    Raises
    ------
    IntegrationError
        On step-size underflow or a non-finite right-hand side.
    """
    y0 = np.atleast_1d(np.asarray(initial, dtype=float))

    def batched(t, y):
        return np.atleast_1d(np.asarray(rhs(t[0], y[0]), dtype=float))[None, :]

    res = integrate_batch(batched, y0[None, :], grid, rel_tol, abs_tol)
    return _single(res)


def _single(res: BatchResult, names=None) -> Trajectory:
    if not res.ok[0]:
        msg = res.errors[0]
        time = float(msg.rsplit("t=", 1)[1]) if "t=" in msg else None
        raise IntegrationError(msg.rsplit(" at t=", 1)[0], time)
    meta = {"n_steps": int(res.n_steps[0]), "n_rejected": int(res.n_rejected[0])}
    return Trajectory(res.times, res.states[0], names, meta)
