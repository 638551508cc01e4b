"""One-at-a-time perturbations and forward-difference sensitivities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closure import MomentSystem, build_moment_system, simulate, simulate_many
from .integrate import IntegrationError, Trajectory, default_grid
from .model import ReactionNetwork, as_point

FD_REL_TOL = 1e-10
FD_ABS_TOL = 1e-12
DEFAULT_FD_STEP = 1e-8
DEFAULT_ABS_STEP = 1e-12
DEFAULT_PERTURBATION = 0.20


def _system(network_or_system, diagonal_covariance=False) -> MomentSystem:
    if isinstance(network_or_system, MomentSystem):
        return network_or_system
    return build_moment_system(network_or_system, diagonal_covariance)


def perturbation_sweep(
    network: ReactionNetwork | MomentSystem,
    point=None,
    factor: float = DEFAULT_PERTURBATION,
    grid=None,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
) -> dict[str, Trajectory]:
    """Nominal trajectory plus one trajectory per parameter scaled by ``1 + factor``.

    Keys are ``"nominal"`` and the parameter names.
    """
    if factor <= -1:
        raise ValueError("factor must exceed -1")
    system = _system(network)
    theta = as_point(system.network, point)
    out = {"nominal": simulate(system, theta, grid, rel_tol, abs_tol)}
    for i, name in enumerate(system.network.parameter_names):
        bumped = theta.copy()
        bumped[i] *= 1.0 + factor
        try:
            out[name] = simulate(system, bumped, grid, rel_tol, abs_tol)
        except IntegrationError as exc:
            raise IntegrationError(f"perturbing {name}: {exc}") from exc
    return out


def fd_sensitivity(
    network: ReactionNetwork | MomentSystem,
    point=None,
    h_rel: float = DEFAULT_FD_STEP,
    grid=None,
    h_abs: float | None = DEFAULT_ABS_STEP,
    rel_tol: float = FD_REL_TOL,
    abs_tol: float = FD_ABS_TOL,
) -> np.ndarray:
    """Forward-difference derivatives of every moment w.r.t. every parameter.

    Parameter ``i`` is stepped by ``h_rel * theta_i`` (``h_abs`` when
    ``theta_i`` is zero).  The nominal and all perturbed systems are
    integrated on one shared step sequence so integration error cancels in
    the differences.

    Returns
    -------
    ndarray
        Shape ``(n_times, n_params, n_outputs)``.
    """
    if h_rel <= 0:
        raise ValueError("h_rel must be positive")
    system = _system(network)
    theta = as_point(system.network, point)
    k = theta.size
    steps = h_rel * theta
    for i in np.flatnonzero(theta == 0):
        if h_abs is None:
            raise ValueError(f"parameter {system.network.parameter_names[i]} is zero; give h_abs")
        steps[i] = h_abs
    thetas = np.repeat(theta[None, :], k + 1, axis=0)
    thetas[np.arange(1, k + 1), np.arange(k)] += steps
    grid = default_grid() if grid is None else grid
    res = simulate_many(system, thetas, grid, rel_tol, abs_tol, shared_steps=True)
    if not res.ok.all():
        bad = [system.network.parameter_names[r - 1] if r else "nominal" for r in np.flatnonzero(~res.ok)]
        raise IntegrationError(f"integration failed for {', '.join(bad)}: {res.errors[np.argmin(res.ok)]}")
    base = res.states[0]
    diffs = (res.states[1:] - base[None]) / steps[:, None, None]
    return np.transpose(diffs, (1, 0, 2))


def normalize(raw, omega_theta, omega_y=1.0) -> np.ndarray:
    """Relative sensitivities ``raw * omega_theta / omega_y``.

    ``raw`` has shape ``(n_times, n_params, n_outputs)``; ``omega_theta`` is
    per parameter and ``omega_y`` per output (scalars broadcast).
    """
    raw = np.asarray(raw, dtype=float)
    w_theta = np.broadcast_to(np.asarray(omega_theta, dtype=float), (raw.shape[1],))
    w_y = np.broadcast_to(np.asarray(omega_y, dtype=float), (raw.shape[2],))
    if np.any(w_theta <= 0) or np.any(w_y <= 0):
        raise ValueError("scales must be positive")
    return raw * w_theta[None, :, None] / w_y[None, None, :]


@dataclass
class LocalSensitivityReport:
    times: np.ndarray
    parameters: tuple[str, ...]
    outputs: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray
    omega_theta: np.ndarray
    omega_y: np.ndarray

    def curve(self, output: str, param: str, normalized: bool = True) -> np.ndarray:
        data = self.normalized if normalized else self.raw
        return data[:, self.parameters.index(param), self.outputs.index(output)]

    def rows(self):
        """``(t, output, param, S_raw, S_normalized)`` records, time-major."""
        for ti, t in enumerate(self.times):
            for oi, out in enumerate(self.outputs):
                for pi, par in enumerate(self.parameters):
                    yield t, out, par, self.raw[ti, pi, oi], self.normalized[ti, pi, oi]


def local_sensitivity(
    network: ReactionNetwork | MomentSystem,
    point=None,
    h_rel: float = DEFAULT_FD_STEP,
    grid=None,
    omega_theta=None,
    omega_y=1.0,
) -> LocalSensitivityReport:
    """Forward differences plus normalisation.

    By default parameters are scaled by their nominal values and outputs are
    left unscaled.
    """
    system = _system(network)
    theta = as_point(system.network, point)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    raw = fd_sensitivity(system, theta, h_rel, grid)
    w_theta = theta if omega_theta is None else np.asarray(omega_theta, dtype=float)
    w_y = np.broadcast_to(np.asarray(omega_y, dtype=float), (system.dim,)).copy()
    return LocalSensitivityReport(
        grid, tuple(system.network.parameter_names), system.names,
        raw, normalize(raw, w_theta, w_y), np.asarray(w_theta, dtype=float), w_y,
    )
