"""Truncated chemical master equation solved by uniformization.

This is the reference the moment closure is checked against: enumerate the
reachable states inside a box, assemble the generator ``A`` (columns are
source states, so ``dp/dt = A p``) and evolve ``p(t) = exp(tA) p0`` as a
Poisson-weighted power series of ``P = I + A / rate``.
"""
from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import pdtrc

from .closure import MomentState, MomentSystem, build_moment_system
from .integrate import Trajectory, default_grid
from .model import ReactionNetwork, as_point

log = logging.getLogger(__name__)

DEFAULT_STATE_CAP = 2_000_000
DEFAULT_BOUND_FACTOR = 8
# Poisson parameter per uniformization sub-interval; keeps exp(-q) far from underflow.
_MAX_POISSON = 50.0


@dataclass(frozen=True)
class StateSpace:
    """Reachable states in lexicographic order.

    ``truncated`` lists ``(state_ordinal, reaction_index)`` pairs whose
    target falls outside the box.
    """

    states: np.ndarray
    index: dict
    bound: np.ndarray
    truncated: tuple

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class Generator:
    matrix: sparse.csc_matrix
    outflow: np.ndarray  # per-state rate of leaving the box

    @property
    def rate(self) -> float:
        return float(np.max(-self.matrix.diagonal(), initial=0.0))


def default_bound(network: ReactionNetwork) -> np.ndarray:
    top = max(int(network.initial_state.max(initial=0)), 1)
    return np.full(network.n_species, DEFAULT_BOUND_FACTOR * top, dtype=np.int64)


def enumerate_states(network: ReactionNetwork, bound=None, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Breadth-first search of states reachable from the initial counts.

    ``bound`` is the per-species maximum count (scalar or vector); defaults to
    eight times the largest initial count.
    """
    x0 = network.initial_state
    bound = default_bound(network) if bound is None else np.broadcast_to(
        np.asarray(bound, dtype=np.int64), x0.shape).copy()
    if np.any(bound < x0):
        raise ValueError(f"bound {bound.tolist()} is below the initial state {x0.tolist()}")
    reactants = network.reactant_matrix()
    nu = network.stoichiometry()

    start = tuple(int(v) for v in x0)
    seen = {start}
    queue = deque([start])
    edges_out = []
    while queue:
        x = queue.popleft()
        xa = np.array(x)
        for k in range(network.n_reactions):
            if np.any(xa < reactants[k]):
                continue
            y = xa + nu[k]
            if np.any(y > bound):
                edges_out.append((x, k))
                continue
            ty = tuple(int(v) for v in y)
            if ty not in seen:
                seen.add(ty)
                if len(seen) > cap:
                    raise ValueError(f"state space exceeds cap of {cap} states")
                queue.append(ty)
    ordered = sorted(seen)
    index = {s: i for i, s in enumerate(ordered)}
    states = np.array(ordered, dtype=np.int64).reshape(len(ordered), network.n_species)
    truncated = tuple(sorted((index[x], k) for x, k in edges_out))
    return StateSpace(states, index, bound, truncated)


def _propensities(network: ReactionNetwork, states: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Propensity of every reaction at every state, shape ``(n_states, M)``."""
    a = network.reactant_matrix()
    x = states.astype(float)
    out = np.empty((states.shape[0], network.n_reactions))
    for k, idx in enumerate(network.rate_indices()):
        combos = np.ones(states.shape[0])
        for i in range(network.n_species):
            if a[k, i] == 1:
                combos *= x[:, i]
            elif a[k, i] == 2:
                combos *= x[:, i] * (x[:, i] - 1) / 2
        out[:, k] = theta[idx] * combos
    return out


def build_generator(space: StateSpace, network: ReactionNetwork, point=None) -> Generator:
    """Transition-rate matrix on ``space``.

    ``A[i, j] = alpha_k(x_j)`` when ``x_i = x_j + nu_k`` and ``A[j, j] = -sum_k
    alpha_k(x_j)``.  Transitions that leave the box only enter the diagonal,
    so column sums equal minus the outflow.
    """
    theta = as_point(network, point)
    n = len(space)
    prop = _propensities(network, space.states, theta)
    nu = network.stoichiometry()
    rows, cols, vals = [], [], []
    outflow = np.zeros(n)
    trunc = set(space.truncated)
    for j in range(n):
        x = space.states[j]
        for k in range(network.n_reactions):
            rate = prop[j, k]
            if rate == 0.0:
                continue
            if (j, k) in trunc:
                outflow[j] += rate
                continue
            rows.append(space.index[tuple(int(v) for v in x + nu[k])])
            cols.append(j)
            vals.append(rate)
    diag = -prop.sum(axis=1)
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    mat = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
    return Generator(mat, outflow)


def evolve(p0, gen: Generator, t: float, tol: float = 1e-12) -> np.ndarray:
    """``exp(t A) p0`` by uniformization with Poisson-tail error at most ``tol``.

    The residual mass ``1 - p.sum()`` is the probability that has left the
    truncated box (plus at most ``tol``).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    p = np.array(p0, dtype=float)
    if np.any(p < 0):
        raise ValueError("p0 must be non-negative")
    rate = gen.rate
    if t == 0 or rate == 0:
        return p
    n = p.size
    transition = (sparse.identity(n, format="csr") + gen.matrix.tocsr() / rate).tocsr()
    total = rate * t
    pieces = int(np.ceil(total / _MAX_POISSON))
    q = total / pieces
    tail_tol = tol / pieces
    upper = int(q + 12 * np.sqrt(q) + 60)
    tails = pdtrc(np.arange(upper), q)
    n_terms = int(np.argmax(tails <= tail_tol))
    weights = np.empty(n_terms + 1)
    weights[0] = np.exp(-q)
    for j in range(1, n_terms + 1):
        weights[j] = weights[j - 1] * q / j
    for _ in range(pieces):
        v = p
        acc = weights[0] * v
        for j in range(1, n_terms + 1):
            v = transition @ v
            acc += weights[j] * v
        p = acc
    log.debug("uniformization: rate=%g t=%g pieces=%d terms=%d residual=%.3e",
              rate, t, pieces, n_terms, 1.0 - p.sum())
    return p


def point_mass(space: StateSpace, state) -> np.ndarray:
    p = np.zeros(len(space))
    p[space.index[tuple(int(v) for v in state)]] = 1.0
    return p


def moments_from_distribution(p, space: StateSpace, species=None) -> MomentState:
    """Mean and covariance of the species counts under ``p``.

    ``species`` selects columns (default all).  Moments are raw sums over the
    states, not renormalised; a warning is issued if ``p`` has lost more than
    ``1e-6`` of its mass.
    """
    p = np.asarray(p, dtype=float)
    residual = 1.0 - p.sum()
    if abs(residual) > 1e-6:
        warnings.warn(f"distribution mass differs from 1 by {residual:.3e}", RuntimeWarning, stacklevel=2)
    x = space.states.astype(float)
    if species is not None:
        x = x[:, list(species)]
    mu = p @ x
    dev = x - mu
    sigma = (dev * p[:, None]).T @ dev
    return MomentState(mu, 0.5 * (sigma + sigma.T))


def oracle_moments(network: ReactionNetwork, point=None, grid=None, bound=None,
                   system: MomentSystem | None = None, tol: float = 1e-12) -> Trajectory:
    """CME moments on ``grid``, laid out like the moment system's state vector.

    ``metadata['mass_loss']`` holds ``1 - sum(p)`` at every grid time.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    system = build_moment_system(network) if system is None else system
    space = enumerate_states(network, bound)
    gen = build_generator(space, network, point)
    p = point_mass(space, network.initial_state)
    tracked = list(system.conservation.tracked)
    states = np.empty((grid.size, system.dim))
    loss = np.empty(grid.size)
    t_prev = 0.0
    for idx, t in enumerate(grid):
        p = evolve(p, gen, t - t_prev, tol / max(grid.size, 1))
        t_prev = t
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            states[idx] = system.pack(moments_from_distribution(p, space, tracked))
        loss[idx] = 1.0 - p.sum()
    meta = {"n_states": len(space), "mass_loss": loss, "bound": space.bound.tolist(),
            "truncated_transitions": len(space.truncated)}
    return Trajectory(grid, states, system.names, meta)
