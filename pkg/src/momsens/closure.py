"""Zero-closure moment equations for mass-action networks.

For propensities ``a_k`` of degree at most two the Taylor expansion of
``E[a_k(x)]`` about the mean terminates, and setting third central moments to
zero yields a closed system in the means ``mu_i`` and covariances
``sigma_ij``::

    dmu_i/dt    = sum_k nu_ki (a_k(mu) + 1/2 sum_lm d2a_k/dx_l dx_m sigma_lm)
    dsigma_ij/dt = sum_k [ nu_ki sum_l da_k/dx_l sigma_jl
                         + nu_kj sum_l da_k/dx_l sigma_il
                         + nu_ki nu_kj (a_k(mu) + 1/2 sum_lm d2a_k sigma_lm) ]

Linear conservation laws are eliminated first: species whose counts are
fixed by others (for ``2 X <-> Y``, ``Y = (x0 - X) / 2``) are substituted out,
which keeps the propensities polynomial of degree two in the remaining
species and avoids carrying a singular covariance block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .integrate import (
    DEFAULT_ABS_TOL,
    DEFAULT_REL_TOL,
    BatchResult,
    Trajectory,
    _single,
    default_grid,
    integrate_batch,
)
from .model import PropensityPolynomial, ReactionNetwork, as_point, propensity_polynomials


@dataclass(frozen=True)
class MomentState:
    """Means ``mu`` (length ``n``) and symmetric covariance ``sigma`` (``n x n``)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(f"sigma must be {mu.size}x{mu.size}, got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=0):
            raise ValueError("sigma must be symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class Conservation:
    """Affine map ``x_full = offset + embed @ x_tracked`` from conservation laws."""

    tracked: tuple[int, ...]
    eliminated: tuple[int, ...]
    laws: np.ndarray
    offset: np.ndarray
    embed: np.ndarray


def conservation_laws(network: ReactionNetwork, eliminate: bool = True) -> Conservation:
    """Find linear conservation laws and choose which species to eliminate.

    Later-declared species are eliminated in preference to earlier ones, so a
    network declared as (monomer, dimer) keeps the monomer.
    """
    n = network.n_species
    x0 = network.initial_state
    if not eliminate:
        return Conservation(tuple(range(n)), (), np.zeros((0, n)), np.zeros(n), np.eye(n))
    nu = sp.Matrix(network.stoichiometry().tolist())
    basis = nu.nullspace()
    if not basis:
        return Conservation(tuple(range(n)), (), np.zeros((0, n)), np.zeros(n), np.eye(n))
    laws = sp.Matrix.hstack(*basis).T
    rev = laws[:, ::-1]
    rref, pivots_rev = rev.rref()
    rref = rref[:, ::-1]
    eliminated = sorted(n - 1 - p for p in pivots_rev)
    tracked = [i for i in range(n) if i not in eliminated]
    offset = np.zeros(n)
    embed = np.zeros((n, len(tracked)))
    for col, i in enumerate(tracked):
        embed[i, col] = 1.0
    for row, p in enumerate(pivots_rev):
        dep = n - 1 - p
        total = sum(rref[row, j] * int(x0[j]) for j in range(n))
        offset[dep] = float(total)
        for col, i in enumerate(tracked):
            embed[dep, col] = -float(rref[row, i])
    laws_np = np.array(rref.tolist(), dtype=float)[: len(pivots_rev)]
    return Conservation(tuple(tracked), tuple(eliminated), laws_np, offset, embed)


def _reduce(poly: PropensityPolynomial, cons: Conservation) -> PropensityPolynomial:
    off, emb = cons.offset, cons.embed
    q = poly.quadratic
    const = poly.constant + poly.linear @ off + 0.5 * off @ q @ off
    lin = emb.T @ (poly.linear + q @ off)
    quad = emb.T @ q @ emb
    return PropensityPolynomial(poly.rate_name, poly.rate_index, float(const), lin, quad)


class MomentSystem:
    """Closed first- and second-moment equations for one network.

    State vectors are laid out as ``[mu_0, ..., mu_{n-1}, sigma_00, sigma_01,
    ..., sigma_{n-1,n-1}]`` (upper triangle, row-major).  With
    ``diagonal_covariance`` the off-diagonal covariances stay pinned at zero.
    """

    def __init__(self, network: ReactionNetwork, diagonal_covariance: bool = False,
                 eliminate_conserved: bool = True):
        self.network = network
        self.diagonal_covariance = diagonal_covariance
        self.conservation = conservation_laws(network, eliminate_conserved)
        tracked = list(self.conservation.tracked)
        self.species = tuple(network.species_names[i] for i in tracked)
        self.stoichiometry = network.stoichiometry()[:, tracked]
        self.polynomials = tuple(_reduce(p, self.conservation) for p in propensity_polynomials(network))
        n = len(tracked)
        self.n = n
        self.pairs = tuple((i, j) for i in range(n) for j in range(i, n))
        self._pos = {p: n + q for q, p in enumerate(self.pairs)}
        self.dim = n + len(self.pairs)
        self.names = tuple(f"mu_{s}" for s in self.species) + tuple(
            f"sigma_{self.species[i]}_{self.species[j]}" for i, j in self.pairs
        )
        self._terms = self._compile()

    def sigma_index(self, i: int, j: int) -> int:
        return self._pos[(min(i, j), max(i, j))]

    def _compile(self):
        # sparse coefficient lists, one entry per reaction
        terms = []
        for k, poly in enumerate(self.polynomials):
            nu = self.stoichiometry[k]
            lin = [(l, float(poly.linear[l])) for l in range(self.n) if poly.linear[l] != 0]
            quad = [
                (l, m, float(poly.quadratic[l, m]))
                for l in range(self.n)
                for m in range(self.n)
                if poly.quadratic[l, m] != 0
            ]
            terms.append((poly.rate_index, float(poly.constant), lin, quad, nu))
        return terms

    def initial_state(self) -> np.ndarray:
        y = np.zeros(self.dim)
        y[: self.n] = self.network.initial_state[list(self.conservation.tracked)]
        return y

    def pack(self, state: MomentState) -> np.ndarray:
        if state.mu.size != self.n:
            raise ValueError(f"state has {state.mu.size} species, system tracks {self.n}")
        y = np.empty(self.dim)
        y[: self.n] = state.mu
        for i, j in self.pairs:
            y[self.sigma_index(i, j)] = state.sigma[i, j]
        return y

    def unpack(self, y) -> MomentState:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise ValueError(f"state vector must have length {self.dim}")
        sigma = np.empty((self.n, self.n))
        for i, j in self.pairs:
            sigma[i, j] = sigma[j, i] = y[self.sigma_index(i, j)]
        return MomentState(y[: self.n].copy(), sigma)

    def rhs(self, t, y, theta):
        """Vectorised right-hand side: ``y`` is ``(r, dim)``, ``theta`` is ``(r, k)``."""
        n = self.n
        mu = [y[:, i] for i in range(n)]
        zero = np.zeros(y.shape[0])

        def sig(l, m):
            if self.diagonal_covariance and l != m:
                return zero
            return y[:, self.sigma_index(l, m)]

        out = np.zeros_like(y)
        for rate_idx, const, lin, quad, nu in self._terms:
            c = theta[:, rate_idx]
            poly = np.full(y.shape[0], const)
            grad = [np.zeros(y.shape[0]) for _ in range(n)]
            for l, v in lin:
                poly = poly + v * mu[l]
                grad[l] = grad[l] + v
            curv = zero
            for l, m, v in quad:
                poly = poly + (0.5 * v) * mu[l] * mu[m]
                grad[l] = grad[l] + v * mu[m]
                curv = curv + (0.5 * v) * sig(l, m)
            eff = c * (poly + curv)
            grad = [c * g for g in grad]
            for i in range(n):
                if nu[i]:
                    out[:, i] += nu[i] * eff
            for i, j in self.pairs:
                if self.diagonal_covariance and i != j:
                    continue
                if not (nu[i] or nu[j]):
                    continue
                acc = (nu[i] * nu[j]) * eff
                for l in range(n):
                    if nu[i]:
                        acc = acc + nu[i] * grad[l] * sig(j, l)
                    if nu[j]:
                        acc = acc + nu[j] * grad[l] * sig(i, l)
                out[:, self.sigma_index(i, j)] += acc
        return out

    def symbolic(self) -> dict:
        """Right-hand side as sympy expressions keyed by state name.

        Derived independently of :meth:`rhs` by symbolic differentiation of
        the reduced propensities.
        """
        mu = sp.symbols([f"mu_{s}" for s in self.species])
        sig = {}
        for i, j in self.pairs:
            s = sp.Symbol(f"sigma_{self.species[i]}_{self.species[j]}")
            sig[(i, j)] = sig[(j, i)] = 0 if (self.diagonal_covariance and i != j) else s
        rates = {p.name: sp.Symbol(p.name) for p in self.network.parameters}
        alphas = [p.as_sympy(mu, rates[p.rate_name]) for p in self.polynomials]
        eqs = {}
        rng = range(self.n)
        for i in rng:
            expr = 0
            for k, a in enumerate(alphas):
                nu = int(self.stoichiometry[k, i])
                hess = sum(sp.diff(a, mu[l], mu[m]) * sig[(l, m)] for l in rng for m in rng)
                expr += nu * (a + sp.Rational(1, 2) * hess)
            eqs[f"mu_{self.species[i]}"] = sp.expand(expr)
        for i, j in self.pairs:
            if self.diagonal_covariance and i != j:
                continue
            expr = 0
            for k, a in enumerate(alphas):
                ni, nj = int(self.stoichiometry[k, i]), int(self.stoichiometry[k, j])
                hess = sum(sp.diff(a, mu[l], mu[m]) * sig[(l, m)] for l in rng for m in rng)
                expr += ni * sum(sp.diff(a, mu[l]) * sig[(j, l)] for l in rng)
                expr += nj * sum(sp.diff(a, mu[l]) * sig[(i, l)] for l in rng)
                expr += ni * nj * (a + sp.Rational(1, 2) * hess)
            eqs[f"sigma_{self.species[i]}_{self.species[j]}"] = sp.expand(expr)
        return eqs


def build_moment_system(network: ReactionNetwork, diagonal_covariance: bool = False,
                        eliminate_conserved: bool = True) -> MomentSystem:
    return MomentSystem(network, diagonal_covariance, eliminate_conserved)


def rhs_eval(system: MomentSystem, state: MomentState, point=None) -> MomentState:
    """Time derivative of ``state`` under the closed equations."""
    theta = as_point(system.network, point)
    y = system.pack(state)
    dy = system.rhs(0.0, y[None, :], theta[None, :])[0]
    return system.unpack(dy)


def _negative_variance(system: MomentSystem, times, states) -> dict:
    diag = [system.sigma_index(i, i) for i in range(system.n)]
    neg = states[:, diag] < 0
    info = {"negative_variance": bool(neg.any())}
    if neg.any():
        info["negative_variance_first_t"] = float(times[np.argmax(neg.any(axis=1))])
    return info


def simulate(
    system: MomentSystem | ReactionNetwork,
    point=None,
    grid=None,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    diagonal_covariance: bool = False,
) -> Trajectory:
    """Integrate the moment equations from the network's initial counts.

    ``point`` defaults to the nominal parameter values and ``grid`` to 101
    points on [0, 10].  Negative variances are flagged in ``metadata``, not
    clamped.
    """
    if isinstance(system, ReactionNetwork):
        system = build_moment_system(system, diagonal_covariance)
    theta = as_point(system.network, point)
    grid = default_grid() if grid is None else grid
    res = integrate_batch(system.rhs, system.initial_state()[None, :], grid, rel_tol, abs_tol,
                          args=(theta[None, :],))
    traj = _single(res, system.names)
    traj.metadata.update(_negative_variance(system, traj.times, traj.states))
    return traj


def simulate_many(
    system: MomentSystem,
    thetas,
    grid=None,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    shared_steps: bool = False,
) -> BatchResult:
    """Integrate the moment equations for each row of ``thetas`` (``(m, k)``)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    grid = default_grid() if grid is None else grid
    y0 = np.repeat(system.initial_state()[None, :], thetas.shape[0], axis=0)
    return integrate_batch(system.rhs, y0, grid, rel_tol, abs_tol, args=(thetas,),
                           shared_steps=shared_steps)
