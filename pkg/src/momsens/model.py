"""Mass-action reaction networks: data types, model-file parsing and propensities.

Model files are line oriented::

    # comment
    species X init=50
    param c1 = 0.10 bounds=0.05,1.0
    reaction R1: X -> 2 X @ c1
    reaction R2: X -> 0 @ c2

Propensities follow the combinatorial mass-action convention
``alpha_k(x) = c_k * prod_i C(x_i, a_ik)`` so that a dimerisation ``2 X -> Y``
fires at ``c * x * (x - 1) / 2``.  Reactions of total order above two are
rejected because the moment closure relies on vanishing third derivatives.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from math import comb
from pathlib import Path

import numpy as np

MAX_ORDER = 2

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_FLOAT = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_SPECIES_RE = re.compile(rf"^species\s+({_NAME})\s+init\s*=\s*(\d+)$")
_PARAM_RE = re.compile(
    rf"^param\s+({_NAME})\s*=\s*({_FLOAT})(?:\s+bounds\s*=\s*({_FLOAT})\s*,\s*({_FLOAT}))?$"
)
_REACTION_RE = re.compile(rf"^reaction\s+({_NAME})\s*:\s*(.*?)\s*->\s*(.*?)\s*@\s*({_NAME})$")
_TERM_RE = re.compile(rf"^(?:(\d+)\s*)?({_NAME})$")


class ModelError(ValueError):
    """Invalid model text or network definition."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Species:
    name: str
    initial_count: int = 0

    def __post_init__(self):
        if self.initial_count < 0:
            raise ModelError(f"species {self.name!r} has negative initial count")


@dataclass(frozen=True)
class Parameter:
    name: str
    value: float
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ModelError(f"parameter {self.name!r} must be a finite non-negative rate")
        if self.bounds is not None:
            lo, hi = self.bounds
            if not 0 < lo < hi:
                raise ModelError(f"parameter {self.name!r}: bounds need 0 < lower < upper")


@dataclass(frozen=True)
class Reaction:
    """One reaction channel.

    ``reactants`` and ``products`` are tuples of ``(species, coefficient)``
    pairs with positive coefficients, kept in the order written.
    """

    name: str
    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    rate_name: str

    @property
    def order(self) -> int:
        return sum(c for _, c in self.reactants)


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]
    parameters: tuple[Parameter, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        object.__setattr__(self, "parameters", tuple(self.parameters))
        _validate(self)
        object.__setattr__(
            self,
            "_index",
            {
                "species": {s.name: i for i, s in enumerate(self.species)},
                "param": {p.name: i for i, p in enumerate(self.parameters)},
            },
        )

    @property
    def species_names(self) -> list[str]:
        return [s.name for s in self.species]

    @property
    def parameter_names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def n_parameters(self) -> int:
        return len(self.parameters)

    def species_index(self, name: str) -> int:
        return self._index["species"][name]

    def parameter_index(self, name: str) -> int:
        return self._index["param"][name]

    @property
    def initial_state(self) -> np.ndarray:
        return np.array([s.initial_count for s in self.species], dtype=np.int64)

    @property
    def nominal(self) -> "ParameterPoint":
        return ParameterPoint([p.value for p in self.parameters])

    @property
    def bounds(self) -> np.ndarray:
        """Parameter box as a ``(k, 2)`` array; raises if any bound is missing."""
        missing = [p.name for p in self.parameters if p.bounds is None]
        if missing:
            raise ModelError(f"parameters without bounds: {', '.join(missing)}")
        return np.array([p.bounds for p in self.parameters], dtype=float)

    def reactant_matrix(self) -> np.ndarray:
        """``a[k, i]``: molecules of species ``i`` consumed by reaction ``k``."""
        a = np.zeros((self.n_reactions, self.n_species), dtype=np.int64)
        for k, r in enumerate(self.reactions):
            for name, c in r.reactants:
                a[k, self.species_index(name)] += c
        return a

    def product_matrix(self) -> np.ndarray:
        b = np.zeros((self.n_reactions, self.n_species), dtype=np.int64)
        for k, r in enumerate(self.reactions):
            for name, c in r.products:
                b[k, self.species_index(name)] += c
        return b

    def stoichiometry(self) -> np.ndarray:
        """Net change vectors, one row per reaction (``nu[k, i]``)."""
        return self.product_matrix() - self.reactant_matrix()

    def rate_indices(self) -> np.ndarray:
        return np.array([self.parameter_index(r.rate_name) for r in self.reactions])


def _validate(net: ReactionNetwork) -> None:
    names = [s.name for s in net.species]
    pnames = [p.name for p in net.parameters]
    rnames = [r.name for r in net.reactions]
    for group in (names, pnames, rnames):
        dup = {n for n in group if group.count(n) > 1}
        if dup:
            raise ModelError(f"duplicate name(s): {', '.join(sorted(dup))}")
    clash = set(names) & set(pnames)
    if clash:
        raise ModelError(f"name used for both species and parameter: {', '.join(sorted(clash))}")
    known = set(names)
    for r in net.reactions:
        for sp, c in r.reactants + r.products:
            if sp not in known:
                raise ModelError(f"reaction {r.name!r}: undeclared species {sp!r}")
            if c <= 0:
                raise ModelError(f"reaction {r.name!r}: coefficients must be positive")
        if r.rate_name not in pnames:
            raise ModelError(f"reaction {r.name!r}: undeclared parameter {r.rate_name!r}")
        if r.order > MAX_ORDER:
            raise ModelError(f"reaction {r.name!r}: reactant order {r.order} exceeds {MAX_ORDER}")
        net_change = {}
        for sp, c in r.reactants:
            net_change[sp] = net_change.get(sp, 0) - c
        for sp, c in r.products:
            net_change[sp] = net_change.get(sp, 0) + c
        if not any(net_change.values()):
            raise ModelError(f"reaction {r.name!r}: zero net stoichiometry")


class ParameterPoint:
    """Rate constants aligned with the network's parameter order.

    Entries must be finite and non-negative.  A zero rate is allowed so that
    channels can be switched off (e.g. a pure-death process).
    """

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.array(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"parameter values must be finite and non-negative, got {v}")
        v.setflags(write=False)
        self.values = v

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, ParameterPoint) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"ParameterPoint({self.values.tolist()})"


def as_point(network: ReactionNetwork, point=None) -> np.ndarray:
    """Resolve ``point`` (None, ParameterPoint or sequence) to a checked vector."""
    if point is None:
        return network.nominal.values
    values = point.values if isinstance(point, ParameterPoint) else ParameterPoint(point).values
    if len(values) != network.n_parameters:
        raise ValueError(
            f"expected {network.n_parameters} parameter values, got {len(values)}"
        )
    return values


# -- parsing -----------------------------------------------------------------


def _parse_side(text: str, lineno: int) -> tuple[tuple[str, int], ...]:
    text = text.strip()
    if text in ("0", "", "∅"):
        return ()
    counts: dict[str, int] = {}
    for raw in text.split("+"):
        m = _TERM_RE.match(raw.strip())
        if not m:
            raise ModelError(f"cannot parse term {raw.strip()!r}", lineno)
        coef = int(m.group(1)) if m.group(1) else 1
        if coef == 0:
            raise ModelError(f"zero coefficient in term {raw.strip()!r}", lineno)
        counts[m.group(2)] = counts.get(m.group(2), 0) + coef
    return tuple(counts.items())


def parse_model(text: str) -> ReactionNetwork:
    """Parse model-file text into a validated :class:`ReactionNetwork`.

    Raises
    ------
    ModelError
        On syntax errors (with the offending line number), undeclared names,
        duplicate names, zero net stoichiometry or reactant order above two.
    """
    species: list[Species] = []
    params: list[Parameter] = []
    reactions: list[Reaction] = []
    reaction_lines: list[int] = []
    declared: dict[str, int] = {}

    def declare(name, lineno):
        if name in declared:
            raise ModelError(f"duplicate name {name!r} (first declared on line {declared[name]})", lineno)
        declared[name] = lineno

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword = line.split(None, 1)[0]
        try:
            if keyword == "species":
                m = _SPECIES_RE.match(line)
                if not m:
                    raise ModelError("expected 'species <name> init=<uint>'", lineno)
                declare(m.group(1), lineno)
                species.append(Species(m.group(1), int(m.group(2))))
            elif keyword == "param":
                m = _PARAM_RE.match(line)
                if not m:
                    raise ModelError("expected 'param <name> = <float> [bounds=<lo>,<hi>]'", lineno)
                declare(m.group(1), lineno)
                bounds = (float(m.group(3)), float(m.group(4))) if m.group(3) else None
                params.append(Parameter(m.group(1), float(m.group(2)), bounds))
            elif keyword == "reaction":
                m = _REACTION_RE.match(line)
                if not m:
                    raise ModelError("expected 'reaction <name>: <lhs> -> <rhs> @ <param>'", lineno)
                rxn = Reaction(
                    m.group(1), _parse_side(m.group(2), lineno), _parse_side(m.group(3), lineno), m.group(4)
                )
                declare(rxn.name, lineno)
                for sp, _ in rxn.reactants + rxn.products:
                    if sp not in {s.name for s in species}:
                        raise ModelError(f"undeclared species {sp!r}", lineno)
                if rxn.order > MAX_ORDER:
                    raise ModelError(f"reactant order {rxn.order} exceeds {MAX_ORDER}", lineno)
                reactions.append(rxn)
                reaction_lines.append(lineno)
                net = dict(rxn.products)
                for sp, c in rxn.reactants:
                    net[sp] = net.get(sp, 0) - c
                if not any(net.values()):
                    raise ModelError(f"reaction {rxn.name!r}: zero net stoichiometry", lineno)
            else:
                raise ModelError(f"unknown keyword {keyword!r}", lineno)
        except ModelError as exc:
            if exc.line is None:
                raise ModelError(str(exc), lineno) from None
            raise

    pnames = {p.name for p in params}
    for rxn, lineno in zip(reactions, reaction_lines):
        if rxn.rate_name not in pnames:
            raise ModelError(f"undeclared parameter {rxn.rate_name!r}", lineno)
    return ReactionNetwork(tuple(species), tuple(reactions), tuple(params))


def _render_side(side) -> str:
    if not side:
        return "0"
    return " + ".join(name if c == 1 else f"{c} {name}" for name, c in side)


def render_model(network: ReactionNetwork) -> str:
    """Inverse of :func:`parse_model`."""
    lines = [f"species {s.name} init={s.initial_count}" for s in network.species]
    for p in network.parameters:
        line = f"param {p.name} = {p.value!r}"
        if p.bounds is not None:
            line += f" bounds={p.bounds[0]!r},{p.bounds[1]!r}"
        lines.append(line)
    for r in network.reactions:
        lines.append(f"reaction {r.name}: {_render_side(r.reactants)} -> {_render_side(r.products)} @ {r.rate_name}")
    return "\n".join(lines) + "\n"


SHIPPED_MODELS = ("birthdeath", "dimerization")


def shipped_model_path(name: str) -> Path:
    """Path of a model file bundled with the package (``birthdeath``, ``dimerization``)."""
    stem = name[:-6] if name.endswith(".model") else name
    if stem not in SHIPPED_MODELS:
        raise FileNotFoundError(f"no shipped model named {name!r}")
    return Path(str(resources.files("momsens") / "models" / f"{stem}.model"))


def load_model(path) -> ReactionNetwork:
    """Read and parse a model file.  Bare names of shipped models also resolve."""
    p = Path(path)
    if not p.exists():
        try:
            p = shipped_model_path(p.name)
        except FileNotFoundError:
            raise FileNotFoundError(f"file not found: {path}") from None
    return parse_model(p.read_text())


# -- propensities ------------------------------------------------------------


def propensity_eval(network: ReactionNetwork, state, point=None) -> np.ndarray:
    """Mass-action propensities ``c_k * prod_i C(x_i, a_ik)`` at an integer state."""
    x = np.asarray(state)
    if x.shape != (network.n_species,):
        raise ValueError(f"state must have length {network.n_species}")
    if np.any(x < 0):
        raise ValueError("state entries must be non-negative")
    theta = as_point(network, point)
    a = network.reactant_matrix()
    out = np.empty(network.n_reactions)
    for k, idx in enumerate(network.rate_indices()):
        combos = 1
        for i in range(network.n_species):
            combos *= comb(int(x[i]), int(a[k, i]))
        out[k] = theta[idx] * combos
    return out


@dataclass(frozen=True)
class PropensityPolynomial:
    """``alpha(x) = c * (constant + linear @ x + x @ quadratic @ x / 2)``.

    ``quadratic`` is the (constant) Hessian of ``alpha / c``; every third
    derivative vanishes.
    """

    rate_name: str
    rate_index: int
    constant: float
    linear: np.ndarray
    quadratic: np.ndarray

    def value(self, x, rate: float) -> float:
        x = np.asarray(x, dtype=float)
        return rate * (self.constant + self.linear @ x + 0.5 * x @ self.quadratic @ x)

    def gradient(self, x, rate: float) -> np.ndarray:
        return rate * (self.linear + self.quadratic @ np.asarray(x, dtype=float))

    def hessian(self, rate: float) -> np.ndarray:
        return rate * self.quadratic

    def as_sympy(self, symbols, rate_symbol):
        import sympy as sp

        x = sp.Matrix(symbols)
        lin = sp.Matrix([sp.nsimplify(v) for v in self.linear])
        quad = sp.Matrix(self.quadratic.shape[0], self.quadratic.shape[1],
                         lambda i, j: sp.nsimplify(self.quadratic[i, j]))
        poly = sp.nsimplify(self.constant) + (lin.T * x)[0] + sp.Rational(1, 2) * (x.T * quad * x)[0]
        return sp.expand(rate_symbol * poly)


def propensity_polynomials(network: ReactionNetwork) -> list[PropensityPolynomial]:
    """Each propensity as an explicit polynomial of degree at most two."""
    n = network.n_species
    a = network.reactant_matrix()
    polys = []
    for k, r in enumerate(network.reactions):
        const = 1.0
        lin = np.zeros(n)
        quad = np.zeros((n, n))
        active = [(i, int(a[k, i])) for i in range(n) if a[k, i] > 0]
        if len(active) == 1 and active[0][1] == 1:
            const = 0.0
            lin[active[0][0]] = 1.0
        elif len(active) == 1:
            # x(x-1)/2
            i = active[0][0]
            const = 0.0
            lin[i] = -0.5
            quad[i, i] = 1.0
        elif len(active) == 2:
            (i, _), (j, _) = active
            const = 0.0
            quad[i, j] = quad[j, i] = 1.0
        lin.setflags(write=False)
        quad.setflags(write=False)
        polys.append(
            PropensityPolynomial(r.rate_name, network.parameter_index(r.rate_name), const, lin, quad)
        )
    return polys
