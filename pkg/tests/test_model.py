import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momsens.model import (
    ModelError,
    ParameterPoint,
    Parameter,
    Reaction,
    ReactionNetwork,
    Species,
    parse_model,
    propensity_eval,
    propensity_polynomials,
    render_model,
)


def test_single_reaction_file():
    net = parse_model("species X init=50\nparam c1=0.1\nreaction r1: X -> 2 X @ c1\n")
    assert net.n_species == 1 and net.n_reactions == 1
    assert net.stoichiometry().tolist() == [[1]]


def test_birthdeath_file(birthdeath):
    assert birthdeath.species_names == ["X"]
    assert birthdeath.initial_state.tolist() == [50]
    assert birthdeath.stoichiometry()[:, 0].tolist() == [1, -1]
    assert birthdeath.nominal.values.tolist() == [0.1, 1.0]
    assert birthdeath.bounds.tolist() == [[0.05, 1.0], [0.5, 2.0]]


def test_dimerization_file(dimerization):
    assert dimerization.species_names == ["X", "Y"]
    assert dimerization.initial_state.tolist() == [301, 0]
    assert dimerization.stoichiometry().tolist() == [[-2, 1], [2, -1]]
    assert dimerization.bounds.tolist() == [[1e-4, 9e-3], [0.01, 1.0]]


def test_declaration_order_kept():
    net = parse_model("species B init=1\nspecies A init=2\nparam z=1\nparam a=2\nreaction r: A -> B @ a\n")
    assert net.species_names == ["B", "A"]
    assert net.parameter_names == ["z", "a"]


@pytest.mark.parametrize(
    "text, fragment, line",
    [
        ("species X init=1\nparam c1=1\nreaction r: X -> X @ c1", "zero net stoichiometry", 3),
        ("species X init=1\nparam c1=1\nreaction r: X -> Z @ c1", "undeclared species", 3),
        ("species X init=1\nreaction r: X -> 0 @ k\n", "undeclared parameter", 2),
        ("species X init=1\nparam c=1\nreaction r: 3 X -> 0 @ c", "order 3", 3),
        ("species X init=1\nparam c=1\nreaction r: X + X + X -> 0 @ c", "order 3", 3),
        ("species X init=1\nspecies X init=2", "duplicate", 2),
        ("species X init=1\nparam X=2", "duplicate", 2),
        ("species X init=-1", "expected", 1),
        ("# header\n\nspecies X init=1\nparam c = abc", "expected", 4),
        ("species X init=1\nbogus line", "unknown keyword", 2),
        ("species X init=1\nparam c=1 bounds=2,1", "bounds", 2),
    ],
)
def test_parse_errors(text, fragment, line):
    with pytest.raises(ModelError) as info:
        parse_model(text)
    assert fragment in str(info.value)
    assert info.value.line == line


def test_comments_and_empty_sides():
    net = parse_model("species X init=0  # protein\nparam k = 2.5\nreaction make: 0 -> X @ k # source\n")
    assert net.reactions[0].reactants == ()
    assert net.stoichiometry().tolist() == [[1]]


def test_propensity_examples(birthdeath, dimerization):
    assert propensity_eval(birthdeath, [50], [0.1, 1.0])[0] == pytest.approx(5.0)
    a = propensity_eval(dimerization, [301, 0], [1.66e-3, 0.2])
    assert a[0] == pytest.approx(74.949, rel=1e-12)
    assert a[1] == 0.0
    assert propensity_eval(dimerization, [1, 0], [1.66e-3, 0.2])[0] == 0.0


def test_propensity_rejects_negative_state(birthdeath):
    with pytest.raises(ValueError):
        propensity_eval(birthdeath, [-1])


def test_polynomials(birthdeath, dimerization):
    r1 = propensity_polynomials(dimerization)[0]
    assert r1.constant == 0.0
    assert r1.linear.tolist() == [-0.5, 0.0]
    assert r1.quadratic.tolist() == [[1.0, 0.0], [0.0, 0.0]]
    c1 = 1.66e-3
    # (c1/2) x^2 - (c1/2) x, gradient c1 x - c1/2, curvature c1
    x = np.array([7.0, 0.0])
    assert r1.value(x, c1) == pytest.approx(c1 / 2 * 49 - c1 / 2 * 7)
    assert r1.gradient(x, c1)[0] == pytest.approx(c1 * 7 - c1 / 2)
    assert r1.hessian(c1)[0, 0] == pytest.approx(c1)

    r2 = propensity_polynomials(birthdeath)[1]
    assert (r2.constant, r2.linear.tolist(), r2.quadratic.tolist()) == (0.0, [1.0], [[0.0]])

    src = propensity_polynomials(parse_model("species X init=0\nparam c=3\nreaction r: 0 -> X @ c"))[0]
    assert src.value([4.0], 3.0) == 3.0
    assert not src.gradient([4.0], 3.0).any() and not src.hessian(3.0).any()


MIXED = parse_model(
    """
species X init=3
species Y init=4
param k0 = 1.5
param k1 = 0.7
param k2 = 0.01
param k3 = 0.2
param k4 = 0.05
reaction birth: 0 -> X @ k0
reaction convert: X -> Y @ k1
reaction bind: X + Y -> 0 @ k2
reaction dimer: 2 X -> Y @ k3
reaction undimer: 2 Y -> X @ k4
"""
)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 500), min_size=2, max_size=2),
    st.lists(st.floats(1e-3, 10.0), min_size=5, max_size=5),
)
def test_propensity_matches_polynomial(state, theta):
    exact = propensity_eval(MIXED, state, theta)
    assert np.all(exact >= 0)
    for k, poly in enumerate(propensity_polynomials(MIXED)):
        approx = poly.value(np.array(state, dtype=float), theta[poly.rate_index])
        assert approx == pytest.approx(exact[k], rel=1e-12, abs=1e-300)


names = st.sampled_from(["A", "B", "C", "D"])


@st.composite
def networks(draw):
    sp_names = draw(st.lists(names, min_size=1, max_size=4, unique=True))
    species = [Species(n, draw(st.integers(0, 1000))) for n in sp_names]
    params = [
        Parameter(f"k{i}", draw(st.floats(1e-6, 1e3)),
                  draw(st.one_of(st.none(), st.just((1e-3, 2.0)))))
        for i in range(draw(st.integers(1, 3)))
    ]
    reactions = []
    for r in range(draw(st.integers(1, 4))):
        order = draw(st.integers(0, 2))
        reac = draw(st.lists(st.sampled_from(sp_names), min_size=order, max_size=order))
        prod = draw(st.lists(st.sampled_from(sp_names), min_size=0, max_size=3))
        count = lambda xs: tuple((n, xs.count(n)) for n in dict.fromkeys(xs))
        if sorted(reac) == sorted(prod):
            prod = prod + [sp_names[0]]
        reactions.append(Reaction(f"R{r}", count(reac), count(prod), draw(st.sampled_from(params)).name))
    return ReactionNetwork(tuple(species), tuple(reactions), tuple(params))


@settings(max_examples=100, deadline=None)
@given(networks())
def test_render_round_trip(net):
    assert parse_model(render_model(net)) == net


def test_parameter_point_validation():
    assert len(ParameterPoint([0.0, 1.0])) == 2
    with pytest.raises(ValueError):
        ParameterPoint([1.0, -0.1])
    with pytest.raises(ValueError):
        ParameterPoint([np.nan])
