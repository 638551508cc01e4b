import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from momsens import (
    IntegrationError,
    MomentState,
    build_moment_system,
    parse_model,
    rhs_eval,
    simulate,
)

mu, sig, c1, c2 = sp.symbols("mu_X sigma_X_X c1 c2")


def test_birthdeath_equations(bd_system):
    eqs = bd_system.symbolic()
    assert sp.simplify(eqs["mu_X"] - (c1 - c2) * mu) == 0
    assert sp.simplify(eqs["sigma_X_X"] - (2 * (c1 - c2) * sig + (c1 + c2) * mu)) == 0


def test_dimerization_mean_equation(dm_system):
    eqs = dm_system.symbolic()
    x0 = 301
    mean = c1 * mu * (1 - mu) + c2 * (x0 - mu) - c1 * sig
    assert sp.simplify(eqs["mu_X"] - mean) == 0


def test_dimerization_variance_equation(dm_system):
    eqs = dm_system.symbolic()
    x0 = 301
    derived = (-2 * c1 * (2 * mu - 2) * sig - 2 * c2 * sig
               + 2 * c1 * mu * (mu - 1) + 2 * c2 * (x0 - mu))
    printed = (-2 * c1 * (2 * mu + 2) * sig - 2 * c2 * sig
               + 2 * c1 * mu * (mu - 1) + 2 * c2 * (x0 - mu))
    assert sp.simplify(eqs["sigma_X_X"] - derived) == 0
    # the two forms differ only in the sign of the constant inside the bracket
    assert sp.simplify(eqs["sigma_X_X"] - printed - 8 * c1 * sig) == 0


def test_dimerization_reduction_matches_full_system(dimerization, grid):
    reduced = simulate(build_moment_system(dimerization), grid=grid)
    full = simulate(build_moment_system(dimerization, eliminate_conserved=False), grid=grid)
    assert full.names[:2] == ("mu_X", "mu_Y")
    assert np.allclose(full["mu_X"], reduced["mu_X"], rtol=1e-8)
    assert np.allclose(full["sigma_X_X"], reduced["sigma_X_X"], rtol=1e-7, atol=1e-8)
    # X + 2Y is conserved by the closed equations as well
    assert np.allclose(full["mu_X"] + 2 * full["mu_Y"], 301, rtol=1e-9)
    assert np.allclose(full["sigma_X_Y"], -0.5 * full["sigma_X_X"], rtol=1e-6, atol=1e-8)


def test_linear_network_has_no_curvature_term():
    net = parse_model("species X init=4\nspecies Y init=0\nparam a=1\nparam b=2\nparam g=0.5\n"
                      "reaction s: 0 -> X @ a\nreaction c: X -> Y @ b\nreaction d: Y -> 0 @ g\n")
    eqs = build_moment_system(net).symbolic()
    for name in ("mu_X", "mu_Y"):
        assert not any(str(s).startswith("sigma") for s in eqs[name].free_symbols)


def test_rhs_examples(bd_system, dm_system):
    d = rhs_eval(bd_system, MomentState([50.0], [[0.0]]), [0.1, 1.0])
    assert d.mu[0] == pytest.approx(-45.0)
    assert d.sigma[0, 0] == pytest.approx(55.0)

    d = rhs_eval(bd_system, MomentState([0.0], [[0.0]]), [0.1, 1.0])
    assert d.mu[0] == 0.0 and d.sigma[0, 0] == 0.0

    d = rhs_eval(dm_system, MomentState([301.0], [[0.0]]), [1.66e-3, 0.2])
    assert d.mu[0] == pytest.approx(1.66e-3 * 301 * (1 - 301), rel=1e-12)
    assert round(d.mu[0], 1) == -149.9


def test_dimension_mismatch(bd_system):
    with pytest.raises(ValueError):
        rhs_eval(bd_system, MomentState([1.0, 2.0], np.eye(2)), [0.1, 1.0])
    with pytest.raises(ValueError):
        MomentState([1.0, 2.0], [[1.0, 0.5], [0.4, 1.0]])


TWO_SPECIES = parse_model(
    """
species A init=20
species B init=10
param k0 = 3
param k1 = 0.4
param k2 = 0.02
param k3 = 0.1
reaction make: 0 -> A @ k0
reaction conv: A -> B @ k1
reaction bind: A + B -> 0 @ k2
reaction dim: 2 B -> A @ k3
"""
)
TWO_SYS = build_moment_system(TWO_SPECIES)
TWO_SYMBOLIC = TWO_SYS.symbolic()

pos = st.floats(0.01, 50.0)
states = st.tuples(pos, pos, st.floats(0, 30), st.floats(-5, 5), st.floats(0, 30))
rates = st.lists(st.floats(0.001, 5.0), min_size=4, max_size=4)


def _state(s):
    return MomentState([s[0], s[1]], [[s[2], s[3]], [s[3], s[4]]])


@settings(max_examples=100, deadline=None)
@given(states, rates)
def test_numeric_rhs_matches_symbolic(s, theta):
    d = rhs_eval(TWO_SYS, _state(s), theta)
    subs = dict(zip(sp.symbols("mu_A mu_B sigma_A_A sigma_A_B sigma_B_B"), s))
    subs.update(dict(zip(sp.symbols("k0 k1 k2 k3"), theta)))
    y = TWO_SYS.pack(d)
    for name, value in zip(TWO_SYS.names, y):
        assert value == pytest.approx(float(TWO_SYMBOLIC[name].subs(subs)), rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(states, rates)
def test_sigma_derivative_symmetric(s, theta):
    d = rhs_eval(TWO_SYS, _state(s), theta)
    assert np.array_equal(d.sigma, d.sigma.T)
    # relabelling the species permutes the derivative accordingly
    swapped = parse_model(
        "species B init=10\nspecies A init=20\nparam k0 = 3\nparam k1 = 0.4\nparam k2 = 0.02\n"
        "param k3 = 0.1\nreaction make: 0 -> A @ k0\nreaction conv: A -> B @ k1\n"
        "reaction bind: A + B -> 0 @ k2\nreaction dim: 2 B -> A @ k3\n")
    ds = rhs_eval(build_moment_system(swapped),
                  MomentState([s[1], s[0]], [[s[4], s[3]], [s[3], s[2]]]), theta)
    assert ds.sigma[0, 1] == pytest.approx(d.sigma[1, 0], rel=1e-12, abs=1e-12)
    assert ds.sigma[1, 1] == pytest.approx(d.sigma[0, 0], rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(states, rates, st.floats(0.01, 100.0))
def test_rate_scaling(s, theta, lam):
    d = TWO_SYS.pack(rhs_eval(TWO_SYS, _state(s), theta))
    dl = TWO_SYS.pack(rhs_eval(TWO_SYS, _state(s), np.array(theta) * lam))
    assert np.allclose(dl, lam * d, rtol=1e-10, atol=1e-10)


def test_diagonal_covariance_pins_cross_terms(grid):
    sysd = build_moment_system(TWO_SPECIES, diagonal_covariance=True)
    d = rhs_eval(sysd, MomentState([5.0, 3.0], [[2.0, 0.0], [0.0, 1.0]]), [3, 0.4, 0.02, 0.1])
    assert d.sigma[0, 1] == 0.0
    tr = simulate(sysd, grid=grid)
    assert np.all(tr["sigma_A_B"] == 0.0)
    full = simulate(TWO_SYS, grid=grid)
    assert not np.allclose(full["sigma_A_A"], tr["sigma_A_A"])


def test_negative_variance_flagged_not_clamped(grid):
    net = parse_model("species A init=1\nspecies B init=5\nparam c=1\nreaction r: A + B -> 0 @ c")
    tr = simulate(net, grid=grid)
    assert tr.metadata["negative_variance"]
    assert tr["sigma_A_A"].min() < 0
    assert 0 < tr.metadata["negative_variance_first_t"] <= 10


def test_closure_blow_up_raises(grid):
    net = parse_model("species X init=3\nparam c=1\nreaction r: 2 X -> 0 @ c")
    with pytest.raises(IntegrationError):
        simulate(net, grid=grid)


def test_simulate_defaults(birthdeath):
    tr = simulate(birthdeath)
    assert tr.times.size == 101 and tr.times[-1] == 10.0
    assert tr["mu_X"][0] == 50 and tr["sigma_X_X"][0] == 0
    assert tr["mu_X"][-1] == pytest.approx(50 * np.exp(-9), rel=1e-6)
