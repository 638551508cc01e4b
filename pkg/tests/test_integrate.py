import numpy as np
import pytest

from momsens.integrate import IntegrationError, integrate, integrate_batch

C = 0.1 - 1.0  # birth-death net growth rate at the nominal parameters


def bd_rhs(t, y):
    return np.array([C * y[0], 2 * C * y[1] + 1.1 * y[0]])


def bd_exact(t):
    mu = 50 * np.exp(C * t)
    sigma = 50 * 1.1 / C * (np.exp(2 * C * t) - np.exp(C * t))
    return np.array([mu, sigma])


def test_exponential_decay():
    tr = integrate(lambda t, y: -y, [1.0], [0.0, 1.0], rel_tol=1e-8)
    assert tr.states[-1, 0] == pytest.approx(np.exp(-1), rel=1e-8)
    assert tr.times[0] == 0.0 and len(tr.states) == 2


def test_birthdeath_closed_form():
    tr = integrate(bd_rhs, [50.0, 0.0], np.linspace(0, 10, 101))
    assert tr.states[-1, 0] == pytest.approx(50 * np.exp(-9), rel=1e-6)
    assert tr.states[-1, 0] == pytest.approx(6.1705e-3, rel=1e-4)
    assert tr.states[10, 1] == pytest.approx(14.744, abs=5e-4)


@pytest.mark.parametrize("rel_tol", [1e-5, 1e-7, 1e-9])
def test_linear_error_within_ten_tolerances(rel_tol):
    tr = integrate(bd_rhs, [50.0, 0.0], np.linspace(0, 10, 11), rel_tol=rel_tol, abs_tol=rel_tol * 1e-3)
    exact = np.array([bd_exact(t) for t in tr.times])
    rel = np.abs(tr.states[1:] - exact[1:]) / np.abs(exact[1:])
    assert rel.max() <= 10 * rel_tol


@pytest.mark.parametrize("rel_tol", [1e-6, 1e-8])
def test_self_convergence(rel_tol):
    grid = [0.0, 2.5, 5.0]
    coarse = integrate(bd_rhs, [50.0, 0.0], grid, rel_tol, rel_tol * 1e-2)
    fine = integrate(bd_rhs, [50.0, 0.0], grid, rel_tol / 2, rel_tol * 0.5e-2)
    diff = np.abs(coarse.states[-1] - fine.states[-1])
    assert np.all(diff <= rel_tol * np.abs(fine.states[-1]) + rel_tol * 1e-2)


def test_bitwise_repeatable():
    a = integrate(bd_rhs, [50.0, 0.0], np.linspace(0, 10, 101))
    b = integrate(bd_rhs, [50.0, 0.0], np.linspace(0, 10, 101))
    assert np.array_equal(a.states, b.states)


def _lin_batch(t, y, rate):
    return rate[:, None] * y


def test_batch_rows_independent_of_neighbours():
    grid = np.linspace(0, 3, 31)
    rates = np.array([-0.5, -2.0, 0.3, -7.0])
    y0 = np.ones((4, 1))
    together = integrate_batch(_lin_batch, y0, grid, args=(rates,))
    for r in range(4):
        alone = integrate_batch(_lin_batch, y0[r:r + 1], grid, args=(rates[r:r + 1],))
        assert np.array_equal(alone.states[0], together.states[r])
        assert alone.n_steps[0] == together.n_steps[r]
    assert np.allclose(together.states[:, -1, 0], np.exp(3 * rates), rtol=1e-7)


def test_shared_steps_use_one_sequence():
    rates = np.array([-0.5, -7.0])
    res = integrate_batch(_lin_batch, np.ones((2, 1)), [0.0, 1.0], args=(rates,), shared_steps=True)
    assert res.n_steps[0] == res.n_steps[1]
    assert np.allclose(res.states[:, -1, 0], np.exp(rates), rtol=1e-7)


def test_blow_up_reports_time():
    with pytest.raises(IntegrationError) as info:
        integrate(lambda t, y: y * y, [1.0], [0.0, 2.0])
    assert info.value.time == pytest.approx(1.0, abs=1e-3)


def test_non_finite_rhs():
    with pytest.raises(IntegrationError, match="non-finite"):
        integrate(lambda t, y: np.array([np.nan]), [1.0], [0.0, 1.0])


def test_batch_failure_is_per_row():
    def rhs(t, y, p):
        return p[:, None] * y * y

    res = integrate_batch(rhs, np.ones((2, 1)), [0.0, 2.0], args=(np.array([1.0, -1.0]),))
    assert res.ok.tolist() == [False, True]
    assert "t=" in res.errors[0]
    assert res.states[1, -1, 0] == pytest.approx(1 / 3, rel=1e-7)


@pytest.mark.parametrize("grid", [[0.0, 1.0, 1.0], [0.5, 1.0], [0.0, -1.0]])
def test_grid_validation(grid):
    with pytest.raises(ValueError):
        integrate(lambda t, y: -y, [1.0], grid)


def test_tolerance_validation():
    with pytest.raises(ValueError):
        integrate(lambda t, y: -y, [1.0], [0.0, 1.0], rel_tol=0.0)
