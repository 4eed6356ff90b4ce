import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numba import njit

from adaptive_mhe.robust_loss import ALPHA_MAX, ALPHA_MIN, phi
from adaptive_mhe.solvers import (STATUS_CONVERGED, BoxedProblem, NonFiniteObjective,
                                  minimize_boxed, minimize_scalar)


def half_sq(x, a):
    d = x - a
    return 0.5 * d @ d, d


@njit
def rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2
    g = np.empty(2)
    g[0] = -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0])
    g[1] = 200.0 * (x[1] - x[0] ** 2)
    return f, g


def test_interior_quadratic():
    a = np.array([0.3, -0.2, 0.7])
    rep = minimize_boxed(BoxedProblem(half_sq, np.zeros(3), -np.ones(3), np.ones(3), (a,)))
    assert rep.converged and rep.status == STATUS_CONVERGED
    np.testing.assert_allclose(rep.x_star, a, atol=1e-8)


def test_clamped_quadratic():
    a = np.array([3.0, -0.2, -5.0])
    lo, hi = -np.ones(3), np.ones(3)
    rep = minimize_boxed(BoxedProblem(half_sq, np.zeros(3), lo, hi, (a,)))
    np.testing.assert_allclose(rep.x_star, np.clip(a, lo, hi), atol=1e-8)


def test_rosenbrock_compiled():
    prob = BoxedProblem(rosenbrock, np.array([-1.2, 1.0]), np.full(2, -2.0), np.full(2, 2.0))
    rep = minimize_boxed(prob, max_iter=500)
    assert rep.f_star < 1e-6
    np.testing.assert_allclose(rep.x_star, [1.0, 1.0], atol=1e-3)
    assert np.all(np.diff(rep.history) <= 0)


def test_rosenbrock_interpreted_matches_compiled():
    prob = BoxedProblem(rosenbrock.py_func, np.array([-1.2, 1.0]), np.full(2, -2.0),
                        np.full(2, 2.0))
    a = minimize_boxed(prob)
    b = minimize_boxed(BoxedProblem(rosenbrock, np.array([-1.2, 1.0]), np.full(2, -2.0),
                                    np.full(2, 2.0)))
    np.testing.assert_allclose(a.x_star, b.x_star, atol=1e-10)


def test_unbounded_coordinates():
    a = np.array([40.0, -7.0])
    rep = minimize_boxed(BoxedProblem(half_sq, np.zeros(2), np.array([-np.inf, -1.0]),
                                      np.array([np.inf, 1.0]), (a,)))
    np.testing.assert_allclose(rep.x_star, [40.0, -1.0], atol=1e-8)


def test_nonfinite_objective_raises():
    def bad(x):
        return np.nan, np.zeros_like(x)
    with pytest.raises(NonFiniteObjective):
        minimize_boxed(BoxedProblem(bad, np.zeros(2), -np.ones(2), np.ones(2)))


def test_problem_validation():
    with pytest.raises(ValueError):
        BoxedProblem(half_sq, np.zeros(2), np.ones(2), -np.ones(2))
    with pytest.raises(ValueError):
        BoxedProblem(half_sq, np.full(2, 5.0), -np.ones(2), np.ones(2))


def test_determinism():
    prob = BoxedProblem(rosenbrock, np.array([-1.2, 1.0]), np.full(2, -2.0), np.full(2, 2.0))
    a, b = minimize_boxed(prob), minimize_boxed(prob)
    assert a.x_star.tobytes() == b.x_star.tobytes() and np.array_equal(a.history, b.history)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_convex_quadratic_properties(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.5 * np.eye(n)
    b = rng.standard_normal(n) * 3
    lo, hi = -np.ones(n), np.ones(n)

    def quad(x):
        g = H @ x - b
        return 0.5 * x @ H @ x - b @ x, g

    x0 = rng.uniform(-1, 1, n)
    rep = minimize_boxed(BoxedProblem(quad, x0, lo, hi), max_iter=10 * n, tol=1e-6)
    assert rep.f_star <= quad(x0)[0]
    assert np.all(np.diff(rep.history) <= 0)
    assert np.all((rep.x_star >= lo) & (rep.x_star <= hi))
    # projected-gradient optimality of the result
    g = H @ rep.x_star - b
    pg = rep.x_star - np.clip(rep.x_star - g, lo, hi)
    assert np.max(np.abs(pg)) < 1e-5


def test_scalar_interior():
    x, f = minimize_scalar(lambda x: (x - 1.5) ** 2, 1.0, 2.0, tol=1e-10)
    assert x == pytest.approx(1.5, abs=1e-8)


def test_scalar_boundary():
    x, _ = minimize_scalar(lambda x: -x, 1.0, 2.0, tol=1e-10)
    assert 2.0 - x < 1e-9


def test_scalar_alpha_objective_grid_oracle():
    f = lambda a: phi(5.0, a, 1.0) + 0.1 * (2 - a) ** 2
    grid = np.linspace(ALPHA_MIN, ALPHA_MAX, 100_000)
    best = grid[np.argmin(f(grid))]
    x, fx = minimize_scalar(f, ALPHA_MIN, ALPHA_MAX)
    assert abs(x - best) < 1e-4
    assert fx <= f(grid).min() + 1e-12


def test_scalar_never_worse_than_probes():
    f = lambda x: np.sin(7 * x) + 0.1 * x
    lo, hi, tol = 0.0, 3.0, 1e-9
    _, fx = minimize_scalar(f, lo, hi, tol)
    assert fx <= min(f(lo + tol), f(hi - tol), f(0.5 * (lo + hi)))


def test_scalar_validation():
    with pytest.raises(ValueError):
        minimize_scalar(lambda x: x, 2.0, 1.0)
