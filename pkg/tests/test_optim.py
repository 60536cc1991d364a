import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expectnn.optim import (
    NonFiniteObjective,
    OptimOptions,
    bfgs_minimize,
    multi_start,
    wolfe_line_search,
)

EXACT = OptimOptions(rel_obj_tol=0.0, wolfe_c2=0.01)


def quadratic(a, b):
    return lambda x: (0.5 * x @ a @ x - b @ x, a @ x - b)


def random_quadratic(rng, dim, cond=100.0):
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), dim))
    return (q * eig) @ q.T, rng.normal(size=dim)


def assert_monotone(res):
    assert np.all(np.diff(res.f_trace) <= 0)


def test_one_dimensional_quadratic():
    res = bfgs_minimize(lambda x: ((x[0] - 3) ** 2, np.array([2 * (x[0] - 3)])), [0.0])
    assert res.converged
    assert abs(res.x_final[0] - 3) < 1e-8
    assert_monotone(res)


def test_five_dimensional_quadratic_matches_linear_solve():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(5, 5))
    a = m @ m.T + 5 * np.eye(5)
    b = rng.normal(size=5)
    res = bfgs_minimize(quadratic(a, b), np.zeros(5))
    assert res.iterations <= 20
    assert np.max(np.abs(res.x_final - np.linalg.solve(a, b))) < 1e-6


def test_start_at_optimum_stops_immediately():
    a, b = np.diag([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0])
    res = bfgs_minimize(quadratic(a, b), np.ones(3))
    assert res.converged and res.iterations == 0
    assert res.f_trace == [res.f_final]


@pytest.mark.parametrize("seed", range(10))
def test_quadratics_terminate_within_dim_plus_ten(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 51))
    a, b = random_quadratic(rng, dim)
    res = bfgs_minimize(quadratic(a, b), rng.normal(size=dim), EXACT)
    assert res.grad_norm_final < 1e-6
    assert res.iterations <= dim + 10
    assert_monotone(res)


def test_rosenbrock():
    def rosen(x):
        f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
        g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
        return f, g

    res = bfgs_minimize(rosen, [-1.2, 1.0], OptimOptions(rel_obj_tol=0.0))
    assert np.allclose(res.x_final, 1.0, atol=1e-5)
    assert_monotone(res)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_trace_nonincreasing_on_smooth_nonconvex(seed, dim):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=dim)

    def fun(x):
        return float(np.sum(np.cos(x) + 0.1 * (x - c) ** 2)), -np.sin(x) + 0.2 * (x - c)

    res = bfgs_minimize(fun, rng.uniform(-3, 3, dim), OptimOptions(max_iters=100))
    assert_monotone(res)
    assert res.f_final == res.f_trace[-1]
    assert len(res.f_trace) == res.iterations + 1


def test_wolfe_line_search_conditions():
    a, b = np.diag([1.0, 10.0]), np.zeros(2)
    fun = quadratic(a, b)
    x = np.array([1.0, 1.0])
    f0, g0 = fun(x)
    ok, alpha, f, g, _ = wolfe_line_search(fun, x, f0, g0, -g0, 1e-4, 0.9)
    d = -g0
    assert ok
    assert f <= f0 + 1e-4 * alpha * (g0 @ d)
    assert abs(g @ d) <= 0.9 * abs(g0 @ d)


def test_line_search_shrinks_past_nonfinite_region():
    # finite only on x < 1; the unit step lands outside
    def fun(x):
        if x[0] >= 1:
            return np.inf, np.array([np.nan])
        return (x[0] - 0.5) ** 2, np.array([2 * (x[0] - 0.5)])

    res = bfgs_minimize(fun, [-4.0])
    assert abs(res.x_final[0] - 0.5) < 1e-6
    assert_monotone(res)


def test_nonfinite_start_raises():
    with pytest.raises(NonFiniteObjective):
        bfgs_minimize(lambda x: (np.nan, np.zeros(1)), [0.0])


@pytest.mark.parametrize(
    "kwargs",
    [dict(wolfe_c1=0.5, wolfe_c2=0.4), dict(wolfe_c1=0.0), dict(wolfe_c2=1.0), dict(max_iters=0), dict(n_starts=0),
     dict(warmup_iters=-1), dict(seed=-1)],
)
def test_options_validation(kwargs):
    with pytest.raises(ValueError):
        OptimOptions(**kwargs)


def test_max_iters_respected():
    a, b = random_quadratic(np.random.default_rng(0), 30, cond=1e4)
    res = bfgs_minimize(quadratic(a, b), np.zeros(30), OptimOptions(max_iters=3, rel_obj_tol=0.0))
    assert res.iterations <= 3
    assert not res.converged


# multi-start


def test_single_start_equals_plain_bfgs_from_first_draw():
    a, b = random_quadratic(np.random.default_rng(1), 6)
    opts = OptimOptions(n_starts=1, seed=42)
    x0 = np.random.default_rng(42).uniform(-1, 1, size=(1, 6))[0]
    res = multi_start(quadratic(a, b), 6, opts)
    ref = bfgs_minimize(quadratic(a, b), x0, opts)
    assert np.array_equal(res.x_final, ref.x_final)
    assert res.f_trace == ref.f_trace


def test_multi_start_is_deterministic():
    fun = quadratic(*random_quadratic(np.random.default_rng(2), 8))
    r1 = multi_start(fun, 8, OptimOptions(seed=9))
    r2 = multi_start(fun, 8, OptimOptions(seed=9))
    assert np.array_equal(r1.x_final, r2.x_final)


def test_masked_coordinates_stay_zero():
    a, b = random_quadratic(np.random.default_rng(3), 6)
    free = np.array([True, False, True, True, False, True])

    def fun(x):
        f, g = quadratic(a, b)(x)
        return f, np.where(free, g, 0.0)

    res = multi_start(fun, 6, OptimOptions(seed=4), free=free)
    assert np.all(res.x_final[~free] == 0.0)


def two_basin(x):
    # global minimum near x = -0.78, a shallower local one near x = 0.72
    v = x[0]
    return (v * v - 0.5) ** 2 + 0.1 * v, np.array([4 * v * (v * v - 0.5) + 0.1])


def test_two_basin_finds_global_minimum_for_most_seeds():
    grid = np.linspace(-2, 2, 400001)
    x_glob = grid[np.argmin((grid**2 - 0.5) ** 2 + 0.1 * grid)]
    hits = sum(abs(multi_start(two_basin, 1, OptimOptions(seed=s)).x_final[0] - x_glob) < 1e-3 for s in range(100))
    assert hits >= 95


def test_multi_start_skips_nonfinite_starts():
    def fun(x):
        if x[0] > 0.9:
            return np.nan, np.full(1, np.nan)
        return (x[0] + 0.2) ** 2, np.array([2 * (x[0] + 0.2)])

    res = multi_start(fun, 1, OptimOptions(seed=0, n_starts=20))
    assert abs(res.x_final[0] + 0.2) < 1e-6


def test_multi_start_all_nonfinite_raises():
    with pytest.raises(NonFiniteObjective):
        multi_start(lambda x: (np.inf, np.zeros_like(x)), 3, OptimOptions(n_starts=3))
