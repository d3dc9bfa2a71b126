import math

import numpy as np
import pytest

from sepdec.barriers import BoxBarrier, omega_star
from sepdec.bench import brute_force_dual
from sepdec.generators import GeneratorSpec, gen_toy, generate
from sepdec.geometry import local_matrix_norm
from sepdec.oracle import (PrimalOracle, dual_function, evaluate, maximize_smooth,
                           solve_scalar_subproblem, solve_smooth_subproblem)
from sepdec.problem import Component, ScalarObjective, SeparableProblem, SmoothObjective

from conftest import random_scalar_problem


def _comp(obj, lo=-1.0, hi=1.0):
    return Component(np.ones((1, 1)), np.zeros(1), BoxBarrier(lo, hi), obj)


def _psi_grid(obj, lo, hi, s, t, count):
    x = np.linspace(lo, hi, count)[1:-1]
    bar = -np.log(x - lo) - np.log(hi - x)
    vals = -obj.smooth_part(x) - obj.l1_weight * np.abs(x) + s * x - t * bar
    return x[np.argmax(vals)]


def test_pure_barrier_at_center():
    assert solve_scalar_subproblem(_comp(ScalarObjective()), 0.0, 0.7) == 0.0


@pytest.mark.parametrize("s", [-0.99, -0.5, 0.0, 0.3, 0.99])
@pytest.mark.parametrize("t", [1e-4, 0.1, 5.0])
def test_kink_holds_when_slope_inside_subdifferential(s, t):
    x = solve_scalar_subproblem(_comp(ScalarObjective("zero", l1_weight=1.0)), s, t)
    assert abs(x) <= 1e-12


def test_exp_example_against_grid():
    obj = ScalarObjective("exp", rate=0.1 * 0 + 0.3, l1_weight=0.1)
    x = solve_scalar_subproblem(_comp(obj, -3.0, 3.0), 0.7, 0.01)
    x_grid = _psi_grid(obj, -3.0, 3.0, 0.7, 0.01, 10 ** 6)
    assert abs(x - x_grid) <= 1e-5


def test_scalar_random_against_grid(rng):
    for _ in range(30):
        lo, hi = -rng.uniform(0.5, 3), rng.uniform(0.5, 3)
        kind = ("zero", "affine", "exp")[rng.integers(3)]
        obj = ScalarObjective(kind, coef=rng.uniform(-1, 1), rate=rng.uniform(0, 1),
                              l1_weight=rng.uniform(0, 0.5))
        s, t = rng.uniform(-2, 2), 10 ** rng.uniform(-3, 0)
        x = solve_scalar_subproblem(_comp(obj, lo, hi), s, t)
        assert abs(x - _psi_grid(obj, lo, hi, s, t, 10 ** 6)) <= 1e-5 * (hi - lo) + 1e-5


def test_closed_form_matches_bisection(rng):
    for _ in range(200):
        lo, hi = -rng.uniform(0.1, 3), rng.uniform(0.1, 3)
        obj = ScalarObjective("affine", coef=rng.uniform(-2, 2), l1_weight=rng.uniform(0, 1))
        s, t = rng.uniform(-3, 3), 10 ** rng.uniform(-6, 1)
        comp = _comp(obj, lo, hi)
        closed = solve_scalar_subproblem(comp, s, t, method="closed")
        bisect = solve_scalar_subproblem(comp, s, t, method="bisect")
        assert closed == pytest.approx(bisect, abs=1e-10 * (hi - lo))
        assert lo < closed < hi


def test_scalar_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_scalar_subproblem(_comp(ScalarObjective()), 0.0, 0.0)
    smooth = _comp(SmoothObjective(1))
    with pytest.raises(TypeError):
        solve_scalar_subproblem(smooth, 0.0, 1.0)


def test_smooth_linear_agrees_with_scalar(rng):
    for _ in range(20):
        lo, hi = -rng.uniform(0.5, 3), rng.uniform(0.5, 3)
        c, y, t = rng.uniform(-1, 1), rng.uniform(-2, 2), 10 ** rng.uniform(-3, 0)
        smooth = Component(np.ones((1, 1)), np.zeros(1), BoxBarrier(lo, hi),
                           SmoothObjective(1, "affine", c=[c]))
        scalar = _comp(ScalarObjective("affine", coef=-c), lo, hi)
        xs = solve_smooth_subproblem(smooth, [y], t)[0]
        assert xs == pytest.approx(solve_scalar_subproblem(scalar, y, t), abs=1e-8)


def test_smooth_zero_objective_gives_center():
    bar = BoxBarrier([-1.0, 0.0], [3.0, 2.0])
    comp = Component(np.eye(2), np.zeros(2), bar, SmoothObjective(2))
    for t in (1e-3, 1.0, 10.0):
        np.testing.assert_allclose(solve_smooth_subproblem(comp, np.zeros(2), t), [1.0, 1.0],
                                   atol=1e-12)


def test_smooth_quadratic_against_lattice(rng):
    R = rng.standard_normal((3, 3))
    obj = SmoothObjective(3, "quadratic", c=rng.uniform(-1, 1, 3), Q=R @ R.T)
    bar = BoxBarrier([-1.0] * 3, [1.0] * 3)
    s, t = rng.uniform(-1, 1, 3), 0.1
    x = maximize_smooth(obj, bar, s, t)
    residual = obj.gradient(x) + s - t * bar.gradient(x)
    assert np.linalg.norm(residual) <= 1e-8

    # lattice oracle with successive zooms
    best, width = np.zeros(3), 0.999
    for _ in range(5):
        axes = [np.linspace(best[j] - width, best[j] + width, 61) for j in range(3)]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        P = P[np.all(np.abs(P) < 1, axis=1)]
        vals = (P @ obj.c - 0.5 * np.einsum("ij,jk,ik->i", P, obj.Q, P) + P @ s
                + t * np.sum(np.log(1 - P) + np.log(1 + P), axis=1))
        best = P[np.argmax(vals)]
        width /= 10
    np.testing.assert_allclose(x, best, atol=1e-5)


def test_gradient_at_center():
    A = np.array([[2.0], [-1.0]])
    b = np.array([0.5, 1.0])
    p = SeparableProblem([Component(A, b, BoxBarrier(0.0, 4.0), ScalarObjective())], 2)
    ev = evaluate(p, np.zeros(2), 0.3)
    np.testing.assert_allclose(ev.gradient, A @ [2.0] - b, atol=1e-12)


def _fd_check(p, y, t, h=1e-6):
    ev = evaluate(p, y, t)
    fd = np.empty(p.m)
    for j in range(p.m):
        e = np.zeros(p.m)
        e[j] = h
        fd[j] = (evaluate(p, y + e, t).g_value - evaluate(p, y - e, t).g_value) / (2 * h)
    return ev.gradient, fd


def test_gradient_matches_finite_differences(rng, toys):
    problems = [random_scalar_problem(rng, 5, 3)[0] for _ in range(5)] + [p for p, _ in toys]
    for p in problems:
        for _ in range(3):
            y, t = rng.uniform(-1, 1, p.m), 10 ** rng.uniform(-2, 0)
            grad, fd = _fd_check(p, y, t)
            assert np.linalg.norm(grad - fd) <= 1e-5 * max(np.linalg.norm(grad), 1e-3)


def test_monotone_in_t_and_tangent_bound(rng, toys):
    for p, _ in toys:
        for _ in range(10):
            y = rng.uniform(-1, 1, p.m)
            t = 10 ** rng.uniform(-3, 0)
            t2 = t * rng.uniform(1.01, 10)
            e1, e2 = evaluate(p, y, t), evaluate(p, y, t2)
            assert e2.g_value <= e1.g_value + 1e-8
            assert e2.g_value >= e1.g_value - (t2 - t) * e1.barrier_value - 1e-8


def _lemma1_bounds(p, meta, y, t, resolution=20001):
    x_bar = np.asarray(meta["x_bar"])
    ev = evaluate(p, y, t)
    g_val, err = brute_force_dual(p, y, resolution)
    F_bar, phi_bar, nu = p.barrier_value(x_bar), p.objective_value(x_bar), p.nu
    upper = (ev.g_value + t * (nu + F_bar)
             + 2 * math.sqrt(t * nu) * math.sqrt(max(ev.g_value + t * F_bar - phi_bar, 0.0)))
    return ev.g_value, g_val, err, upper


def test_sandwich_two_variables(rng):
    p, meta = gen_toy(7, n=2, m=1)
    for _ in range(20):
        y = rng.uniform(-2, 2, 1)
        for t in (1.0, 0.1, 0.01):
            g_t, g, err, upper = _lemma1_bounds(p, meta, y, t)
            assert g_t <= g + err + 1e-12
            assert g <= upper + 1e-12


def test_lipschitz_type_bound(rng, toys):
    for p, _ in toys:
        for _ in range(10):
            y, t = rng.uniform(-1, 1, p.m), 10 ** rng.uniform(-2, 0)
            ev = evaluate(p, y, t)
            c_A = local_matrix_norm(p, ev.x_star, tol=1e-12)
            d = rng.standard_normal(p.m)
            d *= rng.uniform(0.05, 0.95) * t / (c_A * np.linalg.norm(d))
            ev2 = evaluate(p, y + d, t)
            bound = (ev.g_value + ev.gradient @ d
                     + t * omega_star(c_A * np.linalg.norm(d) / t))
            assert ev2.g_value <= bound + 1e-10


def test_repeatable_and_worker_independent(toys):
    p, _ = generate(GeneratorSpec(family="exp_l1", m=20, n=1200, seed=4))
    problems = [p] + [q for q, _ in toys]
    for q in problems:
        y = np.linspace(-1, 1, q.m)
        ref = evaluate(q, y, 0.05)
        again = evaluate(q, y, 0.05)
        with PrimalOracle(q, workers=4) as oracle:
            par = oracle.evaluate(y, 0.05)
        assert ref.g_value == again.g_value == par.g_value
        np.testing.assert_array_equal(ref.x_star, par.x_star)
        np.testing.assert_array_equal(ref.gradient, par.gradient)


def test_dual_function_is_limit_of_smoothed(toys):
    for p, _ in toys[:2]:
        y = np.full(p.m, 0.3)
        g, sub, x = dual_function(p, y)
        assert evaluate(p, y, 1e-6).g_value == pytest.approx(g, abs=1e-4)
        np.testing.assert_allclose(sub, p.A @ x - p.b)


def test_oracle_rejects_nonpositive_t(toys):
    with pytest.raises(ValueError):
        evaluate(toys[0][0], np.zeros(toys[0][0].m), 0.0)
