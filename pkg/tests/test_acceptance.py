"""Acceptance criteria, one test per criterion; each prints a pass/fail line."""

import math
import time

import numpy as np
import pytest

from sepdec.barriers import omega
from sepdec.bench import brute_force_dual, run_benchmark
from sepdec.fast import (FastConfig, FastGradientSolver, SwitchConfig, fast_solve,
                         switching_solve, theta_sequence)
from sepdec.generators import GeneratorSpec, gen_toy, generate, toy_suite
from sepdec.oracle import PrimalOracle, evaluate
from sepdec.pfgd import PathFollowingSolver, PfgdConfig

from conftest import random_scalar_problem


class Report:
    def __init__(self, number, title):
        self.label = f"criterion {number} ({title})"
        self.start = time.perf_counter()

    def __enter__(self):
        return self

    def __exit__(self, kind, value, tb):
        status = "PASS" if kind is None else "FAIL"
        print(f"\n{self.label}: {status} in {time.perf_counter() - self.start:.1f} s")
        return False

    @property
    def elapsed(self):
        return time.perf_counter() - self.start


def _reference(p, t):
    r = fast_solve(p, t, FastConfig(eps_g=1e-11, criterion="lambda", max_iter=200000))
    assert r.lam <= 1e-10
    return r.y, r.info["ev"].g_value


def test_criterion_1_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    with Report(1, "gradient vs finite differences") as rep:
        problems = []
        for i in range(20):
            n, m = int(rng.integers(2, 11)), int(rng.integers(1, 5))
            if i % 4 == 3:
                problems.append(gen_toy(500 + i, n=max(1, n - 2), m=m, smooth_block=True)[0])
            else:
                problems.append(random_scalar_problem(rng, n, m)[0])
        assert all(p.n <= 10 and p.m <= 4 for p in problems)
        worst = 0.0
        for p in problems:
            with PrimalOracle(p) as oracle:
                for _ in range(5):
                    y, t = rng.uniform(-1, 1, p.m), 10 ** rng.uniform(-2, 0)
                    grad = oracle.evaluate(y, t).gradient
                    fd = np.empty(p.m)
                    h = 1e-6
                    for j in range(p.m):
                        e = np.zeros(p.m)
                        e[j] = h
                        fd[j] = (oracle.evaluate(y + e, t).g_value
                                 - oracle.evaluate(y - e, t).g_value) / (2 * h)
                    err = np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1e-3)
                    worst = max(worst, err)
        assert worst <= 1e-5, worst
        assert rep.elapsed < 10


def test_criterion_2_sandwich_estimate():
    rng = np.random.default_rng(2)
    with Report(2, "sandwich estimate") as rep:
        for seed, n in ((21, 1), (22, 2), (23, 3)):
            p, meta = gen_toy(seed, n=n, m=1)
            x_bar = np.asarray(meta["x_bar"])
            F_bar, phi_bar, nu = p.barrier_value(x_bar), p.objective_value(x_bar), p.nu
            for _ in range(50):
                y = rng.uniform(-2, 2, p.m)
                g, err = brute_force_dual(p, y, resolution=20001)
                for t in (1.0, 0.1, 0.01):
                    g_t = evaluate(p, y, t).g_value
                    upper = (g_t + t * (nu + F_bar)
                             + 2 * math.sqrt(t * nu) * math.sqrt(max(g_t + t * F_bar - phi_bar, 0)))
                    assert g_t <= g + err + 1e-12
                    assert g <= upper + 1e-12
        assert rep.elapsed < 30


def test_criterion_3_monotone_in_t():
    rng = np.random.default_rng(3)
    with Report(3, "monotonicity in t") as rep:
        toys = toy_suite()
        for i in range(100):
            p = toys[i % len(toys)][0]
            y = rng.uniform(-2, 2, p.m)
            t = 10 ** rng.uniform(-3, 0.5)
            t2 = t * 10 ** rng.uniform(0.001, 1.5)
            e1, e2 = evaluate(p, y, t), evaluate(p, y, t2)
            assert e2.g_value <= e1.g_value + 1e-8
            assert e2.g_value >= e1.g_value - (t2 - t) * e1.barrier_value - 1e-8


def test_criterion_4_descent_certificate():
    with Report(4, "descent certificate") as rep:
        for p, _ in toy_suite():
            solver = PathFollowingSolver(p, PfgdConfig())
            ref = PrimalOracle(p)
            state = solver.initialize()
            g_prev, t_prev = ref.evaluate(state.y, state.t).g_value, state.t
            for _ in range(300):
                state = solver.iterate(state)
                assert state.c_F <= solver.config.cf_cap
                g_new = ref.evaluate(state.y, state.t).g_value
                assert g_new <= g_prev - 0.5 * t_prev * omega(state.lam / state.c_A) + 1e-9
                g_prev, t_prev = g_new, state.t


def test_criterion_5_theta_sequence():
    with Report(5, "theta sequence") as rep:
        th = theta_sequence(10001)
        k = np.arange(th.size)
        assert np.all(1 / (2 * k + 1) <= th + 1e-14)
        assert np.all(th <= 2 / (k + 2) + 1e-14)
        np.testing.assert_allclose((1 - th[1:]) / th[1:] ** 2, 1 / th[:-1] ** 2, rtol=1e-12)
        assert rep.elapsed < 1


def test_criterion_6_fast_rate_envelope():
    t_low = 0.05
    with Report(6, "accelerated rate envelope") as rep:
        for p, _ in toy_suite(5):
            y_star, g_star = _reference(p, t_low)
            solver = FastGradientSolver(p, t_low, FastConfig(eps_g=1e-300, criterion="lambda"))
            ref = PrimalOracle(p)
            state = solver.initialize()
            r0 = float(np.sum((state.y - y_star) ** 2))
            for k in range(501):
                gap = ref.evaluate(state.y, t_low).g_value - g_star
                assert gap <= 4 * state.c_hat ** 2 * r0 / (t_low * (k + 1) ** 2) + 1e-9
                if k < 500:
                    state = solver.iterate(state)
        assert rep.elapsed < 120


def test_criterion_7_gradient_rate_envelope():
    t_low = 0.05
    with Report(7, "path-following rate envelope") as rep:
        tested = 0
        for p, _ in toy_suite():
            y_star, g_star = _reference(p, t_low)
            solver = PathFollowingSolver(p, PfgdConfig(fixed_t=t_low))
            ref = PrimalOracle(p)
            c_bar = solver.constants.c_bar_A
            state = solver.initialize()
            r0 = float(np.linalg.norm(state.y - y_star))
            delta0 = ref.evaluate(state.y, t_low).g_value - g_star
            if not delta0 <= 3 * c_bar / (2 * r0):
                continue
            tested += 1
            for k in range(1, 1001):
                state = solver.iterate(state)
                delta = ref.evaluate(state.y, t_low).g_value - g_star
                bound = 12 * c_bar ** 2 * r0 ** 2 / (16 * c_bar * r0 + 3 * t_low * k)
                assert delta <= bound + 1e-9
        assert tested == 6


def test_criterion_8_basis_pursuit_recovery():
    sizes = [(50, 128, 14), (100, 256, 20), (200, 512, 30), (500, 1024, 50)]
    with Report(8, "basis pursuit recovery") as rep:
        for m, n, k in sizes:
            p, meta = generate(GeneratorSpec(family="basis_pursuit", m=m, n=n, k=k, seed=0))
            x0 = np.asarray(meta["x0"])
            r = switching_solve(p)
            assert r.solved and r.optim <= 1e-3 and r.t <= 1e-2 and r.iterations <= 5000
            assert np.max(np.abs(r.x - x0)) <= 1e-1
            assert np.array_equal(np.abs(r.x) > 1e-2, x0 != 0)
            assert np.linalg.norm(p.A @ r.x - p.b) / max(1, np.linalg.norm(p.b)) <= 1e-2
        assert rep.elapsed < 300


def test_criterion_9_desk_scale_profile():
    rng = np.random.default_rng(2024)
    with Report(9, "desk-scale performance profile") as rep:
        problems = []
        for i in range(10):
            m = int(rng.integers(50, 201))
            n = int(rng.integers(max(200, m), 1001))
            problems.append((f"exp{i}", generate(GeneratorSpec(family="exp_l1", m=m, n=n,
                                                               seed=1000 + i))[0]))
        records, prof = run_benchmark(problems, ["switch", "subgrad"])
        assert all(r["status"] in ("solved", "failed") for r in records)
        assert len(prof.problems) + len(prof.dropped) == 10
        assert np.all(np.diff(prof.rho, axis=0) >= 0)
        assert np.all((prof.rho >= 0) & (prof.rho <= 1))
        taus = np.concatenate([2.0 ** prof.tau_log2, [math.inf]])
        for tau in taus:
            assert prof.rho_at("switch", tau) >= prof.rho_at("subgrad", tau)
        assert prof.solved_fraction("switch") == 1.0
        assert rep.elapsed < 600


def test_criterion_10_determinism():
    with Report(10, "determinism") as rep:
        problems = [toy_suite()[1][0],
                    generate(GeneratorSpec(family="exp_l1", m=30, n=1200, seed=9))[0]]
        strip = lambda res: [{k: v for k, v in row.items() if k != "ms"} for row in res.trace.rows]
        for p in problems:
            runs = []
            for workers in (1, 1, 8):
                pc = PfgdConfig(ca_mode="adaptive", workers=workers)
                runs.append(switching_solve(p, SwitchConfig(pfgd=pc)))
            a, b, c = (strip(r) for r in runs)
            assert a == b
            assert [row["g"] for row in a] == [row["g"] for row in c]
