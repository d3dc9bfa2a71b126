"""
Seeded random problem families.

All generators draw from ``numpy.random.Generator(PCG64(seed))`` and return
the problem together with a dictionary of metadata, including a strictly
feasible point ``x_bar`` (``A x_bar = b`` with ``x_bar`` inside the boxes).
"""

import dataclasses

import numpy as np

from .barriers import BoxBarrier
from .problem import Component, ProblemError, ScalarObjective, SeparableProblem, SmoothObjective


@dataclasses.dataclass
class GeneratorSpec:
    """
    Parameters of a random instance.

    Attributes
    ----------
    family : {"basis_pursuit", "exp_l1", "toy"}
    m, n : int
    k : int
        Number of nonzeros of the planted solution (basis pursuit).
    density : float
        Fraction of nonzeros of the planted solution (exp_l1).
    seed : int
    lower, upper : float
        Box bounds of every variable.
    gamma : float
        Weight of the l1 term.
    rate_range : (float, float)
        Range of the exponential rates (exp_l1).
    rate_density : float
        Fraction of variables with a nonzero exponential rate (exp_l1).
    """

    family: str = "basis_pursuit"
    m: int = 50
    n: int = 128
    k: int = 14
    density: float = 0.02
    seed: int = 0
    lower: float = -3.0
    upper: float = 3.0
    gamma: float = 1.0
    rate_range: tuple = (0.0, 0.5)
    rate_density: float = 0.1


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _scalar_problem(A, b, lower, upper, objectives):
    n = A.shape[1]
    share = b / n
    comps = [Component(A[:, [j]].copy(), share.copy(), BoxBarrier(lower[j], upper[j]),
                       objectives[j]) for j in range(n)]
    return SeparableProblem(comps, A.shape[0])


def gen_basis_pursuit(spec):
    """
    Bound-constrained basis pursuit with a planted sparse solution.

    A has orthonormal rows, taken from the QR factorization of a Gaussian
    matrix. The planted ``x0`` has `spec.k` nonzeros with magnitudes in
    [0.5, 2] and random signs, and ``b = A x0``. Each variable is its own
    component with objective ``-gamma |x_j|`` and box ``[lower, upper]``.

    Returns
    -------
    problem : SeparableProblem
    meta : dict
        Holds ``x0`` (also stored as ``x_bar``) and the generator settings.
    """
    m, n, k = spec.m, spec.n, spec.k
    if not (0 < m < n and 0 < k <= n):
        raise ProblemError(f"basis pursuit needs 0 < m < n and 0 < k <= n, got {m}, {n}, {k}")
    if not (spec.lower < -2.0 and spec.upper > 2.0):
        raise ProblemError("the box must contain [-2, 2] strictly")
    rng = _rng(spec.seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    A = np.ascontiguousarray(Q.T)
    x0 = np.zeros(n)
    support = np.sort(rng.choice(n, size=k, replace=False))
    x0[support] = rng.uniform(0.5, 2.0, size=k) * rng.choice([-1.0, 1.0], size=k)
    b = A @ x0
    lower = np.full(n, spec.lower)
    upper = np.full(n, spec.upper)
    objs = [ScalarObjective("zero", l1_weight=spec.gamma) for _ in range(n)]
    problem = _scalar_problem(A, b, lower, upper, objs)
    return problem, _meta(spec, x0, support=support.tolist())


def gen_exp_l1(spec):
    """
    Exponential-plus-l1 family.

    A is uniform in [-1, 1] scaled by its largest absolute entry, the planted
    ``x0`` is uniform in [-2, 2] on ``round(density * n)`` random
    coordinates, ``b = A x0``, and variable j minimizes
    ``exp(-r_j x_j) - 1 + gamma |x_j|`` with sparse rates ``r_j``.
    """
    m, n = spec.m, spec.n
    if not (0 < m <= n):
        raise ProblemError(f"exp_l1 needs 0 < m <= n, got {m}, {n}")
    rng = _rng(spec.seed)
    A = rng.uniform(-1.0, 1.0, size=(m, n))
    A /= np.abs(A).max()
    nnz = max(1, int(round(spec.density * n)))
    x0 = np.zeros(n)
    support = np.sort(rng.choice(n, size=nnz, replace=False))
    x0[support] = rng.uniform(-2.0, 2.0, size=nnz)
    b = A @ x0
    rates = np.zeros(n)
    n_rates = max(1, int(round(spec.rate_density * n)))
    rates[rng.choice(n, size=n_rates, replace=False)] = rng.uniform(*spec.rate_range, size=n_rates)
    lower = np.full(n, spec.lower)
    upper = np.full(n, spec.upper)
    objs = [ScalarObjective("exp", rate=r, l1_weight=spec.gamma) for r in rates]
    problem = _scalar_problem(A, b, lower, upper, objs)
    return problem, _meta(spec, x0, support=support.tolist(), rates=rates.tolist())


def gen_toy(seed, n=4, m=2, smooth_block=False):
    """
    Small random instance with mixed objective kinds.

    Each 1-D variable gets a random box containing 0, a random kind among
    zero, affine and exp, and a random l1 weight. With `smooth_block` two
    more variables form one component with a concave quadratic objective.
    ``b = A x_bar`` for a random interior ``x_bar``.
    """
    rng = _rng(seed)
    comps_data = []
    for _ in range(n):
        lo = -rng.uniform(0.5, 3.0)
        hi = rng.uniform(0.5, 3.0)
        kind = ("zero", "affine", "exp")[rng.integers(3)]
        obj = ScalarObjective(kind, coef=rng.uniform(-1, 1), rate=rng.uniform(0.1, 1.0),
                              l1_weight=rng.uniform(0.0, 0.5))
        comps_data.append((BoxBarrier(lo, hi), obj, 1))
    if smooth_block:
        lo = -rng.uniform(0.5, 2.0, size=2)
        hi = rng.uniform(0.5, 2.0, size=2)
        R = rng.standard_normal((2, 2))
        obj = SmoothObjective(2, "quadratic", c=rng.uniform(-1, 1, size=2), Q=R @ R.T)
        comps_data.append((BoxBarrier(lo, hi), obj, 2))

    n_total = sum(d for _, _, d in comps_data)
    A = rng.standard_normal((m, n_total))
    x_bar = np.concatenate([bar.lower + (bar.upper - bar.lower) * rng.uniform(0.25, 0.75, bar.dim)
                            for bar, _, _ in comps_data])
    b = A @ x_bar
    comps, j = [], 0
    share = b / len(comps_data)
    for bar, obj, d in comps_data:
        comps.append(Component(A[:, j:j + d].copy(), share.copy(), bar, obj))
        j += d
    problem = SeparableProblem(comps, m)
    return problem, {"family": "toy", "seed": seed, "x_bar": x_bar.tolist()}


def toy_suite(count=6):
    """
    Fixed collection of small instances used by tests and examples.

    Sizes cycle through (n, m) in {(2, 1), (3, 1), (4, 2), (5, 2), (6, 3)};
    every other instance carries a 2-D quadratic block.
    """
    sizes = [(2, 1), (3, 1), (4, 2), (5, 2), (6, 3)]
    out = []
    for i in range(count):
        n, m = sizes[i % len(sizes)]
        out.append(gen_toy(100 + i, n=n, m=m, smooth_block=bool(i % 2)))
    return out


def generate(spec):
    """Dispatch on ``spec.family``."""
    if spec.family == "basis_pursuit":
        return gen_basis_pursuit(spec)
    if spec.family == "exp_l1":
        return gen_exp_l1(spec)
    if spec.family == "toy":
        return gen_toy(spec.seed, n=spec.n, m=spec.m)
    raise ProblemError(f"unknown family {spec.family!r}")


def _meta(spec, x0, **extra):
    d = dataclasses.asdict(spec)
    d["rate_range"] = list(spec.rate_range)
    d["x0"] = x0.tolist()
    d["x_bar"] = x0.tolist()
    d.update(extra)
    return d
