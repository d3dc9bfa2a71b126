"""
Primal subproblem solvers and the smoothed dual oracle.

For a dual vector `y` and smoothness `t > 0` every component solves

    max  phi_i(x_i) + y^T (A_i x_i - b_i) - t F_i(x_i)   over int(X_i),

and the oracle assembles the smoothed dual value and its gradient
``A x*(y;t) - b``. All reductions over the dual dimension happen before the
per-component work is fanned out, and the per-component work is purely
elementwise, so results do not depend on the number of workers.
"""

import concurrent.futures
import dataclasses
import logging
import math
import os

import numpy as np

from .barriers import BoxBarrier, ConvergenceError, analytic_center
from .problem import ScalarObjective

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
_MIN_CHUNK = 256


@dataclasses.dataclass
class SmoothedDualEval:
    """
    Result of one oracle call at ``(y, t)``.

    Attributes
    ----------
    y : ndarray
    t : float
    x_star : ndarray
        Concatenated subproblem maximizers.
    g_value : float
        Smoothed dual value g(y;t).
    gradient : ndarray
        ``A x_star - b``.
    barrier_value : float
        F(x_star), nonnegative since every barrier vanishes at its center.
    lam : float
        Euclidean norm of the gradient.
    phi_value : float
        Objective value phi(x_star).
    """

    y: np.ndarray
    t: float
    x_star: np.ndarray
    g_value: float
    gradient: np.ndarray
    barrier_value: float
    lam: float
    phi_value: float


#%% SCALAR SUBPROBLEMS

def _scalar_slope(x, lower, upper, coef, rate, l1, sign, s, t):
    # derivative of -f(x) - l1*|x| + s*x - t*F(x) on the piece where sign(x) = sign
    return (-coef + rate * np.exp(-rate * x) - l1 * sign + s
            + t / (x - lower) - t / (upper - x))


def _kink_setup(lower, upper, coef, rate, l1, s, t):
    """
    Decide on which side of the kink at 0 each maximizer lies.

    Returns the bracketing interval, the sign of x on it and a mask of
    coordinates whose maximizer is exactly 0.
    """
    has_kink = (lower < 0.0) & (upper > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d0 = -coef + rate + s + t / (0.0 - lower) - t / (upper - 0.0)
    right = d0 - l1
    left = d0 + l1
    at_zero = has_kink & (right <= 0.0) & (left >= 0.0)
    go_right = has_kink & (right > 0.0)
    go_left = has_kink & (left < 0.0)

    lo = np.where(go_right, 0.0, lower)
    hi = np.where(go_left, 0.0, upper)
    sign = np.where(go_right, 1.0, np.where(go_left, -1.0, np.where(lower >= 0.0, 1.0, -1.0)))
    return lo, hi, sign, at_zero


def _bisect(lo, hi, lower, upper, coef, rate, l1, sign, s, t, tol):
    n_iter = int(math.ceil(math.log2(1.0 / tol))) + 1
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        up = _scalar_slope(mid, lower, upper, coef, rate, l1, sign, s, t) > 0.0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def _affine_root(lower, upper, coef, l1, sign, s, t):
    """
    Closed-form stationary point when the smooth part is affine.

    Clearing the barrier denominators turns the stationarity condition into
    ``-d x^2 + (d (l + u) - 2t) x + t (l + u) - d l u = 0`` with
    ``d = s - c - l1*sign``; exactly one root lies in (l, u). Entries where
    rounding pushes both roots out of the open interval come back as NaN.
    """
    d = s - coef - l1 * sign
    a2 = -d
    a1 = d * (lower + upper) - 2.0 * t
    a0 = t * (lower + upper) - d * lower * upper
    disc = np.sqrt(np.maximum(a1 * a1 - 4.0 * a2 * a0, 0.0))
    q = -0.5 * (a1 + np.where(a1 >= 0.0, disc, -disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / a2
        r2 = a0 / q
    in1 = (r1 > lower) & (r1 < upper)
    in2 = (r2 > lower) & (r2 < upper)
    root = np.where(in1, r1, np.where(in2, r2, np.nan))
    return np.where(d == 0.0, 0.5 * (lower + upper), root)


def solve_scalar_batch(lower, upper, coef, rate, l1, s, t, tol=DEFAULT_TOL):
    """
    Maximizers of ``-c x - (exp(-r x) - 1) - l1 |x| + s x - t F(x)`` on
    ``(lower, upper)`` for arrays of independent 1-D subproblems.

    The kink at 0 is resolved from the one-sided slopes. Coordinates with
    ``rate == 0`` use the closed-form root, the rest use monotone bisection
    down to a bracket of width ``tol * (upper - lower)``.
    """
    lower, upper, coef, rate, l1, s = (np.asarray(a, dtype=float)
                                       for a in (lower, upper, coef, rate, l1, s))
    lo, hi, sign, at_zero = _kink_setup(lower, upper, coef, rate, l1, s, t)

    x = np.where(rate == 0.0, _affine_root(lower, upper, coef, l1, sign, s, t), np.nan)
    # a closed-form root on the wrong side of the kink is a rounding artifact
    x = np.where((x >= lo) & (x <= hi), x, np.nan)
    todo = np.isnan(x) & ~at_zero
    if np.any(todo):
        x[todo] = _bisect(lo[todo], hi[todo], lower[todo], upper[todo], coef[todo],
                          rate[todo], l1[todo], sign[todo], s[todo], t, tol)
    x[at_zero] = 0.0
    return x


def solve_scalar_subproblem(comp, s, t, tol=DEFAULT_TOL, method="auto"):
    """
    Maximize ``phi_i(x) + s x - t F_i(x)`` for a 1-D boxed component.

    Parameters
    ----------
    comp : Component
        Must carry a `ScalarObjective` and a 1-D `BoxBarrier`.
    s : float
        ``A_i^T y``.
    t : float
        Smoothness parameter, positive.
    tol : float, optional
        Relative bracket width for bisection.
    method : {"auto", "bisect", "closed"}, optional
        "auto" uses the closed form for affine objectives.

    Returns
    -------
    float
        The unique maximizer, strictly inside the box or exactly at the kink.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    obj, bar = comp.objective, comp.barrier
    if not isinstance(obj, ScalarObjective) or not isinstance(bar, BoxBarrier) or bar.dim != 1:
        raise TypeError("solve_scalar_subproblem needs a 1-D boxed scalar component")

    args = [np.array([v], dtype=float) for v in
            (bar.lower[0], bar.upper[0], obj.coef, obj.rate, obj.l1_weight, s)]
    if method == "auto":
        return float(solve_scalar_batch(*args, t, tol)[0])

    lower, upper, coef, rate, l1, s_ = args
    lo, hi, sign, at_zero = _kink_setup(lower, upper, coef, rate, l1, s_, t)
    if at_zero[0]:
        return 0.0
    if method == "closed":
        if rate[0] != 0.0:
            raise ValueError("closed form needs an affine smooth part")
        return float(_affine_root(lower, upper, coef, l1, sign, s_, t)[0])
    if method == "bisect":
        return float(_bisect(lo, hi, lower, upper, coef, rate, l1, sign, s_, t, tol)[0])
    raise ValueError(f"unknown method {method!r}")


#%% SMOOTH SUBPROBLEMS

def maximize_smooth(objective, barrier, s, t, tol=1e-10, max_iter=200, component=None,
                    x0=None):
    """
    Damped Newton ascent on ``phi(x) + s^T x - t F(x)``.

    Uses the step ``1 / (1 + decrement)`` while the decrement (in the metric
    of the barrier Hessian scaled by `t`) is large, full steps afterwards,
    and halves a step that would leave the domain or decrease the objective.

    Returns
    -------
    ndarray
        Point with ``||grad phi + s - t grad F|| <= tol * max(1, ||s||)``, or the point where
        the Newton decrement reached machine precision.
    """
    x = np.array(analytic_center(barrier) if x0 is None else x0, dtype=float)
    psi = lambda z: objective.value(z) + s @ z - t * barrier.value(z)
    f_x = psi(x)
    scale = max(1.0, float(np.linalg.norm(s)))
    for _ in range(max_iter):
        grad = objective.gradient(x) + s - t * barrier.gradient(x)
        if np.linalg.norm(grad) <= tol * scale:
            return x
        hb = barrier.hessian(x)
        neg_hess = -objective.hessian(x) + t * (np.diag(hb) if barrier.diagonal else hb)
        dx = np.linalg.solve(neg_hess, grad)
        dec2 = float(grad @ dx)
        if dec2 <= 1e-30 * max(1.0, abs(f_x)):
            return x
        if np.all(np.abs(dx) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))):
            # the Newton step no longer moves x in floating point
            return x
        decrement = math.sqrt(dec2 / t)
        step = 1.0 if decrement < 0.25 else 1.0 / (1.0 + decrement)
        while True:
            x_new = x + step * dx
            if barrier.contains(x_new):
                f_new = psi(x_new)
                if f_new >= f_x - 1e-14 * max(1.0, abs(f_x)):
                    break
            step *= 0.5
            if step < 1e-20:
                raise ConvergenceError("Newton step collapsed", component)
        x, f_x = x_new, f_new
    raise ConvergenceError(f"smooth subproblem: residual {np.linalg.norm(grad):.3e} "
                           f"after {max_iter} iterations", component)


def maximize_smooth_small_t(objective, barrier, s, t, tol=1e-10, component=None):
    """
    `maximize_smooth` for a small `t`, reached by warm-started continuation
    from ``t = 1`` in steps of a factor 10.
    """
    x, tk = None, 1.0
    while tk > t:
        x = maximize_smooth(objective, barrier, s, tk, tol, component=component, x0=x)
        tk *= 0.1
    return maximize_smooth(objective, barrier, s, t, tol, component=component, x0=x)


def solve_smooth_subproblem(comp, y, t, tol=1e-10, max_iter=200):
    """
    Solve the optimality system ``grad phi_i(x) + A_i^T y - t grad F_i(x) = 0``
    of a component whose objective exposes gradient and Hessian.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    s = comp.A.T @ np.asarray(y, dtype=float)
    return maximize_smooth(comp.objective, comp.barrier, s, t, tol, max_iter)


#%% ORACLE

def default_workers():
    env = os.environ.get("SEPDEC_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class PrimalOracle:
    """
    Parallel evaluator of the smoothed dual function of a problem.

    One-dimensional boxed components with a `ScalarObjective` are solved
    together as a vector batch; the remaining components are solved one by
    one with damped Newton. With ``workers > 1`` the batch is split into
    contiguous chunks and dispatched, together with the smooth components, to
    a thread pool.

    Parameters
    ----------
    problem : SeparableProblem
    tol : float, optional
        Inner tolerance of the subproblem solvers.
    workers : int, optional
        Thread count; 1 evaluates inline.

    Attributes
    ----------
    calls : int
        Number of `evaluate` calls so far.
    """

    def __init__(self, problem, tol=DEFAULT_TOL, workers=1):
        self.problem = problem
        self.tol = tol
        self.workers = max(1, int(workers))
        self.calls = 0
        self._pool = None

        scalar, smooth = [], []
        for i, comp in enumerate(problem.components):
            if (isinstance(comp.objective, ScalarObjective)
                    and isinstance(comp.barrier, BoxBarrier) and comp.n == 1):
                scalar.append(i)
            else:
                smooth.append(i)
        comps = problem.components
        self._spos = problem.offsets[scalar].astype(int)
        self._slower = np.array([comps[i].barrier.lower[0] for i in scalar])
        self._supper = np.array([comps[i].barrier.upper[0] for i in scalar])
        self._scoef = np.array([comps[i].objective.coef for i in scalar])
        self._srate = np.array([comps[i].objective.rate for i in scalar])
        self._sl1 = np.array([comps[i].objective.l1_weight for i in scalar])
        self._smooth = smooth

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _scalar_chunk(self, sl, s, t):
        return solve_scalar_batch(self._slower[sl], self._supper[sl], self._scoef[sl],
                                  self._srate[sl], self._sl1[sl], s[self._spos[sl]], t,
                                  self.tol)

    def _smooth_one(self, i, s, t):
        p = self.problem
        comp = p.components[i]
        si = s[p.offsets[i]:p.offsets[i + 1]]
        return maximize_smooth(comp.objective, comp.barrier, si, t,
                               tol=max(self.tol, 1e-13), component=i)

    def primal(self, y, t):
        """Concatenated maximizers x*(y; t)."""
        if not t > 0:
            raise ValueError(f"t must be positive, got {t}")
        p = self.problem
        s = p.A.T @ y
        x = np.empty(p.n)

        n_scalar = self._spos.size
        n_chunks = min(self.workers, max(1, n_scalar // _MIN_CHUNK))
        bounds = np.linspace(0, n_scalar, n_chunks + 1).astype(int)
        chunks = [slice(bounds[j], bounds[j + 1]) for j in range(n_chunks)]

        if self.workers == 1 or (n_chunks == 1 and not self._smooth):
            for sl in chunks:
                x[self._spos[sl]] = self._scalar_chunk(sl, s, t)
            for i in self._smooth:
                x[p.offsets[i]:p.offsets[i + 1]] = self._smooth_one(i, s, t)
            return x

        if self._pool is None:
            self._pool = concurrent.futures.ThreadPoolExecutor(self.workers)
        futs = [(sl, self._pool.submit(self._scalar_chunk, sl, s, t)) for sl in chunks]
        sfuts = [(i, self._pool.submit(self._smooth_one, i, s, t)) for i in self._smooth]
        for sl, f in futs:
            x[self._spos[sl]] = f.result()
        for i, f in sfuts:
            x[p.offsets[i]:p.offsets[i + 1]] = f.result()
        return x

    def phi(self, x):
        p = self.problem
        xs = x[self._spos]
        vals = np.zeros(p.N)
        idx = np.searchsorted(p.offsets, self._spos)
        vals[idx] = (-(self._scoef * xs + np.expm1(-self._srate * xs))
                     - self._sl1 * np.abs(xs))
        for i in self._smooth:
            vals[i] = p.components[i].objective.value(p.block(x, i))
        return float(np.sum(vals))

    def evaluate(self, y, t):
        """Smoothed dual value, gradient and related data at ``(y, t)``."""
        y = np.asarray(y, dtype=float)
        self.calls += 1
        p = self.problem
        x = self.primal(y, t)
        grad = p.A @ x - p.b
        phi = self.phi(x)
        c_f = p.barrier_value(x)
        g = phi + float(y @ grad) - t * c_f
        return SmoothedDualEval(y=y.copy(), t=float(t), x_star=x, g_value=g, gradient=grad,
                                barrier_value=c_f, lam=float(np.linalg.norm(grad)),
                                phi_value=phi)


def evaluate(problem, y, t, tol=DEFAULT_TOL, workers=1):
    """One-shot `PrimalOracle.evaluate`."""
    with PrimalOracle(problem, tol=tol, workers=workers) as oracle:
        return oracle.evaluate(y, t)


#%% UNSMOOTHED DUAL

def _scalar_unsmoothed(lower, upper, coef, rate, l1, s):
    # concave on [l, u]; the max sits at an endpoint, the kink, or a stationary point
    val = lambda z: -(coef * z + np.expm1(-rate * z)) - l1 * np.abs(z) + s * z
    cands = [lower, upper, np.clip(0.0, lower, upper)]
    for sign in (1.0, -1.0):
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = (coef + l1 * sign - s) / rate
            z = np.where((rate > 0) & (arg > 0), -np.log(arg) / rate, lower)
        piece_lo = np.maximum(lower, 0.0) if sign > 0 else lower
        piece_hi = upper if sign > 0 else np.minimum(upper, 0.0)
        z = np.clip(z, np.minimum(piece_lo, piece_hi), piece_hi)
        cands.append(np.clip(z, lower, upper))
    C = np.stack(cands)
    V = val(C)
    k = np.argmax(V, axis=0)
    cols = np.arange(C.shape[1])
    return C[k, cols], V[k, cols]


def unsmoothed_primal(problem, y, t_proxy=1e-9, oracle=None):
    """
    A maximizer of the Lagrangian ``phi(x) + y^T (A x - b)`` over X.

    Exact for 1-D boxed scalar components. Smooth blocks fall back to the
    barrier maximizer at the tiny smoothness `t_proxy`, which is within
    ``t_proxy * nu`` of optimal. `oracle` may be passed to reuse its
    per-component tables.
    """
    y = np.asarray(y, dtype=float)
    oracle = oracle or PrimalOracle(problem)
    s = problem.A.T @ y
    x = np.empty(problem.n)
    if oracle._spos.size:
        x[oracle._spos], _ = _scalar_unsmoothed(oracle._slower, oracle._supper, oracle._scoef,
                                                oracle._srate, oracle._sl1, s[oracle._spos])
    for i in oracle._smooth:
        comp = problem.components[i]
        sl = slice(problem.offsets[i], problem.offsets[i + 1])
        x[sl] = maximize_smooth_small_t(comp.objective, comp.barrier, s[sl], t_proxy,
                                        tol=1e-9, component=i)
    return x


def dual_function(problem, y, t_proxy=1e-9, oracle=None):
    """
    Unsmoothed dual value g(y) and a subgradient ``A x(y) - b``.
    """
    y = np.asarray(y, dtype=float)
    oracle = oracle or PrimalOracle(problem)
    x = unsmoothed_primal(problem, y, t_proxy, oracle)
    sub = problem.A @ x - problem.b
    return oracle.phi(x) + float(y @ sub), sub, x
