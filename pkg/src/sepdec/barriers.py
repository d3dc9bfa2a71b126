"""
Self-concordant barriers, the omega pair and local norms.

Every barrier is normalized so that it vanishes at its analytic center.
Evaluations are pure functions of their arguments, so one barrier object can
be shared between worker threads.
"""

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An inner Newton or bisection loop did not reach its tolerance."""

    def __init__(self, message, component=None):
        if component is not None:
            message = f"component {component}: {message}"
        super().__init__(message)
        self.component = component


#%% OMEGA PAIR

def omega(t):
    r"""
    :math:`\omega(t) = t - \ln(1 + t)` for :math:`t \geq 0`.
    """
    t = float(t)
    if not t >= 0.0:
        raise ValueError(f"omega is defined for t >= 0, got {t}")
    return t - math.log1p(t)


def omega_star(t):
    r"""
    :math:`\omega_*(t) = -t - \ln(1 - t)` for :math:`0 \leq t < 1`.
    """
    t = float(t)
    if not 0.0 <= t < 1.0:
        raise ValueError(f"omega_star is defined on [0, 1), got {t}")
    return -t - math.log1p(-t)


#%% BARRIERS

class Barrier:
    """
    Base class of a self-concordant barrier over a bounded convex set.

    Subclasses provide `value`, `gradient`, `hessian` and `contains`.
    When `diagonal` is true `hessian` returns the diagonal as a 1-D array,
    otherwise a dense symmetric matrix.

    Attributes
    ----------
    dim : int
        Dimension of the set.
    nu : float
        Barrier parameter.
    diagonal : bool
        Whether the Hessian is diagonal.
    """

    dim = None
    nu = None
    diagonal = False

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def contains(self, x):
        """Strict interior test."""
        raise NotImplementedError

    def interior_point(self):
        """Some point strictly inside the domain, used to start Newton."""
        raise NotImplementedError

    def hess_mul(self, x, v):
        h = self.hessian(x)
        return h * v if self.diagonal else h @ v

    def hess_solve(self, x, v):
        h = self.hessian(x)
        if self.diagonal:
            return v / h
        return np.linalg.solve(h, v)

    def _check_interior(self, x):
        if not self.contains(x):
            raise ValueError("point is not strictly inside the barrier domain")


class BoxBarrier(Barrier):
    r"""
    Log barrier of a box :math:`[l, u]`, shifted to vanish at the midpoint.

    For each coordinate

        .. math:: F(x) = -\ln(x - l) - \ln(u - x) + 2\ln((u - l)/2),

    which is a 2-self-concordant barrier of the interval, so a box in
    :math:`\mathbb{R}^d` has parameter :math:`2d`.

    Parameters
    ----------
    lower, upper : array_like or float
        Bounds with ``lower < upper`` coordinatewise. Bounds are not checked
        here; `sepdec.problem.validate` reports bad boxes.
    """

    diagonal = True

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        self.dim = self.lower.size
        self.nu = 2.0 * self.dim
        with np.errstate(invalid="ignore", divide="ignore"):
            self._shift = 2.0 * np.log((self.upper - self.lower) / 2.0)

    def __repr__(self):
        return f"BoxBarrier(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > self.lower) and np.all(x < self.upper))

    def interior_point(self):
        return self.center

    def value(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return float(np.sum(-np.log(x - self.lower) - np.log(self.upper - x)
                            + self._shift))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return -1.0 / (x - self.lower) + 1.0 / (self.upper - x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return 1.0 / (x - self.lower) ** 2 + 1.0 / (self.upper - x) ** 2


class PolyhedronBarrier(Barrier):
    r"""
    Logarithmic barrier :math:`-\sum_j \ln(h_j - g_j^T x)` of a bounded
    polyhedron :math:`\{x : Gx \le h\}`, minus its value at the analytic
    center.

    Parameters
    ----------
    G : array_like, shape (p, d)
    h : array_like, shape (p,)
    x0 : array_like, shape (d,)
        A strictly feasible point.
    tol : float, optional
        Newton decrement tolerance for the analytic center.
    """

    def __init__(self, G, h, x0, tol=1e-10):
        self.G = np.atleast_2d(np.asarray(G, dtype=float))
        self.h = np.asarray(h, dtype=float)
        self.dim = self.G.shape[1]
        self.nu = float(self.G.shape[0])
        self._x0 = np.asarray(x0, dtype=float)
        if not self.contains(self._x0):
            raise ValueError("x0 must satisfy G x0 < h strictly")
        self._offset = 0.0
        self.center = analytic_center(self, tol=tol)
        self._offset = self._raw_value(self.center)

    def contains(self, x):
        return bool(np.all(self.G @ np.asarray(x, dtype=float) < self.h))

    def interior_point(self):
        return self._x0

    def _raw_value(self, x):
        return float(-np.sum(np.log(self.h - self.G @ x)))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return self._raw_value(x) - self._offset

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return self.G.T @ (1.0 / (self.h - self.G @ x))

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        w = 1.0 / (self.h - self.G @ x)
        return (self.G * w[:, None] ** 2).T @ self.G


#%% OPERATIONS

def analytic_center(barrier, tol=1e-10, max_iter=200):
    """
    Minimizer of the barrier over the interior of its domain.

    Boxes return their midpoint directly. Other barriers run damped Newton
    with step ``1 / (1 + decrement)`` from `barrier.interior_point()`, which
    stays inside the domain for any self-concordant barrier.

    Parameters
    ----------
    barrier : Barrier
    tol : float, optional
        Stop when the Newton decrement drops below `tol`.
    max_iter : int, optional

    Returns
    -------
    ndarray
        The analytic center.

    Raises
    ------
    ConvergenceError
        If the decrement is still above `tol` after `max_iter` steps.
    """
    if isinstance(barrier, BoxBarrier):
        return barrier.center

    x = np.array(barrier.interior_point(), dtype=float)
    for _ in range(max_iter):
        g = barrier.gradient(x)
        dx = -barrier.hess_solve(x, g)
        decrement = math.sqrt(max(float(-g @ dx), 0.0))
        if decrement <= tol:
            return x
        x = x + dx / (1.0 + decrement)

    raise ConvergenceError(f"analytic center: decrement {decrement:.3e} after "
                           f"{max_iter} iterations")


def local_norm(barrier, x, u):
    r""":math:`\|u\|_x = (u^T \nabla^2 F(x) u)^{1/2}`."""
    u = np.asarray(u, dtype=float)
    return math.sqrt(float(u @ barrier.hess_mul(x, u)))


def dual_local_norm(barrier, x, u):
    r""":math:`\|u\|_x^* = (u^T \nabla^2 F(x)^{-1} u)^{1/2}`."""
    u = np.asarray(u, dtype=float)
    return math.sqrt(float(u @ barrier.hess_solve(x, u)))
