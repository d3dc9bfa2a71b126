"""
Local matrix norm of the coupling matrix and the a-priori constants that
bound it along every iterate.
"""

import dataclasses
import logging
import math

import numpy as np

from .problem import aggregate_kappa

logger = logging.getLogger(__name__)


def local_matrix_norm(problem, x, tol=1e-8, max_iter=1000, v0=None, return_vector=False):
    r"""
    Local matrix norm of A at an interior point,

        .. math:: \|A\|^*_x = \sup_{\|v\|_2 = 1} (v^T A \nabla^2F(x)^{-1} A^T v)^{1/2}
                  = \lambda_{\max}(A \nabla^2F(x)^{-1} A^T)^{1/2}.

    The largest eigenvalue comes from power iteration on
    ``M = A H^{-1} A^T``; products with M use block Hessian solves, so
    ``H^{-1}`` is never formed.

    Parameters
    ----------
    problem : SeparableProblem
    x : ndarray
        Point strictly inside X.
    tol : float, optional
        Relative change of the Rayleigh quotient at which to stop.
    max_iter : int, optional
    v0 : ndarray, optional
        Start vector; defaults to normalized ones.
    return_vector : bool, optional
        Also return the final iterate, e.g. to warm-start the next call.

    Returns
    -------
    float or (float, ndarray)
    """
    hinv = problem.inverse_hessian(np.asarray(x, dtype=float))
    A = problem.A
    v = np.ones(problem.m) if v0 is None else np.array(v0, dtype=float)
    v /= np.linalg.norm(v)

    rq = 0.0
    for it in range(max_iter):
        w = A @ hinv(A.T @ v)
        rq_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            rq = 0.0
            break
        v = w / nw
        if abs(rq_new - rq) <= tol * abs(rq_new):
            rq = rq_new
            break
        rq = rq_new
    else:
        logger.warning("power iteration stagnated after %d iterations "
                       "(last relative change above %.1e)", max_iter, tol)

    norm = math.sqrt(max(rq, 0.0))
    return (norm, v) if return_vector else norm


@dataclasses.dataclass(frozen=True)
class GeometryConstants:
    """
    A-priori constants of a problem.

    Attributes
    ----------
    kappa : float
        ``sum_i (nu_i + 2 sqrt(nu_i))``.
    norm_at_center : float
        Local matrix norm of A at the analytic center.
    c_bar_A : float
        ``kappa * norm_at_center``, an upper bound of the local matrix norm
        at every interior point.
    lambda_bar : float
        ``c_bar_A + ||A x_c - b||``, an upper bound of every dual gradient
        norm.
    c_sup_A : float
        Tightest available uniform bound of the local matrix norm. For
        problems made only of boxes the barrier Hessian is smallest at the
        center, so this equals `norm_at_center`; otherwise it is `c_bar_A`.
    x_c : ndarray
        Analytic center of X.
    """

    kappa: float
    norm_at_center: float
    c_bar_A: float
    lambda_bar: float
    c_sup_A: float
    x_c: np.ndarray


def compute_constants(problem, tol=1e-8):
    """Evaluate `GeometryConstants` for a problem."""
    x_c = problem.center()
    kappa = aggregate_kappa(problem)
    norm_c = local_matrix_norm(problem, x_c, tol=tol)
    c_bar = kappa * norm_c
    lam_bar = c_bar + float(np.linalg.norm(problem.A @ x_c - problem.b))
    c_sup = norm_c if problem.diagonal else c_bar
    return GeometryConstants(kappa=kappa, norm_at_center=norm_c, c_bar_A=c_bar,
                             lambda_bar=lam_bar, c_sup_A=c_sup, x_c=x_c)
