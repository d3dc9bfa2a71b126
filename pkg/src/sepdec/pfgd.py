"""
Path-following gradient decomposition.

Each iteration shrinks the smoothness parameter ``t`` by a factor computed
from the last progress measure, solves all primal subproblems at the new
``t``, and takes a dual gradient step whose length only depends on ``t``,
the local matrix norm of A and the gradient norm.
"""

import dataclasses
import logging
import math
import time

import numpy as np

from .barriers import omega
from .geometry import compute_constants, local_matrix_norm
from .oracle import DEFAULT_TOL, PrimalOracle
from .trace import PFGD_COLUMNS, RunTrace, SolveResult

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class PfgdConfig:
    """
    Settings of the path-following solver.

    Attributes
    ----------
    t0 : float
        Initial smoothness parameter.
    eps_t, eps_g : float
        Stop when ``t <= eps_t`` and the optimality measure is below `eps_g`.
    max_iter : int
    cf_cap : float
        Freeze ``t`` while the barrier value at the subproblem solution
        exceeds this cap.
    ca_mode : {"fixed", "adaptive"}
        "fixed" uses the a-priori bound ``kappa * ||A||*_{x_c}`` for the
        local matrix norm; "adaptive" recomputes the norm at every primal
        point.
    criterion : {"optim", "lambda"}
        "optim" divides the gradient norm by ``max(1, ||grad g(y0; t0)||)``,
        "lambda" uses the raw norm.
    fixed_t : float or None
        Freeze ``t`` at this value for the whole run. The stopping test then
        ignores `eps_t`.
    t_min : float
        Floor for ``t``. The update halves ``t`` whenever every subproblem
        solution sits at its analytic center, which can repeat indefinitely.
    inner_tol : float
        Tolerance of the subproblem solvers.
    workers : int
    check_bounds : bool
        Raise if a gradient norm or local matrix norm exceeds its a-priori
        bound.
    """

    t0: float = 1.0
    eps_t: float = 1e-2
    eps_g: float = 1e-3
    max_iter: int = 10000
    cf_cap: float = 1e6
    ca_mode: str = "fixed"
    criterion: str = "optim"
    fixed_t: float = None
    t_min: float = 1e-12
    inner_tol: float = DEFAULT_TOL
    workers: int = 1
    check_bounds: bool = False

    def __post_init__(self):
        if self.ca_mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown ca_mode {self.ca_mode!r}")
        if self.criterion not in ("optim", "lambda"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        for name in ("t0", "eps_t", "eps_g", "cf_cap", "inner_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.fixed_t is not None and not self.fixed_t > 0:
            raise ValueError("fixed_t must be positive")


@dataclasses.dataclass
class PfgdState:
    """
    Solver state after iteration `k`.

    `ev` is the oracle output at ``(y_prev, t)``: the point whose gradient
    produced the step to `y`. After initialization ``y_prev`` is None and
    `ev` is the evaluation at ``(y0, t0)``.
    """

    k: int
    y: np.ndarray
    t: float
    lam: float
    c_A: float
    omega: float
    c_F: float
    sigma: float
    alpha: float
    ev: object
    y_prev: np.ndarray = None
    lam_ref: float = 1.0


def update_t(t, omega_k, c_F, cf_cap=math.inf):
    """
    Shrink the smoothness parameter.

    Returns ``(t_next, sigma)`` with ``sigma = omega / (2 (omega + c_F))`` and
    ``t_next = (1 - sigma) t``; when ``c_F > cf_cap`` the parameter is left
    unchanged and sigma is 0.
    """
    if c_F > cf_cap:
        return t, 0.0
    if c_F <= 0.0:
        sigma = 0.5
    else:
        sigma = omega_k / (2.0 * (omega_k + c_F))
    return t * (1.0 - sigma), sigma


def step_size(t, c_A, lam):
    """Dual step ``t / (c_A (c_A + lam))``."""
    return t / (c_A * (c_A + lam))


class PathFollowingSolver:
    """
    Path-following gradient decomposition on the smoothed dual.

    Parameters
    ----------
    problem : SeparableProblem
    config : PfgdConfig, optional
    oracle : PrimalOracle, optional
        Shared oracle; one is created from the config otherwise.
    constants : GeometryConstants, optional
    """

    def __init__(self, problem, config=None, oracle=None, constants=None):
        self.problem = problem
        self.config = config or PfgdConfig()
        self.oracle = oracle or PrimalOracle(problem, tol=self.config.inner_tol,
                                             workers=self.config.workers)
        self.constants = constants or compute_constants(problem)
        self._power_vec = None

    def local_norm(self, x):
        """c_A at a primal point under the configured mode."""
        if self.config.ca_mode == "fixed":
            return self.constants.c_bar_A
        c, self._power_vec = local_matrix_norm(self.problem, x, v0=self._power_vec,
                                               return_vector=True)
        if self.config.check_bounds and c > self.constants.c_bar_A + 1e-9:
            raise AssertionError(f"c_A = {c} exceeds its bound {self.constants.c_bar_A}")
        return c

    def _check(self, lam):
        if self.config.check_bounds and lam > self.constants.lambda_bar + 1e-9:
            raise AssertionError(f"lambda = {lam} exceeds its bound {self.constants.lambda_bar}")

    def initialize(self, y0=None):
        cfg = self.config
        y0 = np.zeros(self.problem.m) if y0 is None else np.array(y0, dtype=float)
        t0 = cfg.fixed_t if cfg.fixed_t is not None else cfg.t0
        ev = self.oracle.evaluate(y0, t0)
        self._check(ev.lam)
        c_A = self.local_norm(ev.x_star)
        return PfgdState(k=0, y=y0, t=t0, lam=ev.lam, c_A=c_A, omega=omega(ev.lam / c_A),
                         c_F=ev.barrier_value, sigma=math.nan, alpha=math.nan, ev=ev,
                         lam_ref=max(1.0, ev.lam))

    def _refresh(self, state):
        # steps 1-3: new t, subproblems at (y^k, t_{k+1}), new lambda, c_A, omega, c_F
        cfg = self.config
        if cfg.fixed_t is not None:
            t_next, sigma = cfg.fixed_t, 0.0
        else:
            t_next, sigma = update_t(state.t, state.omega, state.c_F, cfg.cf_cap)
            if t_next < cfg.t_min:
                t_next = cfg.t_min
                sigma = 1.0 - t_next / state.t
        ev = self.oracle.evaluate(state.y, t_next)
        self._check(ev.lam)
        c_A = self.local_norm(ev.x_star)
        return t_next, sigma, ev, c_A

    def _advance(self, state, t_next, sigma, ev, c_A):
        # steps 5-6
        alpha = step_size(t_next, c_A, ev.lam)
        return PfgdState(k=state.k + 1, y=state.y - alpha * ev.gradient, t=t_next,
                         lam=ev.lam, c_A=c_A, omega=omega(ev.lam / c_A),
                         c_F=ev.barrier_value, sigma=sigma, alpha=alpha, ev=ev,
                         y_prev=state.y, lam_ref=state.lam_ref)

    def iterate(self, state):
        """One full iteration without the stopping test."""
        return self._advance(state, *self._refresh(state))

    def optim(self, lam, lam_ref):
        return lam / lam_ref if self.config.criterion == "optim" else lam

    def converged(self, t, lam, lam_ref):
        cfg = self.config
        t_ok = cfg.fixed_t is not None or t <= cfg.eps_t
        return t_ok and self.optim(lam, lam_ref) <= cfg.eps_g

    def solve(self, y0=None, callback=None, state=None):
        """
        Run until the stopping test passes or `max_iter` is reached.

        Parameters
        ----------
        y0 : array_like, optional
            Initial dual point, zero by default.
        callback : callable, optional
            Called as ``callback(state)`` after every completed iteration.
        state : PfgdState, optional
            Resume from this state instead of initializing at `y0`.

        Returns
        -------
        SolveResult
            ``info["state"]`` holds the final state and ``info["ev"]`` the
            last oracle output, whose ``x_star`` is the primal estimate.
        """
        cfg = self.config
        start = time.perf_counter()
        calls0 = self.oracle.calls
        trace = RunTrace("pfgd", PFGD_COLUMNS)
        ms = lambda: 1e3 * (time.perf_counter() - start)

        if state is None:
            state = self.initialize(y0)
        trace.append(k=state.k, t=state.t, **{"lambda": state.lam}, g=state.ev.g_value,
                     alpha=math.nan, sigma=math.nan, cF=state.c_F, ms=ms())

        status = "failed"
        ev = state.ev
        if cfg.fixed_t is not None and self.converged(state.t, state.lam, state.lam_ref):
            status = "solved"
        while status != "solved" and state.k < cfg.max_iter:
            t_next, sigma, ev, c_A = self._refresh(state)
            if self.converged(t_next, ev.lam, state.lam_ref):
                trace.append(k=state.k + 1, t=t_next, **{"lambda": ev.lam}, g=ev.g_value,
                             alpha=math.nan, sigma=sigma, cF=ev.barrier_value, ms=ms())
                status = "solved"
                state = dataclasses.replace(state, t=t_next, lam=ev.lam, ev=ev, c_A=c_A,
                                            sigma=sigma, c_F=ev.barrier_value)
                break
            state = self._advance(state, t_next, sigma, ev, c_A)
            trace.append(k=state.k, t=state.t, **{"lambda": state.lam}, g=ev.g_value,
                         alpha=state.alpha, sigma=state.sigma, cF=state.c_F, ms=ms(),
                         safeguard=state.c_F > cfg.cf_cap)
            if callback is not None:
                callback(state)

        if status != "solved":
            logger.info("pfgd: no convergence after %d iterations", state.k)
        return SolveResult(status=status, y=ev.y, x=ev.x_star, t=ev.t, lam=ev.lam,
                           optim=self.optim(ev.lam, state.lam_ref), iterations=state.k,
                           trace=trace, oracle_calls=self.oracle.calls - calls0,
                           elapsed=time.perf_counter() - start,
                           info={"state": state, "ev": ev, "constants": self.constants})


def solve(problem, config=None, y0=None, callback=None):
    """Run `PathFollowingSolver` with a fresh oracle."""
    solver = PathFollowingSolver(problem, config)
    try:
        return solver.solve(y0, callback)
    finally:
        solver.oracle.close()
