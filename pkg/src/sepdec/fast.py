"""
Accelerated gradient decomposition at a fixed smoothness parameter, and a
two-phase solver that uses path-following to reach the entry region of the
accelerated scheme.
"""

import dataclasses
import logging
import math
import time

import numpy as np

from .geometry import compute_constants
from .oracle import DEFAULT_TOL, PrimalOracle
from .pfgd import PathFollowingSolver, PfgdConfig
from .trace import FAST_COLUMNS, SWITCH_COLUMNS, RunTrace, SolveResult

logger = logging.getLogger(__name__)

ENTRY_FACTOR = 0.75


def update_theta(theta):
    """
    Next weight ``0.5 theta (sqrt(theta^2 + 4) - theta)``.

    It solves ``(1 - theta_next) / theta_next^2 = 1 / theta^2``.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    # equal to 2 theta / (theta + sqrt(theta^2 + 4)) without cancellation
    return 2.0 * theta / (theta + math.sqrt(theta * theta + 4.0))


def theta_sequence(count):
    """First `count` weights starting from 1."""
    out = np.empty(count)
    theta = 1.0
    for k in range(count):
        out[k] = theta
        theta = update_theta(theta)
    return out


def beta_coefficients(theta, theta_next, alpha, rho):
    """
    Coefficients of ``v_next = b1 y_next + b2 y + b3 v``.

    Obtained by substituting ``grad g(v) = (v - y_next) / alpha`` into the
    two-step update through ``r``; used to cross-check it.
    """
    b1 = 1.0 - theta_next + rho * theta_next / alpha
    b2 = -(1.0 - theta) * theta_next / theta
    b3 = (1.0 / theta - rho / alpha) * theta_next
    return b1, b2, b3


def c_hat(c_base, lam0):
    """Matrix-norm bound that puts the start inside the entry region."""
    return max(c_base, lam0 / ENTRY_FACTOR)


@dataclasses.dataclass
class FastConfig:
    """
    Settings of the accelerated solver.

    Attributes
    ----------
    eps_g : float
        Stop when the optimality measure at ``v`` is below this value.
    max_iter : int
    inner_tol : float
    c_base : {"sup", "bar"} or float
        Base matrix-norm bound: "bar" is ``kappa ||A||*_{x_c}``, "sup" the
        tightest uniform bound known for the problem, or an explicit value.
        The step uses ``max(c_base, 4 lambda_0 / 3)``.
    criterion : {"optim", "lambda"}
    grad_ref : float or None
        Divisor of the optimality measure; defaults to
        ``max(1, ||grad g(y0; t)||)``.
    workers : int
    """

    eps_g: float = 1e-3
    max_iter: int = 10000
    inner_tol: float = DEFAULT_TOL
    c_base: object = "sup"
    criterion: str = "optim"
    grad_ref: float = None
    workers: int = 1

    def __post_init__(self):
        if not self.eps_g > 0:
            raise ValueError("eps_g must be positive")
        if self.criterion not in ("optim", "lambda"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if isinstance(self.c_base, str):
            if self.c_base not in ("sup", "bar"):
                raise ValueError(f"unknown c_base {self.c_base!r}")
        elif not self.c_base > 0:
            raise ValueError("c_base must be positive")


@dataclasses.dataclass
class FastState:
    """
    Iterate of the accelerated scheme.

    `ev` is the oracle output at ``(v, t)``; `lam` its gradient norm.
    """

    k: int
    y: np.ndarray
    v: np.ndarray
    theta: float
    t: float
    c_hat: float
    lam: float
    ev: object
    r: np.ndarray = None
    alpha: float = math.nan
    rho: float = math.nan
    in_region: bool = True
    y_prev: np.ndarray = None


class FastGradientSolver:
    """
    Accelerated gradient decomposition on ``g(.; t)`` for a fixed ``t``.

    Parameters
    ----------
    problem : SeparableProblem
    t : float
    config : FastConfig, optional
    oracle : PrimalOracle, optional
    constants : GeometryConstants, optional
    """

    def __init__(self, problem, t, config=None, oracle=None, constants=None):
        if not t > 0:
            raise ValueError(f"t must be positive, got {t}")
        self.problem = problem
        self.t = float(t)
        self.config = config or FastConfig()
        self.oracle = oracle or PrimalOracle(problem, tol=self.config.inner_tol,
                                             workers=self.config.workers)
        self.constants = constants or compute_constants(problem)

    def base_constant(self):
        cb = self.config.c_base
        if cb == "sup":
            return self.constants.c_sup_A
        if cb == "bar":
            return self.constants.c_bar_A
        return float(cb)

    def initialize(self, y0=None, ev=None):
        """
        Start at `y0` (zero by default); `ev` may carry a cached oracle
        output at ``(y0, t)``.
        """
        y0 = np.zeros(self.problem.m) if y0 is None else np.array(y0, dtype=float)
        if ev is None:
            ev = self.oracle.evaluate(y0, self.t)
        ch = c_hat(self.base_constant(), ev.lam)
        if ev.lam > ENTRY_FACTOR * ch * (1.0 + 1e-12):
            raise ValueError(f"entry condition violated: {ev.lam} > {ENTRY_FACTOR} * {ch}")
        self.grad_ref = self.config.grad_ref or max(1.0, ev.lam)
        return FastState(k=0, y=y0, v=y0.copy(), theta=1.0, t=self.t, c_hat=ch,
                         lam=ev.lam, ev=ev, r=y0.copy())

    def iterate(self, state):
        """One step; the oracle is called once, at the new ``v``."""
        t, ch, theta = state.t, state.c_hat, state.theta
        grad = state.ev.gradient
        r = (state.v - (1.0 - theta) * state.y) / theta
        alpha = t / (ch * (ch + state.lam))
        y_next = state.v - alpha * grad
        theta_next = update_theta(theta)
        rho = t / (2.0 * ch * ch * theta)
        v_next = (1.0 - theta_next) * y_next + theta_next * (r - rho * grad)
        ev = self.oracle.evaluate(v_next, t)
        in_region = ev.lam <= ENTRY_FACTOR * ch * (1.0 + 1e-12)
        if not in_region:
            logger.debug("fast: iterate %d left the entry region", state.k + 1)
        return FastState(k=state.k + 1, y=y_next, v=v_next, theta=theta_next, t=t,
                         c_hat=ch, lam=ev.lam, ev=ev, r=r, alpha=alpha, rho=rho,
                         in_region=in_region, y_prev=state.y)

    def optim(self, lam):
        return lam / self.grad_ref if self.config.criterion == "optim" else lam

    def solve(self, y0=None, callback=None, ev=None, trace=None, phase=None, k_offset=0):
        """
        Run until the optimality measure at ``v`` is below `eps_g`.

        `trace`, `phase` and `k_offset` let a caller append the rows to an
        existing trace.

        Returns
        -------
        SolveResult
            ``y`` and ``x`` come from the last point where the oracle was
            evaluated.
        """
        cfg = self.config
        start = time.perf_counter()
        calls0 = self.oracle.calls
        if trace is None:
            trace = RunTrace("fast", FAST_COLUMNS)
        ms = lambda: 1e3 * (time.perf_counter() - start)

        def record(s):
            row = dict(k=k_offset + s.k, t=s.t, g=s.ev.g_value, alpha=s.alpha,
                       theta=s.theta, rho=s.rho, ms=ms(), in_region=s.in_region)
            row["lambda"] = s.lam
            if phase is not None:
                row["phase"] = phase
            trace.append(**row)

        state = self.initialize(y0, ev)
        record(state)
        outside = 0
        while self.optim(state.lam) > cfg.eps_g and state.k < cfg.max_iter:
            state = self.iterate(state)
            outside += not state.in_region
            record(state)
            if callback is not None:
                callback(state)
        if outside:
            logger.info("fast: %d iterates outside the entry region", outside)
        status = "solved" if self.optim(state.lam) <= cfg.eps_g else "failed"
        ev = state.ev
        return SolveResult(status=status, y=ev.y, x=ev.x_star, t=self.t, lam=ev.lam,
                           optim=self.optim(ev.lam), iterations=state.k, trace=trace,
                           oracle_calls=self.oracle.calls - calls0,
                           elapsed=time.perf_counter() - start,
                           info={"state": state, "ev": ev, "constants": self.constants,
                                 "outside_region": outside})


def fast_solve(problem, t, config=None, y0=None, callback=None):
    """Run `FastGradientSolver` with a fresh oracle."""
    solver = FastGradientSolver(problem, t, config)
    try:
        return solver.solve(y0, callback)
    finally:
        solver.oracle.close()


@dataclasses.dataclass
class SwitchConfig:
    """
    Settings of the two-phase solver.

    Attributes
    ----------
    pfgd : PfgdConfig
        Phase 1 settings, adaptive c_A by default; its `eps_t`, `eps_g` and
        `max_iter` also govern the overall stopping test and budget.
    entry_factor : float
        Phase 1 ends once ``t <= eps_t`` and
        ``||grad g|| <= entry_factor * max(c_base, ||grad g|| / entry_factor)``.
    c_base : {"sup", "bar"} or float
        See `FastConfig`.
    jump_on_stall : bool
        When Phase 1 already meets `eps_g` at some ``t > eps_t`` (``t`` has
        stopped decreasing because the gradient vanished), continue the
        accelerated phase at ``t = eps_t`` instead of waiting.
    """

    pfgd: PfgdConfig = dataclasses.field(default_factory=lambda: PfgdConfig(ca_mode="adaptive"))
    entry_factor: float = ENTRY_FACTOR
    c_base: object = "sup"
    jump_on_stall: bool = True

    def __post_init__(self):
        if not 0.0 < self.entry_factor < 1.0:
            raise ValueError("entry_factor must lie in (0, 1)")


def switching_solve(problem, config=None, y0=None):
    """
    Path-following until the entry region is reached, then the accelerated
    scheme at the final ``t``.

    The trace uses `SWITCH_COLUMNS` with ``phase`` 1 or 2 and a continuous
    iteration counter. Returns a `SolveResult` whose ``info`` holds
    ``switch_k`` (the last Phase-1 iteration), ``t_fixed`` and ``jumped``.
    """
    cfg = config or SwitchConfig()
    pc = cfg.pfgd
    start = time.perf_counter()
    oracle = PrimalOracle(problem, tol=pc.inner_tol, workers=pc.workers)
    try:
        constants = compute_constants(problem)
        fast_cfg = FastConfig(eps_g=pc.eps_g, max_iter=pc.max_iter, inner_tol=pc.inner_tol,
                              c_base=cfg.c_base, criterion=pc.criterion, workers=pc.workers)
        p1 = PathFollowingSolver(problem, pc, oracle=oracle, constants=constants)
        fs = FastGradientSolver(problem, pc.eps_t, fast_cfg, oracle=oracle, constants=constants)
        c_base = fs.base_constant()
        trace = RunTrace("switch", SWITCH_COLUMNS)
        ms = lambda: 1e3 * (time.perf_counter() - start)

        state = p1.initialize(y0)
        y_entry, t_entry, ev_entry = state.y, state.t, state.ev
        trace.append(k=0, phase=1, t=state.t, **{"lambda": state.lam}, g=state.ev.g_value,
                     cF=state.c_F, ms=ms())
        jumped = False
        inside = lambda lam: lam <= cfg.entry_factor * c_hat(c_base, lam) * (1.0 + 1e-12)
        entered = state.t <= pc.eps_t and inside(state.lam)
        while not entered and state.k < pc.max_iter:
            t_next, sigma, ev, c_A = p1._refresh(state)
            if t_next <= pc.eps_t and inside(ev.lam):
                # entry detected at (y^k, t_{k+1}); no step taken
                y_entry, t_entry, ev_entry, entered = state.y, t_next, ev, True
                trace.append(k=state.k + 1, phase=1, t=t_next, **{"lambda": ev.lam},
                             g=ev.g_value, sigma=sigma, cF=ev.barrier_value, ms=ms())
                state = dataclasses.replace(state, k=state.k + 1)
                break
            if (cfg.jump_on_stall and t_next > pc.eps_t
                    and p1.optim(ev.lam, state.lam_ref) <= pc.eps_g):
                y_entry, t_entry, ev_entry, entered, jumped = state.y, pc.eps_t, None, True, True
                trace.append(k=state.k + 1, phase=1, t=t_next, **{"lambda": ev.lam},
                             g=ev.g_value, sigma=sigma, cF=ev.barrier_value, ms=ms())
                state = dataclasses.replace(state, k=state.k + 1)
                break
            state = p1._advance(state, t_next, sigma, ev, c_A)
            trace.append(k=state.k, phase=1, t=state.t, **{"lambda": state.lam},
                         g=ev.g_value, alpha=state.alpha, sigma=state.sigma, cF=state.c_F,
                         ms=ms())
        if not entered:
            logger.info("switch: phase 1 exhausted after %d iterations", state.k)
            return SolveResult(status="failed", y=state.ev.y, x=state.ev.x_star, t=state.t,
                               lam=state.lam, optim=p1.optim(state.lam, state.lam_ref),
                               iterations=state.k, trace=trace, oracle_calls=oracle.calls,
                               elapsed=time.perf_counter() - start,
                               info={"switch_k": None, "t_fixed": None, "jumped": False,
                                     "constants": constants})

        switch_k = state.k
        fs.t = t_entry
        fs.config = dataclasses.replace(fast_cfg, max_iter=max(0, pc.max_iter - switch_k),
                                        grad_ref=state.lam_ref)
        res = fs.solve(y_entry, ev=ev_entry, trace=trace, phase=2, k_offset=switch_k)
        # the first phase-2 row repeats the entry point
        del trace.rows[len(trace.rows) - res.iterations - 1]
        total = switch_k + res.iterations
        return SolveResult(status=res.status, y=res.y, x=res.x, t=t_entry, lam=res.lam,
                           optim=res.optim, iterations=total, trace=trace,
                           oracle_calls=oracle.calls, elapsed=time.perf_counter() - start,
                           info={"switch_k": switch_k, "t_fixed": t_entry, "jumped": jumped,
                                 "c_hat": res.info["state"].c_hat, "constants": constants,
                                 "state": res.info["state"], "ev": res.info["ev"]})
    finally:
        oracle.close()
