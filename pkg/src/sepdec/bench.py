"""
Benchmark harness: a grid oracle for the dual function, a dual subgradient
baseline, Dolan-More performance profiles and a runner over problem
collections.
"""

import concurrent.futures
import csv
import dataclasses
import logging
import math
import time

import numpy as np

from .fast import FastConfig, SwitchConfig, fast_solve, switching_solve
from .oracle import PrimalOracle, dual_function
from .pfgd import PfgdConfig, solve as pfgd_solve
from .trace import PFGD_COLUMNS, RunTrace, SolveResult

logger = logging.getLogger(__name__)

SOLVERS = ("pfgd", "fast", "switch", "subgrad")


#%% GRID ORACLE

def brute_force_dual(problem, y, resolution=100001):
    """
    Unsmoothed dual value by grid search over every 1-D component.

    Each interval ``[l_i, u_i]`` is sampled on `resolution` equispaced points
    plus 0, and ``phi_i(x) + s_i x`` is maximized over the samples.

    Returns
    -------
    value : float
        Lower estimate of ``g(y)``.
    bound : float
        ``sum_i L_i * h_i``, where ``L_i`` bounds the slope of the
        component's objective and ``h_i`` is the grid spacing, so
        ``value <= g(y) <= value + bound``.
    """
    if problem.n > 6 or any(c.n != 1 for c in problem.components):
        raise ValueError("brute_force_dual needs at most 6 one-dimensional components")
    if any(getattr(c.objective, "capability", None) != "scalar" for c in problem.components):
        raise ValueError("brute_force_dual needs scalar objectives")
    y = np.asarray(y, dtype=float)
    s = problem.A.T @ y
    total, bound = -float(y @ problem.b), 0.0
    for i, comp in enumerate(problem.components):
        lo, hi = float(comp.barrier.lower[0]), float(comp.barrier.upper[0])
        obj = comp.objective
        grid = np.append(np.linspace(lo, hi, resolution), np.clip(0.0, lo, hi))
        vals = -obj.smooth_part(grid) - obj.l1_weight * np.abs(grid) + s[i] * grid
        total += float(vals.max())
        slope = abs(obj.coef) + obj.rate * math.exp(obj.rate * max(-lo, -hi, 0.0)) \
            + obj.l1_weight + abs(s[i])
        bound += slope * (hi - lo) / (resolution - 1)
    return total, bound


#%% SUBGRADIENT BASELINE

@dataclasses.dataclass
class SubgradConfig:
    """
    Settings of the dual subgradient method.

    Attributes
    ----------
    step : float
        Step ``step / sqrt(k + 1)`` along the normalized subgradient.
    eps_g : float
        Stop when the residual of the averaged primal point, divided by
        ``max(1, ||A x(y0) - b||)``, is below this value.
    max_iter : int
    workers : int
        Unused; accepted for a uniform solver interface.
    """

    step: float = 1.0
    eps_g: float = 1e-3
    max_iter: int = 10000
    workers: int = 1


def subgradient_baseline(problem, config=None, y0=None):
    """
    Dual subgradient method on the unsmoothed dual.

    The primal estimate averages the Lagrangian maximizers with weights
    ``step / ||subgradient||``, the raw step lengths. The trace uses the
    path-following columns with ``t``, ``sigma`` and ``cF`` empty,
    ``lambda`` the residual of the averaged point and ``g`` the dual value
    at the current iterate.
    """
    cfg = config or SubgradConfig()
    start = time.perf_counter()
    ms = lambda: 1e3 * (time.perf_counter() - start)
    oracle = PrimalOracle(problem)
    y = np.zeros(problem.m) if y0 is None else np.array(y0, dtype=float)
    trace = RunTrace("subgrad", PFGD_COLUMNS)

    g, sub, x = dual_function(problem, y, oracle=oracle)
    ref = max(1.0, float(np.linalg.norm(sub)))
    x_avg, weight = np.zeros_like(x), 0.0
    res = float(np.linalg.norm(sub))
    best = g
    trace.append(k=0, **{"lambda": res}, g=g, ms=ms(), best=best)
    calls, k = 1, 0
    while res / ref > cfg.eps_g and k < cfg.max_iter:
        nrm = float(np.linalg.norm(sub))
        if nrm == 0.0:
            res = 0.0
            break
        alpha = cfg.step / math.sqrt(k + 1)
        # weight the maximizer behind the step by its raw step length
        tau = alpha / nrm
        weight += tau
        x_avg += (tau / weight) * (x - x_avg)
        y = y - tau * sub
        g, sub, x = dual_function(problem, y, oracle=oracle)
        calls += 1
        k += 1
        res = float(np.linalg.norm(problem.A @ x_avg - problem.b))
        best = min(best, g)
        trace.append(k=k, **{"lambda": res}, g=g, alpha=alpha, ms=ms(), best=best)
    status = "solved" if res / ref <= cfg.eps_g else "failed"
    return SolveResult(status=status, y=y, x=x_avg, t=0.0, lam=res, optim=res / ref,
                       iterations=k, trace=trace, oracle_calls=calls,
                       elapsed=time.perf_counter() - start, info={"best_dual": best})


#%% SOLVER DISPATCH

def run_solver(problem, solver, options=None):
    """
    Run a solver by name.

    `options` may hold t0, eps_t, eps_g, max_iter, cf_cap, ca_mode, t_fixed,
    workers and step (subgradient only). For "fast" the fixed ``t`` is
    `t_fixed`, falling back to `eps_t`.
    """
    opts = dict(options or {})
    known = ("t0", "eps_t", "eps_g", "max_iter", "cf_cap", "ca_mode", "workers")
    pf = {k: opts[k] for k in known if opts.get(k) is not None}
    if solver == "pfgd":
        return pfgd_solve(problem, PfgdConfig(fixed_t=opts.get("t_fixed"), **pf))
    if solver == "switch":
        pf.setdefault("ca_mode", "adaptive")
        return switching_solve(problem, SwitchConfig(pfgd=PfgdConfig(**pf)))
    if solver == "fast":
        t = opts.get("t_fixed") or pf.get("eps_t", PfgdConfig.eps_t)
        fc = {k: pf[k] for k in ("eps_g", "max_iter", "workers") if k in pf}
        return fast_solve(problem, t, FastConfig(**fc))
    if solver == "subgrad":
        sc = {k: opts[k] for k in ("eps_g", "max_iter", "step") if opts.get(k) is not None}
        return subgradient_baseline(problem, SubgradConfig(**sc))
    raise ValueError(f"unknown solver {solver!r}")


#%% PERFORMANCE PROFILES

@dataclasses.dataclass
class ProfileData:
    """
    Performance profile of several solvers on a problem set.

    Attributes
    ----------
    solvers, problems : list of str
        Problems unsolved by every solver are not included.
    T : ndarray, shape (n_problems, n_solvers)
        Metric, ``inf`` for failures.
    ratios : ndarray
        ``T / min over solvers``.
    tau_log2 : ndarray
        Sorted distinct finite ``log2`` ratios, the break points of the
        step functions.
    rho : ndarray, shape (len(tau_log2), n_solvers)
        Fraction of problems with ``log2 r <= tau``.
    dropped : list of str
    """

    solvers: list
    problems: list
    T: np.ndarray
    ratios: np.ndarray
    tau_log2: np.ndarray
    rho: np.ndarray
    dropped: list

    def rho_at(self, solver, tau):
        """``rho_s(tau)`` for a ratio `tau` (not its logarithm)."""
        j = self.solvers.index(solver)
        if not self.problems:
            return 0.0
        r = self.ratios[:, j]
        # compare in log2, the scale of the stored break points
        with np.errstate(divide="ignore"):
            ok = np.isfinite(r) & (np.log2(r) <= math.log2(tau))
        return float(np.mean(ok))

    def solved_fraction(self, solver):
        return self.rho_at(solver, math.inf)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["tau_log2"] + [f"rho_{s}" for s in self.solvers])
            for tau, row in zip(self.tau_log2, self.rho):
                w.writerow([repr(float(tau))] + [repr(float(v)) for v in row])
            w.writerow(["inf"] + [repr(self.solved_fraction(s)) for s in self.solvers])


def build_profile(T, solvers, problems=None):
    """
    Dolan-More profile of a metric matrix.

    Parameters
    ----------
    T : array_like, shape (n_problems, n_solvers)
        Positive metric per run, ``inf`` (or NaN) for failures.
    solvers : sequence of str
    problems : sequence of str, optional

    Returns
    -------
    ProfileData
    """
    T = np.array(T, dtype=float)
    if T.ndim != 2 or T.shape[1] != len(solvers):
        raise ValueError("T must have one column per solver")
    problems = list(problems) if problems is not None else [str(i) for i in range(T.shape[0])]
    T[np.isnan(T)] = math.inf
    if np.any(T <= 0):
        raise ValueError("metrics must be positive")
    keep = np.isfinite(T).any(axis=1)
    dropped = [p for p, k in zip(problems, keep) if not k]
    if dropped:
        logger.warning("dropping %d problem(s) unsolved by every solver: %s",
                       len(dropped), ", ".join(dropped))
    T = T[keep]
    problems = [p for p, k in zip(problems, keep) if k]
    if T.shape[0]:
        ratios = T / T.min(axis=1, keepdims=True)
    else:
        ratios = T.copy()
    logr = np.log2(ratios[np.isfinite(ratios)])
    tau = np.unique(np.concatenate([[0.0], logr]))
    with np.errstate(divide="ignore"):
        lr = np.log2(ratios)
    rho = np.array([[np.mean(lr[:, j] <= t) if T.shape[0] else 0.0
                     for j in range(len(solvers))] for t in tau])
    return ProfileData(solvers=list(solvers), problems=problems, T=T, ratios=ratios,
                       tau_log2=tau, rho=rho, dropped=dropped)


#%% METRIC MATRIX

METRIC_COLUMNS = ("problem_id", "solver", "metric", "status")


def write_metric_csv(path, records):
    """Write records ``{problem_id, solver, metric, status}``; failures as inf."""
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, METRIC_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in records:
            w.writerow(dict(r, metric=repr(float(r["metric"]))))


def read_metric_csv(path):
    with open(path, newline="") as f:
        return [dict(r, metric=float(r["metric"])) for r in csv.DictReader(f)]


def metric_matrix(records):
    """(T, solvers, problems) from metric records, in first-seen order."""
    problems = list(dict.fromkeys(r["problem_id"] for r in records))
    solvers = list(dict.fromkeys(r["solver"] for r in records))
    T = np.full((len(problems), len(solvers)), math.inf)
    for r in records:
        T[problems.index(r["problem_id"]), solvers.index(r["solver"])] = r["metric"]
    return T, solvers, problems


#%% RUNNER

def _metric(result, metric):
    if not result.solved:
        return math.inf
    if metric == "iterations":
        return float(max(result.iterations, 1))
    if metric == "time":
        return max(result.elapsed, 1e-9)
    raise ValueError(f"unknown metric {metric!r}")


def _run_one(args):
    pid, problem, solver, options, metric = args
    try:
        res = run_solver(problem, solver, options)
    except Exception as exc:  # a crashing run counts as a failure
        logger.warning("%s on %s raised %s", solver, pid, exc)
        return {"problem_id": pid, "solver": solver, "metric": math.inf, "status": "error",
                "result": None}
    return {"problem_id": pid, "solver": solver, "metric": _metric(res, metric),
            "status": res.status, "result": res}


def run_benchmark(problems, solvers, options=None, metric="iterations", jobs=1):
    """
    Run every solver on every problem.

    Parameters
    ----------
    problems : sequence of (str, SeparableProblem)
    solvers : sequence of str
    options : dict, optional
        Passed to `run_solver`.
    metric : {"iterations", "time"}
        Time profiles depend on the machine.
    jobs : int
        Number of processes for independent runs.

    Returns
    -------
    records : list of dict
        ``problem_id, solver, metric, status, result`` in problem-major
        order.
    profile : ProfileData
    """
    tasks = [(pid, p, s, options, metric) for pid, p in problems for s in solvers]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(jobs) as ex:
            records = list(ex.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]
    T, snames, pids = metric_matrix(records)
    return records, build_profile(T, snames, pids)
