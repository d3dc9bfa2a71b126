"""
Separable convex programs with linear coupling constraints.

A problem maximizes ``sum_i phi_i(x_i)`` subject to
``sum_i (A_i x_i - b_i) = 0`` and ``x_i in X_i``, where each ``X_i`` carries
a self-concordant barrier. Problems are immutable once built and can be
shared between threads.
"""

import dataclasses
import json
import logging
import math

import numpy as np

from .barriers import Barrier, BoxBarrier

logger = logging.getLogger(__name__)

OBJECTIVE_KINDS = ("zero", "affine", "exp", "quadratic")


class ProblemError(ValueError):
    """A problem file or object is malformed."""


#%% OBJECTIVES

class ScalarObjective:
    r"""
    Concave 1-D objective :math:`\phi(x) = -f(x) - \gamma |x|` with

        .. math:: f(x) = c x + e^{-r x} - 1,

    which covers the kinds ``zero`` (c = r = 0), ``affine`` (r = 0) and
    ``exp`` (c = 0, r >= 0). Subproblems with this objective are solved by
    the 1-D routines in `sepdec.oracle`.
    """

    capability = "scalar"
    n = 1

    def __init__(self, kind="zero", coef=0.0, rate=0.0, l1_weight=0.0):
        if kind not in ("zero", "affine", "exp"):
            raise ProblemError(f"unknown scalar objective kind {kind!r}")
        self.kind = kind
        self.coef = float(coef) if kind == "affine" else 0.0
        self.rate = float(rate) if kind == "exp" else 0.0
        self.l1_weight = float(l1_weight)

    def __repr__(self):
        return (f"ScalarObjective({self.kind!r}, coef={self.coef}, rate={self.rate}, "
                f"l1_weight={self.l1_weight})")

    def smooth_part(self, x):
        """f(x), the convex smooth part entering with a minus sign."""
        return self.coef * x + np.expm1(-self.rate * x)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(-self.smooth_part(x) - self.l1_weight * np.abs(x)))

    def params(self):
        d = {"kind": self.kind, "l1_weight": self.l1_weight}
        if self.kind == "affine":
            d["c"] = [self.coef]
        elif self.kind == "exp":
            d["rate"] = [self.rate]
        return d


class SmoothObjective:
    r"""
    Smooth concave objective in several variables,

        .. math:: \phi(x) = c^T x - \tfrac12 x^T Q x - \sum_j (e^{-r_j x_j} - 1),

    with Q positive semidefinite and r >= 0. Subproblems are solved by
    damped Newton on their optimality system.
    """

    capability = "smooth"

    def __init__(self, n, kind="zero", c=None, Q=None, rate=None):
        if kind not in OBJECTIVE_KINDS:
            raise ProblemError(f"unknown objective kind {kind!r}")
        self.n = int(n)
        self.kind = kind
        self.l1_weight = 0.0
        self.c = np.zeros(n) if c is None else np.asarray(c, dtype=float).reshape(n)
        self.Q = np.zeros((n, n)) if Q is None else np.asarray(Q, dtype=float).reshape(n, n)
        self.rate = np.zeros(n) if rate is None else np.asarray(rate, dtype=float).reshape(n)

    def __repr__(self):
        return f"SmoothObjective(n={self.n}, kind={self.kind!r})"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.c @ x - 0.5 * x @ self.Q @ x - np.sum(np.expm1(-self.rate * x)))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.c - self.Q @ x + self.rate * np.exp(-self.rate * x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return -self.Q - np.diag(self.rate ** 2 * np.exp(-self.rate * x))

    def params(self):
        d = {"kind": self.kind, "l1_weight": 0.0}
        if self.kind in ("affine", "quadratic"):
            d["c"] = self.c.tolist()
        if self.kind == "quadratic":
            d["Q"] = self.Q.tolist()
        if self.kind == "exp":
            d["rate"] = self.rate.tolist()
        return d


#%% PROBLEM

@dataclasses.dataclass(frozen=True)
class Component:
    """
    One block of a separable problem.

    Attributes
    ----------
    A : ndarray, shape (m, n_i)
        Coupling block.
    b : ndarray, shape (m,)
        Share of the right-hand side carried by this block.
    barrier : Barrier
        Barrier of the local set.
    objective : ScalarObjective or SmoothObjective
    """

    A: np.ndarray
    b: np.ndarray
    barrier: Barrier
    objective: object

    @property
    def n(self):
        return self.A.shape[1]


class SeparableProblem:
    """
    Separable program with `N` components coupled through ``A x = b``.

    Parameters
    ----------
    components : sequence of Component
    m : int, optional
        Number of coupling rows. Inferred from the first block if omitted.
    """

    def __init__(self, components, m=None):
        self.components = tuple(components)
        if not self.components:
            raise ProblemError("a problem needs at least one component")
        self.m = int(m if m is not None else self.components[0].A.shape[0])
        sizes = [c.A.shape[1] if c.A.ndim == 2 else 0 for c in self.components]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.n = int(self.offsets[-1])
        self.N = len(self.components)

        shapes_ok = all(c.A.ndim == 2 and c.A.shape[0] == self.m
                        and np.shape(c.b) == (self.m,) for c in self.components)
        if shapes_ok:
            self.A = np.hstack([c.A for c in self.components])
            self.B = np.column_stack([c.b for c in self.components])
            self.b = self.B.sum(axis=1)
        else:
            self.A = self.B = self.b = None

        self.diagonal = all(isinstance(c.barrier, BoxBarrier) for c in self.components)
        if self.diagonal:
            self.lower = np.concatenate([c.barrier.lower for c in self.components])
            self.upper = np.concatenate([c.barrier.upper for c in self.components])

    def __repr__(self):
        return f"SeparableProblem(N={self.N}, n={self.n}, m={self.m})"

    def block(self, x, i):
        return x[self.offsets[i]:self.offsets[i + 1]]

    @property
    def nu(self):
        return float(sum(c.barrier.nu for c in self.components))

    def center(self):
        """Concatenated analytic centers of all local sets."""
        from .barriers import analytic_center
        if self.diagonal:
            return 0.5 * (self.lower + self.upper)
        return np.concatenate([analytic_center(c.barrier) for c in self.components])

    def objective_value(self, x):
        return float(sum(c.objective.value(self.block(x, i))
                         for i, c in enumerate(self.components)))

    def barrier_value(self, x):
        if self.diagonal:
            return _box_value(self.lower, self.upper, x)
        return float(sum(c.barrier.value(self.block(x, i))
                         for i, c in enumerate(self.components)))

    def inverse_hessian(self, x):
        """
        Return a callable applying the block-diagonal inverse barrier Hessian
        at `x` to a vector.
        """
        if self.diagonal:
            d = 1.0 / (1.0 / (x - self.lower) ** 2 + 1.0 / (self.upper - x) ** 2)
            return lambda u: d * u
        blocks = []
        for i, c in enumerate(self.components):
            xi = self.block(x, i)
            blocks.append((self.offsets[i], self.offsets[i + 1], c.barrier, xi))

        def apply(u):
            out = np.empty_like(u, dtype=float)
            for lo, hi, bar, xi in blocks:
                out[lo:hi] = bar.hess_solve(xi, u[lo:hi])
            return out
        return apply


def _box_value(lower, upper, x):
    shift = 2.0 * np.log((upper - lower) / 2.0)
    return float(np.sum(-np.log(x - lower) - np.log(upper - x) + shift))


#%% VALIDATION

@dataclasses.dataclass
class Issue:
    level: str
    message: str
    component: int = None

    def __str__(self):
        where = "" if self.component is None else f"component {self.component}: "
        return f"{self.level}: {where}{self.message}"


@dataclasses.dataclass
class ValidationReport:
    issues: list = dataclasses.field(default_factory=list)

    @property
    def errors(self):
        return [i for i in self.issues if i.level == "error"]

    @property
    def warnings(self):
        return [i for i in self.issues if i.level == "warning"]

    @property
    def ok(self):
        return not self.errors

    def __bool__(self):
        return bool(self.issues)

    def __str__(self):
        return "\n".join(str(i) for i in self.issues) or "ok"


def validate(problem):
    """
    Check dimensions, local sets, objective concavity and the rank of A.

    Rank deficiency of A is only a warning: the solvers still run, but the
    dual solution set may be unbounded.

    Returns
    -------
    ValidationReport
        Empty when the problem is well formed.
    """
    report = ValidationReport()
    add = lambda level, msg, i=None: report.issues.append(Issue(level, msg, i))

    for i, comp in enumerate(problem.components):
        A = np.asarray(comp.A)
        if A.ndim != 2 or A.shape[0] != problem.m:
            add("error", f"A has shape {A.shape}, expected ({problem.m}, n_i)", i)
            continue
        if np.shape(comp.b) != (problem.m,):
            add("error", f"b has shape {np.shape(comp.b)}, expected ({problem.m},)", i)
        if comp.barrier.dim != A.shape[1]:
            add("error", f"barrier dimension {comp.barrier.dim} != n_i = {A.shape[1]}", i)
        if comp.objective.n != A.shape[1]:
            add("error", f"objective dimension {comp.objective.n} != n_i = {A.shape[1]}", i)
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(comp.b)):
            add("error", "non-finite entries in A_i or b_i", i)

        bar = comp.barrier
        if isinstance(bar, BoxBarrier):
            if not np.all(np.isfinite(bar.lower)) or not np.all(np.isfinite(bar.upper)):
                add("error", "box bounds must be finite", i)
            elif np.any(bar.lower >= bar.upper):
                add("error", "empty box: some l_i >= u_i", i)

        obj = comp.objective
        if obj.l1_weight < 0:
            add("error", "l1 weight must be nonnegative", i)
        if np.any(np.asarray(obj.rate) < 0):
            add("error", "exponential rates must be nonnegative", i)
        if isinstance(obj, SmoothObjective) and obj.n > 0:
            if np.linalg.eigvalsh(0.5 * (obj.Q + obj.Q.T)).min() < -1e-12:
                add("error", "Q is not positive semidefinite; objective not concave", i)

    if report.ok and problem.A is not None:
        rank = np.linalg.matrix_rank(problem.A)
        if rank < problem.m:
            add("warning", f"A is rank deficient (rank {rank} < m = {problem.m})")
    return report


def aggregate_kappa(problem):
    r""":math:`\kappa = \sum_i (\nu_i + 2\sqrt{\nu_i})` over the components."""
    return math.fsum(c.barrier.nu + 2.0 * math.sqrt(c.barrier.nu)
                     for c in problem.components)


#%% JSON

def problem_to_dict(problem):
    comps = []
    for comp in problem.components:
        if not isinstance(comp.barrier, BoxBarrier):
            raise ProblemError("only box-constrained components can be serialized")
        comps.append({
            "n": comp.n,
            "A": comp.A.tolist(),
            "b": np.asarray(comp.b, dtype=float).tolist(),
            "box": {"l": comp.barrier.lower.tolist(), "u": comp.barrier.upper.tolist()},
            "objective": comp.objective.params(),
        })
    return {"m": problem.m, "components": comps}


def _objective_from_dict(d, n):
    kind = d.get("kind", "zero")
    l1 = float(d.get("l1_weight", 0.0))
    if n == 1 and kind in ("zero", "affine", "exp"):
        return ScalarObjective(kind, coef=d.get("c", [0.0])[0],
                               rate=d.get("rate", [0.0])[0], l1_weight=l1)
    if l1 != 0.0:
        raise ProblemError("l1 terms are only supported on 1-D components")
    return SmoothObjective(n, kind, c=d.get("c"), Q=d.get("Q"), rate=d.get("rate"))


def problem_from_dict(d):
    try:
        m = int(d["m"])
        comps = []
        for c in d["components"]:
            n = int(c["n"])
            A = np.asarray(c["A"], dtype=float).reshape(m, n)
            b = np.asarray(c["b"], dtype=float)
            barrier = BoxBarrier(c["box"]["l"], c["box"]["u"])
            comps.append(Component(A, b, barrier, _objective_from_dict(c["objective"], n)))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ProblemError):
            raise
        raise ProblemError(f"malformed problem data: {e}") from e
    return SeparableProblem(comps, m)


def dumps_problem(problem):
    """Canonical JSON text: sorted keys, no whitespace, shortest float repr."""
    return json.dumps(problem_to_dict(problem), sort_keys=True, separators=(",", ":"))


def loads_problem(text):
    return problem_from_dict(json.loads(text))


def save_problem(problem, path):
    with open(path, "w") as f:
        f.write(dumps_problem(problem))


def load_problem(path, check=True):
    """
    Read a problem file. With `check`, validation errors raise
    `ProblemError` and warnings are logged.
    """
    with open(path) as f:
        problem = loads_problem(f.read())
    if check:
        report = validate(problem)
        for w in report.warnings:
            logger.warning("%s: %s", path, w)
        if not report.ok:
            raise ProblemError(f"{path}: invalid problem\n{report}")
    return problem
