"""Portfolio selection under moment ambiguity.

Minimizes the two robust objectives that admit cheap evaluations — the
linear-loss worst-case risk

    -mu'w + alpha * sqrt(w' cov w) + radius * sqrt(1 + alpha^2) * ||w||

and the worst-case tracking error ``sup w' M w`` (or its square root)
over a moment ball — subject to simple portfolio constraints: a simplex
with lower bounds, the tracking set that pins the last coordinate to
``-1``, or box bounds with a budget.

Both objectives are convex but nonsmooth, and their subgradients cost no
more than a matrix-vector product (plus, for the tracking error, one
worst-case moment evaluation), so a projected subgradient method with
Polyak-style steps and best-iterate tracking is used instead of an
external conic solver.  The iteration schedule is deterministic: the
same inputs always produce the same report.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    BadP,
    DimMismatch,
    InfeasibleSet,
    NegativeAlpha,
    NonFinite,
    ValidationError,
)
from .linear_risk import GelbrichBall
from .support import SupportQuery, support_V

__all__ = [
    "FeasibleSet",
    "OptimizeReport",
    "Termination",
    "minimize_linear_gelbrich",
    "minimize_tracking",
]

# Convergence is declared when the best objective value has not improved
# by more than _IMPROVE_TOL over _QUIET_ITERS consecutive iterations.
_IMPROVE_TOL = 1e-10
_QUIET_ITERS = 200
_DEFAULT_MAX_ITER = 10_000

# Refined mode (tracking): each stall shrinks the step-target offset by
# _REFINE_SHRINK and continues, until the offset falls below a relative
# floor; the loop then stops at the next stall.  The iterate precision
# is governed by the offset, so decaying it in stages reaches the
# smooth-objective floor instead of parking in the first offset band.
_REFINE_IMPROVE_TOL = 1e-16
_REFINE_SHRINK = 0.1
_REFINE_FLOOR = 1e-13

# Floor for the Polyak target offset so a flat probe still yields a
# strictly positive step.
_OFFSET_FLOOR = 1e-12

_FEASIBLE_TOL = 1e-9


class Termination(enum.Enum):
    """Why the subgradient loop stopped."""

    CONVERGED = "Converged"
    ITERATION_CAP = "IterationCap"


def _project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{w >= 0, sum w = total}``.

    Sort-and-threshold: with the entries sorted decreasingly, the largest
    prefix whose running mean (after subtracting ``total``) stays below
    its last entry determines the shift ``theta``; clipping ``v - theta``
    at zero is then the projection.
    """
    if total <= 0.0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    shifted = np.cumsum(u) - total
    counts = np.arange(1, v.size + 1, dtype=float)
    support = np.nonzero(u * counts > shifted)[0]
    k = int(support[-1]) + 1
    theta = shifted[k - 1] / k
    return np.maximum(v - theta, 0.0)


def _as_bound_vector(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    try:
        vec = np.broadcast_to(arr, (n,)).copy()
    except ValueError:
        raise DimMismatch(
            f"{name} bounds have shape {arr.shape}, expected a scalar or length {n}"
        ) from None
    if not np.all(np.isfinite(vec)):
        raise NonFinite(f"{name} bounds must be finite, got {vec}")
    return vec


@dataclass(eq=False, frozen=True)
class FeasibleSet:
    """A portfolio constraint set with a cheap Euclidean projection.

    Three kinds are supported, built through the classmethod
    constructors below:

    ``"simplex"``
        ``sum(w) = 1`` and ``w >= lower`` elementwise.
    ``"fixed-index-simplex"``
        The tracking set: the first ``n - 1`` weights lie on the
        standard simplex and the last coordinate (the index being
        replicated) is pinned to ``-1``.
    ``"box-budget"``
        ``lower <= w <= upper`` elementwise and ``sum(w) = budget``.

    Every constructor verifies nonemptiness by building one feasible
    point and raises :class:`InfeasibleSet` otherwise.
    """

    kind: str
    lower: np.ndarray
    upper: np.ndarray | None
    budget: float

    # -- constructors --------------------------------------------------

    @classmethod
    def simplex(cls, n: int, lower: float | np.ndarray = 0.0) -> "FeasibleSet":
        """Budget-one simplex with elementwise lower bounds."""
        n = int(n)
        if n < 1:
            raise InfeasibleSet(f"a simplex needs at least one coordinate, got n={n}")
        low = _as_bound_vector(lower, n, "lower")
        slack = 1.0 - float(np.sum(low))
        if slack < 0.0:
            raise InfeasibleSet(
                f"lower bounds sum to {np.sum(low)} > 1; no point satisfies the budget"
            )
        return cls(kind="simplex", lower=low, upper=None, budget=1.0)

    @classmethod
    def tracking_simplex(cls, n: int) -> "FeasibleSet":
        """First ``n - 1`` weights on the simplex, last pinned to ``-1``."""
        n = int(n)
        if n < 2:
            raise InfeasibleSet(
                f"the tracking set needs at least one asset plus the index, got n={n}"
            )
        return cls(
            kind="fixed-index-simplex",
            lower=np.zeros(n),
            upper=None,
            budget=1.0,
        )

    @classmethod
    def box_budget(cls, lower, upper, budget: float = 1.0) -> "FeasibleSet":
        """Box ``lower <= w <= upper`` intersected with ``sum(w) = budget``."""
        low_arr = np.atleast_1d(np.asarray(lower, dtype=float))
        up_arr = np.atleast_1d(np.asarray(upper, dtype=float))
        if low_arr.ndim != 1 or up_arr.ndim != 1:
            raise DimMismatch(
                f"bounds must be vectors, got shapes {low_arr.shape} and {up_arr.shape}"
            )
        n = max(low_arr.size, up_arr.size)
        low = _as_bound_vector(low_arr, n, "lower")
        up = _as_bound_vector(up_arr, n, "upper")
        budget = float(budget)
        if not math.isfinite(budget):
            raise NonFinite(f"budget must be finite, got {budget}")
        if np.any(low > up):
            bad = int(np.argmax(low > up))
            raise InfeasibleSet(
                f"lower bound exceeds upper bound at coordinate {bad}: "
                f"{low[bad]} > {up[bad]}"
            )
        if not float(np.sum(low)) <= budget <= float(np.sum(up)):
            raise InfeasibleSet(
                f"budget {budget} outside [{np.sum(low)}, {np.sum(up)}], "
                "the range reachable inside the box"
            )
        return cls(kind="box-budget", lower=low, upper=up, budget=budget)

    # -- geometry ------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, v: np.ndarray) -> np.ndarray:
        """Euclidean projection of ``v`` onto the set."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise DimMismatch(f"expected a vector of length {self.dim}, got {v.shape}")
        if self.kind == "simplex":
            slack = self.budget - float(np.sum(self.lower))
            return self.lower + _project_simplex(v - self.lower, slack)
        if self.kind == "fixed-index-simplex":
            head = _project_simplex(v[:-1], self.budget)
            return np.append(head, -1.0)
        return self._project_box_budget(v)

    def _project_box_budget(self, v: np.ndarray) -> np.ndarray:
        # sum(clip(v - lam, lower, upper)) is nonincreasing in lam and
        # hits every value in [sum(lower), sum(upper)]; bisect on lam.
        lo = float(np.min(v - self.upper)) - 1.0
        hi = float(np.max(v - self.lower)) + 1.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if float(np.sum(np.clip(v - mid, self.lower, self.upper))) > self.budget:
                lo = mid
            else:
                hi = mid
        return np.clip(v - 0.5 * (lo + hi), self.lower, self.upper)

    def feasible_point(self) -> np.ndarray:
        """A deterministic point of the set (the 'center' where natural)."""
        if self.kind == "simplex":
            slack = self.budget - float(np.sum(self.lower))
            return self.lower + slack / self.dim
        if self.kind == "fixed-index-simplex":
            head = np.full(self.dim - 1, self.budget / (self.dim - 1))
            return np.append(head, -1.0)
        return self._project_box_budget(0.5 * (self.lower + self.upper))

    def contains(self, w: np.ndarray, tol: float = _FEASIBLE_TOL) -> bool:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            return False
        if self.kind == "simplex":
            return bool(
                np.all(w >= self.lower - tol)
                and abs(float(np.sum(w)) - self.budget) <= tol
            )
        if self.kind == "fixed-index-simplex":
            return bool(
                np.all(w[:-1] >= -tol)
                and abs(float(np.sum(w[:-1])) - self.budget) <= tol
                and abs(w[-1] + 1.0) <= tol
            )
        return bool(
            np.all(w >= self.lower - tol)
            and np.all(w <= self.upper + tol)
            and abs(float(np.sum(w)) - self.budget) <= tol
        )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """A random feasible point (for certificates, not optimization)."""
        if self.kind == "simplex":
            slack = self.budget - float(np.sum(self.lower))
            return self.lower + slack * rng.dirichlet(np.ones(self.dim))
        if self.kind == "fixed-index-simplex":
            head = self.budget * rng.dirichlet(np.ones(self.dim - 1))
            return np.append(head, -1.0)
        return self._project_box_budget(rng.uniform(self.lower, self.upper))


@dataclass(eq=False)
class OptimizeReport:
    """Outcome of a projected-subgradient solve.

    ``value`` is the objective at ``w_star`` (the best iterate seen, not
    necessarily the last one).  ``trace`` carries the per-iteration
    objective values when requested, starting with the initial point.
    """

    w_star: np.ndarray
    value: float
    iterations: int
    termination: Termination
    trace: np.ndarray | None = None


Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


def _offset_scale(objective: Objective, feasible: FeasibleSet, w0, f0) -> float:
    """Estimate the objective's range over the set from 2n probe points.

    The spread calibrates the diminishing target offset of the Polyak
    step, making the step size scale-free in the objective.
    """
    values = [f0]
    for i in range(feasible.dim):
        bump = np.zeros(feasible.dim)
        bump[i] = 1.0
        for sign in (1.0, -1.0):
            values.append(objective(feasible.project(w0 + sign * bump))[0])
    return max(max(values) - min(values), _OFFSET_FLOOR)


def _best_iterate_descent(
    objective: Objective,
    feasible: FeasibleSet,
    max_iter: int,
    keep_trace: bool,
    refine: bool = False,
) -> OptimizeReport:
    """Projected subgradient loop shared by both objectives.

    Steps are Polyak-style with a diminishing target offset,

        step_k = (f(w_k) - f_best + delta0 / sqrt(k)) / ||g_k||^2,

    which needs no Lipschitz constant and shrinks automatically as the
    best value stalls.  Subgradient methods are not monotone, so the
    report returns the best iterate rather than the last.

    With ``refine=False`` the loop stops at the first stall (no best
    improvement above 1e-10 over 200 iterations).  With ``refine=True``
    each stall instead shrinks ``delta0`` tenfold and the loop carries
    on until the offset reaches a relative floor, polishing smooth
    objectives to near machine precision; the schedule stays
    deterministic either way.
    """
    max_iter = int(max_iter)
    if max_iter < 1:
        raise ValidationError(f"max_iter must be at least 1, got {max_iter}")
    improve_tol = _REFINE_IMPROVE_TOL if refine else _IMPROVE_TOL

    w = feasible.feasible_point()
    f, g = objective(w)
    best_f = f
    best_w = w.copy()
    offset = _offset_scale(objective, feasible, w, f)
    trace = [f] if keep_trace else None

    termination = Termination.ITERATION_CAP
    quiet = 0
    done = 0
    for it in range(1, max_iter + 1):
        done = it
        g_sq = float(g @ g)
        if g_sq == 0.0:
            # A zero subgradient certifies a global minimum of a convex
            # objective, feasibility aside; the projection keeps w valid.
            termination = Termination.CONVERGED
            break
        step = (f - best_f + offset / math.sqrt(it)) / g_sq
        w = feasible.project(w - step * g)
        f, g = objective(w)
        if keep_trace:
            trace.append(f)
        if f < best_f - improve_tol:
            quiet = 0
        else:
            quiet += 1
        if f < best_f:
            best_f = f
            best_w = w.copy()
        if quiet >= _QUIET_ITERS:
            if refine and offset > _REFINE_FLOOR * max(1.0, abs(best_f)):
                offset *= _REFINE_SHRINK
                quiet = 0
                continue
            termination = Termination.CONVERGED
            break

    return OptimizeReport(
        w_star=best_w,
        value=best_f,
        iterations=done,
        termination=termination,
        trace=None if trace is None else np.asarray(trace),
    )


def _check_feasible(ball: GelbrichBall, feasible: FeasibleSet) -> None:
    if feasible.dim != ball.dim:
        raise DimMismatch(
            f"feasible set has dimension {feasible.dim} but the ball lives in "
            f"dimension {ball.dim}"
        )


def minimize_linear_gelbrich(
    ball: GelbrichBall,
    alpha: float,
    feasible: FeasibleSet,
    *,
    max_iter: int = _DEFAULT_MAX_ITER,
    keep_trace: bool = False,
) -> OptimizeReport:
    """Minimize the worst-case linear-loss risk over ``feasible``.

    The objective is the closed-form worst-case risk of the loss
    ``-w @ xi``,

        -mu'w + alpha * sqrt(w' cov w)
              + radius * sqrt(1 + alpha^2) * ||w||_{weight^{-1}},

    evaluated exactly as :func:`gelbrisk.linear_risk.gelbrich_risk_linear`
    does, so the reported value agrees with that function at ``w_star``.
    Subgradients use the convention that a term whose denominator
    vanishes (``w' cov w = 0`` or ``||w|| = 0``) contributes zero — a
    valid subgradient choice at the minimum of a norm.

    Parameters
    ----------
    ball : GelbrichBall
        Moment ambiguity ball; a weighted ball changes the norm of the
        robustness term.
    alpha : float
        Nonnegative standard risk coefficient.
    feasible : FeasibleSet
        Constraint set; its dimension must match the ball's.
    max_iter : int, optional
        Iteration cap of the subgradient loop.
    keep_trace : bool, optional
        Record the per-iteration objective values in the report.
    """
    alpha = float(alpha)
    if math.isnan(alpha) or math.isinf(alpha):
        raise NonFinite(f"alpha must be finite, got {alpha}")
    if alpha < 0.0:
        raise NegativeAlpha(f"the risk coefficient must be nonnegative, got {alpha}")
    _check_feasible(ball, feasible)

    mean = ball.center.mean
    cov = ball.center.cov
    lam = ball.radius * math.sqrt(1.0 + alpha * alpha)
    weight = ball.weight

    def objective(w: np.ndarray) -> tuple[float, np.ndarray]:
        cov_w = cov @ w
        deviation = alpha * math.sqrt(max(float(w @ cov_w), 0.0))
        scaled = w if weight is None else np.linalg.solve(weight, w)
        norm = math.sqrt(max(float(w @ scaled), 0.0))
        value = -float(mean @ w) + deviation + lam * norm
        grad = -mean.copy()
        if deviation > 0.0:
            grad += (alpha * alpha / deviation) * cov_w
        if norm > 0.0:
            grad += (lam / norm) * scaled
        return value, grad

    return _best_iterate_descent(objective, feasible, max_iter, keep_trace)


def minimize_tracking(
    ball: GelbrichBall,
    p: int,
    feasible: FeasibleSet,
    *,
    max_iter: int = _DEFAULT_MAX_ITER,
    keep_trace: bool = False,
) -> OptimizeReport:
    """Minimize the worst-case tracking error over ``feasible``.

    The objective is ``sup w' M w`` over the second-moment pairs of the
    ball (``p = 2``) or its square root (``p = 1``), evaluated through
    the moment support function; its subgradient at ``w`` comes from the
    envelope theorem at the worst-case second moment ``M*``:
    ``2 M* w`` for ``p = 2`` and ``M* w / sqrt(value)`` for ``p = 1``.
    At zero radius the supremum collapses to the nominal second moment
    ``cov + mu mu'``, which is used directly (and tolerates a singular
    nominal covariance).

    The natural constraint set is :meth:`FeasibleSet.tracking_simplex`,
    which holds the replicating weights on a simplex and the index
    weight at ``-1``, but any :class:`FeasibleSet` is accepted.  At zero
    radius the objective evaluations are exact quadratics and the
    subgradient loop runs in refined mode (staged offset decay), so an
    exactly replicable index is tracked to its noise floor; at positive
    radius each evaluation already carries the support function's
    root-finding tolerance, so the loop stops at the standard stall.
    """
    if p not in (1, 2):
        raise BadP(f"the tracking exponent must be 1 or 2, got {p!r}")
    _check_feasible(ball, feasible)

    p = int(p)
    radius = ball.radius
    nominal_second = None
    if radius == 0.0:
        nominal_second = ball.center.cov + np.outer(ball.center.mean, ball.center.mean)
    zero_q = np.zeros(ball.dim)

    def objective(w: np.ndarray) -> tuple[float, np.ndarray]:
        if not np.any(w):
            return 0.0, np.zeros_like(w)
        if nominal_second is not None:
            second = nominal_second
            quad = max(float(w @ second @ w), 0.0)
        else:
            result = support_V(ball, SupportQuery(zero_q, np.outer(w, w)))
            second = result.argmax[1]
            quad = max(result.value, 0.0)
        if p == 2:
            return quad, 2.0 * (second @ w)
        root = math.sqrt(quad)
        if root == 0.0:
            return 0.0, np.zeros_like(w)
        return root, (second @ w) / root

    return _best_iterate_descent(
        objective, feasible, max_iter, keep_trace, refine=radius == 0.0
    )
