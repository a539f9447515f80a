"""First-order convex oracles, linear minorants, and the level composite.

Everything downstream (the momentum solvers, the gap-reduction engine, the
level-set root finders) talks to problems exclusively through this module:
a problem is one objective oracle plus m constraint oracles over a box
domain, and every oracle call returns a (value, subgradient) pair while
bumping the call counters that the reports use as the complexity measure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np

if TYPE_CHECKING:  # Box lives in geomsub; import only for annotations to avoid a cycle
    from .geomsub import Box

Vector = np.ndarray
EvalFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class OracleFailure(RuntimeError):
    """An oracle was fed, or produced, a non-finite number."""


def as_vector(x, dimension: Optional[int] = None) -> np.ndarray:
    """Coerce to a finite float64 vector, optionally checking its length."""
    arr = np.ascontiguousarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if dimension is not None and arr.shape[0] != dimension:
        raise ValueError(f"expected dimension {dimension}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise OracleFailure("non-finite entries in vector crossing an oracle boundary")
    return arr


class ConvexOracle:
    """Black-box convex function with paired (value, subgradient) evaluation.

    One call to :meth:`evaluate` counts as one function evaluation plus one
    gradient evaluation; the pair is never split, which keeps the reported
    oracle complexity well defined.
    """

    def __init__(self, dimension: int, fn: EvalFn, name: str = "") -> None:
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = int(dimension)
        self.name = name
        self._fn = fn
        self.eval_count = 0
        self.grad_count = 0

    def evaluate(self, x) -> "tuple[float, np.ndarray]":
        x = as_vector(x, self.dimension)
        value, grad = self._fn(x)
        value = float(value)
        grad = np.ascontiguousarray(grad, dtype=float)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise OracleFailure(f"oracle {self.name or '<anon>'} returned a non-finite result")
        if grad.shape != (self.dimension,):
            raise OracleFailure(f"oracle {self.name or '<anon>'} returned a subgradient of wrong shape")
        self.eval_count += 1
        self.grad_count += 1
        return value, grad

    def reset_counters(self) -> None:
        self.eval_count = 0
        self.grad_count = 0

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"ConvexOracle(dim={self.dimension}, name={self.name!r})"


@dataclass(frozen=True)
class AffineMinorant:
    """Affine under-estimator ``x -> slope @ x + intercept`` of a convex function."""

    slope: np.ndarray
    intercept: float

    def value_at(self, x) -> float:
        return float(self.slope @ np.asarray(x, dtype=float) + self.intercept)

    def shifted(self, delta: float) -> "AffineMinorant":
        """Same slope, intercept moved by ``delta``."""
        return AffineMinorant(self.slope, self.intercept + delta)


@dataclass(frozen=True)
class CompositeEval:
    """Value of the level composite, the index of an attaining piece, and its subgradient.

    Piece 0 is the objective-minus-level term; pieces 1..m are the constraints.
    Ties go to the lowest index, which keeps runs reproducible.
    """

    value: float
    active_index: int
    subgradient: np.ndarray


@dataclass
class ConstrainedProblem:
    """Convex objective, m convex inequality constraints, and a box domain.

    ``known_fstar`` / ``known_multipliers`` are fixture metadata for tests and
    for solvers that require the optimal value; they are never inferred.
    A problem instance is used by one solver run at a time (the counters are
    the only mutable state); distinct instances may run in parallel.
    """

    objective: ConvexOracle
    constraints: list
    domain: "Box"
    known_fstar: Optional[float] = None
    known_multipliers: Optional[np.ndarray] = None
    name: str = ""
    meta: object = None  # generator-specific instance record (planted solutions etc.)

    def __post_init__(self) -> None:
        dim = self.objective.dimension
        for g in self.constraints:
            if g.dimension != dim:
                raise ValueError("all oracles must share one dimension")
        if self.domain.dimension != dim:
            raise ValueError("domain dimension does not match the oracles")
        if self.known_multipliers is not None:
            mult = np.asarray(self.known_multipliers, dtype=float)
            if mult.shape != (len(self.constraints),):
                raise ValueError("known_multipliers must have one entry per constraint")
            if np.any(mult < 0):
                raise ValueError("known_multipliers must be elementwise nonnegative")
            self.known_multipliers = mult

    @property
    def dimension(self) -> int:
        return self.objective.dimension

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def oracles(self) -> list:
        return [self.objective, *self.constraints]

    @property
    def total_evals(self) -> int:
        return sum(o.eval_count for o in self.oracles())

    @property
    def total_grads(self) -> int:
        return sum(o.grad_count for o in self.oracles())

    def reset_counters(self) -> None:
        for o in self.oracles():
            o.reset_counters()


def minorant_at(h: ConvexOracle, y) -> AffineMinorant:
    """Linear minorant of ``h`` built from one oracle call at ``y``.

    The returned affine function touches ``h`` at ``y`` and lies below it
    everywhere else by convexity.
    """
    y = as_vector(y, h.dimension)
    value, grad = h.evaluate(y)
    return AffineMinorant(grad, value - float(grad @ y))


def composite_values(p: ConstrainedProblem, x, eta: float) -> "tuple[np.ndarray, list[AffineMinorant]]":
    """Evaluate every oracle once at ``x``.

    Returns the m+1 piece values of the level composite (objective piece first,
    already shifted by ``-eta``) together with the matching linear minorants.
    Shared by :func:`eval_composite` and :func:`composite_minorant` so a caller
    needing both pays for a single oracle pass.
    """
    x = as_vector(x, p.dimension)
    values = np.empty(p.num_constraints + 1)
    minorants = []
    fval, fgrad = p.objective.evaluate(x)
    values[0] = fval - eta
    minorants.append(AffineMinorant(fgrad, fval - float(fgrad @ x) - eta))
    for i, g in enumerate(p.constraints):
        gval, ggrad = g.evaluate(x)
        values[i + 1] = gval
        minorants.append(AffineMinorant(ggrad, gval - float(ggrad @ x)))
    return values, minorants


def eval_composite(p: ConstrainedProblem, x, eta: float) -> CompositeEval:
    """Evaluate the level composite max{f(x) - eta, g_1(x), ..., g_m(x)}."""
    values, minorants = composite_values(p, x, eta)
    active = int(np.argmax(values))  # argmax returns the first maximizer: lowest index on ties
    return CompositeEval(float(values[active]), active, minorants[active].slope)


def composite_minorant(p: ConstrainedProblem, center, eta: float) -> "list[AffineMinorant]":
    """All m+1 linear minorant pieces of the level composite, built at ``center``.

    Piece 0 under-estimates f(.) - eta; pieces 1..m under-estimate the
    constraints, so the max over pieces minorizes the composite itself.
    """
    _, minorants = composite_values(p, center, eta)
    return minorants


def piece_gap_and_violation(values: np.ndarray) -> "tuple[float, float]":
    """Split composite piece values into (objective piece, max positive constraint)."""
    viol = float(np.max(values[1:], initial=0.0))
    return float(values[0]), max(0.0, viol)


def check_convexity_witness(h: ConvexOracle, points: Sequence, tol: float = 1e-9) -> float:
    """Largest violation of the subgradient inequality over all ordered point pairs.

    For a convex ``h`` the result should not exceed ``tol`` (up to rounding);
    used by tests as a cheap convexity certificate for generated oracles.
    """
    pts = [as_vector(q, h.dimension) for q in points]
    evals = [h.evaluate(q) for q in pts]
    worst = 0.0
    for j, (vy, gy) in enumerate(evals):
        for i, (vx, _) in enumerate(evals):
            if i == j:
                continue
            gap = vy + float(gy @ (pts[i] - pts[j])) - vx
            worst = max(worst, gap)
    return worst
