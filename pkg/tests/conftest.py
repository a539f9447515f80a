"""Shared fixtures: a session-wide contraction audit and closed-form helpers."""
from __future__ import annotations

import math

import numpy as np
import pytest

from levelcraft.apl import record_contractions
from levelcraft.geomsub import Box
from levelcraft.oracle import ConstrainedProblem, ConvexOracle


@pytest.fixture(scope="session", autouse=True)
def contraction_audit():
    """Every gap-reduction call and APL stage pair in the whole suite must contract.

    The factor is 1 - (1 - theta)/2 = (1 + theta)/2 for both event kinds;
    violations are reported at session teardown.
    """
    with record_contractions() as log:
        yield log
    bad = []
    for kind, before, after, theta in log:
        factor = 0.5 * (1.0 + theta)
        if after > factor * before + 1e-9:
            bad.append((kind, before, after, theta))
    assert not bad, f"{len(bad)} contraction violations, first: {bad[0]}"


def desk_value_function(eta: float) -> float:
    """Closed form for the 2-d desk fixture's value function.

    Below eta = -1 the constraint never binds at the minimizer of the
    composite, so the value is -eta; above it the two pieces balance on the
    symmetry line, giving 2 - sqrt(3 + 2 eta). The root is at 1/2.
    """
    if eta <= -1.0:
        return -eta
    return 2.0 - math.sqrt(3.0 + 2.0 * eta)


def desk1d_root_value_function(eta: float) -> float:
    """Closed form for the 1-d root fixture min x^2 s.t. 1/2 - x <= 0 (root at 1/4)."""
    if eta <= -0.5:
        return -eta
    return 0.5 * (2.0 - math.sqrt(3.0 + 4.0 * eta))


def make_root_1d() -> ConstrainedProblem:
    """1-d fixture whose unconstrained minimizer is infeasible: f=x^2, g=1/2-x."""

    def f(x):
        return float(x[0]) ** 2, np.array([2.0 * x[0]])

    def g(x):
        return 0.5 - float(x[0]), np.array([-1.0])

    return ConstrainedProblem(
        objective=ConvexOracle(1, f, "root1d-f"),
        constraints=[ConvexOracle(1, g, "root1d-g")],
        domain=Box.cube(1, 10.0),
        known_fstar=0.25,
        known_multipliers=np.array([1.0]),
        name="root-1d",
    )


def central_diff_gradient(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for j in range(x.shape[0]):
        step = np.zeros_like(x)
        step[j] = h
        grad[j] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return grad
