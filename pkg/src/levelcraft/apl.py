"""Gap reduction and the accelerated proximal level (APL) loop.

``run_gap_reduction`` shrinks a certified bracket [vL, vU] around the value
function V(eta) by a fixed factor: lower bounds come from epigraph LPs over a
localizer built of cutting planes, upper bounds from momentum iterates whose
prox steps project the stage's start point onto the level set of the current
minorant. ``run_apl`` restarts gap reduction until the bracket is either
relatively tight (u <= alpha * l) or absolutely small (u <= eps) — exactly
the contract the level-set root finders need from their inner solver.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geomsub import LpProblem, QpProblem, SubproblemFailure, solve_epigraph_lp, solve_nearest_point
from .oracle import ConstrainedProblem, as_vector, composite_values
from .report import SubproblemCounters

# Active contraction recorders; every gap-reduction call and APL stage pair
# appends its certified contraction so test suites can audit all of them.
_RECORDERS: list = []


@contextmanager
def record_contractions():
    """Collect ("gap"|"stage", before, after, theta) tuples from nested runs."""
    log: list = []
    _RECORDERS.append(log)
    try:
        yield log
    finally:
        # match by identity: distinct recorders can hold equal content
        for i, item in enumerate(_RECORDERS):
            if item is log:
                del _RECORDERS[i]
                break


def _emit(kind: str, before: float, after: float, theta: float) -> None:
    for log in _RECORDERS:
        log.append((kind, before, after, theta))


@dataclass
class GapState:
    """Loop state of one gap-reduction run (prox center is fixed for the run)."""

    prox_center: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    vL: float
    vU: float
    lam: float
    k: int
    theta: float
    halfspace: Optional[tuple] = None       # single most recent localizer halfspace
    level_sets: list = field(default_factory=list)  # newest minorant cut sets, capped


@dataclass(frozen=True)
class GapResult:
    p: np.ndarray
    vL_out: float
    iterations: int
    exit: str            # "lower_raised" | "upper_dropped"
    vU_out: float
    input_gap: float
    output_gap: float
    x_history: list
    lower_history: list
    localizer_checks: list  # (max localizer-row violation at x^k, halfspace inner product)


def _localizer_rows(state: GapState) -> list:
    rows = []
    if state.halfspace is not None:
        rows.append(state.halfspace)
    for cut_set in state.level_sets:
        rows.extend(cut_set)
    return rows


def run_gap_reduction(problem: ConstrainedProblem, x_in, l_in: float, eta: float,
                      theta: float, *, bundle_cap: int = 5,
                      counters: Optional[SubproblemCounters] = None,
                      max_iters: int = 100_000) -> GapResult:
    """One bracket-shrinking stage around V(eta), guessing the level lambda.

    Requires ``l_in <= V(eta)`` and a finite domain box. The output bracket
    satisfies vU_out - vL_out <= (1 - (1-theta)/2) * (input gap), the lower
    bound never exceeds V(eta), and the returned point attains vU_out.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if not problem.domain.is_finite():
        raise SubproblemFailure("gap reduction requires a finite domain box")
    counters = counters if counters is not None else SubproblemCounters()
    x0 = as_vector(x_in, problem.dimension)
    values0, _ = composite_values(problem, x0, eta)
    u_tilde = float(np.max(values0))
    input_gap = u_tilde - l_in
    if input_gap <= 1e-14:  # bracket already closed, nothing to reduce
        return GapResult(x0.copy(), l_in, 0, "lower_raised", u_tilde, input_gap,
                         input_gap, [x0.copy()], [l_in], [])
    state = GapState(prox_center=x0, x=x0.copy(), y=x0.copy(), z=x0.copy(),
                     vL=l_in, vU=u_tilde, lam=0.5 * (l_in + u_tilde), k=1, theta=theta)
    lam = state.lam
    x_history = [x0.copy()]
    lower_history = [l_in]
    checks = []
    while True:
        if state.k > max_iters:
            raise SubproblemFailure("gap reduction exceeded its iteration guard")
        alpha_k = 2.0 / (state.k + 1)
        state.z = (1 - alpha_k) * state.y + alpha_k * state.x
        _, pieces = composite_values(problem, state.z, eta)
        loc_rows = _localizer_rows(state)
        lp = LpProblem(pieces=pieces, cuts=loc_rows, box=problem.domain)
        lp_sol = solve_epigraph_lp(lp)
        counters.lp_solves += 1
        h_k = lp_sol.value  # +inf when the localizer is empty, which forces the exit below
        state.vL = max(state.vL, min(lam, h_k))
        lower_history.append(state.vL)
        if state.vL >= lam - theta * (lam - l_in):
            out_u = state.vU
            result = GapResult(state.y.copy(), state.vL, state.k, "lower_raised",
                               out_u, input_gap, out_u - state.vL, x_history,
                               lower_history, checks)
            _emit("gap", input_gap, result.output_gap, theta)
            return result
        level_rows = [(p.slope, lam - p.intercept) for p in pieces]
        qp = QpProblem(center=x0, cuts=[*loc_rows, *level_rows], box=problem.domain)
        qp_sol = solve_nearest_point(qp)
        counters.qp_solves += 1
        if qp_sol.status != "optimal":
            raise SubproblemFailure(
                "level projection infeasible after the lower-bound test; "
                "this indicates an invalid input lower bound")
        x_new = qp_sol.point
        # audit trail: x^k must lie in the previous localizer, and the chain
        # product <x^{k-1} - x^0, x^k - x^{k-1}> must be nonnegative
        row_viol = max((float(s @ x_new) - r for s, r in loc_rows), default=0.0)
        normal = x_new - x0
        checks.append((max(row_viol, 0.0), float((state.x - x0) @ (x_new - state.x))))
        x_history.append(x_new.copy())
        # localizer update: single fresh halfspace + the newest level cut sets
        if float(normal @ normal) > 1e-28:
            state.halfspace = (-normal, -float(normal @ x_new))
        else:
            state.halfspace = None
        state.level_sets.append(level_rows)
        if len(state.level_sets) > bundle_cap:
            state.level_sets = state.level_sets[-bundle_cap:]
        y_tilde = alpha_k * x_new + (1 - alpha_k) * state.y
        values_t, _ = composite_values(problem, y_tilde, eta)
        v_k = float(np.max(values_t))
        if v_k < state.vU:
            state.vU = v_k
            state.y = y_tilde
        if v_k - lam <= theta * (u_tilde - lam):
            result = GapResult(state.y.copy(), state.vL, state.k, "upper_dropped",
                               state.vU, input_gap, state.vU - state.vL, x_history,
                               lower_history, checks)
            _emit("gap", input_gap, result.output_gap, theta)
            return result
        state.x = x_new
        state.k += 1


@dataclass(frozen=True)
class AplStage:
    lbar: float
    ubar: float
    gap_iterations: int
    gap_exit: str


@dataclass(frozen=True)
class AplResult:
    x: np.ndarray
    lbar: float
    ubar: float
    stages: list
    wall_time: float
    final_values: Optional[np.ndarray] = None  # composite piece values at x

    @property
    def gap(self) -> float:
        return self.ubar - self.lbar


def run_apl(problem: ConstrainedProblem, x_in, lbar0: float, eta: float, theta: float,
            alpha: float, eps: float, *, bundle_cap: int = 5,
            counters: Optional[SubproblemCounters] = None,
            max_stages: int = 1000) -> AplResult:
    """Repeat gap reduction until u <= alpha * l or u <= eps.

    ``lbar0`` must be a valid lower bound on V(eta) (it may be nonpositive;
    stages will raise it). On exit either ubar <= eps, or the bracket obeys
    the relative-accuracy contract lbar <= V(eta) <= ubar <= alpha * lbar.
    """
    if alpha <= 1.0:
        raise ValueError("alpha must exceed 1")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    counters = counters if counters is not None else SubproblemCounters()
    t0 = time.perf_counter()
    x = as_vector(x_in, problem.dimension)
    values, _ = composite_values(problem, x, eta)
    ubar = float(np.max(values))
    lbar = float(lbar0)
    stages: list = []
    while ubar - lbar > (alpha - 1.0) / alpha * ubar and ubar > eps:
        if len(stages) >= max_stages:
            raise SubproblemFailure("APL exceeded its stage guard")
        gap_before = ubar - lbar
        res = run_gap_reduction(problem, x, lbar, eta, theta,
                                bundle_cap=bundle_cap, counters=counters)
        x = res.p
        lbar = res.vL_out
        values, _ = composite_values(problem, x, eta)
        ubar = float(np.max(values))
        stages.append(AplStage(lbar, ubar, res.iterations, res.exit))
        if gap_before > 1e-12:
            _emit("stage", gap_before, ubar - lbar, theta)
    return AplResult(x, lbar, ubar, stages, time.perf_counter() - t0, final_values=values)
