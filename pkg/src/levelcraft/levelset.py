"""Root-finding layer: locate the optimal value as the smallest root of V.

``V(eta)`` (the minimum of the level composite over the domain) is convex,
non-increasing, and 1-Lipschitz, and its smallest root is the optimal value
of the constrained problem. The solvers here never see V exactly: each outer
iteration asks the APL engine for a certified bracket 0 < l <= V(eta) <= u
with u <= alpha * l, then pushes the level up by beta * l (fixed point) or by
a truncated finite-difference multiple of it (secant). Both drive the level
monotonically up to the optimal value from below and stop once u <= eps,
which certifies an eps-optimal point.

The outer iteration is written against an abstract bound oracle so the
contraction behavior can be unit-tested with synthetic bracket sequences.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .apl import run_apl
from .geomsub import LpProblem, solve_epigraph_lp
from .oracle import ConstrainedProblem, as_vector, composite_values, piece_gap_and_violation
from .report import SolverReport, SubproblemCounters, TraceRecord

_LOWER_FLOOR = 1e-14  # lower bounds below this trigger the numeric exit
_SECANT_MULT_CAP = 1e8


@dataclass(frozen=True)
class LevelIterate:
    """One outer iteration: level eta, certified bracket [l, u], and the iterate."""

    t: int
    eta: float
    l: float
    u: float
    x: np.ndarray
    ltilde_used: float


@dataclass(frozen=True)
class InitResult:
    x: np.ndarray
    eta0: float
    l0: float  # -inf when already near-optimal
    flag: str  # "near_optimal" | "root_finding"


@dataclass(frozen=True)
class LevelConfig:
    """Parameters of the level-set solvers; violations are rejected up front."""

    alpha: float
    beta: float
    nu: float
    eps: float
    method: str  # "fixed_point" | "secant"
    bundle: int = 5
    max_outer: Optional[int] = None

    def __post_init__(self) -> None:
        if self.method not in ("fixed_point", "secant"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.5 < self.nu < 1.0:
            raise ValueError("nu must lie in (1/2, 1)")
        if self.bundle < 1:
            raise ValueError("bundle size must be at least 1")
        if self.method == "secant":
            if not 0.5 < self.beta <= 1.0:
                raise ValueError("secant method requires beta in (1/2, 1]")
            if not 1.0 < self.alpha < 2.0 * math.sqrt(self.beta):
                raise ValueError("secant method requires alpha in (1, 2*sqrt(beta))")
        else:
            if not 0.0 < self.beta < 1.0:
                raise ValueError("fixed-point method requires beta in (0, 1)")
            if self.alpha <= 1.0:
                raise ValueError("alpha must exceed 1")

    @property
    def theta(self) -> float:
        return 2.0 * self.nu - 1.0


@dataclass(frozen=True)
class BoundEval:
    """Bound-oracle answer: new iterate and a certified bracket, plus telemetry."""

    x: np.ndarray
    l: float
    u: float
    obj_gap: float = 0.0   # objective piece f(x) - eta at the iterate
    violation: float = 0.0


BoundOracle = Callable[[np.ndarray, float, float], BoundEval]


def fixed_point_multiplier() -> float:
    return 1.0


def secant_multiplier(eta_prev2: float, eta_prev: float, u_prev2: float, l_prev: float) -> float:
    """Truncated secant step factor max{1, -(eta_{t-2}-eta_{t-1}) / (u_{t-2}-l_{t-1})}.

    The denominator is positive in exact arithmetic (V is strictly decreasing
    left of the root); a collapsed denominator is capped rather than allowed
    to produce an infinite step, which only ever shortens the update.
    """
    denom = u_prev2 - l_prev
    if denom <= _LOWER_FLOOR:
        return _SECANT_MULT_CAP
    return min(max(1.0, (eta_prev - eta_prev2) / denom), _SECANT_MULT_CAP)


def warm_lower_bound_fixed_point(t: int, l_prev: float, l_prev2: float,
                                 u_prev2: float, beta: float) -> float:
    """l~_t = max{1 - beta, (1 + (l_{t-1} - u_{t-2}) / l_{t-2}) * 1(t >= 2)} * l_{t-1}."""
    second = (1.0 + (l_prev - u_prev2) / l_prev2) if t >= 2 else 0.0
    return max(1.0 - beta, second) * l_prev


def warm_lower_bound_secant(l_prev: float, beta: float) -> float:
    return (1.0 - beta) * l_prev


def iterate_levels(method: str, eta0: float, l0: float, u0: float, x0,
                   alpha: float, beta: float, eps: float,
                   bound_oracle: BoundOracle, max_outer: int) -> "tuple[list, str]":
    """Abstract root-finding outer loop over a pluggable bound oracle.

    Runs the fixed-point or truncated-secant level updates against whatever
    produces brackets (the APL engine in production, synthetic sequences in
    unit tests). Returns the LevelIterate history and a status string.
    """
    x0 = np.asarray(x0, dtype=float)
    iterates = [LevelIterate(0, eta0, l0, u0, x0, l0)]
    etas, ls, us, xs = [eta0], [l0], [u0], [x0]
    if u0 <= eps:
        return iterates, "converged"
    t = 0
    while us[-1] > eps:
        if t >= max_outer:
            return iterates, "max_iters"
        t += 1
        if method == "secant" and t >= 2:
            mult = secant_multiplier(etas[-2], etas[-1], us[-2], ls[-1])
        else:
            mult = fixed_point_multiplier()  # the first secant step is a fixed-point step
        eta_t = etas[-1] + beta * mult * ls[-1]
        if method == "secant":
            warm = warm_lower_bound_secant(ls[-1], beta)
        else:
            warm = warm_lower_bound_fixed_point(t, ls[-1], ls[-2] if t >= 2 else ls[-1],
                                                us[-2] if t >= 2 else us[-1], beta)
        ans = bound_oracle(xs[-1], warm, eta_t)
        etas.append(eta_t)
        ls.append(ans.l)
        us.append(ans.u)
        xs.append(ans.x)
        iterates.append(LevelIterate(t, eta_t, ans.l, ans.u, ans.x, warm))
        if ans.u > eps and ans.l <= _LOWER_FLOOR:
            return iterates, "stalled"
    return iterates, "converged"


def _objective_only(problem: ConstrainedProblem) -> ConstrainedProblem:
    # shares the objective oracle so its evaluations keep counting
    return ConstrainedProblem(problem.objective, [], problem.domain)


def _minimize_objective(problem: ConstrainedProblem, eps: float, bundle_cap: int,
                        counters: SubproblemCounters, x0=None):
    """eps-minimizer of the objective over the box via gap reduction at level 0.

    Repeats gap-reduction stages on the constraint-free problem with
    absolute-gap stopping: on exit f(x) - min f <= u - l <= eps.
    """
    from .apl import run_gap_reduction  # local import keeps module load order simple

    sub = _objective_only(problem)
    x = as_vector(x0, problem.dimension) if x0 is not None else problem.domain.center()
    values, pieces = composite_values(sub, x, 0.0)
    u = float(values[0])
    lp = LpProblem(pieces=pieces, cuts=[], box=problem.domain)
    sol = solve_epigraph_lp(lp)
    counters.lp_solves += 1
    l = sol.value
    while u - l > eps:
        res = run_gap_reduction(sub, x, l, 0.0, 0.5, bundle_cap=bundle_cap, counters=counters)
        x = res.p
        l = res.vL_out
        u = res.vU_out
    return x, u


def initialize(problem: ConstrainedProblem, alpha: float, eps: float, *,
               bundle_cap: int = 5, counters: Optional[SubproblemCounters] = None,
               x0=None) -> InitResult:
    """Find either a near-optimal point or a strictly-below-optimum start level.

    First computes an eps-minimizer of the objective alone; if it is
    eps-feasible the problem is solved (a feasible objective minimizer is
    optimal up to eps). Otherwise its objective value is a level strictly
    below the optimal value, and one APL run at that level either certifies
    near-optimality (u <= eps, a 2*eps-optimal point) or delivers a positive
    lower bound on V to seed the root finders.
    """
    if not problem.domain.is_finite():
        raise ValueError("initialization requires a finite domain box")
    counters = counters if counters is not None else SubproblemCounters()
    x_tilde, eta0 = _minimize_objective(problem, eps, bundle_cap, counters, x0=x0)
    values, pieces = composite_values(problem, x_tilde, eta0)
    g_max = float(np.max(values[1:], initial=-np.inf))
    if g_max <= eps:
        return InitResult(x_tilde, eta0, -math.inf, "near_optimal")
    lp = LpProblem(pieces=pieces, cuts=[], box=problem.domain)
    sol = solve_epigraph_lp(lp)
    counters.lp_solves += 1
    res = run_apl(problem, x_tilde, sol.value, eta0, 0.5, alpha, eps,
                  bundle_cap=bundle_cap, counters=counters)
    if res.ubar <= eps:
        return InitResult(res.x, eta0, -math.inf, "near_optimal")
    return InitResult(res.x, eta0, res.lbar, "root_finding")


def _solve_by_levels(problem: ConstrainedProblem, cfg: LevelConfig,
                     algorithm: str) -> "tuple[np.ndarray, SolverReport]":
    counters = SubproblemCounters()
    t0 = time.perf_counter()
    base_evals, base_grads = problem.total_evals, problem.total_grads

    def record(t, eta, lower, upper, gap, viol):
        return TraceRecord(iter=t, eta=eta, lower=lower, upper=upper,
                           obj_gap=gap, violation=viol,
                           fevals=problem.total_evals - base_evals,
                           gevals=problem.total_grads - base_grads,
                           qp_solves=counters.qp_solves, lp_solves=counters.lp_solves)

    init = initialize(problem, cfg.alpha, cfg.eps, bundle_cap=cfg.bundle, counters=counters)
    if init.flag == "near_optimal":
        values, _ = composite_values(problem, init.x, init.eta0)
        gap, viol = piece_gap_and_violation(values)
        rep = SolverReport(algorithm=algorithm, status="converged",
                           records=[record(0, init.eta0, None, float(np.max(values)), gap, viol)],
                           wall_time=time.perf_counter() - t0,
                           level_iterates=[LevelIterate(0, init.eta0, -math.inf,
                                                        float(np.max(values)), init.x, -math.inf)])
        return init.x, rep

    values, _ = composite_values(problem, init.x, init.eta0)
    u0 = float(np.max(values))
    gap0, viol0 = piece_gap_and_violation(values)
    records = [record(0, init.eta0, init.l0, u0, gap0, viol0)]
    outer_t = 0

    def bound_oracle(x_prev, warm, eta_t) -> BoundEval:
        nonlocal outer_t
        res = run_apl(problem, x_prev, warm, eta_t, cfg.theta, cfg.alpha, cfg.eps,
                      bundle_cap=cfg.bundle, counters=counters)
        gap, viol = piece_gap_and_violation(res.final_values)
        outer_t += 1
        records.append(record(outer_t, eta_t, res.lbar, res.ubar, gap, viol))
        return BoundEval(res.x, res.lbar, res.ubar, gap, viol)

    max_outer = cfg.max_outer
    if max_outer is None:
        max_outer = 10 * max(1, math.ceil(math.log(max(u0 / cfg.eps, 2.0))))
    iterates, status = iterate_levels(cfg.method, init.eta0, init.l0, u0, init.x,
                                      cfg.alpha, cfg.beta, cfg.eps, bound_oracle, max_outer)
    rep = SolverReport(algorithm=algorithm, status=status, records=records,
                       wall_time=time.perf_counter() - t0, level_iterates=iterates)
    return iterates[-1].x, rep


def fixed_point_solve(problem: ConstrainedProblem, cfg: LevelConfig) -> "tuple[np.ndarray, SolverReport]":
    """Level search with eta_{t} = eta_{t-1} + beta * l_{t-1}."""
    if cfg.method != "fixed_point":
        raise ValueError("config method must be 'fixed_point'")
    return _solve_by_levels(problem, cfg, "apl-fixed-point")


def secant_solve(problem: ConstrainedProblem, cfg: LevelConfig) -> "tuple[np.ndarray, SolverReport]":
    """Level search with the truncated secant step (first step fixed-point)."""
    if cfg.method != "secant":
        raise ValueError("config method must be 'secant'")
    return _solve_by_levels(problem, cfg, "apl-secant")


def probe_value_function(problem: ConstrainedProblem, etas, rel_alpha: float,
                         *, floor: float = 1e-6, bundle_cap: int = 5,
                         counters: Optional[SubproblemCounters] = None) -> list:
    """Certified brackets [l, u] around V(eta) on a grid of levels.

    Each level runs APL from the box center until the bracket is relatively
    tight (u <= rel_alpha * l) or absolutely small (u <= floor); both sides
    of every returned bracket contain V(eta). Grid points are independent
    runs and could execute in parallel on cloned problems; this evaluates
    them sequentially.
    """
    if rel_alpha <= 1.0:
        raise ValueError("rel_alpha must exceed 1")
    counters = counters if counters is not None else SubproblemCounters()
    x0 = problem.domain.center()
    out = []
    for eta in etas:
        eta = float(eta)
        _, pieces = composite_values(problem, x0, eta)
        lp = LpProblem(pieces=pieces, cuts=[], box=problem.domain)
        sol = solve_epigraph_lp(lp)
        counters.lp_solves += 1
        res = run_apl(problem, x0, sol.value, eta, 0.5, rel_alpha, floor,
                      bundle_cap=bundle_cap, counters=counters)
        out.append((eta, res.lbar, res.ubar))
    return out
