"""Accelerated Polyak minorant solver for problems with a known optimal value.

One step mixes Nesterov momentum with a projection onto the region where the
linearized objective already reaches the target value and the linearized
constraints are satisfied: the prox subproblem is a nearest-point QP whose
cuts are the composite minorant at the extrapolated point plus whatever the
localizer policy retained from earlier iterations. With the constant
schedule, no constraints, and a free domain the step collapses to the
classic Polyak step-size subgradient update (see :func:`polyak_step`).

A restarted variant (:func:`rapmm_solve`) tightens the per-epoch target
geometrically, which yields faster total complexity under growth conditions.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geomsub import QpProblem, solve_nearest_point
from .oracle import AffineMinorant, ConstrainedProblem, as_vector, composite_values, piece_gap_and_violation
from .report import SolverReport, SubproblemCounters, TraceRecord


class InvalidTargetValue(RuntimeError):
    """The prox subproblem became infeasible: the supplied optimal value is too low."""


@dataclass(frozen=True)
class AccelSchedule:
    """Momentum weights alpha_k and the induced aggregation weights Gamma_k."""

    kind: str  # "nesterov" | "constant"

    def alpha(self, k: int) -> float:
        if k < 1:
            raise ValueError("iteration index starts at 1")
        if self.kind == "nesterov":
            return 2.0 / (k + 1)
        return 1.0

    def gamma(self, k: int) -> float:
        """Gamma_1 = 1, Gamma_k = Gamma_{k-1} / (1 - alpha_k).

        Defined for the Nesterov schedule (closed form k(k+1)/2); the constant
        schedule's analysis does not use Gamma and returns 1.
        """
        if self.kind == "nesterov":
            return k * (k + 1) / 2.0
        return 1.0


def nesterov_schedule() -> AccelSchedule:
    return AccelSchedule("nesterov")


def constant_schedule() -> AccelSchedule:
    """alpha_k = 1: the plain (non-accelerated) Polyak minorant method."""
    return AccelSchedule("constant")


@dataclass(frozen=True)
class LocalizerPolicy:
    """Which objective cuts from past iterations constrain the next prox step.

    All variants keep every optimal solution feasible in the subproblem: each
    retained cut is a valid inequality ell_f(x, z^s) <= fstar at any optimum.
    """

    kind: str  # "domain" | "full" | "limited" | "averaging"
    k0: int = 5

    def __post_init__(self) -> None:
        if self.kind not in ("domain", "full", "limited", "averaging"):
            raise ValueError(f"unknown localizer policy {self.kind!r}")
        if self.kind == "limited" and self.k0 < 1:
            raise ValueError("limited-memory policy needs k0 >= 1")

    def update_bundle(self, bundle: list, cut: AffineMinorant, k: int) -> list:
        """Fold the objective cut from iteration k into the retained bundle."""
        if self.kind == "domain":
            return bundle
        if self.kind == "full":
            return [*bundle, cut]
        if self.kind == "limited":
            new = [*bundle, cut]
            return new[-self.k0:]  # drop oldest first
        # averaging with uniform weights: keep the running mean of all cuts
        if not bundle:
            return [cut]
        mean = bundle[0]
        w = 1.0 / k
        return [AffineMinorant(mean.slope * (1 - w) + cut.slope * w,
                               mean.intercept * (1 - w) + cut.intercept * w)]

    def cut_rows(self, bundle: list, fstar: float) -> list:
        """Bundle as QP rows: ell_f(x, z^s) <= fstar becomes slope @ x <= fstar - intercept."""
        return [(c.slope, fstar - c.intercept) for c in bundle]


def domain_only() -> LocalizerPolicy:
    return LocalizerPolicy("domain")


def full_history() -> LocalizerPolicy:
    return LocalizerPolicy("full")


def limited_memory(k0: int = 5) -> LocalizerPolicy:
    return LocalizerPolicy("limited", k0)


def averaging() -> LocalizerPolicy:
    return LocalizerPolicy("averaging")


@dataclass(frozen=True)
class TheoryParams:
    """Analytical constants of a fixture, for rate-certificate tests only.

    These are suprema/growth constants that no oracle can observe; they are
    never read by any solver. ``rho_tilde >= 1 + rho`` mirrors the growth
    regime the restart analysis covers.
    """

    rho: float
    M_hat: float
    distance0: float
    mu: float = 0.0
    rho_tilde: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.M_hat <= 0:
            raise ValueError("M_hat must be positive")
        if self.rho_tilde < 1.0 + self.rho:
            raise ValueError("growth exponent below 1 + rho is out of scope")

    def accel_rate_bound(self, K: int) -> float:
        """Accelerated-schedule certificate on v(y^K, fstar) after K iterations."""
        rho = self.rho
        return (self.M_hat / (1 + rho) * self.distance0 ** (rho + 1)
                * 2 ** (rho + 1) * 3 ** ((1 - rho) / 2) / K ** ((1 + 3 * rho) / 2))

    def constant_rate_bound(self, K: int) -> float:
        """Constant-schedule certificate on min_k v(x^k, fstar) after K iterations."""
        rho = self.rho
        return self.M_hat / (1 + rho) * self.distance0 ** (rho + 1) / K ** ((1 + rho) / 2)


@dataclass
class ApmmState:
    """One solver iterate: prox point x, best point y, extrapolation z."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    vbar: float           # best composite value so far; non-increasing
    k: int
    bundle: list
    fy: float             # objective value at y
    violy: float          # max positive constraint violation at y


def apmm_init(problem: ConstrainedProblem, x0, fstar: float) -> ApmmState:
    """Evaluate the start point and set y^0 = x^0."""
    x0 = as_vector(x0, problem.dimension)
    values, _ = composite_values(problem, x0, fstar)
    gap, viol = piece_gap_and_violation(values)
    return ApmmState(x=x0, y=x0.copy(), z=x0.copy(), vbar=float(np.max(values)),
                     k=0, bundle=[], fy=gap + fstar, violy=viol)


def apmm_step(state: ApmmState, problem: ConstrainedProblem, fstar: float,
              sched: AccelSchedule, policy: LocalizerPolicy,
              counters: Optional[SubproblemCounters] = None) -> ApmmState:
    """One momentum step of the minorant method.

    Raises :class:`InvalidTargetValue` if the prox QP is infeasible, which
    cannot happen when ``fstar`` is attained by the problem (the optimum is
    always feasible for every cut).
    """
    k = state.k + 1
    alpha = sched.alpha(k)
    z = (1 - alpha) * state.y + alpha * state.x
    values_z, pieces = composite_values(problem, z, fstar)
    rows = [(p.slope, -p.intercept) for p in pieces]  # v_ell(x, z, fstar) <= 0
    rows.extend(policy.cut_rows(state.bundle, fstar))
    qp = QpProblem(center=state.x, cuts=rows, box=problem.domain)
    sol = solve_nearest_point(qp)
    if counters is not None:
        counters.qp_solves += 1
    if sol.status != "optimal":
        raise InvalidTargetValue(
            "prox subproblem infeasible; the supplied optimal value lies below the true optimum")
    x_new = sol.point
    y_tilde = (1 - alpha) * state.y + alpha * x_new
    values_t, _ = composite_values(problem, y_tilde, fstar)
    v_tilde = float(np.max(values_t))
    if v_tilde < state.vbar:
        gap, viol = piece_gap_and_violation(values_t)
        y_new, vbar, fy, violy = y_tilde, v_tilde, gap + fstar, viol
    else:  # ties keep the previous best for stability
        y_new, vbar, fy, violy = state.y, state.vbar, state.fy, state.violy
    objective_cut = AffineMinorant(pieces[0].slope, pieces[0].intercept + fstar)
    bundle = policy.update_bundle(state.bundle, objective_cut, k)
    return ApmmState(x=x_new, y=y_new, z=z, vbar=vbar, k=k, bundle=bundle,
                     fy=fy, violy=violy)


def polyak_step(problem: ConstrainedProblem, x, fstar: float) -> np.ndarray:
    """Closed-form Polyak update x - max(0, f(x) - fstar) / ||f'(x)||^2 * f'(x).

    Equals one constant-schedule step on an unconstrained problem with a free
    domain; exposed for the reduction check and as a baseline.
    """
    x = as_vector(x, problem.dimension)
    val, grad = problem.objective.evaluate(x)
    excess = val - fstar
    gg = float(grad @ grad)
    if excess <= 0.0:
        return x.copy()
    if gg <= 1e-300:
        raise InvalidTargetValue("zero subgradient above the claimed optimal value")
    return x - (excess / gg) * grad


def _default_start(problem: ConstrainedProblem) -> np.ndarray:
    # box center when available; otherwise the origin clipped into the box so
    # pinned coordinates are honored
    if problem.domain.is_finite():
        return problem.domain.center()
    return problem.domain.clip(np.zeros(problem.dimension))


def _record(problem: ConstrainedProblem, state: ApmmState, fstar: float,
            base_evals: int, base_grads: int, counters: SubproblemCounters) -> TraceRecord:
    return TraceRecord(
        iter=state.k, eta=fstar, lower=None, upper=state.vbar,
        obj_gap=state.fy - fstar, violation=state.violy,
        fevals=problem.total_evals - base_evals,
        gevals=problem.total_grads - base_grads,
        qp_solves=counters.qp_solves, lp_solves=counters.lp_solves,
    )


def apmm_solve(problem: ConstrainedProblem, fstar: float, eps: float,
               sched: Optional[AccelSchedule] = None,
               policy: Optional[LocalizerPolicy] = None,
               max_iters: int = 5000,
               x0=None,
               counters: Optional[SubproblemCounters] = None) -> "tuple[np.ndarray, SolverReport]":
    """Run the minorant method until v(y, fstar) <= eps.

    Returns the best iterate and a report; status "max_iters" means the
    budget ran out and the best iterate is returned uncertified.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    sched = sched or nesterov_schedule()
    policy = policy or limited_memory()
    counters = counters if counters is not None else SubproblemCounters()
    if x0 is None:
        x0 = _default_start(problem)
    t0 = time.perf_counter()
    base_evals, base_grads = problem.total_evals, problem.total_grads
    state = apmm_init(problem, x0, fstar)
    records = [_record(problem, state, fstar, base_evals, base_grads, counters)]
    while state.vbar > eps and state.k < max_iters:
        state = apmm_step(state, problem, fstar, sched, policy, counters)
        records.append(_record(problem, state, fstar, base_evals, base_grads, counters))
    status = "converged" if state.vbar <= eps else "max_iters"
    report = SolverReport(algorithm=f"apmm[{sched.kind}]", status=status,
                          records=records, wall_time=time.perf_counter() - t0)
    return state.y, report


def rapmm_solve(problem: ConstrainedProblem, fstar: float, theta: float, eps: float,
                sched: Optional[AccelSchedule] = None,
                policy: Optional[LocalizerPolicy] = None,
                max_epochs: int = 200,
                inner_max_iters: int = 5000,
                x0=None,
                counters: Optional[SubproblemCounters] = None) -> "tuple[np.ndarray, SolverReport]":
    """Restarted variant: epoch s targets Delta_0 * theta^(s+1).

    Delta_0 = max{f(q^0) - fstar, ||[g(q^0)]_+||_inf}, taken verbatim, so an
    infeasible start is driven by its constraint violation.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    sched = sched or nesterov_schedule()
    policy = policy or limited_memory()
    counters = counters if counters is not None else SubproblemCounters()
    if x0 is None:
        x0 = _default_start(problem)
    q = as_vector(x0, problem.dimension)
    t0 = time.perf_counter()
    base_evals, base_grads = problem.total_evals, problem.total_grads

    values, _ = composite_values(problem, q, fstar)
    gap, viol = piece_gap_and_violation(values)
    delta0 = max(gap, viol)
    v_now = float(np.max(values))

    def epoch_record(s: int) -> TraceRecord:
        return TraceRecord(iter=s, eta=fstar, lower=None, upper=v_now,
                           obj_gap=gap, violation=viol,
                           fevals=problem.total_evals - base_evals,
                           gevals=problem.total_grads - base_grads,
                           qp_solves=counters.qp_solves, lp_solves=counters.lp_solves)

    records = [epoch_record(0)]
    status = "converged"
    s = 0
    while v_now > eps:
        if s >= max_epochs:
            status = "max_epochs"
            break
        target = max(delta0 * theta ** (s + 1), eps)
        q, inner = apmm_solve(problem, fstar, target, sched, policy,
                              max_iters=inner_max_iters, x0=q, counters=counters)
        if not inner.converged:
            status = "max_iters"
            break
        s += 1
        values, _ = composite_values(problem, q, fstar)
        gap, viol = piece_gap_and_violation(values)
        v_now = float(np.max(values))
        records.append(epoch_record(s))
    report = SolverReport(algorithm="rapmm", status=status, records=records,
                          wall_time=time.perf_counter() - t0)
    return q, report
