import math

import numpy as np
import pytest

from levelcraft.apmm import (AccelSchedule, InvalidTargetValue, TheoryParams, apmm_init,
                             apmm_solve, apmm_step, averaging, constant_schedule, domain_only,
                             full_history, limited_memory, nesterov_schedule, polyak_step,
                             rapmm_solve)
from levelcraft.geomsub import Box
from levelcraft.oracle import AffineMinorant, ConstrainedProblem, ConvexOracle, eval_composite
from levelcraft.problems import make_desk_qcqp, make_sharp_fixture, make_smooth_quadratic

ALL_POLICIES = [domain_only(), full_history(), limited_memory(5), averaging()]


def square_problem():
    return ConstrainedProblem(
        ConvexOracle(1, lambda x: (float(x[0]) ** 2, np.array([2.0 * x[0]]))),
        [], Box.unbounded(1), known_fstar=0.0)


def test_nesterov_schedule_values_and_recursion():
    s = nesterov_schedule()
    assert s.alpha(1) == 1.0
    assert s.alpha(3) == pytest.approx(0.5)
    gamma = 1.0
    for k in range(2, 10_001):
        gamma = gamma / (1.0 - s.alpha(k))
        if k % 997 == 0 or k == 10_000:
            assert gamma == pytest.approx(s.gamma(k), rel=1e-9)


def test_constant_schedule():
    s = constant_schedule()
    assert s.alpha(1) == 1.0 and s.alpha(50) == 1.0


def test_policy_bundle_maintenance():
    cuts = [AffineMinorant(np.array([float(k)]), float(k)) for k in range(1, 9)]
    bundle = []
    pol = limited_memory(3)
    for k, cut in enumerate(cuts, start=1):
        bundle = pol.update_bundle(bundle, cut, k)
    assert len(bundle) == 3
    assert [c.intercept for c in bundle] == [6.0, 7.0, 8.0]  # oldest dropped first

    bundle = []
    pol = averaging()
    for k, cut in enumerate(cuts, start=1):
        bundle = pol.update_bundle(bundle, cut, k)
    assert len(bundle) == 1
    assert bundle[0].intercept == pytest.approx(np.mean([c.intercept for c in cuts]))

    assert domain_only().update_bundle([], cuts[0], 1) == []
    rows = full_history().cut_rows(cuts[:2], fstar=1.5)
    assert rows[0][1] == pytest.approx(1.5 - 1.0)


def test_single_step_is_polyak_step_on_unconstrained_problem():
    p = square_problem()
    state = apmm_init(p, np.array([1.0]), 0.0)
    state = apmm_step(state, p, 0.0, constant_schedule(), domain_only())
    assert state.x == pytest.approx([0.5], abs=1e-12)


def test_first_extrapolation_point_equals_start():
    p = make_desk_qcqp()
    state = apmm_init(p, np.array([3.0, -2.0]), 0.5)
    state = apmm_step(state, p, 0.5, nesterov_schedule(), limited_memory(5))
    assert state.z == pytest.approx([3.0, -2.0])


def test_desk_progress_after_200_steps():
    # the accelerated certificate at K=200 on this fixture is ~1.3e-3
    p = make_desk_qcqp()
    state = apmm_init(p, np.array([3.0, -2.0]), 0.5)
    for _ in range(200):
        state = apmm_step(state, p, 0.5, nesterov_schedule(), limited_memory(5))
    assert state.vbar <= 1e-3


def test_solve_reaches_tight_accuracy_on_desk():
    p = make_desk_qcqp()
    y, report = apmm_solve(p, 0.5, 1e-6, max_iters=20_000, x0=np.array([3.0, -2.0]))
    assert report.converged
    fy = p.objective.evaluate(y)[0]
    assert fy - 0.5 <= 1e-6
    assert 1.0 - y[0] - y[1] <= 1e-6


def test_zero_iterations_when_start_is_good_enough():
    p = make_desk_qcqp()
    x0 = np.array([0.5, 0.5])
    v0 = eval_composite(p, x0, 0.5).value
    p2 = make_desk_qcqp()
    y, report = apmm_solve(p2, 0.5, eps=max(v0, 1e-12) + 0.5, x0=x0)
    assert report.iterations == 0
    assert y == pytest.approx(x0)


def test_accelerated_rate_certificate_on_quadratic():
    weights = (2.0, 50.0)
    x0 = np.array([3.0, -2.0])
    params = TheoryParams(rho=1.0, M_hat=50.0, distance0=float(np.linalg.norm(x0)))
    for K in (10, 50, 100):
        p = make_smooth_quadratic(weights)
        state = apmm_init(p, x0, 0.0)
        for _ in range(K):
            state = apmm_step(state, p, 0.0, nesterov_schedule(), domain_only())
        assert state.fy <= params.accel_rate_bound(K)


def test_constant_schedule_rate_on_nonsmooth_fixture():
    p = make_sharp_fixture()
    m_hat = 2.0 * p.meta["sigma_max"]
    x0 = np.array([2.0, -1.0])
    params = TheoryParams(rho=0.0, M_hat=m_hat, distance0=float(np.linalg.norm(x0)),
                          mu=2.0 * p.meta["sigma_min"], rho_tilde=1.0)
    state = apmm_init(p, x0, 0.0)
    best = state.vbar
    for K in range(1, 121):
        state = apmm_step(state, p, 0.0, constant_schedule(), domain_only())
        best = min(best, state.vbar)
        if K in (10, 40, 120):
            assert best <= params.constant_rate_bound(K)


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.kind)
def test_square_summability(policy):
    p = make_desk_qcqp()
    state = apmm_init(p, np.array([3.0, -2.0]), 0.5)
    xs = [state.x]
    for _ in range(120):
        state = apmm_step(state, p, 0.5, nesterov_schedule(), policy)
        xs.append(state.x)
    x_star = np.array([0.5, 0.5])
    path = sum(float(np.sum((xs[i + 1] - xs[i]) ** 2)) for i in range(len(xs) - 1))
    lhs = float(np.sum((x_star - xs[-1]) ** 2)) + path
    assert lhs <= float(np.sum((x_star - xs[0]) ** 2)) + 1e-7


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.kind)
def test_optimum_remains_feasible_for_every_policy(policy):
    # with the exact optimal value, the prox subproblem can never turn infeasible
    p = make_desk_qcqp()
    state = apmm_init(p, np.array([3.0, -2.0]), 0.5)
    for _ in range(150):
        state = apmm_step(state, p, 0.5, nesterov_schedule(), policy)
    assert state.vbar >= -1e-12


def test_best_value_is_monotone():
    p = make_desk_qcqp()
    state = apmm_init(p, np.array([3.0, -2.0]), 0.5)
    values = [state.vbar]
    for _ in range(100):
        state = apmm_step(state, p, 0.5, nesterov_schedule(), limited_memory(5))
        values.append(state.vbar)
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


def test_polyak_reduction_over_100_steps():
    # ill-conditioned so the target excess stays above the QP deadband throughout
    weights = (0.02, 2.0)
    p = make_smooth_quadratic(weights)
    ref = make_smooth_quadratic(weights)
    state = apmm_init(p, np.array([3.0, -2.0]), 0.0)
    x_ref = np.array([3.0, -2.0])
    for _ in range(100):
        state = apmm_step(state, p, 0.0, constant_schedule(), domain_only())
        x_ref = polyak_step(ref, x_ref, 0.0)
        assert np.linalg.norm(state.x - x_ref) <= 1e-10
    assert p.objective.evaluate(state.x)[0] > 1e-8  # deadband never reached


def test_invalid_target_value_detected():
    p = ConstrainedProblem(
        ConvexOracle(1, lambda x: (float(x[0]) ** 2, np.array([2.0 * x[0]]))),
        [], Box.cube(1, 10.0), known_fstar=0.0)
    state = apmm_init(p, np.array([1.0]), -0.1)
    with pytest.raises(InvalidTargetValue):
        for _ in range(100):
            state = apmm_step(state, p, -0.1, constant_schedule(), full_history())


def test_restart_residual_measurement():
    # f(q0) - fstar = 2 and a constant violated constraint of 3
    f = ConvexOracle(1, lambda x: (float(x[0]) ** 2, np.array([2.0 * x[0]])))
    g = ConvexOracle(1, lambda x: (3.0, np.array([0.0])))
    p = ConstrainedProblem(f, [g], Box.cube(1, 10.0))
    q0 = np.array([math.sqrt(2.0)])
    _, report = rapmm_solve(p, 0.0, 0.5, eps=1e-3, x0=q0, max_epochs=0)
    first = report.records[0]
    assert max(first.obj_gap, first.violation) == pytest.approx(3.0, abs=1e-12)


def test_restart_epoch_count_bound():
    p = make_sharp_fixture()
    x0 = np.array([0.6, -0.8])
    delta0 = p.objective.evaluate(x0)[0]  # feasible start: residual is the objective gap
    p2 = make_sharp_fixture()
    eps = 1e-3 * delta0
    _, report = rapmm_solve(p2, 0.0, 0.5, eps, x0=x0)
    assert report.converged
    assert report.iterations <= math.ceil(math.log(delta0 / eps) / math.log(2.0))


def test_restart_total_cost_scales_with_log_accuracy():
    counts = []
    epss = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    for eps in epss:
        p = make_sharp_fixture()
        _, report = rapmm_solve(p, 0.0, 0.5, eps, x0=np.array([5.0, -3.0]))
        assert report.converged
        counts.append(p.total_grads)
    logs = np.log(1.0 / np.asarray(epss))
    cnt = np.asarray(counts, dtype=float)
    design = np.vstack([logs, np.ones_like(logs)]).T
    _, residual, *_ = np.linalg.lstsq(design, cnt, rcond=None)
    ss_res = float(residual[0]) if len(residual) else 0.0
    ss_tot = float(np.sum((cnt - cnt.mean()) ** 2))
    assert ss_tot > 0
    assert 1.0 - ss_res / ss_tot >= 0.95


def test_schedule_and_policy_validation():
    with pytest.raises(ValueError):
        nesterov_schedule().alpha(0)
    with pytest.raises(ValueError):
        limited_memory(0)
    with pytest.raises(ValueError):
        TheoryParams(rho=0.5, M_hat=1.0, distance0=1.0, rho_tilde=1.2)
