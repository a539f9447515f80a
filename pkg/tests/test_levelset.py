import math

import numpy as np
import pytest

from conftest import desk_value_function, desk1d_root_value_function, make_root_1d
from levelcraft.levelset import (BoundEval, LevelConfig, fixed_point_solve, initialize,
                                 iterate_levels, probe_value_function, secant_multiplier,
                                 secant_solve, warm_lower_bound_fixed_point,
                                 warm_lower_bound_secant)
from levelcraft.oracle import eval_composite
from levelcraft.problems import make_desk_1d, make_desk_qcqp

FP_CFG = dict(alpha=1.36, beta=0.9, nu=0.9, eps=1e-3, method="fixed_point")
SC_CFG = dict(alpha=1.365, beta=1.0, nu=0.9, eps=1e-3, method="secant")


# --- parameter validation -------------------------------------------------

def test_secant_config_rejects_bad_beta():
    with pytest.raises(ValueError, match=r"\(1/2, 1\]"):
        LevelConfig(alpha=1.2, beta=0.3, nu=0.9, eps=1e-3, method="secant")


def test_secant_config_rejects_alpha_outside_window():
    with pytest.raises(ValueError, match="2\\*sqrt"):
        LevelConfig(alpha=1.9, beta=0.81, nu=0.9, eps=1e-3, method="secant")
    LevelConfig(alpha=1.79, beta=0.81, nu=0.9, eps=1e-3, method="secant")  # 2*sqrt(.81)=1.8


def test_config_rejects_bad_nu_eps():
    with pytest.raises(ValueError):
        LevelConfig(alpha=1.3, beta=0.9, nu=0.4, eps=1e-3, method="fixed_point")
    with pytest.raises(ValueError):
        LevelConfig(alpha=1.3, beta=0.9, nu=0.9, eps=0.0, method="fixed_point")
    assert LevelConfig(**FP_CFG).theta == pytest.approx(0.8)


# --- update-rule arithmetic ------------------------------------------------

def test_fixed_point_eta_update_is_beta_times_lower():
    # eta0 = 0, beta = 0.9, l0 = 1 -> eta1 = 0.9 (checked through the driver)
    seen = []

    def oracle(x_prev, warm, eta_t):
        seen.append(eta_t)
        return BoundEval(x_prev, 1e-16, 1e-16)

    iterate_levels("fixed_point", 0.0, 1.0, 2.0, np.zeros(1), 1.36, 0.9, 1e-3, oracle, 5)
    assert seen[0] == pytest.approx(0.9)


def test_fixed_point_warm_bound_arithmetic():
    # l1=0.8, u0=1.2, l0=1, beta=0.9 -> max{0.1, 1+(0.8-1.2)/1} = 0.6 -> 0.48
    assert warm_lower_bound_fixed_point(2, 0.8, 1.0, 1.2, 0.9) == pytest.approx(0.48)
    # first step uses the (1-beta) floor
    assert warm_lower_bound_fixed_point(1, 1.0, 1.0, 1.0, 0.9) == pytest.approx(0.1)


def test_secant_multiplier_truncation():
    # inactive: slope ratio 1 -> plain fixed-point step
    assert secant_multiplier(-1.0 + 0.0, 0.0, 1.0, 0.0) == pytest.approx(1.0)
    # active: eta moved 2 while the bracket dropped 1 -> multiplier 2
    assert secant_multiplier(-2.0, 0.0, 1.0, 0.0) == pytest.approx(2.0)
    assert warm_lower_bound_secant(0.5, 1.0) == 0.0


def test_secant_step_never_smaller_than_fixed_point():
    rng = np.random.default_rng(0)
    for _ in range(100):
        eta_prev2 = float(rng.uniform(-2, 0))
        eta_prev = eta_prev2 + float(rng.uniform(0.01, 2))
        l_prev = float(rng.uniform(0.01, 1.0))
        u_prev2 = l_prev + float(rng.uniform(0.001, 2))
        assert secant_multiplier(eta_prev2, eta_prev, u_prev2, l_prev) >= 1.0


# --- abstract driver with synthetic brackets -------------------------------

def test_driver_contraction_with_synthetic_value_function():
    # V(eta) = slope * (eta_star - eta); the oracle returns exact relative brackets
    slope, eta_star, alpha, beta = 0.6, 2.0, 1.25, 0.8

    def oracle(x_prev, warm, eta_t):
        v = slope * (eta_star - eta_t)
        return BoundEval(x_prev, v / alpha, v)

    iterates, status = iterate_levels("fixed_point", 0.0, slope * eta_star / alpha,
                                      slope * eta_star, np.zeros(1), alpha, beta,
                                      1e-9, oracle, 500)
    assert status == "converged"
    etas = [it.eta for it in iterates]
    assert all(b > a for a, b in zip(etas, etas[1:]))
    assert all(e <= eta_star + 1e-12 for e in etas)
    sigma = 1.0 - beta * slope / alpha
    for a, b in zip(etas[1:], etas[2:]):
        assert (eta_star - b) <= sigma * (eta_star - a) + 1e-12


def test_driver_reports_stall_on_vanishing_lower_bound():
    def oracle(x_prev, warm, eta_t):
        return BoundEval(x_prev, 0.0, 1.0)

    _, status = iterate_levels("fixed_point", 0.0, 1.0, 2.0, np.zeros(1),
                               1.36, 0.9, 1e-3, oracle, 50)
    assert status == "stalled"


# --- initialization --------------------------------------------------------

def test_initialize_feasible_minimizer_is_near_optimal():
    res = initialize(make_desk_1d(), 1.36, 1e-3)
    assert res.flag == "near_optimal"
    assert abs(res.x[0]) <= 0.1
    assert res.eta0 <= 1e-3


def test_initialize_desk_requires_root_finding():
    res = initialize(make_desk_qcqp(), 1.36, 1e-3)
    assert res.flag == "root_finding"
    assert res.eta0 < 0.5
    assert res.eta0 == pytest.approx(0.0, abs=1e-3)
    assert 0.0 < res.l0 <= desk_value_function(res.eta0) + 1e-7


def test_initialize_huge_eps_short_circuits():
    res = initialize(make_desk_qcqp(), 1.36, eps=10.0)
    assert res.flag == "near_optimal"


# --- full solves on the desk fixture ---------------------------------------

@pytest.mark.parametrize("solver,cfg", [(fixed_point_solve, FP_CFG), (secant_solve, SC_CFG)],
                         ids=["fixed-point", "secant"])
def test_level_solvers_certify_desk(solver, cfg):
    p = make_desk_qcqp()
    x, report = solver(p, LevelConfig(**cfg))
    assert report.converged
    etas = [it.eta for it in report.level_iterates]
    assert all(b > a for a, b in zip(etas, etas[1:]))
    assert max(etas) <= 0.5 + 1e-6
    fx = x[0] ** 2 + x[1] ** 2
    assert fx - 0.5 <= 1e-3
    assert 1.0 - x[0] - x[1] <= 1e-3
    # every iterate that kept the loop running satisfied the relative bracket
    for it in report.level_iterates[1:]:
        if it.u > cfg["eps"]:
            assert it.u <= cfg["alpha"] * it.l + 1e-9


@pytest.mark.parametrize("solver,cfg", [(fixed_point_solve, FP_CFG), (secant_solve, SC_CFG)],
                         ids=["fixed-point", "secant"])
def test_warm_lower_bounds_are_valid(solver, cfg):
    p = make_desk_qcqp()
    _, report = solver(p, LevelConfig(**cfg))
    for it in report.level_iterates[1:]:
        assert it.ltilde_used <= desk_value_function(it.eta) + 1e-7
        assert it.ltilde_used >= 0.0
        if cfg["beta"] < 1.0:
            assert it.ltilde_used > 0.0
        assert it.l <= desk_value_function(it.eta) + 1e-7


def test_warm_lower_bounds_valid_on_1d_root_fixture():
    p = make_root_1d()
    x, report = fixed_point_solve(p, LevelConfig(**FP_CFG))
    assert report.converged
    for it in report.level_iterates[1:]:
        assert it.ltilde_used <= desk1d_root_value_function(it.eta) + 1e-7
    assert abs(x[0] - 0.5) <= 0.05


def test_fixed_point_contraction_matches_multiplier_theory():
    p = make_desk_qcqp()
    _, report = fixed_point_solve(p, LevelConfig(**FP_CFG))
    its = report.level_iterates
    eta_star = 0.5
    sigma = 1.0 + (0.9 / 1.36) * (-0.5)  # slope of V at the root is -1/(1 + 1)
    for t in range(2, len(its)):
        prev_gap = eta_star - its[t - 1].eta
        if prev_gap <= 1e-9:
            break
        assert (eta_star - its[t].eta) / prev_gap <= sigma + 0.05


def test_secant_is_cheaper_on_ill_conditioned_problem():
    # scaling the objective by 20 scales the multiplier to 20, flattening V near
    # the root; the fixed-point step shrinks with it while the secant does not
    p_fp = make_desk_qcqp(scale=20.0)
    _, rep_fp = fixed_point_solve(p_fp, LevelConfig(alpha=1.36, beta=0.9, nu=0.9, eps=1e-3,
                                                    method="fixed_point", max_outer=2000))
    p_sc = make_desk_qcqp(scale=20.0)
    _, rep_sc = secant_solve(p_sc, LevelConfig(alpha=1.365, beta=1.0, nu=0.9, eps=1e-3,
                                               method="secant", max_outer=2000))
    assert rep_fp.converged and rep_sc.converged
    assert rep_sc.iterations < rep_fp.iterations
    assert p_sc.total_grads <= 1.1 * p_fp.total_grads


def test_trace_records_mirror_level_iterates():
    p = make_desk_qcqp()
    _, report = fixed_point_solve(p, LevelConfig(**FP_CFG))
    assert len(report.records) == len(report.level_iterates)
    assert report.records[-1].gevals == p.total_grads
    for rec, it in zip(report.records, report.level_iterates):
        assert rec.eta == pytest.approx(it.eta)


# --- value-function probing ------------------------------------------------

def test_probe_brackets_contain_analytic_values():
    p = make_desk_qcqp()
    grid = np.linspace(-2.0, 0.8, 10)
    brackets = probe_value_function(p, grid, 1.25)
    for eta, lo, hi in brackets:
        v = desk_value_function(eta)
        assert lo <= v + 1e-7
        assert hi >= v - 1e-7
        assert hi <= max(1.25 * lo, 1e-6) + 1e-9
    # monotone non-increasing and 1-Lipschitz up to bracket widths
    for (e1, l1, u1), (e2, l2, u2) in zip(brackets, brackets[1:]):
        assert l2 <= u1 + 1e-9
        assert l1 - u2 <= (e2 - e1) + 1e-9
    # in the low-level regime the bracket pins f_bar - eta = -eta
    for eta, lo, hi in brackets:
        if eta <= -1.0:
            assert lo <= -eta + 1e-9
            assert hi >= -eta - 1e-9


def test_probe_bracket_straddles_root():
    p = make_desk_qcqp()
    _, lo, hi = probe_value_function(p, [0.5], 1.25)[0]
    assert lo <= 0.0 <= hi + 1e-9


def test_probe_slope_near_root_matches_multiplier():
    # finite differences of the brackets across the root bound V' ~ -1/(1+||y*||)
    p = make_desk_qcqp()
    e1, e2 = 0.35, 0.48
    (eta1, l1, u1), (eta2, l2, u2) = probe_value_function(p, [e1, e2], 1.05, floor=1e-7)
    slope_min = (l2 - u1) / (e2 - e1)
    slope_max = (u2 - l1) / (e2 - e1)
    assert slope_min - 0.05 <= -0.5 <= slope_max + 0.05
