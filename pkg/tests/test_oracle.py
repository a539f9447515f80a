import numpy as np
import pytest

from levelcraft.geomsub import Box
from levelcraft.oracle import (AffineMinorant, ConstrainedProblem, ConvexOracle, OracleFailure,
                               check_convexity_witness, composite_minorant, composite_values,
                               eval_composite, minorant_at)
from levelcraft.problems import make_desk_qcqp


def square_1d():
    return ConvexOracle(1, lambda x: (float(x[0]) ** 2, np.array([2.0 * x[0]])), "square")


def simple_problem():
    g = ConvexOracle(1, lambda x: (float(x[0]) - 1.0, np.array([1.0])), "g")
    return ConstrainedProblem(square_1d(), [g], Box.unbounded(1))


def test_eval_composite_picks_max_piece():
    p = simple_problem()
    out = eval_composite(p, np.array([2.0]), 0.0)
    assert out.value == 4.0
    assert out.active_index == 0
    assert out.subgradient == pytest.approx([4.0])


def test_eval_composite_tie_prefers_lowest_index():
    p = simple_problem()
    out = eval_composite(p, np.array([0.0]), 0.0)
    # f(0) = 0 beats g(0) = -1
    assert out.value == 0.0
    assert out.active_index == 0


def test_eval_composite_matches_direct_recomputation_on_desk():
    p = make_desk_qcqp()
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.uniform(-10, 10, size=2)
        eta = float(rng.uniform(-2, 2))
        got = eval_composite(p, x, eta).value
        expect = max(float(x @ x) - eta, 1.0 - x[0] - x[1])
        assert got == pytest.approx(expect, abs=1e-12)


def test_minorant_tangent_of_square():
    m = minorant_at(square_1d(), np.array([1.0]))
    assert m.slope == pytest.approx([2.0])
    assert m.intercept == pytest.approx(-1.0)


def test_minorant_of_affine_is_identity():
    a, b = np.array([3.0, -2.0]), 0.7
    h = ConvexOracle(2, lambda x: (float(a @ x) + b, a.copy()))
    m = minorant_at(h, np.array([0.3, 5.0]))
    assert m.slope == pytest.approx(a)
    assert m.intercept == pytest.approx(b)


def test_minorant_at_kink_still_minorizes():
    h = ConvexOracle(1, lambda x: (abs(float(x[0])), np.array([np.sign(x[0])])))
    m = minorant_at(h, np.array([0.0]))
    for v in np.linspace(-3, 3, 41):
        assert m.value_at([v]) <= abs(v) + 1e-12


def test_composite_minorant_pieces():
    p = simple_problem()
    pieces = composite_minorant(p, np.array([1.0]), 0.0)
    assert len(pieces) == 2
    assert pieces[0].slope == pytest.approx([2.0]) and pieces[0].intercept == pytest.approx(-1.0)
    assert pieces[1].slope == pytest.approx([1.0]) and pieces[1].intercept == pytest.approx(-1.0)


def test_composite_minorant_eta_shift_moves_objective_piece_only():
    p = simple_problem()
    base = composite_minorant(p, np.array([1.0]), 0.0)
    shifted = composite_minorant(p, np.array([1.0]), 0.75)
    assert shifted[0].intercept == pytest.approx(base[0].intercept - 0.75)
    assert shifted[0].slope == pytest.approx(base[0].slope)
    assert shifted[1].intercept == pytest.approx(base[1].intercept)


def test_composite_minorant_dominated_by_composite():
    p = make_desk_qcqp()
    rng = np.random.default_rng(1)
    pieces = composite_minorant(p, rng.uniform(-5, 5, size=2), 0.3)
    for _ in range(100):
        x = rng.uniform(-10, 10, size=2)
        model = max(piece.value_at(x) for piece in pieces)
        actual = eval_composite(p, x, 0.3).value
        assert model <= actual + 1e-9


def test_minorant_domination_sampled():
    p = make_desk_qcqp()
    rng = np.random.default_rng(2)
    for h in (p.objective, *p.constraints):
        m = minorant_at(h, rng.uniform(-4, 4, size=2))
        for _ in range(100):
            x = rng.uniform(-10, 10, size=2)
            assert m.value_at(x) <= h.evaluate(x)[0] + 1e-9


def test_counters_pair_and_sum():
    p = simple_problem()
    assert p.total_evals == 0 and p.total_grads == 0
    eval_composite(p, np.array([1.0]), 0.0)
    assert p.objective.eval_count == 1 and p.objective.grad_count == 1
    assert p.total_evals == 2 and p.total_grads == 2  # objective + one constraint
    composite_minorant(p, np.array([1.0]), 0.0)
    assert p.total_grads == 4


def test_counter_determinism_across_reruns():
    def workload():
        p = make_desk_qcqp()
        rng = np.random.default_rng(7)
        for _ in range(25):
            eval_composite(p, rng.uniform(-5, 5, size=2), float(rng.normal()))
        return p.total_evals, p.total_grads

    assert workload() == workload()


def test_composite_is_one_lipschitz_in_eta():
    p = make_desk_qcqp()
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform(-10, 10, size=2)
        eta = float(rng.uniform(-2, 2))
        delta = float(rng.uniform(0, 3))
        v0 = eval_composite(p, x, eta).value
        v1 = eval_composite(p, x, eta + delta).value
        assert abs(v1 - v0) <= delta + 1e-12


def test_oracle_failure_on_nonfinite():
    bad = ConvexOracle(1, lambda x: (float("nan"), np.array([0.0])))
    with pytest.raises(OracleFailure):
        bad.evaluate(np.array([1.0]))
    ok = square_1d()
    with pytest.raises(OracleFailure):
        ok.evaluate(np.array([np.inf]))


def test_convexity_witness_on_desk():
    p = make_desk_qcqp()
    rng = np.random.default_rng(4)
    pts = rng.uniform(-8, 8, size=(12, 2))
    for h in (p.objective, *p.constraints):
        assert check_convexity_witness(h, pts) <= 1e-9


def test_problem_validation():
    with pytest.raises(ValueError):
        ConstrainedProblem(square_1d(), [ConvexOracle(2, lambda x: (0.0, np.zeros(2)))],
                           Box.unbounded(1))
    with pytest.raises(ValueError):
        ConstrainedProblem(square_1d(),
                           [ConvexOracle(1, lambda x: (0.0, np.zeros(1)))],
                           Box.unbounded(1), known_multipliers=np.array([-1.0]))


def test_composite_values_returns_matching_minorants():
    p = make_desk_qcqp()
    x = np.array([1.5, -2.0])
    values, minorants = composite_values(p, x, 0.4)
    for val, m in zip(values, minorants):
        assert m.value_at(x) == pytest.approx(val, abs=1e-12)
