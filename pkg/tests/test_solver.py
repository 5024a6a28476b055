import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.config import Tolerances
from core.errors import (
    CertificateFailure,
    DimensionMismatchError,
    NonConvergenceError,
    NotInKError,
    NotInLError,
)
from core.schemas.market import Strategy
from core.services.generator import instance_b
from core.services.market_svc import tree_layout
from core.services.solver_svc import (
    conjugacy_gap,
    dual_separation,
    extract_dual_candidate,
    finiteness_diagnostics,
    max_min_strategy,
    one_sided_derivatives,
    optimality_checks,
    solve_dual,
    solve_primal,
    subgradient,
    value_w,
    value_w_tilde,
)
from core.services.utility import LogUtility, PowerUtility

from .conftest import LOG_9_8, THIRD


def u_b(x: float, q: float) -> float:
    """Log value function of instance B holding q calls."""
    return (2.0 * math.log(3.0 * x + q) + math.log(x) - math.log(8.0)) / 3.0


@pytest.mark.parametrize(("x", "q"), [(1.0, 1.0), (1.0, 0.0), (2.0, 0.0), (1.0, 0.5), (2.0, 1.0)])
def test_log_value_on_b_matches_closed_form(market_b, log_utility, x, q):
    tree, claims = market_b
    primal = solve_primal(tree, claims, log_utility, x, [q])
    assert primal.value == pytest.approx(u_b(x, q), abs=1e-10)
    np.testing.assert_allclose(primal.holdings, [(x - q) / 2.0], atol=1e-8)


def test_optimal_consumption_on_b(market_b, log_utility):
    tree, claims = market_b
    primal = solve_primal(tree, claims, log_utility, 1.0, [0.0])
    np.testing.assert_allclose(primal.consumption, [1.5, 1.0, 0.75], atol=1e-9)
    np.testing.assert_allclose(primal.terminal_wealth, primal.consumption, atol=1e-12)
    assert primal.value == pytest.approx(LOG_9_8 / 3.0, abs=1e-12)
    assert primal.gradient_norm <= 1e-10


def test_complete_market_value(market_a, log_utility):
    tree, claims = market_a
    assert value_w(tree, log_utility, 1.0) == pytest.approx(
        0.5 * (math.log(1.5) + math.log(0.75)), abs=1e-12
    )
    # the call is replicable at cost 1/3, so u(x, q) = w(x + q/3)
    with_call = solve_primal(tree, claims, log_utility, 1.0, [1.0])
    assert with_call.value == pytest.approx(value_w(tree, log_utility, 4.0 / 3.0), abs=1e-10)


def test_position_outside_cone_is_rejected(market_b, log_utility):
    tree, claims = market_b
    with pytest.raises(NotInKError) as excinfo:
        solve_primal(tree, claims, log_utility, THIRD, [-1.0])
    assert excinfo.value.exit_code == 3
    assert excinfo.value.minimal_capital == pytest.approx(THIRD)


def test_bad_inputs(market_b, log_utility):
    tree, claims = market_b
    with pytest.raises(DimensionMismatchError):
        solve_primal(tree, claims, log_utility, 1.0, [1.0, 1.0])
    with pytest.raises(ValueError):
        solve_primal(tree, claims, log_utility, 1.0, [0.0], start=Strategy(holdings={"root": (3.0,)}))


def test_newton_budget_exhaustion(market_b, log_utility):
    tree, claims = market_b
    with pytest.raises(NonConvergenceError) as excinfo:
        solve_primal(tree, claims, log_utility, 1.0, [0.0], Tolerances(max_newton_iter=1))
    assert excinfo.value.exit_code == 4


def test_max_min_strategy(market_b):
    tree, claims = market_b
    strategy, worst = max_min_strategy(tree, claims, 1.0, [0.0])
    assert worst == pytest.approx(1.0)
    np.testing.assert_allclose(strategy.holdings["root"], [0.0], atol=1e-12)


def test_explicit_start_reaches_same_optimum(market_b, log_utility):
    tree, claims = market_b
    start = Strategy(holdings={"root": (-0.5,)})
    primal = solve_primal(tree, claims, log_utility, 1.0, [0.0], start=start)
    np.testing.assert_allclose(primal.holdings, [0.5], atol=1e-8)


def test_dual_candidate_from_primal(market_b, log_utility):
    tree, claims = market_b
    primal = solve_primal(tree, claims, log_utility, 1.0, [1.0])
    dual = extract_dual_candidate(primal, log_utility, tree, claims)
    assert dual.source == "from-primal"
    assert dual.y == pytest.approx(5.0 / 6.0, abs=1e-9)
    np.testing.assert_allclose(dual.r, [1.0 / 6.0], atol=1e-9)
    np.testing.assert_allclose(dual.h, [0.5, 1.0, 1.0], atol=1e-9)
    assert dual.prices[0] == pytest.approx(0.2, abs=1e-9)
    assert dual.separation_value <= 1.0 + 1e-8
    assert optimality_checks(tree, claims, log_utility, primal, dual).passed


def test_corrupted_primal_fails_certificates(market_b, log_utility, caplog):
    tree, claims = market_b
    primal = solve_primal(tree, claims, log_utility, 1.0, [0.0])
    corrupted = primal.model_copy(update={"consumption": (1.0, 1.0, 1.0)})
    with pytest.raises(CertificateFailure):
        extract_dual_candidate(corrupted, log_utility, tree, claims)
    with caplog.at_level(logging.WARNING):
        extract_dual_candidate(corrupted, log_utility, tree, claims, strict=False)
    assert "demoted certificate" in caplog.text


def test_cutting_plane_dual_on_b(market_b, log_utility):
    tree, claims = market_b
    dual = solve_dual(tree, claims, log_utility, 5.0 / 6.0, [1.0 / 6.0])
    assert dual.source == "cutting-plane"
    assert dual.value == pytest.approx(math.log(2.0) / 3.0 - 1.0, abs=1e-7)
    np.testing.assert_allclose(dual.h, [0.5, 1.0, 1.0], atol=1e-5)
    assert dual.separation_value <= 1.0 + 1e-8


def test_warm_started_dual_agrees(market_b, log_utility):
    tree, claims = market_b
    primal = solve_primal(tree, claims, log_utility, 1.0, [0.0])
    dual = solve_dual(tree, claims, log_utility, 1.0, [2.0 / 9.0], warm_start=primal)
    assert dual.value == pytest.approx(LOG_9_8 / 3.0 - 1.0, abs=1e-8)
    assert dual.rounds <= 3


def test_dual_outside_L_is_rejected(market_b, log_utility):
    tree, claims = market_b
    with pytest.raises(NotInLError):
        solve_dual(tree, claims, log_utility, 1.0, [THIRD])
    with pytest.raises(NotInLError):
        solve_dual(tree, claims, log_utility, -1.0, [0.0])


@pytest.mark.parametrize("c", [0.5, 2.0, 7.0])
def test_separation_is_scale_invariant(market_b, c):
    tree, claims = market_b
    h = np.array([0.5, 1.0, 1.0])
    base = dual_separation(tree, claims, h, 5.0 / 6.0, [1.0 / 6.0])
    scaled = dual_separation(tree, claims, c * h, c * 5.0 / 6.0, [c / 6.0])
    assert base.feasible
    assert scaled.value == pytest.approx(base.value, abs=1e-9)


def test_separation_finds_violation(market_b):
    tree, claims = market_b
    result = dual_separation(tree, claims, np.array([2.0, 2.0, 2.0]), 5.0 / 6.0, [1.0 / 6.0])
    assert not result.feasible
    assert result.value > 1.0
    assert min(result.payoff) >= -1e-12
    assert result.x * 5.0 / 6.0 + result.q[0] / 6.0 == pytest.approx(1.0)


@pytest.mark.parametrize(("x", "q"), [(1.0, 1.0), (2.0, 0.0), (1.0, -0.2)])
def test_conjugacy_gap_closes_for_log(market_b, log_utility, x, q):
    tree, claims = market_b
    gap = conjugacy_gap(tree, claims, log_utility, x, [q])
    assert gap.passed, gap


def test_conjugacy_gap_closes_for_power(market_b, power_utility):
    tree, claims = market_b
    gap = conjugacy_gap(tree, claims, power_utility, 1.0, [1.0])
    assert gap.passed, gap


def test_conjugacy_gap_two_periods(two_period_tree, log_utility):
    gap = conjugacy_gap(two_period_tree, [], log_utility, 1.0, [])
    assert gap.passed, gap
    assert gap.r == ()


def test_subgradient_matches_finite_differences(market_b, log_utility):
    tree, claims = market_b
    point = subgradient(tree, claims, log_utility, 2.0, [0.0])
    assert point.y == pytest.approx(0.5, abs=1e-9)
    np.testing.assert_allclose(point.r, [1.0 / 9.0], atol=1e-9)
    np.testing.assert_allclose(point.finite_difference, [0.5, 1.0 / 9.0], rtol=1e-3)


def test_value_is_differentiable_at_interior_point(market_b, log_utility):
    tree, claims = market_b
    left, right = one_sided_derivatives(tree, claims, log_utility, 1.0, [1.0])
    np.testing.assert_allclose(left, right, rtol=1e-3)
    np.testing.assert_allclose(0.5 * (left + right), [5.0 / 6.0, 1.0 / 6.0], rtol=1e-3)


@pytest.mark.slow
def test_nested_price_minimum(market_b, log_utility):
    tree, claims = market_b
    nested = value_w_tilde(tree, claims, log_utility, 1.0)
    assert nested.value == pytest.approx(LOG_9_8 / 3.0 - 1.0, abs=1e-6)
    assert nested.direct == pytest.approx(LOG_9_8 / 3.0 - 1.0, abs=1e-7)
    assert nested.argmin[0] == pytest.approx(2.0 / 9.0, abs=1e-4)


def test_nested_price_minimum_needs_positive_y(market_b, log_utility):
    tree, claims = market_b
    with pytest.raises(ValueError):
        value_w_tilde(tree, claims, log_utility, 0.0)


def test_finiteness_diagnostics(market_b, log_utility):
    tree, claims = market_b
    diagnostics = finiteness_diagnostics(tree, claims, log_utility, 1.0, [1.0])
    assert diagnostics.ae_below_one
    assert diagnostics.certificates_enforced
    assert diagnostics.emm_min_probability == pytest.approx(0.25)
    np.testing.assert_allclose(diagnostics.claim_prices, [0.25], atol=1e-12)
    assert diagnostics.wealth_bound == pytest.approx(5.0)


@settings(max_examples=15, deadline=None)
@given(
    x=st.floats(min_value=0.5, max_value=3.0),
    q=st.floats(min_value=-1.0, max_value=2.0),
    c=st.floats(min_value=0.2, max_value=5.0),
)
def test_log_value_shifts_by_log_scale(x, q, c):
    market = instance_b()
    tree, claims = market.to_tree(), market.to_claims()
    base = solve_primal(tree, claims, "log", x, [q]).value
    scaled = solve_primal(tree, claims, "log", c * x, [c * q]).value
    assert scaled == pytest.approx(base + math.log(c), abs=1e-9)
    assert base == pytest.approx(u_b(x, q), abs=1e-9)


class _RejectingTrials(LogUtility):
    """Log utility whose every evaluation after the first is -inf."""

    def __init__(self):
        self.calls = 0

    def U(self, x):
        self.calls += 1
        if self.calls == 1:
            return super().U(x)
        return np.full(np.shape(x), -np.inf)


def test_line_search_stall_reports_iterations_run(market_b):
    tree, claims = market_b
    with pytest.raises(NonConvergenceError) as excinfo:
        solve_primal(tree, claims, _RejectingTrials(), 1.0, [0.0])
    assert excinfo.value.iterations == 0
    assert "line search stalled" in excinfo.value.method
    assert excinfo.value.exit_code == 4


def test_power_optimum_far_below_endowment_scale(skewed_binomial_tree):
    gamma = 0.9
    utility = PowerUtility(gamma)
    P = np.array([0.95, 0.05])
    Q = np.array([1.0 / 3.0, 2.0 / 3.0])
    weights = (Q / P) ** (1.0 / (gamma - 1.0))
    expected = weights / (Q @ weights)

    primal = solve_primal(skewed_binomial_tree, [], utility, 1.0, [])
    np.testing.assert_allclose(primal.consumption, expected, rtol=1e-6)
    assert 0.0 < primal.consumption[1] < 1e-12
    assert primal.value == pytest.approx(float(P @ expected**gamma) / gamma, abs=1e-10)
    np.testing.assert_allclose(primal.holdings, [2.0], atol=1e-9)

    dual = extract_dual_candidate(primal, utility, skewed_binomial_tree, [])
    assert optimality_checks(skewed_binomial_tree, [], utility, primal, dual).passed


@pytest.mark.parametrize(("x", "q"), [(1.0, 1.0), (2.0, 2.0), (1.0, -0.5), (4.0, 0.0)])
def test_optimality_relations_hold_tightly(market_b, power_utility, x, q):
    tree, claims = market_b
    primal = solve_primal(tree, claims, power_utility, x, [q])
    assert primal.gradient_norm <= 1e-10
    dual = extract_dual_candidate(primal, power_utility, tree, claims)
    suite = optimality_checks(tree, claims, power_utility, primal, dual)
    assert suite.passed, suite.failures()


@pytest.mark.parametrize("fixture", ["tree_a", "tree_b"])
@pytest.mark.parametrize("t", [-5.0, -2.0, 0.0, 2.0, 5.0])
def test_claim_free_power_dual_across_scales(request, fixture, t):
    tree = request.getfixturevalue(fixture)
    gamma = 0.9
    utility = PowerUtility(gamma)
    y = math.exp(t)
    # w(x) = x^gamma w(1), so v(y) = w(x*) - x* y with gamma x*^(gamma - 1) w(1) = y
    w1 = value_w(tree, utility, 1.0)
    x_star = (y / (gamma * w1)) ** (1.0 / (gamma - 1.0))
    expected = w1 * x_star**gamma - x_star * y

    dual = solve_dual(tree, [], utility, y, [])
    assert dual.value == pytest.approx(expected, rel=1e-6)
    assert dual.y == y
    assert dual.separation_value <= 1.0
    h = np.asarray(dual.h)
    layout = tree_layout(tree)
    assert float(layout.leaf_prob @ h) == pytest.approx(y, rel=1e-6)
    np.testing.assert_allclose(layout.gains.T @ (layout.leaf_prob * h) / y, 0.0, atol=1e-6)
