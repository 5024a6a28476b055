import math

import numpy as np
import pytest

from core.errors import DimensionMismatchError
from core.services.pricing_svc import (
    certainty_equivalent,
    consistency_check,
    differentiability_probe,
    price_report,
    utility_based_price,
)

from .conftest import THIRD


def test_utility_price_on_b(market_b, log_utility):
    tree, claims = market_b
    np.testing.assert_allclose(
        utility_based_price(tree, claims, log_utility, 1.0, [1.0]), [0.2], atol=1e-9
    )
    np.testing.assert_allclose(
        utility_based_price(tree, claims, log_utility, 1.0, [0.0]), [2.0 / 9.0], atol=1e-9
    )


def test_replicable_claim_priced_at_cost(market_a, log_utility):
    tree, claims = market_a
    np.testing.assert_allclose(
        utility_based_price(tree, claims, log_utility, 1.0, [0.0]), [THIRD], atol=1e-12
    )


def test_duplicated_claim_gets_the_same_price(tree_b, duplicated_call_b, log_utility):
    prices = utility_based_price(tree_b, duplicated_call_b, log_utility, 1.0, [1.0, 0.0])
    np.testing.assert_allclose(prices, [0.2, 0.2], atol=1e-9)
    suite = consistency_check(tree_b, duplicated_call_b, log_utility, 1.0, [1.0, 0.0])
    assert suite.passed, suite.failures()
    assert any("replication cost" in c.name for c in suite.checks)


def test_certainty_equivalent_on_b(market_b, log_utility):
    tree, claims = market_b
    ce = certainty_equivalent(tree, claims, log_utility, 1.0, [1.0])
    expected = (16.0 / 9.0) ** (1.0 / 3.0) - 1.0
    assert ce.value == pytest.approx(expected, abs=1e-9)
    assert ce.per_unit == pytest.approx(expected, abs=1e-9)
    assert ce.residual <= 1e-8
    assert ce.lower == pytest.approx(0.0, abs=1e-12)
    assert ce.upper == pytest.approx(THIRD)


def test_certainty_equivalent_of_replicable_claim(market_a, log_utility):
    tree, claims = market_a
    ce = certainty_equivalent(tree, claims, log_utility, 1.0, [1.0])
    assert ce.value == pytest.approx(THIRD, abs=1e-12)
    assert ce.lower == pytest.approx(ce.upper)


def test_certainty_equivalent_without_claims(market_b, log_utility):
    tree, claims = market_b
    ce = certainty_equivalent(tree, claims, log_utility, 1.0, [0.0])
    assert ce.value == pytest.approx(0.0, abs=1e-12)
    assert ce.per_unit is None
    with pytest.raises(DimensionMismatchError):
        certainty_equivalent(tree, claims, log_utility, 1.0, [1.0, 0.0])


def test_consistency_on_b(market_b, power_utility):
    tree, claims = market_b
    suite = consistency_check(tree, claims, power_utility, 1.0, [1.0])
    assert suite.passed, suite.failures()
    names = [c.name for c in suite.checks]
    assert "utility prices arbitrage-free" in names
    assert "call: strictly inside superreplication bounds" in names


def test_value_is_smooth_on_b(market_b, log_utility):
    tree, claims = market_b
    probe = differentiability_probe(tree, claims, log_utility, 1.0, [1.0])
    assert probe.unique_price
    assert probe.worst_mismatch <= 1e-3


def test_price_report(market_b, log_utility):
    tree, claims = market_b
    report = price_report(tree, claims, log_utility, 1.0, [1.0])
    assert report.passed
    assert report.note == ""
    assert report.utility_based_price[0] == pytest.approx(0.2, abs=1e-9)
    assert report.certainty_equivalent.value == pytest.approx(
        math.exp(math.log(16.0 / 9.0) / 3.0) - 1.0, abs=1e-9
    )
    assert price_report(tree, claims, log_utility, 1.0, [1.0], probe=False).probe is None
