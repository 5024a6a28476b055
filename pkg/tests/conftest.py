import math

import pytest

from core.schemas.market import Claim, NodeRecord, ScenarioTree
from core.services.generator import instance_a, instance_b
from core.services.utility import LogUtility, PowerUtility

THIRD = 1.0 / 3.0
LOG_9_8 = math.log(9.0 / 8.0)


@pytest.fixture
def market_a():
    market = instance_a()
    return market.to_tree(), market.to_claims()


@pytest.fixture
def market_b():
    market = instance_b()
    return market.to_tree(), market.to_claims()


@pytest.fixture
def tree_a(market_a):
    return market_a[0]


@pytest.fixture
def tree_b(market_b):
    return market_b[0]


@pytest.fixture
def call_b(market_b):
    return market_b[1]


@pytest.fixture
def log_utility():
    return LogUtility()


@pytest.fixture(params=[0.5, 0.9], ids=["power0.5", "power0.9"])
def power_utility(request):
    return PowerUtility(request.param)


@pytest.fixture
def arbitrage_tree():
    """Both children are above the root price: buying the asset is an arbitrage."""
    return ScenarioTree(
        assets=("S",),
        nodes=(
            NodeRecord(id="root", prices=(1.0,)),
            NodeRecord(id="a", parent="root", p=0.5, prices=(2.0,)),
            NodeRecord(id="b", parent="root", p=0.5, prices=(1.5,)),
        ),
    )


@pytest.fixture
def two_period_tree():
    return ScenarioTree(
        assets=("S",),
        nodes=(
            NodeRecord(id="s", prices=(1.0,)),
            NodeRecord(id="s0", parent="s", p=0.5, prices=(2.0,)),
            NodeRecord(id="s1", parent="s", p=0.5, prices=(0.5,)),
            NodeRecord(id="s00", parent="s0", p=0.5, prices=(3.0,)),
            NodeRecord(id="s01", parent="s0", p=0.5, prices=(1.5,)),
            NodeRecord(id="s10", parent="s1", p=0.5, prices=(1.0,)),
            NodeRecord(id="s11", parent="s1", p=0.5, prices=(0.25,)),
        ),
    )


@pytest.fixture
def duplicated_call_b(call_b):
    """The call held twice under different names: the second copy is replicable modulo the first."""
    return [call_b[0], Claim(name="call2", payoff=call_b[0].payoff)]


@pytest.fixture
def skewed_binomial_tree():
    """Complete market whose rare down state is priced at 2/3: power(0.9) consumes almost nothing there."""
    return ScenarioTree(
        assets=("S",),
        nodes=(
            NodeRecord(id="root", prices=(1.0,)),
            NodeRecord(id="up", parent="root", p=0.95, prices=(2.0,)),
            NodeRecord(id="down", parent="root", p=0.05, prices=(0.5,)),
        ),
    )
