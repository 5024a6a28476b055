"""Random scenario-tree markets and the two canonical fixtures."""

import logging
import math

import numpy as np

from core.config import DEFAULT_TOLERANCES, Tolerances
from core.errors import LpError, NoEMMError, RejectionBudgetError
from core.schemas.market import Claim, MarketFile, NodeRecord, ScenarioTree
from core.services.geometry_svc import emm_dimension, find_emm
from core.services.market_svc import tree_layout

logger = logging.getLogger(__name__)

PROBABILITY_RANGE = (0.05, 0.95)
MULTIPLIER_RANGE = (0.5, 2.0)
ROOT_ID = "s"
MAX_ATTEMPTS = 1000


def _random_tree(
    rng: np.random.Generator, branching: int, periods: int, assets: int
) -> ScenarioTree:
    low, high = (math.log(v) for v in MULTIPLIER_RANGE)
    nodes = [NodeRecord(id=ROOT_ID, parent=None, p=1.0, prices=(1.0,) * assets)]
    frontier = [nodes[0]]
    for _ in range(periods):
        next_frontier = []
        for parent in frontier:
            weights = rng.uniform(*PROBABILITY_RANGE, size=branching)
            weights = weights / weights.sum()
            multipliers = np.exp(rng.uniform(low, high, size=(branching, assets)))
            for k in range(branching):
                child = NodeRecord(
                    id=f"{parent.id}{k}",
                    parent=parent.id,
                    p=float(weights[k]),
                    prices=tuple(float(v) for v in np.asarray(parent.prices) * multipliers[k]),
                )
                nodes.append(child)
                next_frontier.append(child)
        frontier = next_frontier
    return ScenarioTree(
        assets=tuple(f"asset{j}" for j in range(assets)), nodes=tuple(nodes)
    )


def _random_claims(
    rng: np.random.Generator, tree: ScenarioTree, count: int
) -> list[Claim]:
    layout = tree_layout(tree)
    by_id = {node.id: node for node in tree.nodes}
    terminal = np.array([by_id[leaf].prices for leaf in layout.leaves])
    claims = []
    for k in range(count):
        asset = k % tree.asset_count
        match k % 3:
            case 0:
                payoff = np.maximum(terminal[:, asset] - 1.0, 0.0)
                name = f"call_{tree.assets[asset]}"
            case 1:
                payoff = np.maximum(1.0 - terminal[:, asset], 0.0)
                name = f"put_{tree.assets[asset]}"
            case _:
                payoff = rng.normal(size=layout.n_leaves)
                name = "random"
        claims.append(Claim(name=f"{name}_{k}", payoff=tuple(float(v) for v in payoff)))
    return claims


def generate_market(
    seed: int,
    branching: int = 3,
    periods: int = 1,
    assets: int = 1,
    n_claims: int = 1,
    max_attempts: int = MAX_ATTEMPTS,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> MarketFile:
    """Draw trees from `seed` until one admits an equivalent martingale measure."""
    if branching < 2 or periods < 1 or assets < 1 or n_claims < 0:
        raise ValueError("need branching >= 2, periods >= 1, assets >= 1, n_claims >= 0")
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_attempts + 1):
        tree = _random_tree(rng, branching, periods, assets)
        try:
            find_emm(tree, tol)
        except NoEMMError:
            continue
        except LpError as error:
            logger.warning("seed %d: draw %d rejected: %s", seed, attempt, error)
            continue
        dimension = emm_dimension(tree)
        logger.info("seed %d: arbitrage-free market after %d draws", seed, attempt)
        return MarketFile.from_market(
            tree,
            _random_claims(rng, tree, n_claims),
            metadata={
                "seed": seed,
                "branching": branching,
                "periods": periods,
                "assets": assets,
                "attempts": attempt,
                "emm_dimension": dimension,
                "complete": dimension == 0,
            },
        )
    raise RejectionBudgetError(seed, max_attempts)


def instance_a() -> MarketFile:
    """Complete one-period market: S0 = 1 moves to 2 or 0.5 with equal odds; claim pays 1 in the up state."""
    tree = ScenarioTree(
        assets=("S",),
        nodes=(
            NodeRecord(id="root", parent=None, p=1.0, prices=(1.0,)),
            NodeRecord(id="up", parent="root", p=0.5, prices=(2.0,)),
            NodeRecord(id="down", parent="root", p=0.5, prices=(0.5,)),
        ),
    )
    claims = [Claim(name="call", payoff=(1.0, 0.0))]
    return MarketFile.from_market(tree, claims, metadata={"fixture": "A", "complete": True})


def instance_b() -> MarketFile:
    """Incomplete one-period market: S0 = 1 moves to 2, 1 or 0.5 with equal odds; claim pays 1 in the up state."""
    third = 1.0 / 3.0
    tree = ScenarioTree(
        assets=("S",),
        nodes=(
            NodeRecord(id="root", parent=None, p=1.0, prices=(1.0,)),
            NodeRecord(id="u", parent="root", p=third, prices=(2.0,)),
            NodeRecord(id="m", parent="root", p=third, prices=(1.0,)),
            NodeRecord(id="d", parent="root", p=third, prices=(0.5,)),
        ),
    )
    claims = [Claim(name="call", payoff=(1.0, 0.0, 0.0))]
    return MarketFile.from_market(tree, claims, metadata={"fixture": "B", "complete": False})


FIXTURES = {"A": instance_a, "B": instance_b}
