import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from core.errors import DimensionMismatchError, InvalidTreeError
from core.schemas.market import (
    Claim,
    MarketFile,
    ScenarioTree,
    Strategy,
    TerminalWealth,
    TreeCheck,
    TreeDiagnostics,
)

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-12


@dataclass(frozen=True)
class TreeLayout:
    """Array view of a validated tree.

    `gains` has one row per leaf and one column per (non-terminal node, asset)
    pair; row l holds the price increment of that asset over the edge leaving
    the node on the path to leaf l, and zero off the path. Terminal wealth of a
    flattened strategy h is x + gains @ h.
    """

    node_ids: tuple[str, ...]
    levels: dict[str, int]
    leaves: tuple[str, ...]
    internal: tuple[str, ...]
    horizon: int
    asset_count: int
    leaf_prob: np.ndarray
    gains: np.ndarray

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def n_strategy(self) -> int:
        return len(self.internal) * self.asset_count


def _children(tree: ScenarioTree) -> dict[str, list[str]]:
    children: dict[str, list[str]] = {node.id: [] for node in tree.nodes}
    for node in tree.nodes:
        if node.parent is not None and node.parent in children:
            children[node.parent].append(node.id)
    return children


def _depth_first(root: str, children: dict[str, list[str]]) -> tuple[list[str], dict[str, int]]:
    order: list[str] = []
    levels = {root: 0}
    stack = [root]
    while stack:
        node_id = stack.pop()
        order.append(node_id)
        for child in reversed(children[node_id]):
            if child in levels:
                continue
            levels[child] = levels[node_id] + 1
            stack.append(child)
    return order, levels


def validate_tree(tree: ScenarioTree) -> TreeDiagnostics:
    """Check every structural invariant of a scenario tree. Never raises."""
    checks: list[TreeCheck] = []
    by_id = {}
    duplicates = []
    for node in tree.nodes:
        if node.id in by_id:
            duplicates.append(node.id)
        by_id[node.id] = node
    checks.append(TreeCheck(name="unique ids", passed=not duplicates, offending_nodes=duplicates))

    roots = [node.id for node in tree.nodes if node.parent is None]
    checks.append(
        TreeCheck(
            name="root",
            passed=len(roots) == 1,
            offending_nodes=roots,
            detail=f"{len(roots)} root(s)",
        )
    )

    orphans = [n.id for n in tree.nodes if n.parent is not None and n.parent not in by_id]
    children = _children(tree)
    if len(roots) == 1:
        order, levels = _depth_first(roots[0], children)
        unreachable = [n.id for n in tree.nodes if n.id not in levels]
    else:
        order, levels, unreachable = [], {}, []
    checks.append(
        TreeCheck(
            name="parents",
            passed=not orphans and not unreachable,
            offending_nodes=orphans + [n for n in unreachable if n not in orphans],
        )
    )

    bad_prices = [
        n.id
        for n in tree.nodes
        if len(n.prices) != tree.asset_count or not all(math.isfinite(s) for s in n.prices)
    ]
    checks.append(TreeCheck(name="prices", passed=not bad_prices, offending_nodes=bad_prices))

    horizon = max(levels.values(), default=0)
    thin = [
        node_id for node_id in order if levels[node_id] < horizon and len(children[node_id]) < 2
    ]
    checks.append(
        TreeCheck(
            name="branching",
            passed=bool(order) and horizon >= 1 and not thin,
            offending_nodes=thin,
            detail=f"horizon {horizon}",
        )
    )

    out_of_range = [n.id for n in tree.nodes if n.parent is not None and not 0.0 < n.p <= 1.0]
    checks.append(
        TreeCheck(name="probability bounds", passed=not out_of_range, offending_nodes=out_of_range)
    )

    unnormalized = []
    for node_id in order:
        kids = children[node_id]
        if kids and abs(math.fsum(by_id[k].p for k in kids) - 1.0) > PROBABILITY_TOL:
            unnormalized.append(node_id)
    checks.append(
        TreeCheck(
            name="probability normalization",
            passed=not unnormalized,
            offending_nodes=unnormalized,
        )
    )

    leaf_total = 0.0
    if order:
        unconditional = {order[0]: 1.0}
        leaf_mass = []
        for node_id in order[1:]:
            unconditional[node_id] = unconditional[by_id[node_id].parent] * by_id[node_id].p
        for node_id in order:
            if not children[node_id]:
                leaf_mass.append(unconditional[node_id])
        leaf_total = math.fsum(leaf_mass)
    checks.append(
        TreeCheck(
            name="leaf measure",
            passed=abs(leaf_total - 1.0) <= PROBABILITY_TOL,
            detail=f"leaf mass {leaf_total!r}",
        )
    )

    diagnostics = TreeDiagnostics(checks=checks)
    if not diagnostics.passed:
        logger.info("tree rejected: %s", diagnostics.failures())
    return diagnostics


@lru_cache(maxsize=256)
def tree_layout(tree: ScenarioTree) -> TreeLayout:
    diagnostics = validate_tree(tree)
    if not diagnostics.passed:
        raise InvalidTreeError(diagnostics.failures())

    by_id = {node.id: node for node in tree.nodes}
    children = _children(tree)
    order, levels = _depth_first(tree.root.id, children)
    leaves = tuple(node_id for node_id in order if not children[node_id])
    internal = tuple(node_id for node_id in order if children[node_id])
    d = tree.asset_count
    column = {node_id: j for j, node_id in enumerate(internal)}

    leaf_prob = np.empty(len(leaves))
    gains = np.zeros((len(leaves), len(internal) * d))
    for row, leaf in enumerate(leaves):
        mass = 1.0
        node_id = leaf
        while by_id[node_id].parent is not None:
            node = by_id[node_id]
            parent = by_id[node.parent]
            mass *= node.p
            j = column[parent.id]
            gains[row, j * d : (j + 1) * d] = np.subtract(node.prices, parent.prices)
            node_id = parent.id
        leaf_prob[row] = mass

    return TreeLayout(
        node_ids=tuple(order),
        levels=levels,
        leaves=leaves,
        internal=internal,
        horizon=max(levels.values()),
        asset_count=d,
        leaf_prob=leaf_prob,
        gains=gains,
    )


def leaf_measure(tree: ScenarioTree) -> np.ndarray:
    """Unconditional probability of every leaf, recomputed from the conditionals."""
    return tree_layout(tree).leaf_prob.copy()


def strategy_vector(tree: ScenarioTree, strategy: Strategy) -> np.ndarray:
    layout = tree_layout(tree)
    extra = set(strategy.holdings) - set(layout.internal)
    if extra:
        raise DimensionMismatchError(f"holdings given for terminal or unknown nodes: {sorted(extra)}")
    h = np.empty(layout.n_strategy)
    d = layout.asset_count
    for j, node_id in enumerate(layout.internal):
        shares = strategy.holdings.get(node_id)
        if shares is None or len(shares) != d:
            raise DimensionMismatchError(f"node {node_id} needs {d} holdings")
        h[j * d : (j + 1) * d] = shares
    if not np.all(np.isfinite(h)):
        raise DimensionMismatchError("holdings must be finite")
    return h


def strategy_from_vector(tree: ScenarioTree, h: np.ndarray) -> Strategy:
    layout = tree_layout(tree)
    d = layout.asset_count
    if h.shape != (layout.n_strategy,):
        raise DimensionMismatchError(f"expected {layout.n_strategy} holdings, got {h.shape}")
    return Strategy(
        holdings={
            node_id: tuple(float(v) for v in h[j * d : (j + 1) * d])
            for j, node_id in enumerate(layout.internal)
        }
    )


def constant_strategy(tree: ScenarioTree, shares: Sequence[float]) -> Strategy:
    layout = tree_layout(tree)
    return Strategy(holdings={node_id: tuple(shares) for node_id in layout.internal})


def terminal_wealth(tree: ScenarioTree, strategy: Strategy, x: float) -> TerminalWealth:
    """x plus the accumulated gains of `strategy` along each leaf's path."""
    layout = tree_layout(tree)
    wealth = x + layout.gains @ strategy_vector(tree, strategy)
    return TerminalWealth(value=tuple(float(v) for v in wealth))


def claim_matrix(claims: Sequence[Claim], n_leaves: int) -> np.ndarray:
    """Payoffs as columns: shape (n_leaves, len(claims))."""
    for claim in claims:
        if len(claim.payoff) != n_leaves:
            raise DimensionMismatchError(
                f"claim {claim.name!r} has {len(claim.payoff)} payoffs for {n_leaves} leaves"
            )
    if not claims:
        return np.zeros((n_leaves, 0))
    return np.column_stack([np.asarray(c.payoff, dtype=float) for c in claims])


def combined_payoff(
    claims: Sequence[Claim], q: Sequence[float], n_leaves: int | None = None
) -> np.ndarray:
    """Leafwise payoff of holding q_i units of claim i."""
    if len(q) != len(claims):
        raise DimensionMismatchError(f"{len(q)} quantities for {len(claims)} claims")
    if n_leaves is None:
        if not claims:
            raise DimensionMismatchError("leaf count needed when there are no claims")
        n_leaves = len(claims[0].payoff)
    return claim_matrix(claims, n_leaves) @ np.asarray(q, dtype=float)


def check_claims(tree: ScenarioTree, claims: Sequence[Claim]) -> np.ndarray:
    return claim_matrix(claims, tree_layout(tree).n_leaves)


def load_market(path: str | Path) -> MarketFile:
    """Read a market document; the tree is validated when first laid out."""
    market = MarketFile.model_validate_json(Path(path).read_text())
    logger.debug("loaded market %s with %d nodes", path, len(market.nodes))
    return market


def dump_market(market: MarketFile) -> str:
    return market.model_dump_json(indent=2, exclude_none=True) + "\n"
