"""Utility-based prices, certainty equivalents and their arbitrage-free consistency."""

import logging
from collections.abc import Sequence

import numpy as np
from scipy.optimize import bisect

from core.config import DEFAULT_TOLERANCES, Tolerances
from core.errors import BracketError, DimensionMismatchError
from core.schemas.market import Claim, ScenarioTree
from core.schemas.pricing import CertaintyEquivalent, DifferentiabilityProbe, PriceReport
from core.schemas.report import CheckSuite
from core.services.geometry_svc import in_price_set, reduce_endowments, support_beta
from core.services.solver_svc import (
    one_sided_derivatives,
    solve_primal,
    subgradient,
    value_w,
)
from core.services.utility import UtilityLike, as_utility

logger = logging.getLogger(__name__)

CE_RESIDUAL_TOL = 1e-8
CE_XTOL = 1e-13
DEGENERATE_WIDTH = 1e-12
REPLICATION_PRICE_TOL = 1e-9

NON_UNIQUE_NOTE = (
    "u is not differentiable here: the reported price is one element of the superdifferential"
)


def _marginal_prices(tree, claims, utility, x, q, tol) -> np.ndarray:
    point = subgradient(tree, claims, utility, x, q, tol, check=False)
    return np.asarray(point.r) / point.y


def utility_based_price(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """r / y at (x, q); replicable claims are priced exactly at their replication cost."""
    raw = _marginal_prices(tree, claims, utility, x, q, tol)
    reduction = reduce_endowments(tree, claims, tol)
    return reduction.lift_prices(raw[list(reduction.kept)])


def certainty_equivalent(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CertaintyEquivalent:
    """Cash amount e with w(x + e) = u(x, q), searched on [-beta(-q), beta(q)]."""
    utility = as_utility(utility)
    q = np.asarray(q, dtype=float)
    if q.shape != (len(claims),):
        raise DimensionMismatchError(f"{q.size} quantities for {len(claims)} claims")
    target = solve_primal(tree, claims, utility, x, q, tol).value
    lower = -support_beta(tree, claims, -q, tol)
    upper = support_beta(tree, claims, q, tol)
    per_unit = None

    def excess(e: float) -> float:
        return value_w(tree, utility, x + e, tol) - target

    if upper - lower <= DEGENERATE_WIDTH * (1.0 + abs(upper)):
        e = lower
    else:
        at_lower, at_upper = excess(lower), excess(upper)
        if abs(at_lower) <= CE_RESIDUAL_TOL:
            e = lower
        elif abs(at_upper) <= CE_RESIDUAL_TOL:
            e = upper
        elif at_lower > 0.0 or at_upper < 0.0:
            raise BracketError(lower, upper, "certainty equivalent not bracketed")
        else:
            e = float(bisect(excess, lower, upper, xtol=CE_XTOL, rtol=4 * np.finfo(float).eps))

    residual = abs(excess(e))
    if residual > CE_RESIDUAL_TOL:
        logger.warning("certainty equivalent residual %.3e above %.0e", residual, CE_RESIDUAL_TOL)
    if len(claims) == 1 and q[0] != 0.0:
        per_unit = e / q[0]
    return CertaintyEquivalent(
        value=float(e), residual=residual, lower=lower, upper=upper, per_unit=per_unit
    )


def consistency_check(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CheckSuite:
    """Marginal prices are arbitrage-free and replicable claims sit at their replication cost."""
    suite = CheckSuite()
    raw = _marginal_prices(tree, claims, utility, x, q, tol)
    reduction = reduce_endowments(tree, claims, tol)
    kept = list(reduction.kept)
    lifted = reduction.lift_prices(raw[kept])

    for i in reduction.dropped:
        gap = abs(raw[i] - lifted[i])
        suite.add(
            f"{claims[i].name}: price equals replication cost",
            gap <= REPLICATION_PRICE_TOL * (1.0 + abs(lifted[i])),
            gap,
            REPLICATION_PRICE_TOL,
        )

    if kept:
        membership = in_price_set(tree, reduction.claims, raw[kept], tol)
        suite.add(
            "utility prices arbitrage-free",
            membership.inside,
            membership.margin,
            tol.interior,
            detail="margin is the smallest leaf mass of the witnessing measure",
        )
    N = len(claims)
    for i in kept:
        unit = np.zeros(N)
        unit[i] = 1.0
        low = -support_beta(tree, claims, -unit, tol)
        high = support_beta(tree, claims, unit, tol)
        slack = min(raw[i] - low, high - raw[i])
        suite.add(
            f"{claims[i].name}: strictly inside superreplication bounds",
            slack > tol.interior,
            slack,
            tol.interior,
            detail=f"{low:.10g} < {raw[i]:.10g} < {high:.10g}",
        )
    return suite


def differentiability_probe(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> DifferentiabilityProbe:
    left, right = one_sided_derivatives(tree, claims, utility, x, q, tol)
    scale = np.maximum(1.0, np.maximum(np.abs(left), np.abs(right)))
    mismatch = float(np.max(np.abs(right - left) / scale))
    return DifferentiabilityProbe(
        left=tuple(float(v) for v in left),
        right=tuple(float(v) for v in right),
        unique_price=mismatch <= tol.fd,
        worst_mismatch=mismatch,
    )


def price_report(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
    probe: bool = True,
) -> PriceReport:
    utility = as_utility(utility)
    prices = utility_based_price(tree, claims, utility, x, q, tol)
    probe_result = differentiability_probe(tree, claims, utility, x, q, tol) if probe else None
    note = ""
    if probe_result is not None and not probe_result.unique_price:
        note = NON_UNIQUE_NOTE
        logger.info(note)
    return PriceReport(
        utility_based_price=tuple(float(v) for v in prices),
        certainty_equivalent=certainty_equivalent(tree, claims, utility, x, q, tol),
        consistency=consistency_check(tree, claims, utility, x, q, tol),
        probe=probe_result,
        note=note,
    )
