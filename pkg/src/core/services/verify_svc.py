"""Invariant suite run by `verify`: every duality identity checked on one market."""

import logging
import math
from collections.abc import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from core.config import DEFAULT_TOLERANCES, Tolerances
from core.errors import DualityError
from core.schemas.market import Claim, ScenarioTree
from core.schemas.report import CheckSuite
from core.services.geometry_svc import (
    in_K,
    in_L,
    integrability_report,
    price_interval,
    reduce_endowments,
    sample_emms,
    support_beta,
)
from core.services.market_svc import (
    check_claims,
    strategy_from_vector,
    strategy_vector,
    tree_layout,
    validate_tree,
)
from core.services.pricing_svc import certainty_equivalent, consistency_check
from core.services.solver_svc import (
    dual_separation,
    extract_dual_candidate,
    max_min_strategy,
    optimality_checks,
    solve_dual,
    solve_primal,
    value_w,
    value_w_tilde,
)
from core.services.utility import UtilityLike, as_utility, check_utility

logger = logging.getLogger(__name__)

FAULT_SCALE = 1.01
WEAK_DUALITY_SLACK = 1e-9
GAP_TOL = 1e-7
MARTINGALE_TOL = 1e-9
CONCAVITY_TOL = 1e-9
UNIQUENESS_TOL = 1e-7
COLLAPSE_TOL = 1e-7
CE_TOL = 1e-8
CONJUGATE_W_TOL = 1e-6
EMM_SAMPLES = 10
STRATEGY_SAMPLES = 100
BIPOLAR_SAMPLES = 100
DUAL_POINTS = 50
DEFAULT_PORTFOLIOS = ((1.0, 0.0), (1.0, 1.0), (2.0, 0.0), (1.0, -0.5), (2.0, 2.0))


def default_portfolios(
    tree: ScenarioTree, claims: Sequence[Claim], tol: Tolerances = DEFAULT_TOLERANCES
) -> list[tuple[float, tuple[float, ...]]]:
    """Five (x, q) points with q a multiple of (1, ..., 1), keeping those inside K."""
    portfolios = []
    for x, scale in DEFAULT_PORTFOLIOS:
        q = tuple(scale for _ in claims)
        if (x, q) not in portfolios and in_K(tree, claims, x, q, tol):
            portfolios.append((x, q))
    return portfolios


def bipolar_pairings(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    x: float,
    q,
    consumption,
    y: float,
    rng: np.random.Generator,
    tol: Tolerances = DEFAULT_TOLERANCES,
    samples: int = DUAL_POINTS,
) -> np.ndarray:
    """E[h'_i Z_j] - (x y'_i + <q, r'_i>), relative to the bound, for sampled dual points and payoffs.

    Each h' is y' dQ/dP for a random mixture Q of strictly positive martingale
    measures, with y' a random multiple of `y` and r' = y' E_Q[f]. Each payoff
    Z lies below `consumption` leaf by leaf, so Z is in C(x, q) and every
    entry of the (samples, samples) result should be nonpositive.
    """
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    P = layout.leaf_prob
    g = np.asarray(consumption, dtype=float)
    q = np.asarray(q, dtype=float)
    measures = np.array(sample_emms(tree, EMM_SAMPLES, rng, tol))
    Q = rng.dirichlet(np.ones(len(measures)), size=samples) @ measures
    y_dual = y * rng.uniform(0.5, 2.0, size=samples)
    h_dual = y_dual[:, None] * Q / P
    bounds = y_dual * (x + Q @ F @ q)
    payoffs = g * np.minimum(rng.uniform(0.0, 1.5, size=(samples, g.size)), 1.0)
    pairings = (h_dual * P) @ payoffs.T
    return (pairings - bounds[:, None]) / (1.0 + np.abs(bounds))[:, None]


def _label(x: float, q: Sequence[float]) -> str:
    return f"(x={x:g}, q=[{', '.join(f'{v:g}' for v in q)}])"


def _market_checks(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    rng: np.random.Generator,
    tol: Tolerances,
) -> CheckSuite:
    suite = CheckSuite()
    layout = tree_layout(tree)
    F = check_claims(tree, claims)

    emms = sample_emms(tree, EMM_SAMPLES, rng, tol)
    worst = 0.0
    for _ in range(STRATEGY_SAMPLES):
        h = rng.normal(size=layout.n_strategy)
        x = float(rng.uniform(0.0, 2.0))
        wealth = x + layout.gains @ h
        worst = max(worst, max(abs(float(Q @ wealth) - x) for Q in emms))
    suite.add("wealth is a martingale", worst <= MARTINGALE_TOL, worst, MARTINGALE_TOL)

    if claims:
        sublinear = 0.0
        for _ in range(20):
            q1, q2 = rng.normal(size=(2, F.shape[1]))
            c = float(rng.uniform(0.1, 3.0))
            b1, b2 = support_beta(tree, claims, q1, tol), support_beta(tree, claims, q2, tol)
            sublinear = max(
                sublinear,
                support_beta(tree, claims, q1 + q2, tol) - b1 - b2,
                abs(support_beta(tree, claims, c * q1, tol) - c * b1) / (1.0 + abs(b1)),
            )
        suite.add("price support function sublinear", sublinear <= tol.lp, sublinear, tol.lp)

    ordered = True
    for i, claim in enumerate(claims):
        low, high = price_interval(tree, F[:, i], tol)
        ordered &= low <= high + tol.lp
    suite.add("superreplication intervals ordered", ordered)

    report = integrability_report(tree, claims, tol)
    suite.add(
        "claims dominated by a nonnegative wealth",
        report.passed,
        detail=f"dominating capital {report.dominating_capital:.10g}",
    )
    return suite


def _portfolio_checks(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility,
    x: float,
    q: tuple[float, ...],
    rng: np.random.Generator,
    tol: Tolerances,
    inject_fault: bool,
    full: bool,
) -> CheckSuite:
    suite = CheckSuite()
    F = check_claims(tree, claims)
    qv = np.asarray(q, dtype=float)

    primal = solve_primal(tree, claims, utility, x, q, tol)
    candidate = extract_dual_candidate(primal, utility, tree, claims, tol)
    if inject_fault:
        logger.warning("injecting fault: dual candidate scaled by %.2f", FAULT_SCALE)
        candidate = candidate.model_copy(
            update={"h": tuple(FAULT_SCALE * v for v in candidate.h)}
        )
    suite.extend(optimality_checks(tree, claims, utility, primal, candidate))

    dual = solve_dual(tree, claims, utility, candidate.y, candidate.r, tol, warm_start=primal)
    budget = x * dual.y + float(qv @ np.asarray(dual.r))
    gap = abs(primal.value - dual.value - budget)
    gap_tol = GAP_TOL * (1.0 + abs(primal.value))
    suite.add("conjugacy gap", gap <= gap_tol, gap, gap_tol)
    slack = dual.value + budget - primal.value
    suite.add("weak duality", slack >= -WEAK_DUALITY_SLACK, slack, WEAK_DUALITY_SLACK)
    suite.add("subgradient in L", in_L(tree, claims, dual.y, dual.r, tol))

    g = np.asarray(primal.consumption)
    sandwich = max(
        float(Q @ g) - x - float(qv @ (F.T @ Q)) for Q in sample_emms(tree, BIPOLAR_SAMPLES, rng, tol)
    )
    suite.add("primal payoff under every price", sandwich <= tol.lp * (1.0 + abs(x)), sandwich, tol.lp)

    h = np.asarray(dual.h)
    worst_pairing = float(bipolar_pairings(tree, claims, x, qv, g, dual.y, rng, tol).max())
    suite.add(
        "bipolar pairing", worst_pairing <= WEAK_DUALITY_SLACK, worst_pairing, WEAK_DUALITY_SLACK
    )

    for c in (0.5, 2.0):
        scaled = dual_separation(tree, claims, c * h, c * dual.y, c * np.asarray(dual.r), tol)
        suite.add(
            f"dual cone scaling c={c:g}",
            scaled.value <= 1.0 + tol.cert,
            scaled.value - 1.0,
            tol.cert,
        )

    if not full:
        return suite

    step = 0.5
    up = solve_primal(tree, claims, utility, x + 2 * step, q, tol).value
    mid = solve_primal(tree, claims, utility, x + step, q, tol).value
    suite.add("value increasing in capital", up >= mid >= primal.value)
    concavity = 0.5 * (primal.value + up) - mid
    suite.add("value concave", concavity <= CONCAVITY_TOL, concavity, CONCAVITY_TOL)

    mm_strategy, _ = max_min_strategy(tree, claims, x, q, tol)
    start = 0.5 * (strategy_vector(tree, mm_strategy) + np.asarray(primal.holdings))
    other = solve_primal(tree, claims, utility, x, q, tol, start=strategy_from_vector(tree, start))
    spread = float(np.max(np.abs(np.asarray(other.consumption) - g)))
    suite.add("primal optimizer unique", spread <= UNIQUENESS_TOL, spread, UNIQUENESS_TOL)

    if claims:
        suite.extend(consistency_check(tree, claims, utility, x, q, tol), prefix="pricing: ")
        ce = certainty_equivalent(tree, claims, utility, x, q, tol)
        suite.add("certainty equivalent identity", ce.residual <= CE_TOL, ce.residual, CE_TOL)

        reduction = reduce_endowments(tree, claims, tol)
        if not reduction.kept:
            collapsed = value_w(tree, utility, x + reduction.capital_shift(qv), tol)
            deviation = abs(primal.value - collapsed)
            suite.add("replicable endowment collapse", deviation <= COLLAPSE_TOL, deviation, COLLAPSE_TOL)
    return suite


def _no_endowment_checks(tree: ScenarioTree, claims, utility, tol: Tolerances) -> CheckSuite:
    suite = CheckSuite()
    if claims:
        try:
            nested = value_w_tilde(tree, claims, utility, 1.0, tol)
            suite.add(
                "price minimum attains claim-free dual",
                True,
                abs(nested.value - nested.direct),
                CONJUGATE_W_TOL,
                detail=f"argmin prices {', '.join(f'{v:.8g}' for v in nested.argmin)}",
            )
        except DualityError as error:
            suite.add("price minimum attains claim-free dual", False, detail=str(error))

    def dual_objective(t: float) -> float:
        y = math.exp(t)
        return solve_dual(tree, [], utility, y, [], tol).value + y

    w = value_w(tree, utility, 1.0, tol)
    result = minimize_scalar(dual_objective, bounds=(-5.0, 5.0), method="bounded", options={"xatol": 1e-8})
    mismatch = abs(float(result.fun) - w)
    suite.add("claim-free values conjugate", mismatch <= CONJUGATE_W_TOL, mismatch, CONJUGATE_W_TOL)
    return suite


def verify_market(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    portfolios: Sequence[tuple[float, Sequence[float]]] | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 42,
    inject_fault: bool = False,
    full: bool = True,
) -> CheckSuite:
    """Run every invariant; solver errors become failed checks instead of propagating."""
    utility = as_utility(utility)
    rng = np.random.default_rng(seed)
    suite = CheckSuite()

    diagnostics = validate_tree(tree)
    suite.add("tree well formed", diagnostics.passed, detail=", ".join(diagnostics.failures()))
    if not diagnostics.passed:
        return suite
    suite.extend(check_utility(utility), prefix=f"utility {utility!r}: ")

    try:
        suite.extend(_market_checks(tree, claims, rng, tol), prefix="market: ")
    except DualityError as error:
        suite.add("market", False, detail=str(error))
        return suite

    if portfolios is None:
        portfolios = default_portfolios(tree, claims, tol)
    for x, q in portfolios:
        label = _label(x, q)
        try:
            checks = _portfolio_checks(
                tree, claims, utility, x, tuple(q), rng, tol, inject_fault, full
            )
        except DualityError as error:
            suite.add(f"{label} solved", False, detail=str(error))
            continue
        suite.extend(checks, prefix=f"{label} ")

    if full:
        try:
            suite.extend(_no_endowment_checks(tree, claims, utility, tol), prefix="no endowment: ")
        except DualityError as error:
            suite.add("no endowment", False, detail=str(error))

    if not suite.passed:
        logger.warning("verification failed: %s", suite.failures())
    return suite
