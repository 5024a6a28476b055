"""LP-backed oracles for the martingale-measure polytope and the cones K and L.

On a finite tree every nonnegative wealth process is a true martingale under
each equivalent martingale measure, so the closure of M is the polytope
{Q >= 0 : sum Q = 1, gains^T Q = 0} and every support function below is a
small linear program over it. Interior (relatively open) sets are tested with
max-min-slack programs: a point is inside only when the slack is strictly
positive beyond `tol.interior`.
"""

import logging
from collections.abc import Sequence
from functools import lru_cache

import numpy as np

from core.config import DEFAULT_TOLERANCES, Tolerances
from core.errors import DimensionMismatchError, LpError, NoEMMError
from core.schemas.geometry import (
    DominatingWealth,
    EndowmentReduction,
    IntegrabilityReport,
    OpennessReport,
    LMembership,
    MartingaleSystem,
    MeasureDensity,
    PriceSetMembership,
    Replication,
    Superreplication,
)
from core.schemas.lp import LinearProgram, LpSolution, LpStatus, Relation, Sense
from core.schemas.market import Claim, ScenarioTree
from core.services.linprog import solve_lp
from core.services.market_svc import (
    TreeLayout,
    check_claims,
    strategy_from_vector,
    tree_layout,
)

logger = logging.getLogger(__name__)

REPLICATION_TOL = 1e-9
CLOSURE_TOL = 1e-12
K_MARGIN = 1e-9


def _measure_rows(layout: TreeLayout) -> tuple[np.ndarray, np.ndarray]:
    """Martingale and mass rows over leaf-measure variables Q."""
    A = np.vstack([layout.gains.T, np.ones((1, layout.n_leaves))])
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    return A, b


def _solved(lp: LinearProgram, tol: Tolerances, what: str) -> LpSolution:
    solution = solve_lp(lp, tol)
    if solution.status is LpStatus.NUMERICAL_ERROR:
        raise LpError(f"numerical breakdown while solving the {what} program")
    return solution


def martingale_system(tree: ScenarioTree) -> MartingaleSystem:
    """Rows over densities z = dQ/dP: sum_l P_l z_l (gain increments) = 0 per node and asset, E_P[z] = 1."""
    layout = tree_layout(tree)
    A, b = _measure_rows(layout)
    A = A * layout.leaf_prob[None, :]
    return MartingaleSystem(A=tuple(tuple(float(v) for v in row) for row in A), b=tuple(b))


def emm_dimension(tree: ScenarioTree) -> int:
    layout = tree_layout(tree)
    A, _ = _measure_rows(layout)
    return layout.n_leaves - int(np.linalg.matrix_rank(A))


def arbitrage_strategy(
    tree: ScenarioTree, tol: Tolerances = DEFAULT_TOLERANCES
) -> tuple[np.ndarray, np.ndarray] | None:
    """A strategy whose terminal gains are nonnegative and not identically zero, if one exists."""
    layout = tree_layout(tree)
    G = layout.gains
    n = layout.n_strategy
    lp = LinearProgram(
        c=layout.leaf_prob @ G,
        A=np.vstack([G, G]),
        relations=(Relation.GE,) * layout.n_leaves + (Relation.LE,) * layout.n_leaves,
        b=np.concatenate([np.zeros(layout.n_leaves), np.ones(layout.n_leaves)]),
        lower=np.full(n, -np.inf),
        upper=np.full(n, np.inf),
        sense=Sense.MAX,
    )
    solution = solve_lp(lp, tol)
    if not solution.optimal or solution.value <= tol.interior:
        return None
    return solution.x, G @ solution.x


def find_emm(tree: ScenarioTree, tol: Tolerances = DEFAULT_TOLERANCES) -> MeasureDensity:
    """Interior martingale measure maximizing the smallest leaf mass."""
    layout = tree_layout(tree)
    n = layout.n_leaves
    A_m, b_m = _measure_rows(layout)
    rows = np.vstack(
        [
            np.hstack([A_m, np.zeros((A_m.shape[0], 1))]),
            np.hstack([np.eye(n), -np.ones((n, 1))]),
        ]
    )
    lp = LinearProgram(
        c=np.concatenate([np.zeros(n), [1.0]]),
        A=rows,
        relations=(Relation.EQ,) * A_m.shape[0] + (Relation.GE,) * n,
        b=np.concatenate([b_m, np.zeros(n)]),
        lower=np.zeros(n + 1),
        upper=np.ones(n + 1),
        sense=Sense.MAX,
    )
    solution = _solved(lp, tol, "martingale measure")
    margin = solution.value if solution.optimal else 0.0
    if margin <= tol.interior:
        certificate = arbitrage_strategy(tree, tol)
        holdings, gains = (None, None)
        if certificate is not None:
            strategy = strategy_from_vector(tree, certificate[0])
            holdings = {k: list(v) for k, v in strategy.holdings.items()}
            gains = [float(v) for v in certificate[1]]
        logger.info("market rejected: no equivalent martingale measure (margin %.3e)", margin)
        raise NoEMMError(margin, holdings, gains)

    measure = solution.x[:n]
    return MeasureDensity(
        measure=tuple(float(v) for v in measure),
        density=tuple(float(v) for v in measure / layout.leaf_prob),
        margin=float(margin),
    )


@lru_cache(maxsize=256)
def require_emm(tree: ScenarioTree, tol: Tolerances = DEFAULT_TOLERANCES) -> MeasureDensity:
    return find_emm(tree, tol)


@lru_cache(maxsize=8192)
def _superreplicate(
    tree: ScenarioTree, payoff: tuple[float, ...], tol: Tolerances
) -> tuple[float, float, np.ndarray, np.ndarray, float]:
    require_emm(tree, tol)
    layout = tree_layout(tree)
    g = np.asarray(payoff, dtype=float)
    A_m, b_m = _measure_rows(layout)
    lp = LinearProgram(
        c=g,
        A=A_m,
        relations=(Relation.EQ,) * A_m.shape[0],
        b=b_m,
        lower=np.zeros(layout.n_leaves),
        upper=np.full(layout.n_leaves, np.inf),
        sense=Sense.MAX,
    )
    solution = _solved(lp, tol, "superreplication")
    if not solution.optimal:
        raise LpError(f"superreplication program is {solution.status}")
    x0 = float(solution.duals[-1])
    h = solution.duals[:-1].copy()
    shortfall = float(max(0.0, np.max(g - (x0 + layout.gains @ h))))
    if shortfall > tol.lp * (1.0 + np.abs(g).max()):
        logger.debug("superreplicating hedge short by %.3e", shortfall)
    h.setflags(write=False)
    measure = solution.x.copy()
    measure.setflags(write=False)
    return float(solution.value), x0, h, measure, shortfall


def _payoff_key(tree: ScenarioTree, g) -> tuple[float, ...]:
    g = np.asarray(g, dtype=float)
    if g.shape != (tree_layout(tree).n_leaves,):
        raise DimensionMismatchError(f"payoff has shape {g.shape}, expected one value per leaf")
    return tuple(float(v) + 0.0 for v in g)


def alpha(tree: ScenarioTree, g, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Superreplication price sup_{Q in cl M} E_Q[g]."""
    return _superreplicate(tree, _payoff_key(tree, g), tol)[0]


def superreplication_price(
    tree: ScenarioTree, g, tol: Tolerances = DEFAULT_TOLERANCES
) -> Superreplication:
    price, x0, h, measure, shortfall = _superreplicate(tree, _payoff_key(tree, g), tol)
    return Superreplication(
        price=price,
        x0=x0,
        strategy=strategy_from_vector(tree, np.asarray(h)),
        measure=tuple(float(v) for v in measure),
        hedge_shortfall=shortfall,
    )


def support_beta(
    tree: ScenarioTree, claims: Sequence[Claim], q, tol: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """beta(q) = sup over arbitrage-free prices p of <q, p>."""
    F = check_claims(tree, claims)
    q = np.asarray(q, dtype=float)
    if q.shape != (F.shape[1],):
        raise DimensionMismatchError(f"{q.size} quantities for {F.shape[1]} claims")
    return alpha(tree, F @ q, tol)


def price_interval(
    tree: ScenarioTree, payoff, tol: Tolerances = DEFAULT_TOLERANCES
) -> tuple[float, float]:
    g = np.asarray(payoff, dtype=float)
    return -alpha(tree, -g, tol), alpha(tree, g, tol)


def is_replicable(tree: ScenarioTree, g, tol: Tolerances = DEFAULT_TOLERANCES) -> Replication:
    g = np.asarray(g, dtype=float)
    upper = alpha(tree, g, tol)
    lower = -alpha(tree, -g, tol)
    replicable = abs(upper - lower) <= REPLICATION_TOL * (1.0 + abs(upper))
    strategy = superreplication_price(tree, g, tol).strategy if replicable else None
    return Replication(
        replicable=replicable, cost=upper, upper=upper, lower=lower, strategy=strategy
    )


def dominating_wealth(
    tree: ScenarioTree, claims: Sequence[Claim], tol: Tolerances = DEFAULT_TOLERANCES
) -> DominatingWealth:
    """Cheapest nonnegative wealth process with terminal value >= sum_i |f_i|."""
    F = check_claims(tree, claims)
    hedge = superreplication_price(tree, np.abs(F).sum(axis=1), tol)
    return DominatingWealth(x0=hedge.price, strategy=hedge.strategy)


def in_price_set(
    tree: ScenarioTree, claims: Sequence[Claim], p, tol: Tolerances = DEFAULT_TOLERANCES
) -> PriceSetMembership:
    """Whether p is an arbitrage-free price vector, i.e. E_Q[f] = p for a strictly positive Q in M."""
    require_emm(tree, tol)
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    p = np.asarray(p, dtype=float)
    if p.shape != (F.shape[1],):
        raise DimensionMismatchError(f"{p.size} prices for {F.shape[1]} claims")
    n = layout.n_leaves
    A_m, b_m = _measure_rows(layout)
    equalities = np.vstack([A_m, F.T])
    rows = np.vstack(
        [
            np.hstack([equalities, np.zeros((equalities.shape[0], 1))]),
            np.hstack([np.eye(n), -np.ones((n, 1))]),
        ]
    )
    lp = LinearProgram(
        c=np.concatenate([np.zeros(n), [1.0]]),
        A=rows,
        relations=(Relation.EQ,) * equalities.shape[0] + (Relation.GE,) * n,
        b=np.concatenate([b_m, p, np.zeros(n)]),
        lower=np.zeros(n + 1),
        upper=np.ones(n + 1),
        sense=Sense.MAX,
    )
    solution = _solved(lp, tol, "price set")
    if not solution.optimal:
        return PriceSetMembership(inside=False, margin=0.0)
    return PriceSetMembership(
        inside=solution.value > tol.interior,
        margin=float(solution.value),
        measure=tuple(float(v) for v in solution.x[:n]),
    )


def minimal_capital(
    tree: ScenarioTree, claims: Sequence[Claim], q, tol: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """Smallest x with X(x, q) nonempty: beta(-q)."""
    return support_beta(tree, claims, -np.asarray(q, dtype=float), tol)


def in_closure_K(
    tree: ScenarioTree, claims: Sequence[Claim], x: float, q, tol: Tolerances = DEFAULT_TOLERANCES
) -> bool:
    needed = minimal_capital(tree, claims, q, tol)
    return x >= needed - CLOSURE_TOL * (1.0 + abs(x) + abs(needed))


def in_K(
    tree: ScenarioTree, claims: Sequence[Claim], x: float, q, tol: Tolerances = DEFAULT_TOLERANCES
) -> bool:
    needed = minimal_capital(tree, claims, q, tol)
    margin = K_MARGIN * (1.0 + abs(x) + support_beta(tree, claims, np.abs(q), tol))
    return x > needed + margin


def in_C(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    x: float,
    q,
    g,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> bool:
    """g >= 0 is dominated by X_T + <q, f> for an acceptable X starting from x."""
    F = check_claims(tree, claims)
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        return False
    needed = alpha(tree, g - F @ np.asarray(q, dtype=float), tol)
    return needed <= x + tol.lp * (1.0 + abs(x))


@lru_cache(maxsize=512)
def _reduce(
    tree: ScenarioTree, claims: tuple[Claim, ...], tol: Tolerances
) -> EndowmentReduction:
    require_emm(tree, tol)
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    N = F.shape[1]
    traded = np.hstack([np.ones((layout.n_leaves, 1)), layout.gains])

    kept: list[int] = []
    coefficients = np.zeros((N, N))
    costs = np.zeros(N)
    holdings = np.zeros((N, layout.n_strategy))
    for i in range(N):
        f = F[:, i]
        basis = np.hstack([F[:, kept], traded])
        coef, *_ = np.linalg.lstsq(basis, f, rcond=None)
        residual = np.abs(f - basis @ coef).max()
        if residual <= REPLICATION_TOL * (1.0 + np.abs(f).max()):
            c = coef[: len(kept)]
            remainder = f - F[:, kept] @ c
            replication = is_replicable(tree, remainder, tol)
            if replication.replicable:
                coefficients[i, kept] = c
                costs[i] = replication.cost
                holdings[i] = [
                    s for node in layout.internal for s in replication.strategy.holdings[node]
                ]
                logger.debug("claim %s replicable modulo kept claims at cost %g", i, costs[i])
                continue
        kept.append(i)
        coefficients[i, i] = 1.0

    matrix = np.zeros((N, len(kept)))
    for j, i in enumerate(kept):
        matrix[:, j] = coefficients[:, i]
    return EndowmentReduction(
        kept=tuple(kept),
        claims=tuple(claims[i] for i in kept),
        coefficients=tuple(tuple(float(v) for v in row) for row in matrix),
        replication_cost=tuple(float(v) for v in costs),
        replication_holdings=tuple(tuple(float(v) for v in row) for row in holdings),
        n_strategy=layout.n_strategy,
    )


def reduce_endowments(
    tree: ScenarioTree, claims: Sequence[Claim], tol: Tolerances = DEFAULT_TOLERANCES
) -> EndowmentReduction:
    """Drop claims that are replicable modulo the ones kept before them."""
    return _reduce(tree, tuple(claims), tol)


def openness_report(
    tree: ScenarioTree, claims: Sequence[Claim], tol: Tolerances = DEFAULT_TOLERANCES
) -> OpennessReport:
    reduction = reduce_endowments(tree, claims, tol)
    direction = None
    if reduction.dropped:
        i = reduction.dropped[0]
        q = np.zeros(len(claims))
        q[i] = 1.0
        for j, k in enumerate(reduction.kept):
            q[k] = -reduction.coefficients[i][j]
        direction = tuple(float(v) for v in q)
    return OpennessReport(
        L_open=not reduction.dropped, replicable_direction=direction, reduction=reduction
    )


def l_membership(
    tree: ScenarioTree, claims: Sequence[Claim], y: float, r, tol: Tolerances = DEFAULT_TOLERANCES
) -> LMembership:
    r = np.asarray(r, dtype=float)
    if r.shape != (len(claims),):
        raise DimensionMismatchError(f"{r.size} dual coordinates for {len(claims)} claims")
    if not (np.isfinite(y) and y > 0.0 and np.all(np.isfinite(r))):
        return LMembership(inside=False, reason="y must be positive and finite")
    reduction = reduce_endowments(tree, claims, tol)
    p = r / y
    kept = list(reduction.kept)
    lifted = reduction.lift_prices(p[kept])
    mismatch = float(np.abs(lifted - p).max(initial=0.0))
    if mismatch > tol.cert * (1.0 + np.abs(p).max(initial=0.0)):
        return LMembership(
            inside=False,
            reason=f"prices of replicable claims off their replication cost by {mismatch:.3e}",
        )
    if not kept:
        return LMembership(inside=True, margin=require_emm(tree, tol).margin)
    membership = in_price_set(tree, reduction.claims, p[kept], tol)
    if not membership.inside:
        return LMembership(
            inside=False, reason="r/y is not an interior arbitrage-free price", margin=membership.margin
        )
    return LMembership(inside=True, margin=membership.margin)


def in_L(
    tree: ScenarioTree, claims: Sequence[Claim], y: float, r, tol: Tolerances = DEFAULT_TOLERANCES
) -> bool:
    return l_membership(tree, claims, y, r, tol).inside


def integrability_report(
    tree: ScenarioTree, claims: Sequence[Claim], tol: Tolerances = DEFAULT_TOLERANCES
) -> IntegrabilityReport:
    F = check_claims(tree, claims)
    N = F.shape[1]
    capital = {}
    worst = {}
    for i, claim in enumerate(claims):
        unit = np.zeros(N)
        unit[i] = 1.0
        capital[f"+{claim.name}"] = minimal_capital(tree, claims, unit, tol)
        capital[f"-{claim.name}"] = minimal_capital(tree, claims, -unit, tol)
        worst[claim.name] = alpha(tree, np.abs(F[:, i]), tol)
    return IntegrabilityReport(
        k_contains_cash=in_K(tree, claims, 1.0, np.zeros(N), tol),
        minimal_capital=capital,
        dominating_capital=dominating_wealth(tree, claims, tol).x0,
        worst_case_abs_expectation=worst,
    )


def sample_emms(
    tree: ScenarioTree,
    count: int,
    rng: np.random.Generator,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> list[np.ndarray]:
    """Strictly positive martingale measures: mixtures of the interior measure with random vertices."""
    interior = np.asarray(require_emm(tree, tol).measure)
    layout = tree_layout(tree)
    samples = []
    for _ in range(count):
        direction = rng.normal(size=layout.n_leaves)
        _, _, _, vertex, _ = _superreplicate(tree, tuple(float(v) for v in direction), tol)
        weight = rng.uniform(0.05, 1.0)
        samples.append(weight * interior + (1.0 - weight) * np.asarray(vertex))
    return samples


def price_range(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    p,
    index: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[float, float]:
    """Range of E_Q[f_index] over Q in cl M with E_Q[f_j] = p_j for every other j."""
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    p = np.asarray(p, dtype=float)
    others = [j for j in range(F.shape[1]) if j != index]
    A_m, b_m = _measure_rows(layout)
    A = np.vstack([A_m, F[:, others].T])
    b = np.concatenate([b_m, p[others]])
    bounds = []
    for sense in (Sense.MIN, Sense.MAX):
        lp = LinearProgram(
            c=F[:, index],
            A=A,
            relations=(Relation.EQ,) * A.shape[0],
            b=b,
            lower=np.zeros(layout.n_leaves),
            upper=np.full(layout.n_leaves, np.inf),
            sense=sense,
        )
        solution = _solved(lp, tol, "price range")
        if not solution.optimal:
            raise LpError(f"price range program is {solution.status}")
        bounds.append(float(solution.value))
    return bounds[0], bounds[1]
