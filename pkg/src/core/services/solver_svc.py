"""Primal and dual solvers for expected utility with claim endowments.

The primal maximizes E[U(x + gains @ h + <q, f>)] over flattened holdings h by
damped Newton. The dual minimizes E[V(h)] over leaf values h > 0 subject to
E[h Z] <= 1 for every normalized acceptable payoff Z >= 0, where acceptable
payoffs are Z = x + gains @ H + <q, f> with xy + <q, r> = 1. That constraint
set is only available through a separation program, so the dual is solved by
cutting planes. Each relaxed problem keeps finitely many cuts Z_k and is solved
through its Lagrangian in the cut multipliers:

    psi(lam) = E[U(Z @ lam)] - sum(lam),  lam >= 0,

whose maximizer gives h = U'(Z @ lam).
"""

import logging
from collections.abc import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from core.config import DEFAULT_TOLERANCES, Tolerances
from core.errors import (
    CertificateFailure,
    DimensionMismatchError,
    LpError,
    NonConvergenceError,
    NotInKError,
    NotInLError,
)
from core.schemas.lp import LinearProgram, LpStatus, Relation, Sense
from core.schemas.market import Claim, ScenarioTree, Strategy
from core.schemas.report import CheckSuite
from core.schemas.solution import (
    ConjugacyGap,
    DualSolution,
    FinitenessDiagnostics,
    PrimalSolution,
    SeparationResult,
    SubgradientPoint,
    WTilde,
)
from core.services.geometry_svc import (
    in_K,
    l_membership,
    minimal_capital,
    price_range,
    reduce_endowments,
    require_emm,
)
from core.services.linprog import solve_lp
from core.services.market_svc import (
    TreeLayout,
    check_claims,
    strategy_from_vector,
    strategy_vector,
    tree_layout,
)
from core.services.utility import Utility, UtilityLike, as_utility, asymptotic_elasticity

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MIN_STEP = 2.0**-60
STEP_TOL = 1e-9
POLISH_STEPS = 2
CUTS_PER_LEAF = 4
ROUNDING = 1e-15
GAP_TOL = 1e-7
RELATION_TOL = 1e-9
FD_STEP = 1e-4
W_TILDE_TOL = 1e-6
COORDINATE_MARGIN = 1e-6
COORDINATE_XATOL = 1e-7
MAX_SWEEPS = 50
SWEEP_TOL = 1e-12


def _quantities(values, count: int, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape != (count,):
        raise DimensionMismatchError(f"{values.size} {what} for {count} claims")
    return values


def _max_min_wealth(layout: TreeLayout, base: np.ndarray, tol: Tolerances) -> np.ndarray:
    """Holdings maximizing the smallest leaf value of base + gains @ h."""
    n, m = layout.n_leaves, layout.n_strategy
    lp = LinearProgram(
        c=np.concatenate([np.zeros(m), [1.0]]),
        A=np.hstack([layout.gains, -np.ones((n, 1))]),
        relations=(Relation.GE,) * n,
        b=-base,
        lower=np.full(m + 1, -np.inf),
        upper=np.full(m + 1, np.inf),
        sense=Sense.MAX,
    )
    solution = solve_lp(lp, tol)
    if not solution.optimal:
        raise LpError(f"max-min wealth program is {solution.status}")
    return solution.x[:m]


def max_min_strategy(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[Strategy, float]:
    """Strategy with the largest worst-leaf consumption, and that consumption."""
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    base = x + F @ _quantities(q, F.shape[1], "quantities")
    h = _max_min_wealth(layout, base, tol)
    return strategy_from_vector(tree, h), float((base + layout.gains @ h).min())


def _newton_direction(
    G: np.ndarray, P: np.ndarray, utility: Utility, g: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradient, Newton direction and squared Newton decrement of E[U(g)] in the holdings."""
    grad = G.T @ (P * utility.dU(g))
    hessian = (G.T * (P * utility.d2U(g))) @ G
    direction, *_ = np.linalg.lstsq(hessian, -grad, rcond=None)
    return grad, direction, float(grad @ direction)


def _polish(
    G: np.ndarray, P: np.ndarray, utility: Utility, h: np.ndarray, g: np.ndarray, norm: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Full Newton steps kept only while they shrink the gradient."""
    for _ in range(POLISH_STEPS):
        _, direction, _ = _newton_direction(G, P, utility, g)
        trial = g + G @ direction
        if trial.min() <= 0.0:
            break
        trial_norm = float(np.abs(G.T @ (P * utility.dU(trial))).max(initial=0.0))
        if not trial_norm < norm:
            break
        h, g, norm = h + direction, trial, trial_norm
    return h, g, norm


def solve_primal(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
    start: Strategy | None = None,
) -> PrimalSolution:
    """u(x, q) by damped Newton over holdings, from the max-min wealth point unless `start` is given.

    Consumption is carried along the iterates and updated by each step rather
    than recomputed from the holdings. Newton stops once the gradient is below
    `tol.grad` and the Newton step is negligible, then takes up to two
    polishing steps.
    """
    utility = as_utility(utility)
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    q = _quantities(q, F.shape[1], "quantities")
    if not in_K(tree, claims, x, q, tol):
        raise NotInKError(float(x), q.tolist(), minimal_capital(tree, claims, q, tol))

    P, G = layout.leaf_prob, layout.gains
    base = x + F @ q
    h = _max_min_wealth(layout, base, tol) if start is None else strategy_vector(tree, start)
    g = base + G @ h
    if g.min() <= 0.0:
        raise ValueError("starting strategy leaves nonpositive consumption at some leaf")
    value = float(P @ utility.U(g))

    norm = np.inf
    for iteration in range(tol.max_newton_iter + 1):
        grad, direction, decrement = _newton_direction(G, P, utility, g)
        norm = float(np.abs(grad).max(initial=0.0))
        step_size = float(np.abs(direction).max(initial=0.0))
        if norm <= tol.grad and step_size <= STEP_TOL * (1.0 + float(np.abs(h).max(initial=0.0))):
            h, g, norm = _polish(G, P, utility, h, g, norm)
            logger.debug("primal converged in %d iterations, |grad| %.2e", iteration, norm)
            return PrimalSolution(
                x=float(x),
                q=tuple(float(v) for v in q),
                strategy=strategy_from_vector(tree, h),
                holdings=tuple(float(v) for v in h),
                terminal_wealth=tuple(float(v) for v in g - F @ q),
                consumption=tuple(float(v) for v in g),
                value=float(P @ utility.U(g)),
                gradient_norm=norm,
                iterations=iteration,
            )
        if iteration == tol.max_newton_iter:
            break

        if not decrement > 0.0:
            direction, decrement = grad, float(grad @ grad)
        move = G @ direction
        step = 1.0
        while step >= MIN_STEP:
            trial = g + step * move
            if trial.min() > 0.0:
                trial_value = float(P @ utility.U(trial))
                if trial_value >= value + ARMIJO * step * decrement - ROUNDING * (1.0 + abs(value)):
                    break
            step *= 0.5
        else:
            logger.debug("primal line search stalled at |grad| %.2e", norm)
            raise NonConvergenceError("primal Newton (line search stalled)", iteration, norm)
        h = h + step * direction
        g, value = trial, trial_value

    raise NonConvergenceError("primal Newton", tol.max_newton_iter, norm)


def value_w(
    tree: ScenarioTree, utility: UtilityLike, x: float, tol: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """Value of investing x with no claim endowment."""
    return solve_primal(tree, [], utility, x, [], tol).value


def dual_separation(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    h,
    y: float,
    r,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> SeparationResult:
    """Largest E[h Z] over acceptable payoffs Z >= 0 normalized by xy + <q, r> = 1."""
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    r = _quantities(r, F.shape[1], "dual coordinates")
    h = np.asarray(h, dtype=float)
    if h.shape != (layout.n_leaves,):
        raise DimensionMismatchError(f"h has shape {h.shape}, expected one value per leaf")
    if np.any(h < 0.0):
        raise ValueError("h must be nonnegative")
    membership = l_membership(tree, claims, y, r, tol)
    if not membership.inside:
        raise NotInLError(float(y), r.tolist(), membership.reason)

    reduction = reduce_endowments(tree, claims, tol)
    kept = list(reduction.kept)
    Fk = F[:, kept]
    k, m, n = len(kept), layout.n_strategy, layout.n_leaves
    weights = layout.leaf_prob * h
    traded = np.hstack([np.ones((n, 1)), Fk, layout.gains])
    lp = LinearProgram(
        c=weights @ traded,
        A=np.vstack([traded, np.concatenate([[y], r[kept], np.zeros(m)])]),
        relations=(Relation.GE,) * n + (Relation.EQ,),
        b=np.concatenate([np.zeros(n), [1.0]]),
        lower=np.full(1 + k + m, -np.inf),
        upper=np.full(1 + k + m, np.inf),
        sense=Sense.MAX,
    )
    solution = solve_lp(lp, tol)
    if solution.status is LpStatus.UNBOUNDED:
        raise NotInLError(
            float(y), r.tolist(), "separation program unbounded: (y, r) lies on the boundary of L"
        )
    if not solution.optimal:
        raise LpError(f"separation program is {solution.status}")

    v = solution.x
    q = np.zeros(F.shape[1])
    q[kept] = v[1 : 1 + k]
    payoff = traded @ v
    return SeparationResult(
        feasible=solution.value <= 1.0 + tol.lp,
        value=float(solution.value),
        x=float(v[0]),
        q=tuple(float(t) for t in q),
        holdings=tuple(float(t) for t in v[1 + k :]),
        payoff=tuple(float(t) for t in payoff),
    )


def _cut_multipliers(
    Z: np.ndarray, P: np.ndarray, utility: Utility, lam: np.ndarray, tol: Tolerances
) -> np.ndarray:
    """Maximize E[U(Z @ lam)] - sum(lam) over lam >= 0 by projected Newton."""

    def evaluate(point: np.ndarray) -> tuple[float, np.ndarray]:
        z = Z @ point
        if z.min() <= 0.0:
            return -np.inf, z
        return float(P @ utility.U(z)) - float(point.sum()), z

    value, z = evaluate(lam)
    if not np.isfinite(value):
        raise ValueError("cut multipliers must start with positive consumption at every leaf")

    norm = np.inf
    for iteration in range(tol.max_newton_iter):
        grad = Z.T @ (P * utility.dU(z)) - 1.0
        projected = np.where(lam > 0.0, grad, np.maximum(grad, 0.0))
        norm = float(np.abs(projected).max())
        if norm <= tol.grad * (1.0 + abs(value)):
            logger.debug("cut subproblem solved in %d iterations", iteration)
            return lam

        free = (lam > 0.0) | (grad > 0.0)
        Zf = Z[:, free]
        newton = np.zeros_like(lam)
        free_step, *_ = np.linalg.lstsq((Zf.T * (P * utility.d2U(z))) @ Zf, -grad[free], rcond=None)
        newton[free] = free_step
        accepted = False
        for direction in (newton, projected):
            step = 1.0
            while step >= MIN_STEP:
                trial = np.maximum(lam + step * direction, 0.0)
                gain = float(grad @ (trial - lam))
                if gain > 0.0:
                    trial_value, trial_z = evaluate(trial)
                    if trial_value >= value + ARMIJO * gain - ROUNDING * (1.0 + abs(value)):
                        accepted = True
                        break
                step *= 0.5
            if accepted:
                break
        if not accepted:
            raise NonConvergenceError("cut subproblem Newton (line search stalled)", iteration, norm)
        lam, value, z = trial, trial_value, trial_z

    raise NonConvergenceError("cut subproblem Newton", tol.max_newton_iter, norm)


def _cutting_planes(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: Utility,
    y: float,
    r: np.ndarray,
    tol: Tolerances,
    warm_start: PrimalSolution | None,
) -> DualSolution:
    layout = tree_layout(tree)
    P = layout.leaf_prob
    cuts = [np.full(layout.n_leaves, 1.0 / y)]
    lam = np.array([1.0])
    if warm_start is not None:
        g = np.asarray(warm_start.consumption)
        budget = warm_start.x * y + float(np.dot(warm_start.q, r))
        if budget > 0.0 and g.min() > 0.0:
            cuts.append(g / budget)
            lam = np.array([0.0, budget])

    max_rounds = max(tol.max_cut_rounds, CUTS_PER_LEAF * layout.n_leaves)
    separation = None
    for rounds in range(1, max_rounds + 1):
        Z = np.column_stack(cuts)
        lam = _cut_multipliers(Z, P, utility, lam, tol)
        h = utility.dU(Z @ lam)
        separation = dual_separation(tree, claims, h, y, r, tol)
        logger.debug("cut round %d: separation value %.12f", rounds, separation.value)
        if separation.value <= 1.0 + tol.cert:
            # E[h Z] is linear in h, so dividing by the separation value lands inside D
            h = h / max(separation.value, 1.0)
            return DualSolution(
                h=tuple(float(v) for v in h),
                y=float(y),
                r=tuple(float(v) for v in r),
                value=float(P @ utility.V(h)),
                separation_value=min(separation.value, 1.0),
                source="cutting-plane",
                rounds=rounds,
            )
        cuts.append(np.maximum(np.asarray(separation.payoff), 0.0))
        lam = np.append(lam, 0.0)

    residual = separation.value - 1.0 if separation is not None else np.inf
    raise NonConvergenceError("dual cutting planes", max_rounds, residual)


def solve_dual(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    y: float,
    r,
    tol: Tolerances = DEFAULT_TOLERANCES,
    warm_start: PrimalSolution | None = None,
) -> DualSolution:
    """v(y, r) by cutting planes, seeded with the cash cut and, if given, a primal optimizer.

    D(c y, c r) = c D(y, r). When V(c h) is an affine function of V(h) the
    minimizer scales the same way, so the cuts are run at y = 1 and the
    optimizer is multiplied back by y.
    """
    utility = as_utility(utility)
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    r = _quantities(r, F.shape[1], "dual coordinates")
    membership = l_membership(tree, claims, y, r, tol)
    if not membership.inside:
        raise NotInLError(float(y), r.tolist(), membership.reason)

    if not utility.homogeneous_conjugate or y == 1.0:
        return _cutting_planes(tree, claims, utility, y, r, tol, warm_start)
    unit = _cutting_planes(tree, claims, utility, 1.0, r / y, tol, warm_start)
    h = y * np.asarray(unit.h)
    return unit.model_copy(
        update={
            "h": tuple(float(v) for v in h),
            "y": float(y),
            "r": tuple(float(v) for v in r),
            "value": float(layout.leaf_prob @ utility.V(h)),
        }
    )


def extract_dual_candidate(
    primal: PrimalSolution,
    utility: UtilityLike,
    tree: ScenarioTree,
    claims: Sequence[Claim],
    tol: Tolerances = DEFAULT_TOLERANCES,
    strict: bool | None = None,
) -> DualSolution:
    """h = U'(g) with (y, r) = (E[h], E[h f]), certified before it is returned.

    With `strict` unset, certificate failures raise when the utility has
    asymptotic elasticity below one and are logged as warnings otherwise.
    """
    utility = as_utility(utility)
    if strict is None:
        strict = asymptotic_elasticity(utility).below_one
    layout = tree_layout(tree)
    F = check_claims(tree, claims)
    P = layout.leaf_prob
    g = np.asarray(primal.consumption)
    h = utility.dU(g)
    y = float(P @ h)
    r = F.T @ (P * h)
    budget = primal.x * y + float(np.dot(primal.q, r))

    failures: list[CertificateFailure] = []
    pairing = abs(float(P @ (h * g)) - budget)
    if pairing > tol.cert * (1.0 + abs(budget)):
        failures.append(CertificateFailure("dual pairing", pairing, tol.cert))
    martingale = float(np.abs(layout.gains.T @ (P * h)).max(initial=0.0)) / y
    if martingale > tol.cert:
        failures.append(CertificateFailure("martingale density", martingale, tol.cert))

    separation_value = np.nan
    membership = l_membership(tree, claims, y, r, tol)
    if not membership.inside:
        failures.append(CertificateFailure("dual point in L", membership.margin, tol.interior))
    else:
        separation_value = dual_separation(tree, claims, h, y, r, tol).value
        if separation_value > 1.0 + tol.cert:
            failures.append(
                CertificateFailure("dual feasibility", separation_value - 1.0, tol.cert)
            )

    for failure in failures:
        if strict:
            raise failure
        logger.warning("demoted certificate: %s", failure)

    return DualSolution(
        h=tuple(float(v) for v in h),
        y=y,
        r=tuple(float(v) for v in r),
        value=float(P @ utility.V(h)),
        separation_value=float(separation_value),
        source="from-primal",
    )


def optimality_checks(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    primal: PrimalSolution,
    dual: DualSolution,
) -> CheckSuite:
    """Leafwise h = U'(g), the pairing E[h g] = xy + <q, r>, and the martingale property of h."""
    utility = as_utility(utility)
    layout = tree_layout(tree)
    P = layout.leaf_prob
    g = np.asarray(primal.consumption)
    h = np.asarray(dual.h)
    suite = CheckSuite()

    marginal = utility.dU(g)
    pointwise = float(np.max(np.abs(h - marginal) / np.maximum(1.0, np.abs(marginal))))
    suite.add("dual equals marginal utility", pointwise <= RELATION_TOL, pointwise, RELATION_TOL)

    budget = primal.x * dual.y + float(np.dot(primal.q, dual.r))
    pairing = abs(float(P @ (h * g)) - budget)
    suite.add(
        "dual pairing", pairing <= RELATION_TOL * (1.0 + abs(budget)), pairing, RELATION_TOL
    )

    mass = abs(float(P @ h) - dual.y)
    martingale = float(np.abs(layout.gains.T @ (P * h)).max(initial=0.0)) / dual.y
    suite.add("dual mass", mass <= RELATION_TOL * (1.0 + dual.y), mass, RELATION_TOL)
    suite.add("martingale density", martingale <= RELATION_TOL, martingale, RELATION_TOL)
    return suite


def conjugacy_gap(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> ConjugacyGap:
    """|u(x, q) - v(y, r) - xy - <q, r>| at the subgradient (y, r) of the primal optimizer."""
    utility = as_utility(utility)
    primal = solve_primal(tree, claims, utility, x, q, tol)
    candidate = extract_dual_candidate(primal, utility, tree, claims, tol)
    dual = solve_dual(tree, claims, utility, candidate.y, candidate.r, tol, warm_start=primal)
    budget = x * dual.y + float(np.dot(primal.q, dual.r))
    return ConjugacyGap(
        u=primal.value,
        y=dual.y,
        r=dual.r,
        v=dual.value,
        gap=abs(primal.value - (dual.value + budget)),
        tolerance=GAP_TOL * (1.0 + abs(primal.value)),
    )


def one_sided_derivatives(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward differences of u in (x, q_1, ..., q_N), step 1e-4 (1 + |x|)."""
    utility = as_utility(utility)
    q = _quantities(q, len(claims), "quantities")
    step = FD_STEP * (1.0 + abs(x))
    center = solve_primal(tree, claims, utility, x, q, tol).value
    point = np.concatenate([[x], q])
    left = np.empty(point.size)
    right = np.empty(point.size)
    for k in range(point.size):
        values = []
        for sign in (-1.0, 1.0):
            shifted = point.copy()
            shifted[k] += sign * step
            values.append(solve_primal(tree, claims, utility, shifted[0], shifted[1:], tol).value)
        left[k] = (center - values[0]) / step
        right[k] = (values[1] - center) / step
    return left, right


def subgradient(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float,
    q,
    tol: Tolerances = DEFAULT_TOLERANCES,
    check: bool = True,
) -> SubgradientPoint:
    """(y, r) in the superdifferential of u at (x, q), checked against central differences."""
    utility = as_utility(utility)
    primal = solve_primal(tree, claims, utility, x, q, tol)
    dual = extract_dual_candidate(primal, utility, tree, claims, tol)
    if not check:
        return SubgradientPoint(y=dual.y, r=dual.r)

    left, right = one_sided_derivatives(tree, claims, utility, x, q, tol)
    central = 0.5 * (left + right)
    analytic = np.concatenate([[dual.y], dual.r])
    scale = np.maximum(1.0, np.abs(analytic))
    residual = float(np.max(np.abs(central - analytic) / scale))
    if residual > tol.fd:
        raise CertificateFailure("finite-difference subgradient", residual, tol.fd)
    return SubgradientPoint(
        y=dual.y, r=dual.r, finite_difference=tuple(float(v) for v in central)
    )


def value_w_tilde(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    y: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> WTilde:
    """min over arbitrage-free prices p of v(y, y p), cross-checked against the claim-free dual."""
    if not y > 0.0:
        raise ValueError(f"y must be positive, got {y}")
    utility = as_utility(utility)
    direct = solve_dual(tree, [], utility, y, [], tol).value
    reduction = reduce_endowments(tree, claims, tol)
    reduced = list(reduction.claims)
    F = check_claims(tree, reduced)
    p = F.T @ np.asarray(require_emm(tree, tol).measure)

    evaluations = 0

    def objective(prices: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        try:
            return solve_dual(tree, reduced, utility, y, y * prices, tol).value
        except NotInLError:
            return np.inf

    best = objective(p)
    for sweep in range(MAX_SWEEPS):
        previous = best
        for i in range(p.size):
            lo, hi = price_range(tree, reduced, p, i, tol)
            width = hi - lo
            if width <= 0.0:
                continue

            def along(t: float, i: int = i) -> float:
                trial = p.copy()
                trial[i] = t
                return objective(trial)

            result = minimize_scalar(
                along,
                bounds=(lo + COORDINATE_MARGIN * width, hi - COORDINATE_MARGIN * width),
                method="bounded",
                options={"xatol": COORDINATE_XATOL},
            )
            if result.fun < best:
                p[i] = result.x
                best = float(result.fun)
        logger.debug("w-tilde sweep %d: %.12f", sweep, best)
        if previous - best <= SWEEP_TOL * (1.0 + abs(best)):
            break
    else:
        raise NonConvergenceError("price coordinate descent", MAX_SWEEPS, previous - best)

    mismatch = abs(best - direct)
    if mismatch > W_TILDE_TOL * (1.0 + abs(direct)):
        raise CertificateFailure("nested price minimum equals claim-free dual", mismatch, W_TILDE_TOL)
    return WTilde(
        value=best,
        direct=direct,
        argmin=tuple(float(v) for v in reduction.lift_prices(p)),
        evaluations=evaluations,
    )


def finiteness_diagnostics(
    tree: ScenarioTree,
    claims: Sequence[Claim],
    utility: UtilityLike,
    x: float | None = None,
    q=None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> FinitenessDiagnostics:
    utility = as_utility(utility)
    ae = asymptotic_elasticity(utility)
    if not ae.below_one:
        logger.warning("asymptotic elasticity %.3f >= 1: dual certificates become warnings", ae.value)
    measure = np.asarray(require_emm(tree, tol).measure)
    F = check_claims(tree, claims)
    prices = F.T @ measure
    bound = None
    if x is not None:
        q = np.zeros(F.shape[1]) if q is None else _quantities(q, F.shape[1], "quantities")
        bound = float((x + q @ prices) / measure.min())
    return FinitenessDiagnostics(
        asymptotic_elasticity=ae,
        emm_min_probability=float(measure.min()),
        claim_prices=tuple(float(v) for v in prices),
        wealth_bound=bound,
    )
