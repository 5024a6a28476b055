"""Utility functions on (0, inf) together with their convex conjugates.

`Utility` is the evaluator contract. A user-supplied utility subclasses it and
must pass `check_utility` before it is handed to the solvers.
"""

import logging
import math
from abc import ABC, abstractmethod

import numpy as np
from scipy.optimize import minimize_scalar

from core.schemas.report import CheckSuite
from core.schemas.utility import AsymptoticElasticity, UtilitySpec

logger = logging.getLogger(__name__)

GRID = np.logspace(-6.0, 6.0, 64)
AE_SAMPLE_POINT = 1e6


class Utility(ABC):
    name: str = "utility"
    # V(c y) = a(c) V(y) + b(c) for every c > 0
    homogeneous_conjugate: bool = False

    @abstractmethod
    def U(self, x): ...

    @abstractmethod
    def dU(self, x): ...

    @abstractmethod
    def d2U(self, x): ...

    @abstractmethod
    def V(self, y): ...

    @abstractmethod
    def I(self, y):  # noqa: E743
        """Inverse marginal utility, (U')^{-1}."""

    def dV(self, y):
        return -self.I(y)

    def d2V(self, y):
        # V'' = -I' = -1 / U''(I(y))
        return -1.0 / self.d2U(self.I(y))

    def exact_asymptotic_elasticity(self) -> float | None:
        return None

    def conjugate_scaling(self, c: float) -> tuple[float, float] | None:
        """Constants (c1, c2) with V(y / c) <= c1 V(y) + c2 for all y > 0, when known."""
        return None

    def __repr__(self) -> str:
        return self.name


class LogUtility(Utility):
    name = "log"
    homogeneous_conjugate = True

    def U(self, x):
        return np.log(x)

    def dU(self, x):
        return 1.0 / np.asarray(x, dtype=float)

    def d2U(self, x):
        return -1.0 / np.square(x)

    def V(self, y):
        return -np.log(y) - 1.0

    def I(self, y):  # noqa: E743
        return 1.0 / np.asarray(y, dtype=float)

    def d2V(self, y):
        return 1.0 / np.square(y)

    def exact_asymptotic_elasticity(self) -> float:
        return 0.0

    def conjugate_scaling(self, c: float) -> tuple[float, float]:
        return 1.0, max(math.log(c), 0.0)


class PowerUtility(Utility):
    """U(x) = x^gamma / gamma, 0 < gamma < 1."""

    homogeneous_conjugate = True

    def __init__(self, gamma: float):
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        self.gamma = gamma
        self.name = f"power({gamma:g})"

    def U(self, x):
        return np.power(x, self.gamma) / self.gamma

    def dU(self, x):
        return np.power(x, self.gamma - 1.0)

    def d2U(self, x):
        return (self.gamma - 1.0) * np.power(x, self.gamma - 2.0)

    def V(self, y):
        g = self.gamma
        return (1.0 - g) / g * np.power(y, g / (g - 1.0))

    def I(self, y):  # noqa: E743
        return np.power(y, 1.0 / (self.gamma - 1.0))

    def exact_asymptotic_elasticity(self) -> float:
        return self.gamma

    def conjugate_scaling(self, c: float) -> tuple[float, float]:
        return c ** (self.gamma / (1.0 - self.gamma)), 0.0


type UtilityLike = Utility | UtilitySpec | str


def build_utility(spec: UtilitySpec) -> Utility:
    if spec.kind == "log":
        return LogUtility()
    return PowerUtility(spec.gamma)


def _positive(value: float, what: str):
    if not value > 0.0:
        raise ValueError(f"{what} must be positive, got {value}")


def conjugate(utility: UtilityLike, y: float) -> float:
    """V(y) = sup_{x>0} {U(x) - x y}."""
    _positive(y, "y")
    return float(as_utility(utility).V(y))


def inverse_marginal(utility: UtilityLike, y: float) -> float:
    _positive(y, "y")
    return float(as_utility(utility).I(y))


def bidual_check(utility: UtilityLike, x: float) -> float:
    """|U(x) - inf_y {V(y) + x y}|, the infimum located on GRID and refined in log-space."""
    utility = as_utility(utility)
    _positive(x, "x")
    values = utility.V(GRID) + x * GRID
    k = int(np.argmin(values))
    lo = math.log(GRID[max(k - 1, 0)])
    hi = math.log(GRID[min(k + 1, GRID.size - 1)])
    refined = minimize_scalar(
        lambda t: float(utility.V(math.exp(t)) + x * math.exp(t)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    best = min(float(values[k]), float(refined.fun))
    return abs(float(utility.U(x)) - best)


def asymptotic_elasticity(utility: UtilityLike) -> AsymptoticElasticity:
    utility = as_utility(utility)
    x = AE_SAMPLE_POINT
    sampled = float(x * utility.dU(x) / utility.U(x))
    return AsymptoticElasticity(
        exact=utility.exact_asymptotic_elasticity(), sampled=sampled, sample_point=x
    )


def conjugate_scaling_constants(utility: Utility, c: float) -> tuple[float, float, float]:
    """(c1, c2, worst grid slack of V(y/c) - c1 V(y) - c2); slack <= 0 means verified."""
    _positive(c, "c")
    constants = utility.conjugate_scaling(c)
    if constants is None:
        raise ValueError(f"no scaling constants known for {utility!r}")
    c1, c2 = constants
    slack = utility.V(GRID / c) - c1 * utility.V(GRID) - c2
    scale = 1.0 + np.abs(utility.V(GRID / c))
    return c1, c2, float(np.max(slack / scale))


def check_utility(utility: Utility) -> CheckSuite:
    """Sampled invariants every utility must satisfy before use."""
    suite = CheckSuite()
    x = GRID
    u, du, d2u = utility.U(x), utility.dU(x), utility.d2U(x)

    suite.add("increasing", bool(np.all(du > 0) and np.all(np.diff(u) > 0)))
    midpoint = utility.U(0.5 * (x[:-1] + x[1:])) - 0.5 * (u[:-1] + u[1:])
    suite.add("strictly concave", bool(np.all(d2u < 0) and np.all(midpoint > 0)))
    suite.add(
        "inada",
        bool(np.all(np.diff(du) < 0) and du[0] / du[-1] >= 10.0),
        detail=f"U'({x[0]:g})={du[0]:.4g}, U'({x[-1]:g})={du[-1]:.4g}",
    )

    y = GRID
    inverse = utility.I(y)
    marginal_residual = float(np.max(np.abs(utility.dU(inverse) - y) / (1.0 + y)))
    suite.add("inverse marginal", marginal_residual <= 1e-10, marginal_residual, 1e-10)
    derivative_residual = float(np.max(np.abs(utility.dV(y) + inverse) / (1.0 + inverse)))
    suite.add("conjugate derivative", derivative_residual <= 1e-10, derivative_residual, 1e-10)

    xx, yy = np.meshgrid(x, y, indexing="ij")
    upper = utility.V(yy) + xx * yy
    lower = utility.U(xx)
    fenchel_slack = float(np.max((lower - upper) / (1.0 + np.abs(upper))))
    suite.add("fenchel inequality", fenchel_slack <= 1e-12, fenchel_slack, 1e-12)

    y_star = utility.dU(x)
    equality = float(
        np.max(np.abs(u - utility.V(y_star) - x * y_star) / (1.0 + np.abs(u)))
    )
    suite.add("fenchel equality", equality <= 1e-8, equality, 1e-8)

    bidual = max(bidual_check(utility, float(v)) for v in np.logspace(-3.0, 3.0, 7))
    suite.add("bidual", bidual <= 1e-6, bidual, 1e-6)

    ae = asymptotic_elasticity(utility)
    suite.add(
        "asymptotic elasticity below one",
        ae.below_one,
        ae.value,
        1.0,
        detail=f"sampled ratio at {ae.sample_point:g}: {ae.sampled:.4f}",
        warning_only=True,
    )
    if not suite.passed:
        logger.warning("utility %r fails %s", utility, suite.failures())
    return suite


def as_utility(utility: UtilityLike) -> Utility:
    """Accept an evaluator, a parsed spec or its text form ("log", "power:0.5")."""
    if isinstance(utility, Utility):
        return utility
    if isinstance(utility, str):
        utility = UtilitySpec.parse(utility)
    return build_utility(utility)
