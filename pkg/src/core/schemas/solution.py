from typing import Literal

from pydantic import BaseModel, ConfigDict

from core.schemas.market import Strategy
from core.schemas.utility import AsymptoticElasticity


class PrimalSolution(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    q: tuple[float, ...]
    strategy: Strategy
    holdings: tuple[float, ...]
    terminal_wealth: tuple[float, ...]
    consumption: tuple[float, ...]
    value: float
    gradient_norm: float
    iterations: int


class DualSolution(BaseModel):
    model_config = ConfigDict(frozen=True)

    h: tuple[float, ...]
    y: float
    r: tuple[float, ...]
    value: float
    separation_value: float
    source: Literal["from-primal", "cutting-plane"]
    rounds: int = 0

    @property
    def prices(self) -> tuple[float, ...]:
        return tuple(v / self.y for v in self.r)


class SubgradientPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    y: float
    r: tuple[float, ...]
    finite_difference: tuple[float, ...] | None = None


class SeparationResult(BaseModel):
    """Most violated normalized primal payoff Z = x + gains(H) + <q, f> >= 0 with xy + <q, r> = 1."""

    feasible: bool
    value: float
    x: float
    q: tuple[float, ...]
    holdings: tuple[float, ...]
    payoff: tuple[float, ...]


class ConjugacyGap(BaseModel):
    u: float
    y: float
    r: tuple[float, ...]
    v: float
    gap: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.tolerance


class WTilde(BaseModel):
    value: float
    direct: float
    argmin: tuple[float, ...]
    evaluations: int


class FinitenessDiagnostics(BaseModel):
    asymptotic_elasticity: AsymptoticElasticity
    emm_min_probability: float
    claim_prices: tuple[float, ...]
    wealth_bound: float | None = None

    @property
    def ae_below_one(self) -> bool:
        return self.asymptotic_elasticity.below_one

    @property
    def certificates_enforced(self) -> bool:
        return self.ae_below_one
