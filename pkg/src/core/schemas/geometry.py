import numpy as np
from pydantic import BaseModel, ConfigDict

from core.schemas.market import Claim, Strategy


class MeasureDensity(BaseModel):
    """An equivalent martingale measure given both as leaf masses and as dQ/dP."""

    model_config = ConfigDict(frozen=True)

    measure: tuple[float, ...]
    density: tuple[float, ...]
    margin: float

    @property
    def min_entry(self) -> float:
        return min(self.measure)

    @property
    def strictly_positive(self) -> bool:
        return self.min_entry > 0.0


class MartingaleSystem(BaseModel):
    """Equality rows A z = b over leaf-density variables z = dQ/dP."""

    model_config = ConfigDict(frozen=True)

    A: tuple[tuple[float, ...], ...]
    b: tuple[float, ...]

    def residual(self, density) -> np.ndarray:
        return np.asarray(self.A) @ np.asarray(density, dtype=float) - np.asarray(self.b)


class Superreplication(BaseModel):
    """alpha(g) with the hedge x0 + gains(strategy) >= g and a worst-case measure."""

    model_config = ConfigDict(frozen=True)

    price: float
    x0: float
    strategy: Strategy
    measure: tuple[float, ...]
    hedge_shortfall: float


class Replication(BaseModel):
    model_config = ConfigDict(frozen=True)

    replicable: bool
    cost: float
    upper: float
    lower: float
    strategy: Strategy | None


class DominatingWealth(BaseModel):
    model_config = ConfigDict(frozen=True)

    x0: float
    strategy: Strategy


class PriceSetMembership(BaseModel):
    model_config = ConfigDict(frozen=True)

    inside: bool
    margin: float
    measure: tuple[float, ...] | None = None


class LMembership(BaseModel):
    model_config = ConfigDict(frozen=True)

    inside: bool
    reason: str = ""
    margin: float = 0.0


class EndowmentReduction(BaseModel):
    """Decomposition f_i = sum_j coefficients[i][j] f'_j + (replicable payoff costing replication_cost[i]).

    `kept` indexes the original claims retained as f'. The replicable part of
    claim i is produced by `replication_holdings[i]` (flattened strategy) from
    capital `replication_cost[i]`.
    """

    model_config = ConfigDict(frozen=True)

    kept: tuple[int, ...]
    claims: tuple[Claim, ...]
    coefficients: tuple[tuple[float, ...], ...]
    replication_cost: tuple[float, ...]
    replication_holdings: tuple[tuple[float, ...], ...]
    n_strategy: int

    @property
    def dropped(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.replication_cost)) if i not in self.kept)

    def matrix(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float).reshape(
            len(self.replication_cost), len(self.kept)
        )

    def reduced_quantities(self, q) -> np.ndarray:
        return self.matrix().T @ np.asarray(q, dtype=float)

    def capital_shift(self, q) -> float:
        return float(np.dot(self.replication_cost, q))

    def strategy_shift(self, q) -> np.ndarray:
        holdings = np.asarray(self.replication_holdings, dtype=float).reshape(
            len(self.replication_cost), self.n_strategy
        )
        return holdings.T @ np.asarray(q, dtype=float)

    def lift_prices(self, reduced_prices) -> np.ndarray:
        """Prices of the original claims from prices of the kept ones."""
        return self.matrix() @ np.asarray(reduced_prices, dtype=float) + np.asarray(
            self.replication_cost
        )


class OpennessReport(BaseModel):
    L_open: bool
    replicable_direction: tuple[float, ...] | None = None
    reduction: EndowmentReduction


class IntegrabilityReport(BaseModel):
    k_contains_cash: bool
    minimal_capital: dict[str, float]
    dominating_capital: float
    worst_case_abs_expectation: dict[str, float]

    @property
    def passed(self) -> bool:
        return self.k_contains_cash and all(
            np.isfinite(v) for v in self.worst_case_abs_expectation.values()
        )
