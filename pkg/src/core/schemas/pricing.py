from pydantic import BaseModel, ConfigDict

from core.schemas.report import CheckSuite


class CertaintyEquivalent(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    residual: float
    lower: float
    upper: float
    per_unit: float | None = None


class DifferentiabilityProbe(BaseModel):
    """One-sided derivatives of u in (x, q_1, ..., q_N)."""

    model_config = ConfigDict(frozen=True)

    left: tuple[float, ...]
    right: tuple[float, ...]
    unique_price: bool
    worst_mismatch: float


class PriceReport(BaseModel):
    utility_based_price: tuple[float, ...]
    certainty_equivalent: CertaintyEquivalent
    consistency: CheckSuite
    probe: DifferentiabilityProbe | None = None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.consistency.passed
