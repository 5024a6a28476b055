from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, field_validator

from core.config import settings

SCHEMA_VERSION = "1.0"


class CheckResult(BaseModel):
    name: str
    passed: bool
    residual: float | None = None
    tolerance: float | None = None
    detail: str = ""
    warning_only: bool = False


class CheckSuite(BaseModel):
    checks: list[CheckResult] = []

    @property
    def passed(self) -> bool:
        return all(c.passed or c.warning_only for c in self.checks)

    def add(
        self,
        name: str,
        passed: bool,
        residual: float | None = None,
        tolerance: float | None = None,
        detail: str = "",
        warning_only: bool = False,
    ) -> CheckResult:
        check = CheckResult(
            name=name,
            passed=bool(passed),
            residual=None if residual is None else float(residual),
            tolerance=tolerance,
            detail=detail,
            warning_only=warning_only,
        )
        self.checks.append(check)
        return check

    def extend(self, other: "CheckSuite", prefix: str = ""):
        for check in other.checks:
            self.checks.append(check.model_copy(update={"name": f"{prefix}{check.name}"}))

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not (c.passed or c.warning_only)]


class Report(BaseModel):
    schema_version: str = SCHEMA_VERSION
    command: str
    echo: dict[str, Any] = {}
    results: dict[str, Any] = {}
    checks: list[CheckResult] = []
    timing: dict[str, float] | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed or c.warning_only for c in self.checks)


class RunConfig(BaseModel):
    market: str | None = None
    utility: str = "log"
    x: float = 1.0
    q: list[float] | None = None
    tol_grad: float = Field(default=settings.tol_grad, gt=0.0)
    tol_cert: float = Field(default=settings.tol_cert, gt=0.0)
    format: Literal["json", "csv", "text"] = Field(default=settings.report_format, validate_default=True)
    seed: int = 42
    out: str | None = None
    timing: bool = False

    @field_validator("market")
    @classmethod
    def market_exists(cls, value: str | None) -> str | None:
        if value is not None and not Path(value).is_file():
            raise ValueError(f"market file {value!r} does not exist")
        return value
