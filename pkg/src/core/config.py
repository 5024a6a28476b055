from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    tol_grad: float = 1e-10
    tol_cert: float = 1e-8
    tol_lp: float = 1e-9
    tol_pivot: float = 1e-10
    tol_interior: float = 1e-10
    tol_fd: float = 1e-3
    max_newton_iter: int = 200
    max_cut_rounds: int = 50
    max_lp_iter: int = 50_000
    workers: int = 4
    log_level: str = "WARNING"
    report_format: str = "text"

    model_config = SettingsConfigDict(env_file=".env", env_prefix="DUALITY_", extra="ignore")


settings = Settings()


class Tolerances(BaseModel):
    """Numerical thresholds shared by the solvers; immutable once built."""

    model_config = ConfigDict(frozen=True)

    grad: PositiveFloat = settings.tol_grad
    cert: PositiveFloat = settings.tol_cert
    lp: PositiveFloat = settings.tol_lp
    pivot: PositiveFloat = settings.tol_pivot
    interior: PositiveFloat = settings.tol_interior
    fd: PositiveFloat = settings.tol_fd
    max_newton_iter: PositiveInt = settings.max_newton_iter
    max_cut_rounds: PositiveInt = settings.max_cut_rounds
    max_lp_iter: PositiveInt = settings.max_lp_iter


DEFAULT_TOLERANCES = Tolerances()
