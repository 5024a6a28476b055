from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class UtilitySpec(BaseModel):
    """Utility as it appears in configuration: {"kind": "log"} or {"kind": "power", "gamma": 0.5}."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["log", "power"] = "log"
    gamma: float | None = Field(default=None, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def gamma_matches_kind(self) -> "UtilitySpec":
        if self.kind == "power" and self.gamma is None:
            raise ValueError("power utility needs gamma in (0, 1)")
        if self.kind == "log" and self.gamma is not None:
            raise ValueError("log utility takes no gamma")
        return self

    @classmethod
    def parse(cls, text: str) -> "UtilitySpec":
        """Parse the command-line form: `log`, `power:0.5` or `power(0.5)`."""
        text = text.strip().lower()
        if text == "log":
            return cls(kind="log")
        for prefix in ("power:", "power(", "power="):
            if text.startswith(prefix):
                return cls(kind="power", gamma=float(text[len(prefix) :].rstrip(")")))
        raise ValueError(f"unknown utility {text!r}; expected 'log' or 'power:<gamma>'")

    @property
    def label(self) -> str:
        return "log" if self.kind == "log" else f"power({self.gamma:g})"


class AsymptoticElasticity(BaseModel):
    exact: float | None
    sampled: float
    sample_point: float

    @property
    def value(self) -> float:
        return self.exact if self.exact is not None else self.sampled

    @property
    def below_one(self) -> bool:
        return self.value < 1.0
