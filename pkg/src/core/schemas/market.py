import math
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator


class NodeRecord(BaseModel):
    """One node of the event tree; `p` is the probability conditional on the parent."""

    model_config = ConfigDict(frozen=True)

    id: str
    parent: str | None = None
    p: float = 1.0
    prices: tuple[float, ...]


class ScenarioTree(BaseModel):
    model_config = ConfigDict(frozen=True)

    assets: tuple[str, ...] = Field(min_length=1)
    nodes: tuple[NodeRecord, ...] = Field(min_length=1)

    @property
    def asset_count(self) -> int:
        return len(self.assets)

    @property
    def root(self) -> NodeRecord | None:
        roots = [node for node in self.nodes if node.parent is None]
        return roots[0] if len(roots) == 1 else None


class ClaimBase(BaseModel):
    name: str
    payoff: tuple[float, ...]

    @field_validator("payoff")
    @classmethod
    def payoff_finite(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(v) for v in value):
            raise ValueError("claim payoffs must be finite")
        return value


class Claim(ClaimBase):
    model_config = ConfigDict(frozen=True)


class Portfolio(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    q: tuple[float, ...] = ()

    @field_validator("x")
    @classmethod
    def x_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("initial capital must be finite")
        return value

    @field_validator("q")
    @classmethod
    def q_finite(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(v) for v in value):
            raise ValueError("claim quantities must be finite")
        return value


class Strategy(BaseModel):
    """Share counts per asset, keyed by non-terminal node id. Sign-free."""

    model_config = ConfigDict(frozen=True)

    holdings: dict[str, tuple[float, ...]]


class TerminalWealth(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: tuple[float, ...]


class TreeCheck(BaseModel):
    name: str
    passed: bool
    offending_nodes: list[str] = []
    detail: str = ""


class TreeDiagnostics(BaseModel):
    checks: list[TreeCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]

    def check(self, name: str) -> TreeCheck:
        return next(check for check in self.checks if check.name == name)


class MarketFile(BaseModel):
    """On-disk market document: `assets`, `nodes`, `claims`, optional `metadata`."""

    assets: list[str]
    nodes: list[NodeRecord]
    claims: list[ClaimBase] = []
    metadata: dict[str, Any] | None = None

    def to_tree(self) -> ScenarioTree:
        return ScenarioTree(assets=tuple(self.assets), nodes=tuple(self.nodes))

    def to_claims(self) -> list[Claim]:
        return [Claim(name=c.name, payoff=c.payoff) for c in self.claims]

    @classmethod
    def from_market(
        cls, tree: ScenarioTree, claims: list[Claim], metadata: dict[str, Any] | None = None
    ) -> "MarketFile":
        return cls(
            assets=list(tree.assets),
            nodes=list(tree.nodes),
            claims=[ClaimBase(name=c.name, payoff=c.payoff) for c in claims],
            metadata=metadata,
        )
