from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from core.errors import LpError


class Relation(StrEnum):
    LE = "<="
    EQ = "="
    GE = ">="


class Sense(StrEnum):
    MIN = "min"
    MAX = "max"


class LpStatus(StrEnum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_ERROR = "numerical_error"


@dataclass(frozen=True)
class LinearProgram:
    """Dense LP: optimize c·x subject to A x (rel) b and lower <= x <= upper."""

    c: np.ndarray
    A: np.ndarray
    relations: tuple[Relation, ...]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: Sense = Sense.MIN

    def __post_init__(self):
        n = self.c.shape[0]
        m = self.b.shape[0]
        if self.c.ndim != 1 or self.b.ndim != 1:
            raise LpError("objective and right-hand side must be vectors")
        if self.A.shape != (m, n):
            raise LpError(f"constraint matrix is {self.A.shape}, expected {(m, n)}")
        if len(self.relations) != m:
            raise LpError(f"{len(self.relations)} relations for {m} rows")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise LpError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A))):
            raise LpError("objective and constraint coefficients must be finite")
        if not np.all(np.isfinite(self.b)):
            raise LpError("right-hand side must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise LpError("bounds must not be NaN")
        if np.any(self.lower > self.upper):
            raise LpError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    @classmethod
    def build(
        cls,
        c,
        rows: list[tuple[np.ndarray, Relation, float]],
        lower=None,
        upper=None,
        sense: Sense = Sense.MIN,
    ) -> "LinearProgram":
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), n)
        return cls(
            c=c,
            A=A,
            relations=tuple(r[1] for r in rows),
            b=np.array([r[2] for r in rows], dtype=float),
            lower=np.zeros(n) if lower is None else np.asarray(lower, dtype=float),
            upper=np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float),
            sense=sense,
        )

    def dual(self) -> "LinearProgram":
        """Dual of a program in canonical form: max c·x, A x <= b, x >= 0 (or its min/>= mirror)."""
        if not (np.all(self.lower == 0) and np.all(np.isinf(self.upper))):
            raise LpError("dual() needs nonnegative variables without upper bounds")
        expected = Relation.LE if self.sense is Sense.MAX else Relation.GE
        if any(rel is not expected for rel in self.relations):
            raise LpError(f"dual() needs every row to be {expected}")
        flipped = Relation.GE if self.sense is Sense.MAX else Relation.LE
        m = self.n_rows
        return LinearProgram(
            c=self.b.copy(),
            A=self.A.T.copy(),
            relations=(flipped,) * self.n_vars,
            b=self.c.copy(),
            lower=np.zeros(m),
            upper=np.full(m, np.inf),
            sense=Sense.MIN if self.sense is Sense.MAX else Sense.MAX,
        )


@dataclass(frozen=True)
class LpSolution:
    """`duals[i]` is the sensitivity of the optimal value to the i-th right-hand side."""

    status: LpStatus
    value: float = float("nan")
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL
