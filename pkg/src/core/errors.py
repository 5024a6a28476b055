"""Error hierarchy shared by the library and the command line."""

from typing import Any


class DualityError(Exception):
    exit_code: int = 1

    def details(self) -> dict[str, Any]:
        return {}


class InvalidTreeError(DualityError):
    def __init__(self, failures: list[str]):
        super().__init__(f"invalid scenario tree: {', '.join(failures)}")
        self.failures = failures

    def details(self) -> dict[str, Any]:
        return {"failed_checks": self.failures}


class DimensionMismatchError(DualityError):
    pass


class LpError(DualityError):
    pass


class NoEMMError(DualityError):
    """No equivalent martingale measure: the market admits arbitrage."""

    exit_code = 2

    def __init__(
        self,
        margin: float,
        arbitrage_holdings: dict[str, list[float]] | None = None,
        arbitrage_gains: list[float] | None = None,
    ):
        super().__init__(f"no equivalent martingale measure (interior margin {margin:.3e})")
        self.margin = margin
        self.arbitrage_holdings = arbitrage_holdings
        self.arbitrage_gains = arbitrage_gains

    def details(self) -> dict[str, Any]:
        return {
            "margin": self.margin,
            "arbitrage": {
                "holdings": self.arbitrage_holdings,
                "terminal_gains": self.arbitrage_gains,
            },
        }


class NotInKError(DualityError):
    exit_code = 3

    def __init__(self, x: float, q: list[float], minimal_capital: float):
        super().__init__(
            f"position (x={x}, q={q}) is not in the interior of the acceptable cone; "
            f"minimal capital is {minimal_capital}"
        )
        self.x = x
        self.q = q
        self.minimal_capital = minimal_capital

    def details(self) -> dict[str, Any]:
        return {"x": self.x, "q": self.q, "minimal_capital": self.minimal_capital}


class NotInLError(DualityError):
    def __init__(self, y: float, r: list[float], reason: str):
        super().__init__(f"dual point (y={y}, r={r}) is not in L: {reason}")
        self.y = y
        self.r = r
        self.reason = reason

    def details(self) -> dict[str, Any]:
        return {"y": self.y, "r": self.r, "reason": self.reason}


class NonConvergenceError(DualityError):
    exit_code = 4

    def __init__(self, method: str, iterations: int, residual: float):
        super().__init__(
            f"{method} did not converge after {iterations} iterations (residual {residual:.3e})"
        )
        self.method = method
        self.iterations = iterations
        self.residual = residual

    def details(self) -> dict[str, Any]:
        return {"method": self.method, "iterations": self.iterations, "residual": self.residual}


class CertificateFailure(DualityError):
    def __init__(self, identity: str, residual: float, tolerance: float):
        super().__init__(f"certificate '{identity}' failed: residual {residual:.3e} > {tolerance:.1e}")
        self.identity = identity
        self.residual = residual
        self.tolerance = tolerance

    def details(self) -> dict[str, Any]:
        return {"identity": self.identity, "residual": self.residual, "tolerance": self.tolerance}


class BracketError(DualityError):
    def __init__(self, lower: float, upper: float, message: str):
        super().__init__(f"{message} on [{lower}, {upper}]")
        self.lower = lower
        self.upper = upper

    def details(self) -> dict[str, Any]:
        return {"interval": [self.lower, self.upper]}


class RejectionBudgetError(DualityError):
    """The generator drew only arbitrage markets within its attempt budget."""

    def __init__(self, seed: int, attempts: int):
        super().__init__(f"no arbitrage-free market after {attempts} draws from seed {seed}")
        self.seed = seed
        self.attempts = attempts

    def details(self) -> dict[str, Any]:
        return {"seed": self.seed, "attempts": self.attempts}
