"""Fan the invariant suite out over randomly generated markets."""

import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from pydantic import BaseModel

from core.config import DEFAULT_TOLERANCES, Tolerances, settings
from core.errors import DualityError
from core.services.generator import generate_market
from core.services.verify_svc import verify_market

logger = logging.getLogger(__name__)


class BatchItem(BaseModel):
    id: str
    seed: int
    branching: int
    periods: int
    assets: int
    n_claims: int


class BatchResult(BaseModel):
    id: str
    seed: int
    shape: str
    passed: bool
    checks: int
    failures: list[str] = []
    worst_gap: float | None = None
    error: str | None = None


def plan_batch(seed: int, count: int) -> list[BatchItem]:
    """Market shapes for one batch: one or two periods, at most five branches and two assets.

    Two-asset markets have at least four branches per node.
    """
    rng = np.random.default_rng(seed)
    items = []
    for k in range(count):
        assets = int(rng.integers(1, 3))
        items.append(
            BatchItem(
                id=f"{seed}-{k:04d}",
                seed=int(rng.integers(0, 2**31 - 1)),
                branching=int(rng.integers(2 * assets, 6)),
                periods=int(rng.integers(1, 3)),
                assets=assets,
                n_claims=int(rng.integers(1, 3)),
            )
        )
    return items


def run_item(item: BatchItem, utility: str, tol: Tolerances) -> BatchResult:
    shape = f"{item.branching}x{item.periods}x{item.assets}/{item.n_claims}"
    try:
        market = generate_market(
            item.seed, item.branching, item.periods, item.assets, item.n_claims, tol=tol
        )
        suite = verify_market(
            market.to_tree(), market.to_claims(), utility, tol=tol, seed=item.seed, full=False
        )
    except DualityError as error:
        return BatchResult(
            id=item.id, seed=item.seed, shape=shape, passed=False, checks=0, error=str(error)
        )
    gaps = [c.residual for c in suite.checks if c.name.endswith("conjugacy gap") and c.residual is not None]
    return BatchResult(
        id=item.id,
        seed=item.seed,
        shape=shape,
        passed=suite.passed,
        checks=len(suite.checks),
        failures=suite.failures(),
        worst_gap=max(gaps) if gaps else None,
    )


def run_batch(
    seed: int,
    count: int,
    utility: str = "log",
    tol: Tolerances = DEFAULT_TOLERANCES,
    workers: int | None = None,
) -> list[BatchResult]:
    """
    Verify `count` generated markets.

    Args:
        seed: Batch seed; instance seeds and shapes are drawn from it
        count: Number of markets
        utility: Utility in command-line form, e.g. "log" or "power:0.5"
        tol: Solver tolerances
        workers: Process count; 1 runs inline (default: settings.workers)

    Returns:
        Results sorted by instance id
    """
    items = plan_batch(seed, count)
    workers = settings.workers if workers is None else workers
    if workers <= 1:
        results = [run_item(item, utility, tol) for item in items]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(run_item, items, [utility] * len(items), [tol] * len(items))
            )
    failed = sum(not r.passed for r in results)
    logger.info("batch %d: %d/%d markets passed", seed, len(results) - failed, len(results))
    return sorted(results, key=lambda r: r.id)
