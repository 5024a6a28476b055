"""Command line: solve, price, verify and gen.

Exit codes: 0 success, 1 usage/config/certificate or invariant failure,
2 no equivalent martingale measure, 3 position outside K, 4 non-convergence.
"""

import argparse
import json
import logging
import sys
import time
from collections.abc import Callable
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from cli.reports import render
from core.config import Tolerances, settings
from core.errors import DualityError
from core.schemas.market import MarketFile
from core.schemas.report import CheckResult, Report, RunConfig
from core.services.generator import FIXTURES, generate_market
from core.services.geometry_svc import (
    find_emm,
    in_price_set,
    is_replicable,
    reduce_endowments,
    superreplication_price,
)
from core.services.market_svc import check_claims, dump_market, load_market
from core.services.pricing_svc import (
    certainty_equivalent,
    differentiability_probe,
    utility_based_price,
)
from core.services.solver_svc import (
    extract_dual_candidate,
    finiteness_diagnostics,
    optimality_checks,
    solve_dual,
    solve_primal,
)
from core.services.utility import as_utility
from core.services.verify_svc import verify_market
from worker.tasks.batch import run_batch

logger = logging.getLogger("cli")

GAP_TOL = 1e-7


class Timer:
    def __init__(self):
        self.sections: dict[str, float] = {}

    def section(self, name: str, started: float):
        self.sections[name] = round(time.perf_counter() - started, 6)


def configure_logging(verbosity: int):
    level = logging.DEBUG if verbosity > 1 else logging.INFO if verbosity == 1 else settings.log_level
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _floats(values) -> list[float]:
    return [float(v) for v in values]


def _tolerances(config: RunConfig) -> Tolerances:
    return Tolerances(grad=config.tol_grad, cert=config.tol_cert)


def _market(config: RunConfig) -> MarketFile:
    if config.market is None:
        raise ValueError("--market is required")
    return load_market(config.market)


def _quantities(config: RunConfig, n_claims: int) -> list[float]:
    q = config.q if config.q is not None else [0.0] * n_claims
    if len(q) != n_claims:
        raise ValueError(f"--q has {len(q)} entries for {n_claims} claims")
    return q


def _echo(config: RunConfig) -> dict:
    return config.model_dump(exclude={"out", "timing"}, exclude_none=True)


def cmd_solve(config: RunConfig, args: argparse.Namespace) -> Report:
    market = _market(config)
    tree, claims = market.to_tree(), market.to_claims()
    utility = as_utility(config.utility)
    tol = _tolerances(config)
    q = _quantities(config, len(claims))
    timer = Timer()

    started = time.perf_counter()
    primal = solve_primal(tree, claims, utility, config.x, q, tol)
    timer.section("primal", started)
    started = time.perf_counter()
    candidate = extract_dual_candidate(primal, utility, tree, claims, tol)
    dual = solve_dual(tree, claims, utility, candidate.y, candidate.r, tol, warm_start=primal)
    timer.section("dual", started)
    started = time.perf_counter()
    prices = utility_based_price(tree, claims, utility, config.x, q, tol)
    ce = certainty_equivalent(tree, claims, utility, config.x, q, tol)
    timer.section("pricing", started)

    budget = config.x * dual.y + float(np.dot(q, dual.r))
    gap = abs(primal.value - dual.value - budget)
    report = Report(
        command="solve",
        echo=_echo(config),
        results={
            "u": primal.value,
            "holdings": {k: list(v) for k, v in primal.strategy.holdings.items()},
            "terminal_wealth": list(primal.terminal_wealth),
            "consumption": list(primal.consumption),
            "newton_iterations": primal.iterations,
            "y": dual.y,
            "r": list(dual.r),
            "h": list(dual.h),
            "v": dual.value,
            "cut_rounds": dual.rounds,
            "gap": gap,
            "utility_based_price": _floats(prices),
            "certainty_equivalent": ce.value,
        },
    )
    report.checks.extend(optimality_checks(tree, claims, utility, primal, candidate).checks)
    tolerance = GAP_TOL * (1.0 + abs(primal.value))
    report.checks.append(
        CheckResult(name="conjugacy gap", passed=gap <= tolerance, residual=gap, tolerance=tolerance)
    )
    diagnostics = finiteness_diagnostics(tree, claims, utility, config.x, q, tol)
    report.results["asymptotic_elasticity"] = diagnostics.asymptotic_elasticity.value
    report.results["wealth_bound"] = diagnostics.wealth_bound
    if config.timing:
        report.timing = timer.sections
    return report


def cmd_price(config: RunConfig, args: argparse.Namespace) -> Report:
    market = _market(config)
    tree, claims = market.to_tree(), market.to_claims()
    utility = as_utility(config.utility)
    tol = _tolerances(config)
    q = _quantities(config, len(claims))
    F = check_claims(tree, claims)
    started = time.perf_counter()

    per_claim = {}
    for i, claim in enumerate(claims):
        upper = superreplication_price(tree, F[:, i], tol)
        replication = is_replicable(tree, F[:, i], tol)
        per_claim[claim.name] = {
            "interval": [replication.lower, replication.upper],
            "replicable": replication.replicable,
            "worst_case_measure": list(upper.measure),
        }
    prices = utility_based_price(tree, claims, utility, config.x, q, tol)
    reduction = reduce_endowments(tree, claims, tol)
    kept = list(reduction.kept)
    witness = None
    if kept:
        membership = in_price_set(tree, reduction.claims, prices[kept], tol)
        witness = {"inside": membership.inside, "margin": membership.margin}
        if membership.measure is not None:
            witness["measure"] = list(membership.measure)
    ce = certainty_equivalent(tree, claims, utility, config.x, q, tol)
    probe = differentiability_probe(tree, claims, utility, config.x, q, tol)

    report = Report(
        command="price",
        echo=_echo(config),
        results={
            "claims": per_claim,
            "interior_measure": list(find_emm(tree, tol).measure),
            "utility_based_price": _floats(prices),
            "price_set_witness": witness,
            "certainty_equivalent": ce.value,
            "per_unit_certainty_equivalent": ce.per_unit,
            "differentiability": probe.model_dump(),
        },
    )
    if config.timing:
        report.timing = {"price": round(time.perf_counter() - started, 6)}
    return report


def cmd_verify(config: RunConfig, args: argparse.Namespace) -> Report:
    tol = _tolerances(config)
    utilities = [u.strip() for u in config.utility.split(",") if u.strip()]
    started = time.perf_counter()
    report = Report(command="verify", echo=_echo(config))

    if args.batch:
        results = []
        for utility in utilities:
            results += run_batch(config.seed, args.batch, utility, tol, args.workers)
        gaps = [r.worst_gap for r in results if r.worst_gap is not None]
        report.results = {
            "instances": [r.model_dump() for r in results],
            "summary": {
                "markets": len(results),
                "passed": sum(r.passed for r in results),
                "worst_gap": max(gaps) if gaps else None,
            },
        }
        report.checks.extend(
            CheckResult(
                name=f"market {r.id} {r.shape}",
                passed=r.passed,
                residual=r.worst_gap,
                detail=r.error or "; ".join(r.failures),
            )
            for r in results
        )
    else:
        if config.market is not None:
            markets = {Path(config.market).stem: load_market(config.market)}
        else:
            markets = {f"instance_{k.lower()}": build() for k, build in FIXTURES.items()}
        portfolios = None
        if config.q is not None:
            portfolios = [(config.x, config.q)]
        for name, market in markets.items():
            for utility in utilities:
                suite = verify_market(
                    market.to_tree(),
                    market.to_claims(),
                    utility,
                    portfolios,
                    tol,
                    seed=config.seed,
                    inject_fault=args.inject_fault,
                )
                prefix = f"{name} {as_utility(utility)!r}: "
                report.checks.extend(
                    c.model_copy(update={"name": prefix + c.name}) for c in suite.checks
                )
        report.results = {
            "checks": len(report.checks),
            "failed": len([c for c in report.checks if not (c.passed or c.warning_only)]),
        }
    if config.timing:
        report.timing = {"verify": round(time.perf_counter() - started, 6)}
    return report


def cmd_gen(config: RunConfig, args: argparse.Namespace) -> str:
    if args.fixture is not None:
        return dump_market(FIXTURES[args.fixture]())
    market = generate_market(
        config.seed, args.branching, args.periods, args.assets, args.claims, tol=_tolerances(config)
    )
    return dump_market(market)


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], Report | str]] = {
    "solve": cmd_solve,
    "price": cmd_price,
    "verify": cmd_verify,
    "gen": cmd_gen,
}


def _quantity_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--market", help="market file (JSON)")
    common.add_argument("--utility", default="log", help="log or power:<gamma>")
    common.add_argument("--x", type=float, default=1.0, help="initial capital")
    common.add_argument("--q", type=_quantity_list, help="claim quantities, comma separated")
    common.add_argument("--tol-grad", type=float, default=settings.tol_grad)
    common.add_argument("--tol-cert", type=float, default=settings.tol_cert)
    common.add_argument("--format", choices=["json", "csv", "text"], default=settings.report_format)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--timing", action="store_true", help="include wall-clock timing")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="endowment-duality",
        description="Optimal investment with random endowments on finite scenario trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="primal and dual optimizers with certificates")
    sub.add_parser("price", parents=[common], help="superreplication and utility-based prices")

    verify = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    verify.add_argument("--batch", type=int, default=0, help="verify this many generated markets")
    verify.add_argument("--workers", type=int, default=None)
    verify.add_argument("--inject-fault", action="store_true", help="corrupt the dual candidate")

    gen = sub.add_parser("gen", parents=[common], help="write a random or fixture market")
    gen.add_argument("--fixture", choices=sorted(FIXTURES))
    gen.add_argument("--branching", type=int, default=3)
    gen.add_argument("--periods", type=int, default=1)
    gen.add_argument("--assets", type=int, default=1)
    gen.add_argument("--claims", type=int, default=1)
    return parser


def _emit_error(kind: str, message: str, exit_code: int, details: dict | None = None):
    payload = {"error": kind, "message": message, "exit_code": exit_code}
    if details:
        payload["details"] = details
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=float) + "\n")


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = RunConfig(
            market=args.market,
            utility=args.utility,
            x=args.x,
            q=args.q,
            tol_grad=args.tol_grad,
            tol_cert=args.tol_cert,
            format=args.format,
            seed=args.seed,
            out=args.out,
            timing=args.timing,
        )
        result = COMMANDS[args.command](config, args)
        text = result if isinstance(result, str) else render(result, config.format)
    except DualityError as error:
        _emit_error(type(error).__name__, str(error), error.exit_code, error.details())
        return error.exit_code
    except (ValidationError, ValueError, OSError) as error:
        _emit_error(type(error).__name__, str(error), 1)
        return 1

    _write(text, config.out)
    if isinstance(result, Report) and not result.passed:
        failed = [c.name for c in result.checks if not (c.passed or c.warning_only)]
        logger.error("failed checks: %s", ", ".join(failed))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
