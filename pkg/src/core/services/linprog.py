"""Two-phase primal simplex on a dense tableau.

Pivots enter the most negative reduced cost until a run of degenerate pivots
appears; from then on Bland's rule (lowest entering index, ratio ties broken
by lowest basic index) takes over. The tableau is rebuilt from the original
data every few dozen pivots. Phase 1 ending with positive artificial mass
means the program is infeasible. The final basis is re-solved against the
original data, repaired with dual simplex pivots if rounding left it slightly
infeasible, and yields the primal point, the row multipliers and the residual
certificates.
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.config import DEFAULT_TOLERANCES, Tolerances
from core.schemas.lp import LinearProgram, LpSolution, LpStatus, Relation, Sense

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _StandardForm:
    """min c·z s.t. A z = b, z >= 0, b >= 0; original x = offset + transform @ z[:n_struct]."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    offset: np.ndarray
    transform: np.ndarray
    flip: np.ndarray
    n_struct: int


def _standardize(lp: LinearProgram) -> _StandardForm:
    n = lp.n_vars
    columns: list[tuple[int, float]] = []
    offset = np.zeros(n)
    bounded: list[tuple[int, float]] = []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            if np.isfinite(hi):
                bounded.append((len(columns), hi - lo))
            columns.append((j, 1.0))
        elif np.isfinite(hi):
            offset[j] = hi
            columns.append((j, -1.0))
        else:
            columns.append((j, 1.0))
            columns.append((j, -1.0))

    n_struct = len(columns)
    transform = np.zeros((n, n_struct))
    for k, (j, sign) in enumerate(columns):
        transform[j, k] = sign

    A = lp.A @ transform
    b = lp.b - lp.A @ offset
    relations = list(lp.relations)
    if bounded:
        caps = np.zeros((len(bounded), n_struct))
        for i, (k, _) in enumerate(bounded):
            caps[i, k] = 1.0
        A = np.vstack([A, caps])
        b = np.concatenate([b, [width for _, width in bounded]])
        relations += [Relation.LE] * len(bounded)

    inequality = [i for i, rel in enumerate(relations) if rel is not Relation.EQ]
    slacks = np.zeros((A.shape[0], len(inequality)))
    for k, i in enumerate(inequality):
        slacks[i, k] = 1.0 if relations[i] is Relation.LE else -1.0
    A = np.hstack([A, slacks])

    flip = np.where(b < 0, -1.0, 1.0)
    A = A * flip[:, None]
    b = b * flip

    direction = 1.0 if lp.sense is Sense.MIN else -1.0
    c = np.concatenate([direction * (transform.T @ lp.c), np.zeros(len(inequality))])
    return _StandardForm(A=A, b=b, c=c, offset=offset, transform=transform, flip=flip, n_struct=n_struct)


REFACTOR_EVERY = 50
REPAIR_ROUNDS = 3


class _Tableau:
    """Dense tableau over the original rows `M = [A | b]` with objective `c` and a basis.

    `refactor` rebuilds the tableau and the reduced-cost row from the original data.
    """

    def __init__(self, M: np.ndarray, c: np.ndarray, basis: np.ndarray, tol: Tolerances):
        self.M = M
        self.c = c
        self.basis = basis.copy()
        self.tol = tol
        self.scale = 1.0 + (np.abs(M[:, -1]).max() if M.shape[0] else 0.0)
        self.tab = M.copy()
        self.cost = np.append(c, 0.0)
        self.since_refactor = 0

    @property
    def rhs(self) -> np.ndarray:
        return self.tab[:, -1]

    def refactor(self) -> bool:
        if not self.M.shape[0]:
            self.cost = np.append(self.c, 0.0)
            return True
        try:
            tab = np.linalg.solve(self.M[:, self.basis], self.M)
        except np.linalg.LinAlgError:
            return False
        self.tab = tab
        self.cost = np.append(self.c, 0.0) - self.c[self.basis] @ tab
        self.cost[self.basis] = 0.0
        self.since_refactor = 0
        return True

    def pivot(self, i: int, j: int):
        tab = self.tab
        tab[i] /= tab[i, j]
        column = tab[:, j].copy()
        column[i] = 0.0
        tab -= np.outer(column, tab[i])
        self.cost -= self.cost[j] * tab[i]
        np.maximum(tab[:, -1], 0.0, out=tab[:, -1], where=tab[:, -1] > -1e-13)
        self.basis[i] = j
        self.since_refactor += 1

    def _leaving_row(self, j: int, bland: bool) -> int | None:
        column = self.tab[:, j]
        rows = np.flatnonzero(column > self.tol.pivot)
        if rows.size == 0:
            return None
        ratios = np.maximum(self.rhs[rows], 0.0) / column[rows]
        ties = rows[ratios <= ratios.min() + self.tol.lp]
        if bland:
            return int(ties[np.argmin(self.basis[ties])])
        return int(ties[np.argmax(column[ties])])

    def iterate(self, n_cols: int, budget: int) -> tuple[LpStatus, int]:
        """Primal simplex: steepest reduced cost, switching to Bland's rule once pivots stall.

        A basis seen twice within one degenerate run triggers a refactorization;
        a second repeat under Bland's rule ends the run as NUMERICAL_ERROR.
        """
        m = self.tab.shape[0]
        bland = False
        degenerate = 0
        seen: set[bytes] = set()
        repeats = 0
        for iteration in range(budget):
            if self.since_refactor >= REFACTOR_EVERY and not self.refactor():
                logger.warning("singular basis during refactorization")
                return LpStatus.NUMERICAL_ERROR, iteration
            reduced = self.cost[:n_cols]
            entering = np.flatnonzero(reduced < -self.tol.pivot)
            if entering.size == 0:
                return LpStatus.OPTIMAL, iteration
            j = int(entering[0] if bland else entering[np.argmin(reduced[entering])])
            i = self._leaving_row(j, bland)
            if i is None:
                return LpStatus.UNBOUNDED, iteration
            step = max(float(self.rhs[i]), 0.0) / self.tab[i, j]
            self.pivot(i, j)
            if step > self.tol.lp:
                degenerate = 0
                seen.clear()
                continue
            degenerate += 1
            bland = bland or degenerate > m
            key = np.sort(self.basis).tobytes()
            if key not in seen:
                seen.add(key)
                continue
            repeats += 1
            if repeats > 1 and bland:
                logger.warning("simplex revisited a basis after %d degenerate pivots", degenerate)
                return LpStatus.NUMERICAL_ERROR, iteration + 1
            bland = True
            seen.clear()
            if not self.refactor():
                return LpStatus.NUMERICAL_ERROR, iteration + 1
        return LpStatus.NUMERICAL_ERROR, budget

    def restore_feasibility(self, n_cols: int, budget: int) -> bool:
        """Dual simplex pivots until every basic value is nonnegative; reduced costs stay signed."""
        for _ in range(budget):
            i = int(np.argmin(self.rhs)) if self.rhs.size else 0
            if not self.rhs.size or self.rhs[i] >= -self.tol.lp * self.scale:
                return True
            row = self.tab[i, :n_cols]
            columns = np.flatnonzero(row < -self.tol.pivot)
            if columns.size == 0:
                return False
            ratios = np.maximum(self.cost[columns], 0.0) / -row[columns]
            self.pivot(i, int(columns[np.argmin(ratios)]))
        return False


def solve_lp(lp: LinearProgram, tol: Tolerances = DEFAULT_TOLERANCES) -> LpSolution:
    sf = _standardize(lp)
    m, n = sf.A.shape
    scale_b = 1.0 + (np.abs(sf.b).max() if m else 0.0)
    scale_c = 1.0 + (np.abs(sf.c).max() if n else 0.0)

    phase1 = _Tableau(
        np.hstack([sf.A, np.eye(m), sf.b[:, None]]),
        np.concatenate([np.zeros(n), np.ones(m)]),
        np.arange(n, n + m),
        tol,
    )
    phase1.refactor()
    status, iterations = phase1.iterate(n + m, tol.max_lp_iter)
    if not phase1.refactor():
        logger.warning("singular basis after phase 1")
        return LpSolution(status=LpStatus.NUMERICAL_ERROR, iterations=iterations)
    infeasibility = float(np.maximum(phase1.rhs[phase1.basis >= n], 0.0).sum())
    if infeasibility > tol.lp * scale_b:
        if status is not LpStatus.OPTIMAL:
            logger.warning(
                "phase 1 stopped (%s) after %d pivots with artificial mass %.3e",
                status,
                iterations,
                infeasibility,
            )
        return LpSolution(status=LpStatus.INFEASIBLE, iterations=iterations)
    if status is not LpStatus.OPTIMAL:
        logger.info("phase 1 stopped (%s) at a feasible basis", status)

    redundant = []
    for i in range(m):
        if phase1.basis[i] < n:
            continue
        row = np.abs(phase1.tab[i, :n])
        if row.max(initial=0.0) > tol.pivot:
            phase1.pivot(i, int(np.argmax(row)))
        else:
            redundant.append(i)
    dropped = {int(phase1.basis[i]) - n for i in redundant}
    kept_rows = [k for k in range(m) if k not in dropped]
    basis = np.array([int(phase1.basis[i]) for i in range(m) if i not in redundant], dtype=int)

    tableau = _Tableau(np.hstack([sf.A[kept_rows], sf.b[kept_rows, None]]), sf.c, basis, tol)
    if not tableau.refactor():
        logger.warning("singular basis entering phase 2")
        return LpSolution(status=LpStatus.NUMERICAL_ERROR, iterations=iterations)
    budget = max(tol.max_lp_iter - iterations, 1)
    for _ in range(REPAIR_ROUNDS):
        if not tableau.restore_feasibility(n, budget):
            logger.warning("basis lost primal feasibility and could not be repaired")
            return LpSolution(status=LpStatus.NUMERICAL_ERROR, iterations=iterations)
        status, phase2 = tableau.iterate(n, budget)
        iterations += phase2
        if status is not LpStatus.OPTIMAL:
            if status is LpStatus.NUMERICAL_ERROR:
                logger.warning("phase 2 stopped without an optimal basis")
            return LpSolution(status=status, iterations=iterations)
        if not tableau.refactor():
            logger.warning("singular final basis")
            return LpSolution(status=LpStatus.NUMERICAL_ERROR, iterations=iterations)
        if tableau.rhs.min(initial=0.0) >= -tol.lp * scale_b:
            break
        logger.info(
            "final basis infeasible by %.3e on the original data; repairing",
            -tableau.rhs.min(),
        )
    else:
        logger.warning("final basis still infeasible after %d repairs", REPAIR_ROUNDS)
        return LpSolution(status=LpStatus.NUMERICAL_ERROR, iterations=iterations)

    basis = tableau.basis
    B = sf.A[np.ix_(kept_rows, basis)]
    x_basic = tableau.rhs
    try:
        y_kept = np.linalg.solve(B.T, sf.c[basis]) if kept_rows else np.empty(0)
    except np.linalg.LinAlgError:
        logger.warning("singular final basis")
        return LpSolution(status=LpStatus.NUMERICAL_ERROR, iterations=iterations)

    z = np.zeros(n)
    z[basis] = np.maximum(x_basic, 0.0)
    y = np.zeros(m)
    y[kept_rows] = y_kept

    primal_residual = float(np.abs(sf.A @ z - sf.b).max(initial=0.0) / scale_b)
    dual_residual = float(max(0.0, -(sf.c - sf.A.T @ y).min(initial=0.0)) / scale_c)
    value_std = float(sf.c @ z)
    gap = abs(value_std - float(sf.b @ y))

    x = sf.offset + sf.transform @ z[: sf.n_struct]
    direction = 1.0 if lp.sense is Sense.MIN else -1.0
    duals = direction * sf.flip[: lp.n_rows] * y[: lp.n_rows]
    value = float(lp.c @ x)

    certified = (
        primal_residual <= tol.lp
        and dual_residual <= tol.lp
        and gap <= tol.lp * (1.0 + abs(value_std))
    )
    if not certified:
        logger.warning(
            "LP certificates failed: primal %.2e dual %.2e gap %.2e",
            primal_residual,
            dual_residual,
            gap,
        )
    return LpSolution(
        status=LpStatus.OPTIMAL if certified else LpStatus.NUMERICAL_ERROR,
        value=value,
        x=x,
        duals=duals,
        primal_residual=primal_residual,
        dual_residual=dual_residual,
        gap=gap,
        iterations=iterations,
    )
