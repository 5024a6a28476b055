import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.config import DEFAULT_TOLERANCES
from core.errors import LpError
from core.schemas.lp import LinearProgram, LpStatus, Relation, Sense
from core.services.linprog import _Tableau, solve_lp

LE, EQ, GE = Relation.LE, Relation.EQ, Relation.GE


@pytest.fixture
def production_lp():
    # max 3x + 2y  s.t.  x + y <= 4,  x + 2y <= 6,  x <= 3
    return LinearProgram.build(
        [3.0, 2.0],
        [
            (np.array([1.0, 1.0]), LE, 4.0),
            (np.array([1.0, 2.0]), LE, 6.0),
            (np.array([1.0, 0.0]), LE, 3.0),
        ],
        sense=Sense.MAX,
    )


def test_optimum_and_row_sensitivities(production_lp):
    solution = solve_lp(production_lp)
    assert solution.optimal
    assert solution.value == pytest.approx(11.0)
    np.testing.assert_allclose(solution.x, [3.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(solution.duals, [2.0, 0.0, 1.0], atol=1e-12)
    assert solution.primal_residual <= 1e-12
    assert solution.dual_residual <= 1e-12


def test_dual_program_has_the_same_value(production_lp):
    dual = production_lp.dual()
    assert dual.sense is Sense.MIN
    assert dual.relations == (GE, GE)
    solution = solve_lp(dual)
    assert solution.optimal
    assert solution.value == pytest.approx(11.0)
    np.testing.assert_allclose(solution.x, [2.0, 0.0, 1.0], atol=1e-12)


def test_dual_requires_canonical_form():
    lp = LinearProgram.build([1.0], [(np.array([1.0]), EQ, 1.0)])
    with pytest.raises(LpError):
        lp.dual()


def test_bland_rule_terminates_on_cycling_example():
    # Beale's program cycles under the largest-coefficient rule
    lp = LinearProgram.build(
        [-0.75, 20.0, -0.5, 6.0],
        [
            (np.array([0.25, -8.0, -1.0, 9.0]), LE, 0.0),
            (np.array([0.5, -12.0, -0.5, 3.0]), LE, 0.0),
            (np.array([0.0, 0.0, 1.0, 0.0]), LE, 1.0),
        ],
    )
    solution = solve_lp(lp)
    assert solution.optimal
    assert solution.value == pytest.approx(-1.25)
    np.testing.assert_allclose(solution.x, [1.0, 0.0, 1.0, 0.0], atol=1e-12)


def test_infeasible_program():
    lp = LinearProgram.build(
        [1.0], [(np.array([1.0]), GE, 2.0), (np.array([1.0]), LE, 1.0)]
    )
    assert solve_lp(lp).status is LpStatus.INFEASIBLE


def test_unbounded_program():
    lp = LinearProgram.build([1.0, 0.0], [(np.array([1.0, -1.0]), LE, 1.0)], sense=Sense.MAX)
    assert solve_lp(lp).status is LpStatus.UNBOUNDED


def test_free_variable_and_negative_rhs():
    lp = LinearProgram.build(
        [1.0], [(np.array([1.0]), GE, -3.0)], lower=[-np.inf], upper=[np.inf]
    )
    solution = solve_lp(lp)
    assert solution.optimal
    assert solution.value == pytest.approx(-3.0)
    np.testing.assert_allclose(solution.duals, [1.0])


def test_redundant_equality_rows():
    lp = LinearProgram.build(
        [1.0, 2.0],
        [(np.array([1.0, 1.0]), EQ, 1.0), (np.array([2.0, 2.0]), EQ, 2.0)],
    )
    solution = solve_lp(lp)
    assert solution.optimal
    assert solution.value == pytest.approx(1.0)
    np.testing.assert_allclose(solution.x, [1.0, 0.0], atol=1e-12)


def test_box_bounds_without_rows():
    lp = LinearProgram.build([-1.0], [], lower=[0.0], upper=[2.5])
    solution = solve_lp(lp)
    assert solution.optimal
    assert solution.value == pytest.approx(-2.5)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"A": np.ones((2, 2))},
        {"relations": (LE, LE)},
        {"lower": np.array([1.0, 0.0]), "upper": np.array([0.0, 1.0])},
        {"c": np.array([np.nan, 1.0])},
    ],
)
def test_malformed_programs_are_rejected(kwargs):
    data = {
        "c": np.array([1.0, 1.0]),
        "A": np.ones((1, 2)),
        "relations": (LE,),
        "b": np.array([1.0]),
        "lower": np.zeros(2),
        "upper": np.full(2, np.inf),
    }
    data.update(kwargs)
    with pytest.raises(LpError):
        LinearProgram(**data)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    m=st.integers(min_value=1, max_value=4),
    n=st.integers(min_value=1, max_value=5),
)
def test_feasible_box_programs_are_certified(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0.0, 1.0, size=n)
    b = A @ x0 + rng.uniform(0.0, 1.0, size=m)
    c = rng.normal(size=n)
    lp = LinearProgram.build(
        c, [(A[i], LE, float(b[i])) for i in range(m)], upper=np.full(n, 2.0)
    )
    solution = solve_lp(lp)
    assert solution.optimal
    assert solution.value <= float(c @ x0) + 1e-9
    assert np.all(A @ solution.x <= b + 1e-9)
    assert np.all(solution.x >= -1e-12) and np.all(solution.x <= 2.0 + 1e-12)
    # duals of <= rows in a minimization are nonpositive
    assert np.all(solution.duals <= 1e-9)


def test_degenerate_infeasible_measure_program():
    # every leaf gains on every coordinate, so no probability vector is a martingale
    rng = np.random.default_rng(12)
    gains = rng.uniform(0.1, 1.0, size=(16, 10))
    lp = LinearProgram(
        c=np.zeros(16),
        A=np.vstack([gains.T, np.ones((1, 16))]),
        relations=(EQ,) * 11,
        b=np.concatenate([np.zeros(10), [1.0]]),
        lower=np.zeros(16),
        upper=np.ones(16),
    )
    solution = solve_lp(lp)
    assert solution.status is LpStatus.INFEASIBLE
    assert solution.iterations < 1000


def test_degenerate_feasible_measure_program():
    # a martingale measure exists and most right-hand sides are zero
    rng = np.random.default_rng(29)
    Q = rng.dirichlet(np.ones(16))
    gains = rng.normal(size=(16, 10))
    gains -= np.outer(np.ones(16), Q @ gains)
    lp = LinearProgram(
        c=rng.normal(size=16),
        A=np.vstack([gains.T, np.ones((1, 16))]),
        relations=(EQ,) * 11,
        b=np.concatenate([np.zeros(10), [1.0]]),
        lower=np.zeros(16),
        upper=np.full(16, np.inf),
        sense=Sense.MAX,
    )
    solution = solve_lp(lp)
    assert solution.optimal
    assert solution.value >= float(lp.c @ Q) - 1e-9
    assert solution.primal_residual <= 1e-9
    np.testing.assert_allclose(gains.T @ solution.x, 0.0, atol=1e-9)


def test_dual_pivots_repair_an_infeasible_basis():
    # min x1 + x2 s.t. x1 + x2 - s = 1, starting from the basis {s}
    tableau = _Tableau(
        np.array([[1.0, 1.0, -1.0, 1.0]]), np.array([1.0, 1.0, 0.0]), np.array([2]), DEFAULT_TOLERANCES
    )
    assert tableau.refactor()
    assert tableau.rhs[0] == pytest.approx(-1.0)
    assert tableau.restore_feasibility(3, 10)
    assert list(tableau.basis) == [0]
    np.testing.assert_allclose(tableau.rhs, [1.0])
    np.testing.assert_allclose(tableau.cost[:3], [0.0, 0.0, 1.0])


def test_dual_pivots_report_an_infeasible_row():
    tableau = _Tableau(
        np.array([[1.0, 1.0, -1.0]]), np.array([0.0, 0.0]), np.array([0]), DEFAULT_TOLERANCES
    )
    assert tableau.refactor()
    assert not tableau.restore_feasibility(2, 10)
