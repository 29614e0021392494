import numpy as np
import pytest
from scipy.optimize import linprog

from robustfolio.conic import (
    ConicProgram,
    ProgramError,
    Tolerances,
    check_feasibility,
    format_program,
    qp_to_socp,
    solve,
)


def test_lp_hand_example():
    p = ConicProgram(1, "min")
    p.set_objective([1.0])
    p.set_bounds(0, lower=1.0)
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_soc_norm_of_constant():
    # min t subject to ||(3, 4)|| <= t
    p = ConicProgram(1, "min")
    p.set_objective([1.0])
    p.add_soc(np.zeros((2, 1)), [3.0, 4.0], [1.0], 0.0)
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(5.0, abs=1e-6)


def test_unconstrained_quadratic():
    # min x^2 - 2x  -> x = 1, value -1
    p = ConicProgram(1, "min")
    p.set_objective([-2.0], quadratic=[[1.0]])
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(-1.0)


def test_unconstrained_linear_unbounded():
    p = ConicProgram(2, "min")
    p.set_objective([1.0, 0.0])
    sol = solve(p)
    assert sol.status == "unbounded"
    assert np.isnan(sol.objective)


def test_qp_with_bound():
    # min x^2 subject to x >= 2
    p = ConicProgram(1, "min")
    p.set_objective([0.0], quadratic=[[1.0]])
    p.set_bounds(0, lower=2.0)
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(4.0, abs=1e-6)


def test_max_sense_quadratic_penalty():
    # max 2x - x^2 -> x = 1, value 1 (Q acts as a penalty under max)
    p = ConicProgram(1, "max")
    p.set_objective([2.0], quadratic=[[1.0]])
    p.set_bounds(0, lower=-10.0, upper=10.0)
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-6)
    assert sol.objective == pytest.approx(1.0, abs=1e-6)


def test_infeasible_lp():
    p = ConicProgram(1, "min")
    p.set_objective([1.0])
    p.add_ineq([1.0], 0.0)   # x <= 0
    p.set_bounds(0, lower=1.0)  # x >= 1
    sol = solve(p)
    assert sol.status == "infeasible"
    assert sol.x is None
    assert np.isnan(sol.objective)


def test_unbounded_lp():
    p = ConicProgram(1, "min")
    p.set_objective([-1.0])
    p.set_bounds(0, lower=0.0)
    sol = solve(p)
    assert sol.status == "unbounded"


def test_infeasible_qp_classified_via_phase_one():
    # coneqp cannot certify infeasibility; the fallback pipeline must
    p = ConicProgram(1, "min")
    p.set_objective([0.0], quadratic=[[1.0]])
    p.add_ineq([1.0], 0.0)
    p.set_bounds(0, lower=1.0)
    sol = solve(p)
    assert sol.status == "infeasible"


def test_infeasible_soc():
    # ||x|| <= -1 is impossible
    p = ConicProgram(1, "min")
    p.set_objective([1.0])
    p.add_soc(np.eye(1), [0.0], [0.0], -1.0)
    p.set_bounds(0, lower=-5.0, upper=5.0)
    sol = solve(p)
    assert sol.status == "infeasible"


def test_indefinite_q_rejected():
    p = ConicProgram(2, "min")
    with pytest.raises(ProgramError, match="PSD"):
        p.set_objective([0.0, 0.0], quadratic=[[1.0, 0.0], [0.0, -1.0]])
        p.validate()
        solve(p)


def test_dimension_validation():
    p = ConicProgram(2)
    with pytest.raises(ProgramError):
        p.add_eq([1.0], 0.0)
    with pytest.raises(ProgramError):
        p.add_soc(np.eye(3), np.zeros(3), [1.0, 0.0], 0.0)
    with pytest.raises(ProgramError):
        p.set_bounds(5, lower=0.0)
    with pytest.raises(ProgramError):
        p.set_bounds(0, lower=2.0, upper=1.0)


def test_random_lps_against_scipy():
    rng = np.random.default_rng(17)
    for _ in range(25):
        n = rng.integers(2, 5)
        m = rng.integers(1, 4)
        c = rng.normal(size=n)
        a = rng.normal(size=(m, n))
        b = a @ rng.uniform(0.2, 0.8, size=n) + rng.uniform(0.1, 1.0, size=m)
        p = ConicProgram(int(n), "min")
        p.set_objective(c)
        for row, rhs in zip(a, b):
            p.add_ineq(row, rhs)
        p.set_box(np.zeros(n), np.ones(n))
        sol = solve(p)
        ref = linprog(c, A_ub=a, b_ub=b, bounds=[(0, 1)] * int(n), method="highs")
        assert sol.status == "optimal"
        assert ref.status == 0
        assert sol.objective == pytest.approx(ref.fun, abs=1e-6)


def test_sense_flip_symmetry():
    rng = np.random.default_rng(23)
    for _ in range(10):
        n = 3
        c = rng.normal(size=n)
        pmax = ConicProgram(n, "max")
        pmax.set_objective(c)
        pmax.set_box(np.zeros(n), np.ones(n))
        pmin = ConicProgram(n, "min")
        pmin.set_objective(-c)
        pmin.set_box(np.zeros(n), np.ones(n))
        a, b = solve(pmax), solve(pmin)
        assert a.objective == pytest.approx(-b.objective, abs=1e-7)


def test_redundant_constraint_no_effect():
    p = ConicProgram(2, "max")
    p.set_objective([1.0, 1.0])
    p.add_ineq([1.0, 1.0], 1.0)
    p.set_box(np.zeros(2), np.ones(2))
    base = solve(p).objective
    p.add_ineq([1.0, 1.0], 5.0)  # dominated by the first row
    again = solve(p).objective
    assert again == pytest.approx(base, abs=1e-6)


def test_equality_constrained_qp_kkt_oracle():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n, m = 4, 2
        f = rng.normal(size=(n, n))
        q = f @ f.T + 0.1 * np.eye(n)
        c = rng.normal(size=n)
        a = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        kkt = np.block([[2.0 * q, a.T], [a, np.zeros((m, m))]])
        sol_ref = np.linalg.solve(kkt, np.concatenate([-c, b]))[:n]
        p = ConicProgram(n, "min")
        p.set_objective(c, quadratic=q)
        for row, rhs in zip(a, b):
            p.add_eq(row, rhs)
        sol = solve(p)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, sol_ref, atol=1e-5)
        assert sol.objective == pytest.approx(
            float(sol_ref @ q @ sol_ref + c @ sol_ref), abs=1e-6
        )


class TestQpToSocp:
    def test_no_quadratic_copy(self):
        p = ConicProgram(2, "min")
        p.set_objective([1.0, 2.0])
        out = qp_to_socp(p)
        assert out.n_vars == 2
        assert out.Q is None

    def test_zero_quadratic_dropped(self):
        p = ConicProgram(2, "min")
        p.set_objective([1.0, 2.0], quadratic=np.zeros((2, 2)))
        out = qp_to_socp(p)
        assert out.n_vars == 2
        assert out.Q is None

    def test_adds_one_variable_and_cone(self):
        p = ConicProgram(2, "min")
        p.set_objective([0.0, 0.0], quadratic=np.eye(2))
        out = qp_to_socp(p)
        assert out.n_vars == 3
        assert len(out.socs) == 1
        assert out.Q is None

    def test_same_optimum_as_qp_path(self):
        rng = np.random.default_rng(31)
        for _ in range(12):
            n = 3
            f = rng.normal(size=(n, n))
            q = f @ f.T
            c = rng.normal(size=n)
            p = ConicProgram(n, "min")
            p.set_objective(c, quadratic=q)
            p.set_box(-np.ones(n), np.ones(n))
            direct = solve(p)
            epi = solve(qp_to_socp(p))
            assert direct.status == epi.status == "optimal"
            assert epi.objective == pytest.approx(direct.objective, abs=1e-5)
            # argmin is looser than the optimum when the bowl is shallow
            np.testing.assert_allclose(epi.x[:n], direct.x, atol=1e-3)

    def test_max_sense(self):
        p = ConicProgram(1, "max")
        p.set_objective([2.0], quadratic=[[1.0]])
        p.set_bounds(0, lower=-3.0, upper=3.0)
        epi = solve(qp_to_socp(p))
        assert epi.status == "optimal"
        assert epi.objective == pytest.approx(1.0, abs=1e-6)


class TestCheckFeasibility:
    def _program(self):
        p = ConicProgram(2, "min")
        p.set_objective([1.0, 0.0])
        p.add_eq([1.0, 1.0], 1.0)
        p.add_ineq([1.0, 0.0], 0.6)
        p.add_soc(np.eye(2), np.zeros(2), [0.0, 0.0], 0.9)
        p.set_box(np.zeros(2), np.ones(2))
        return p

    def test_feasible_point_empty_report(self):
        rep = check_feasibility(self._program(), [0.5, 0.5])
        assert rep.feasible
        assert rep.violations == ()
        assert rep.max_violation == pytest.approx(0.0)

    def test_violations_classified(self):
        rep = check_feasibility(self._program(), [1.5, 0.0], tol=1e-9)
        kinds = {v[0] for v in rep.violations}
        assert "eq" in kinds       # sums to 1.5
        assert "ineq" in kinds     # 1.5 > 0.6
        assert "soc" in kinds      # ||(1.5, 0)|| > 0.9
        assert "bounds" in kinds   # 1.5 > 1
        assert rep.eq == pytest.approx(0.5)
        assert rep.ineq == pytest.approx(0.9)
        assert rep.soc == pytest.approx(0.6)
        assert rep.bounds == pytest.approx(0.5)

    def test_tolerance_filters(self):
        rep = check_feasibility(self._program(), [0.6 + 1e-9, 0.4 - 1e-9], tol=1e-6)
        assert rep.feasible

    def test_wrong_length(self):
        with pytest.raises(ProgramError):
            check_feasibility(self._program(), [1.0, 2.0, 3.0])


def test_solution_objective_nan_unless_optimal():
    p = ConicProgram(1, "min")
    p.set_objective([-1.0])
    p.set_bounds(0, lower=0.0)
    sol = solve(p)
    assert sol.status == "unbounded"
    assert np.isnan(sol.objective)


def test_solver_honours_tolerances_type():
    tol = Tolerances(feasibility=1e-8, gap=1e-9, max_iterations=50)
    p = ConicProgram(1, "min")
    p.set_objective([1.0])
    p.set_bounds(0, lower=2.0)
    sol = solve(p, tol)
    assert sol.objective == pytest.approx(2.0, abs=1e-7)


def test_format_program_mentions_structure():
    p = ConicProgram(2, "max")
    p.set_objective([1.0, -1.0], quadratic=np.eye(2))
    p.add_eq([1.0, 1.0], 1.0)
    p.add_soc(np.eye(2), np.zeros(2), [0.0, 0.0], 1.0)
    p.set_bounds(0, lower=0.0)
    text = format_program(p)
    assert "max" in text
    assert "==" in text
    assert "||A x + b||_2" in text


def test_copy_is_deep():
    p = ConicProgram(2, "min")
    p.set_objective([1.0, 2.0], quadratic=np.eye(2))
    p.add_ineq([1.0, 0.0], 1.0)
    dup = p.copy()
    dup.c[0] = 99.0
    dup.ineq_a[0][0] = 99.0
    assert p.c[0] == 1.0
    assert p.ineq_a[0][0] == 1.0
