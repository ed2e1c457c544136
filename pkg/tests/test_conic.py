"""LP/SOCP intermediate representation and the backend adapter."""

import math

import numpy as np
import pytest

from otcrm.conic import (
    Aff,
    ConicProgram,
    SolveStatus,
    dual_norm_power,
    quad_over_linear,
    solve,
    structural_counts,
)


class TestSolveLp:
    def test_min_x_bounded_below(self):
        prog = ConicProgram()
        x = prog.new_var(lb=3.0)
        prog.add_objective(Aff.var(x))
        sol = solve(prog)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(3.0, abs=1e-8)
        assert sol.x[x] == pytest.approx(3.0, abs=1e-8)

    def test_infeasible(self):
        prog = ConicProgram()
        x = prog.new_var(lb=0.0)
        prog.add_leq(Aff.var(x), -1.0)
        sol = solve(prog)
        assert sol.status is SolveStatus.INFEASIBLE

    def test_unbounded(self):
        prog = ConicProgram()
        x = prog.new_var()
        prog.add_objective(Aff.var(x))
        sol = solve(prog)
        assert sol.status is SolveStatus.UNBOUNDED

    def test_equality_rows(self):
        prog = ConicProgram()
        x = prog.new_var()
        y = prog.new_var()
        prog.add_eq(Aff.combo([x, y], [1.0, 1.0]), 2.0)
        prog.add_leq(Aff.var(y), 0.5)
        prog.add_objective(Aff.var(x))
        sol = solve(prog)
        assert sol.objective == pytest.approx(1.5, abs=1e-8)

    def test_objective_constant_folded(self):
        prog = ConicProgram()
        x = prog.new_var(lb=1.0)
        prog.add_objective(Aff.var(x) + 2.5)
        sol = solve(prog)
        assert sol.objective == pytest.approx(3.5, abs=1e-8)


class TestSolveSocp:
    def test_distance_to_point(self):
        prog = ConicProgram()
        t = prog.new_var(lb=0.0)
        x = prog.new_var()
        y = prog.new_var()
        prog.add_eq(Aff.var(x), 0.0)
        prog.add_eq(Aff.var(y), 0.0)
        prog.add_soc(
            (Aff.var(x) - 1.0, Aff.var(y) - 1.0),
            Aff.var(t),
        )
        prog.add_objective(Aff.var(t))
        sol = solve(prog)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(math.sqrt(2.0), abs=1e-6)

    def test_audit_residual_reported(self):
        prog = ConicProgram()
        t = prog.new_var(lb=0.0)
        x = prog.new_var(lb=1.0, ub=1.0)
        prog.add_soc((Aff.var(x),), Aff.var(t))
        prog.add_objective(Aff.var(t))
        sol = solve(prog)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.residual <= 1e-6
        assert sol.objective == pytest.approx(1.0, abs=1e-6)

    def test_determinism(self):
        vals = []
        for _ in range(3):
            prog = ConicProgram()
            t = prog.new_var(lb=0.0)
            xs = prog.new_vars(3)
            for i, x in enumerate(xs):
                prog.add_leq(Aff.var(x, -1.0), -(0.3 + 0.2 * i))
            prog.add_soc(tuple(Aff.var(x) for x in xs), Aff.var(t))
            prog.add_objective(Aff.var(t))
            vals.append(solve(prog).objective)
        assert max(vals) - min(vals) <= 1e-7


class TestQuadOverLinear:
    def _min_epigraph(self, a_val, b_val):
        prog = ConicProgram()
        s = prog.new_var(lb=0.0)
        a = prog.new_var(lb=a_val, ub=a_val)
        b = prog.new_var(lb=b_val, ub=b_val)
        quad_over_linear(prog, Aff.var(a), Aff.var(b), Aff.var(s))
        prog.add_objective(Aff.var(s))
        sol = solve(prog)
        assert sol.status is SolveStatus.OPTIMAL
        return sol.objective

    def test_two_over_one(self):
        assert self._min_epigraph(2.0, 1.0) == pytest.approx(4.0, abs=1e-6)

    def test_zero_numerator(self):
        assert self._min_epigraph(0.0, 0.7) == pytest.approx(0.0, abs=1e-6)

    def test_three_over_two(self):
        assert self._min_epigraph(3.0, 2.0) == pytest.approx(4.5, abs=1e-6)


class TestDualNormPower:
    def _min_epigraph(self, alpha, norm, q, denominator=None):
        prog = ConicProgram()
        s = prog.new_var(lb=0.0)
        vs = prog.new_vars(len(alpha))
        for v, val in zip(vs, alpha):
            prog.add_eq(Aff.var(v), val)
        den = None
        if denominator is not None:
            d = prog.new_var(lb=denominator, ub=denominator)
            den = Aff.var(d)
        dual_norm_power(prog, vs, norm, q, Aff.var(s), denominator=den)
        prog.add_objective(Aff.var(s))
        sol = solve(prog)
        assert sol.status is SolveStatus.OPTIMAL
        return sol.objective

    def test_q1_linf_base_gives_l1_dual(self):
        assert self._min_epigraph([1.0, -2.0, 0.5], "linf", 1.0) == pytest.approx(
            3.5, abs=1e-6
        )

    def test_q1_l1_base_gives_linf_dual(self):
        assert self._min_epigraph([1.0, -2.0, 0.5], "l1", 1.0) == pytest.approx(
            2.0, abs=1e-6
        )

    def test_q1_l2(self):
        assert self._min_epigraph([3.0, 4.0], "l2", 1.0) == pytest.approx(
            5.0, abs=1e-6
        )

    def test_q2_l2_perspective(self):
        # epigraph >= ||alpha||^2 / denominator
        got = self._min_epigraph([3.0, 4.0], "l2", 2.0, denominator=2.0)
        assert got == pytest.approx(12.5, abs=1e-6)

    def test_zero_vector(self):
        assert self._min_epigraph([0.0, 0.0], "l2", 2.0, denominator=1.0) == (
            pytest.approx(0.0, abs=1e-6)
        )

    def test_unsupported_q(self):
        prog = ConicProgram()
        s = prog.new_var(lb=0.0)
        vs = prog.new_vars(2)
        with pytest.raises(ValueError):
            dual_norm_power(prog, vs, "l2", 3.0, Aff.var(s))


class TestStructuralCounts:
    def test_counts_small_program(self):
        prog = ConicProgram()
        t = prog.new_var(lb=0.0)
        xs = prog.new_vars(2)
        prog.add_leq(Aff.combo(xs, [1.0, 1.0]), 1.0)
        prog.add_soc(tuple(Aff.var(x) for x in xs), Aff.var(t))
        counts = structural_counts(prog)
        assert counts["dual_vars"] == 3
        assert counts["soc_blocks"] == 1
        # linear = bounds (1 on t) + linear rows (1) + soc blocks (1)
        assert counts["linear"] == 3
        assert counts["convex"] == 1

    def test_exclusions(self):
        prog = ConicProgram()
        prog.new_vars(4)
        counts = structural_counts(prog, exclude_vars=[0, 1])
        assert counts["dual_vars"] == 2


class TestSerialization:
    def test_roundtrip_preserves_solution(self):
        prog = ConicProgram()
        t = prog.new_var(lb=0.0, name="epi")
        xs = prog.new_vars(2, name="x")
        prog.add_leq(Aff.combo(xs, [1.0, 2.0]), 4.0)
        prog.add_eq(Aff.var(xs[0]) - Aff.var(xs[1]), 0.5)
        prog.add_soc((Aff.var(xs[0]), Aff.var(xs[1]) + 1.0), Aff.var(t))
        prog.add_objective(Aff.var(t) + 0.25)
        text = prog.to_json()
        back = ConicProgram.from_json(text)
        assert back.n_vars == prog.n_vars
        assert back.names == prog.names
        a = solve(prog)
        b = solve(back)
        assert a.objective == pytest.approx(b.objective, abs=1e-8)
        assert back.to_json() == text


class TestAff:
    def test_arithmetic(self):
        a = Aff.var(0, 2.0) + Aff.var(1, -1.0) + 3.0
        b = 2.0 * Aff.var(0) - a
        x = np.array([1.5, 0.5])
        assert a.value(x) == pytest.approx(2.0 * 1.5 - 0.5 + 3.0)
        assert b.value(x) == pytest.approx(3.0 - a.value(x))

    def test_dense_accumulates(self):
        a = Aff((0, 0, 1), (1.0, 2.0, -1.0), 0.5)
        assert np.allclose(a.dense(3), [3.0, -1.0, 0.0])
