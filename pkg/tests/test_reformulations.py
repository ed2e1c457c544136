"""Compiled worst-case risk programs against independent oracles.

Every expected value is either a hand-derivable closed form, a refined grid
or LP oracle from ``oracles.py``, or an agreement check between two routes
that share no code path.
"""

from __future__ import annotations

import numpy as np
import pytest

from otcrm.ambiguity import MassInterval, build_full, build_partial, build_pinned, \
    min_radius_full, min_radius_partial, support
from otcrm.conic import SolveStatus, structural_counts
from otcrm.distortion import DistortionFunction, cvar_mix_distortion, distortion_value
from otcrm.geometry import CostSpec, override_distances
from otcrm.reformulations import (
    DecisionSet,
    InnerLossSpec,
    LossSpec,
    compile_distortion_q1_exponential,
    compile_expectation_general_q2,
    compile_expectation_q1,
    compile_expectation_special_q,
    compile_min_expectation,
    compile_qnorm,
    compile_shortfall,
    mean_cvar_socp,
    mean_variance_socp,
)

import oracles as orc

COST1 = CostSpec("l2", "l2", 1.0)
COST2 = CostSpec("l2", "l2", 2.0)


def _refine_min(fn, lo, hi, coarse=801, rounds=4):
    """Two-stage 1-D minimizer: coarse grid, then windows around the argmin."""
    xs = np.linspace(lo, hi, coarse)
    vals = np.array([fn(x) for x in xs])
    k = int(vals.argmin())
    for _ in range(rounds):
        a, b = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
        xs = np.linspace(a, b, 201)
        vals = np.array([fn(x) for x in xs])
        k = int(vals.argmin())
    return float(vals[k])


def _pinned_instance(seed, n, n_y=1, delta=0.3):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n))
    Y = rng.normal(size=(n, n_y))
    alpha = rng.normal(size=n_y)
    return build_pinned(p, delta), p, Y, alpha


def _uniform_zero_delta_full(seed, n, n_y=1):
    """Full-model set whose only admissible point is (uniform, delta = 0)."""
    rng = np.random.default_rng(seed)
    part = orc.random_partition(rng, n, n, n_y=n_y)
    iv = MassInterval(1.0, 1.0)
    d = part.require_d()
    return build_full(part, float(d.mean()), iv), part


class TestLossSpec:
    def test_abs_piece_table(self):
        loss = LossSpec.abs_loss(0.1, 0.3, 1.2)
        pieces = loss.scaled_base_pieces()
        np.testing.assert_allclose(pieces, [(1.2, 0.24), (-1.2, 0.48)], atol=1e-12)

    @pytest.mark.parametrize(
        "loss",
        [
            LossSpec.affine(0.8, -0.2, 1.1),
            LossSpec.abs_loss(0.2, 0.1, 1.4),
            LossSpec.hinge_plus(0.4, 2.0),
            LossSpec.hinge_minus(-0.3, 1.5),
            LossSpec.abs_hinge(0.2, 0.1, 1.5),
            LossSpec.pwl_max([(-1.0, 0.0), (0.5, 0.2), (2.0, -1.0)], 1.3),
        ],
        ids=["affine", "abs", "hinge+", "hinge-", "abs_hinge", "pwl"],
    )
    def test_pieces_match_value_on_grid(self, loss):
        xs = np.linspace(-3.0, 3.0, 601)
        table = np.array(loss.scaled_base_pieces())
        from_pieces = (table[:, 0][:, None] * xs[None, :] + table[:, 1][:, None]).max(axis=0)
        np.testing.assert_allclose(from_pieces, loss.value(xs), atol=1e-12)

    def test_lipschitz_is_max_slope(self):
        loss = LossSpec.pwl_max([(-1.5, 0.0), (0.5, 0.2), (0.9, -1.0)], 1.2)
        assert loss.lipschitz() == pytest.approx(1.5 * 1.2, abs=1e-12)
        assert LossSpec.abs_loss(0.0, 0.0, 2.5).lipschitz() == pytest.approx(2.5)

    def test_power_is_scaled_even_kernel(self):
        loss = LossSpec.power(2.0, 0.9)
        # |x|^p / p normalization: value(1) = C/2, value(2) = 2C, even in x
        assert loss.value(1.0) == pytest.approx(0.45)
        assert loss.value(2.0) == pytest.approx(1.8)
        assert loss.value(-1.0) == pytest.approx(0.45)

    def test_powered_wraps_base_value(self):
        loss = LossSpec.hinge_plus(0.1, 1.5).powered(2.0)
        assert loss.wrap_power == 2.0
        assert loss.value(1.0) == pytest.approx((1.5 * 0.9) ** 2)
        assert loss.value(0.0) == pytest.approx(0.0)

    def test_pwq_rejects_nonpositive_curvature(self):
        with pytest.raises(ValueError):
            LossSpec.pwq_max([(-0.5, 1.0, 0.0)])
        with pytest.raises(ValueError):
            LossSpec.pwq_max([(0.0, 1.0, 0.0)])


class TestExpectationQ1:
    def test_single_ball_abs_worst_case(self):
        aset = build_pinned([1.0], 2.0)
        loss = LossSpec.abs_loss(0.0, 0.0, 1.0)
        cp = compile_expectation_q1(loss, aset, COST1, DecisionSet.fixed([1.0]),
                                    outcomes=[[0.0]])
        sol = cp.solve()
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.value == pytest.approx(2.0, abs=1e-6)

    @pytest.mark.parametrize("seed", [31, 32, 33])
    def test_pinned_closed_form(self, seed):
        aset, p, Y, alpha = _pinned_instance(seed, 5, n_y=2, delta=0.4)
        loss = LossSpec.abs_loss(0.15, 0.05, 1.3)
        cp = compile_expectation_q1(loss, aset, COST1, DecisionSet.fixed(alpha),
                                    outcomes=Y)
        sol = cp.solve()
        s = Y @ alpha
        closed = float(p @ loss.value(s)) + loss.lipschitz() * 0.4 * np.linalg.norm(alpha)
        assert sol.value == pytest.approx(closed, abs=1e-7)

    @pytest.mark.parametrize("seed", [41, 42, 43])
    def test_vertex_closed_form_full_set(self, seed):
        rng = np.random.default_rng(seed)
        aset, part, _ = orc.random_full_set(rng, 4, n_y=2, gap=0.3)
        alpha = rng.normal(size=2)
        loss = LossSpec.pwl_max([(-0.8, 0.1), (0.6, 0.0), (1.4, -0.5)], 1.0)
        cp = compile_expectation_q1(loss, aset, COST1, DecisionSet.fixed(alpha))
        sol = cp.solve()
        s = part.outcomes @ alpha
        lip = loss.lipschitz()
        verts = orc.admissible_vertices(aset)
        closed = max(
            float(row[:-1] @ loss.value(s)) + lip * row[-1] * np.linalg.norm(alpha)
            for row in verts
        )
        assert sol.value == pytest.approx(closed, abs=1e-6)

    def test_affine_loss_equals_support(self):
        rng = np.random.default_rng(77)
        aset, part, _ = orc.random_full_set(rng, 4, n_y=2, gap=0.2)
        alpha = rng.normal(size=2)
        a, b, C = 0.9, -0.3, 1.2
        loss = LossSpec.affine(a, b, C)
        cp = compile_expectation_q1(loss, aset, COST1, DecisionSet.fixed(alpha))
        sol = cp.solve()
        s = part.outcomes @ alpha
        v = np.concatenate([C * a * s, [C * abs(a) * np.linalg.norm(alpha)]])
        expected = support(aset, v) + C * b
        assert sol.value == pytest.approx(expected, abs=1e-6)

    def test_zero_radius_minimization_over_simplex(self):
        rng = np.random.default_rng(55)
        part = orc.random_partition(rng, 4, 4, n_y=2)
        d = part.require_d()
        aset = build_partial(part, float(d.mean()), MassInterval(1.0, 1.0))
        verts = orc.admissible_vertices(aset)
        np.testing.assert_allclose(verts, [[0.25, 0.25, 0.25, 0.25, 0.0]], atol=1e-9)
        loss = LossSpec.abs_loss(0.1, 0.0, 1.0)
        cp = compile_expectation_q1(loss, aset, COST1, DecisionSet.unit_simplex(2))
        sol = cp.solve()
        Y = part.outcomes

        def nominal(a):
            s = Y @ np.array([a, 1.0 - a])
            return float(np.mean(loss.value(s)))

        expected = _refine_min(nominal, 0.0, 1.0)
        assert sol.value == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("seed", [61, 62])
    def test_transport_lp_cross_check(self, seed):
        rng = np.random.default_rng(seed)
        aset, p, Y, _ = _pinned_instance(seed, 4, n_y=1, delta=0.35)
        alpha = float(rng.uniform(0.5, 1.5))
        loss = LossSpec.pwl_max([(-1.0, 0.2), (0.7, 0.0)], 1.1)
        cp = compile_expectation_q1(loss, aset, COST1,
                                    DecisionSet.fixed([alpha]), outcomes=Y)
        sol = cp.solve()
        brute = orc.ball_worst_q1_refined(
            lambda x: loss.value(x), Y[:, 0] * alpha, p, 0.35, abs(alpha),
            breaks=(0.2 / 1.7,), rel_tol=1e-4,
        )
        assert sol.value == pytest.approx(brute, rel=0.01)

    def test_structural_counts_full_q1(self):
        rng = np.random.default_rng(5)
        part = orc.random_partition(rng, 3, 2, n_y=1)
        iv = MassInterval(0.6, 1.0)
        dmin, _, _ = min_radius_full(part, iv)
        aset = build_full(part, dmin + 0.2, iv)
        loss = LossSpec.affine(1.0, 0.5, 1.1)
        cp = compile_expectation_q1(loss, aset, COST1, DecisionSet.free(1))
        counts = structural_counts(cp.program, exclude_vars=cp.alpha_idx)
        n = 3
        assert counts["dual_vars"] == n + 6
        assert counts["linear"] == 2 * n + 8
        assert counts["convex"] == 1

    def test_budget_monotonicity(self):
        rng = np.random.default_rng(88)
        loss = LossSpec.abs_loss(0.1, 0.2, 1.2)
        for _ in range(8):
            part = orc.random_partition(rng, 4, int(rng.integers(1, 4)), n_y=2)
            lo = float(rng.uniform(0.4, 0.7))
            iv = MassInterval(lo, min(1.0, lo + 0.25))
            dmin, _, _ = min_radius_full(part, iv)
            alpha = rng.normal(size=2)
            vals = []
            for gap in (0.05, 0.2, 0.5):
                aset = build_full(part, dmin + gap, iv)
                sol = compile_expectation_q1(loss, aset, COST1,
                                             DecisionSet.fixed(alpha)).solve()
                vals.append(sol.value)
            assert vals[0] <= vals[1] + 1e-8 and vals[1] <= vals[2] + 1e-8

    def test_closed_form_concavity_probe(self):
        # the per-ball worst case is affine in (p, delta): midpoints are exact
        rng = np.random.default_rng(999)
        loss = LossSpec.abs_loss(0.0, 0.1, 1.0)
        s = rng.normal(size=5)
        lv = loss.value(s)
        g = lambda p, d: float(p @ lv) + loss.lipschitz() * d * 0.7
        for _ in range(200):
            p1, p2 = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
            d1, d2 = rng.uniform(0, 1, size=2)
            mid = g(0.5 * (p1 + p2), 0.5 * (d1 + d2))
            assert mid >= 0.5 * (g(p1, d1) + g(p2, d2)) - 1e-10


class TestSpecialQ:
    def test_abs_additive_identity(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(4))
        delta = 0.3
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(4, 1))
        alpha = 1.3
        loss = LossSpec.abs_loss(0.2, 0.1, 1.4)
        cp = compile_expectation_special_q(loss, aset, COST2,
                                           DecisionSet.fixed([alpha]), outcomes=Y)
        sol = cp.solve()
        s = Y[:, 0] * alpha
        closed = float(p @ loss.value(s)) + 1.4 * np.sqrt(delta) * abs(alpha)
        assert sol.value == pytest.approx(closed, abs=1e-6)
        quads = orc.pwl_pieces_as_quads(loss.scaled_base_pieces())
        lam_dual = orc.ball_worst_q2_pieces(quads, Y[:, 0], p, delta, alpha)
        assert sol.value == pytest.approx(lam_dual, abs=1e-6)

    def test_affine_additive_identity(self):
        rng = np.random.default_rng(7)
        p = rng.dirichlet(np.ones(3))
        delta = 0.5
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(3, 1))
        alpha = -0.9
        loss = LossSpec.affine(1.0, 0.4, 1.6)
        cp = compile_expectation_special_q(loss, aset, COST2,
                                           DecisionSet.fixed([alpha]), outcomes=Y)
        s = Y[:, 0] * alpha
        closed = float(p @ loss.value(s)) + 1.6 * np.sqrt(delta) * abs(alpha)
        assert cp.solve().value == pytest.approx(closed, abs=1e-6)

    def test_zero_radius_nominal(self):
        rng = np.random.default_rng(11)
        p = rng.dirichlet(np.ones(4))
        aset = build_pinned(p, 0.0)
        Y = rng.normal(size=(4, 1))
        loss = LossSpec.abs_loss(0.1, 0.3, 1.2)
        cp = compile_expectation_special_q(loss, aset, COST2,
                                           DecisionSet.fixed([1.0]), outcomes=Y)
        nominal = float(p @ loss.value(Y[:, 0]))
        value = cp.solve().value
        # the radius multiplier only vanishes in an unbounded limit at
        # delta = 0, so the solved value sits slightly above the nominal
        assert nominal - 1e-7 <= value <= nominal + 5e-4

    def test_powered_hinge_identity(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(4))
        delta = 0.3
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(4, 1))
        alpha = 1.3
        loss = LossSpec.hinge_plus(0.1, 1.5).powered(2.0)
        cp = compile_expectation_special_q(loss, aset, COST2,
                                           DecisionSet.fixed([alpha]), outcomes=Y)
        sol = cp.solve()
        s = Y[:, 0] * alpha
        nom_l2 = np.sqrt(float(p @ (1.5 * np.maximum(s - 0.1, 0.0)) ** 2))
        closed = (nom_l2 + 1.5 * np.sqrt(delta) * abs(alpha)) ** 2
        assert sol.value == pytest.approx(closed, abs=1e-6)

    def test_unwrapped_general_loss_rejected(self):
        aset = build_pinned([1.0], 0.2)
        loss = LossSpec.pwl_max([(1.0, 0.0), (-0.5, 0.2)])
        with pytest.raises(ValueError):
            compile_expectation_special_q(loss, aset, COST2,
                                          DecisionSet.fixed([1.0]), outcomes=[[0.0]])


class TestGeneralQ2:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.p = rng.dirichlet(np.ones(4))
        self.delta = 0.3
        self.aset = build_pinned(self.p, self.delta)
        self.Y = rng.normal(size=(4, 1))
        self.alpha = 1.3

    def _solve(self, loss):
        cp = compile_expectation_general_q2(loss, self.aset, COST2,
                                            DecisionSet.fixed([self.alpha]),
                                            outcomes=self.Y)
        return cp.solve().value

    def test_pwl_matches_both_oracles(self):
        loss = LossSpec.pwl_max([(1.2, 0.1), (-0.7, 0.4), (0.3, -0.2)])
        value = self._solve(loss)
        quads = orc.pwl_pieces_as_quads(loss.scaled_base_pieces())
        exact = orc.ball_worst_q2_pieces(quads, self.Y[:, 0], self.p,
                                         self.delta, self.alpha)
        assert value == pytest.approx(exact, abs=1e-6)
        # eta-dual vs the (lambda, z)-grid form
        grid = orc.ball_worst_q2_grid(lambda x: loss.value(x), self.Y[:, 0],
                                      self.p, self.delta, self.alpha,
                                      slope_bound=1.2)
        assert value == pytest.approx(grid, abs=1e-4)

    def test_pwq_matches_lambda_oracle(self):
        loss = LossSpec.pwq_max([(0.6, 0.2, 0.1)])
        value = self._solve(loss)
        exact = orc.ball_worst_q2_pieces([(0.6, 0.2, 0.1)], self.Y[:, 0],
                                         self.p, self.delta, self.alpha)
        assert value == pytest.approx(exact, abs=1e-6)

    def test_power_matches_lambda_oracle(self):
        loss = LossSpec.power(2.0, 0.9)
        value = self._solve(loss)
        exact = orc.ball_worst_q2_pieces([(0.45, 0.0, 0.0)], self.Y[:, 0],
                                         self.p, self.delta, self.alpha)
        assert value == pytest.approx(exact, abs=1e-6)

    def test_power_equals_explicit_pwq(self):
        v_pow = self._solve(LossSpec.power(2.0, 0.9))
        v_pwq = self._solve(LossSpec.pwq_max([(0.45, 0.0, 0.0)]))
        assert v_pow == pytest.approx(v_pwq, abs=1e-7)

    def test_zero_radius_nominal(self):
        aset0 = build_pinned(self.p, 0.0)
        loss = LossSpec.pwl_max([(1.2, 0.1), (-0.7, 0.4)])
        cp = compile_expectation_general_q2(loss, aset0, COST2,
                                            DecisionSet.fixed([self.alpha]),
                                            outcomes=self.Y)
        s = self.Y[:, 0] * self.alpha
        nominal = float(self.p @ loss.value(s))
        value = cp.solve().value
        # same unbounded-multiplier edge as the structured q = 2 path
        assert nominal - 1e-7 <= value <= nominal + 5e-4


class TestMinExpectation:
    def test_q1_cvar_inner_vs_grid(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(4))
        delta = 0.3
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(4, 1))
        alpha = 1.3
        inner = InnerLossSpec.cvar_mix(0.5, 0.4)
        cp = compile_min_expectation(inner, aset, COST1,
                                     DecisionSet.fixed([alpha]), outcomes=Y)
        sol = cp.solve()
        s = Y[:, 0] * alpha

        def at_t(t):
            best = None
            for sz, st, c in inner.pieces:
                cur = sz * s + st * t + c
                best = cur if best is None else np.maximum(best, cur)
            return float(best @ p) + inner.lip_z * delta * abs(alpha)

        expected = _refine_min(at_t, -8.0, 8.0)
        assert sol.value == pytest.approx(expected, abs=1e-6)

    def test_q1_requires_inner_spec(self):
        aset = build_pinned([1.0], 0.1)
        with pytest.raises(ValueError):
            compile_min_expectation(LossSpec.abs_loss(0.0, 0.0, 1.0), aset, COST1,
                                    DecisionSet.fixed([1.0]), outcomes=[[0.0]])

    def test_q2_abs_base_closed_form(self):
        rng = np.random.default_rng(9)
        p = rng.dirichlet(np.ones(3))
        delta = 0.25
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(3, 1))
        alpha = 0.8
        C, b1, b2 = 1.2, 0.1, 0.3
        loss = LossSpec.abs_loss(b1, b2, C).powered(2.0)
        cp = compile_min_expectation(loss, aset, COST2,
                                     DecisionSet.fixed([alpha]), outcomes=Y)
        sol = cp.solve()
        s = Y[:, 0] * alpha
        nominal = _refine_min(
            lambda t: float(p @ (C * (np.abs(s - t - b1) + b2)) ** 2), -8.0, 8.0
        )
        closed = (np.sqrt(nominal) + C * np.sqrt(delta) * abs(alpha)) ** 2
        assert sol.value == pytest.approx(closed, abs=1e-5)

    def test_q2_hinge_base_recentered_away(self):
        # the re-centering makes the nominal term vanish for one-sided bases;
        # only the transport penalty survives
        rng = np.random.default_rng(9)
        p = rng.dirichlet(np.ones(3))
        delta = 0.25
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(3, 1))
        alpha = 0.8
        loss = LossSpec.hinge_plus(0.15, 1.2).powered(2.0)
        cp = compile_min_expectation(loss, aset, COST2,
                                     DecisionSet.fixed([alpha]), outcomes=Y)
        expected = (1.2 * np.sqrt(delta) * abs(alpha)) ** 2
        assert cp.solve().value == pytest.approx(expected, abs=1e-6)

    def test_q2_requires_power_wrap(self):
        aset = build_pinned([1.0], 0.1)
        with pytest.raises(ValueError):
            compile_min_expectation(LossSpec.abs_loss(0.0, 0.0, 1.0), aset, COST2,
                                    DecisionSet.fixed([1.0]), outcomes=[[0.0]])


class TestQnorm:
    def test_q1_cvar_form(self):
        rng = np.random.default_rng(21)
        p = rng.dirichlet(np.ones(4))
        delta = 0.2
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(4, 1))
        alpha = 1.1
        kappa = 0.4
        inner = InnerLossSpec(
            pieces=((0.0, 0.0, 0.0), (-1.0 / kappa, -1.0 / kappa, 0.0)),
            lip_z=1.0 / kappa,
        )
        cp = compile_qnorm(inner, aset, COST1, DecisionSet.fixed([alpha]),
                           outcomes=Y)
        sol = cp.solve()
        s = Y[:, 0] * alpha
        expected = orc.discrete_cvar(-s, p, kappa) + (1.0 / kappa) * delta * abs(alpha)
        assert sol.value == pytest.approx(expected, abs=1e-6)

    def test_q2_scale_gate(self):
        aset = build_pinned([1.0], 0.1)
        with pytest.raises(ValueError):
            compile_qnorm(LossSpec.hinge_plus(0.2, 0.9), aset, COST2,
                          DecisionSet.fixed([1.0]), outcomes=[[0.0]])

    def test_q2_single_ball_identity(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(4))
        delta = 0.3
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(4, 1))
        alpha = 1.3
        C, b = 1.5, 0.2
        loss = LossSpec.hinge_plus(b, C)
        cp = compile_qnorm(loss, aset, COST2, DecisionSet.fixed([alpha]),
                           outcomes=Y)
        sol = cp.solve()
        s = Y[:, 0] * alpha
        nominal = _refine_min(
            lambda t: t + np.sqrt(float(p @ (C * np.maximum(s - b - t, 0.0)) ** 2)),
            -8.0, 8.0,
        )
        expected = nominal + C * np.sqrt(delta) * abs(alpha)
        assert sol.value == pytest.approx(expected, abs=1e-6)

    def test_q2_zero_radius_nominal(self):
        rng = np.random.default_rng(13)
        p = rng.dirichlet(np.ones(3))
        aset = build_pinned(p, 0.0)
        Y = rng.normal(size=(3, 1))
        alpha = 0.7
        C, b1, b2 = 1.4, 0.0, 0.1
        loss = LossSpec.abs_loss(b1, b2, C)
        cp = compile_qnorm(loss, aset, COST2, DecisionSet.fixed([alpha]),
                           outcomes=Y)
        s = Y[:, 0] * alpha
        nominal = _refine_min(
            lambda t: t + np.sqrt(float(p @ (C * (np.abs(s - t - b1) + b2)) ** 2)),
            -8.0, 8.0,
        )
        value = cp.solve().value
        # same unbounded-multiplier edge as the structured q = 2 path
        assert nominal - 1e-7 <= value <= nominal + 5e-4


class TestShortfall:
    def test_zero_radius_linear_utility(self):
        aset = build_pinned([1.0], 0.0)
        u = LossSpec.affine(1.0, 0.0, 1.0)
        cp = compile_shortfall(u, 0.0, aset, COST1, DecisionSet.fixed([1.0]),
                               outcomes=[[0.0]])
        assert cp.solve().value == pytest.approx(0.0, abs=1e-7)

    def test_radius_shifts_threshold(self):
        aset = build_pinned([1.0], 2.0)
        u = LossSpec.affine(1.0, 0.0, 1.0)
        cp = compile_shortfall(u, 0.0, aset, COST1, DecisionSet.fixed([1.0]),
                               outcomes=[[0.0]])
        assert cp.solve().value == pytest.approx(2.0, abs=1e-6)

    def test_q1_pwl_utility_vs_bisection(self):
        rng = np.random.default_rng(9)
        p = rng.dirichlet(np.ones(3))
        delta = 0.25
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(3, 1))
        alpha = 0.8
        u = LossSpec.pwl_max([(0.5, 0.0), (2.0, -0.3)])
        level = 0.4
        cp = compile_shortfall(u, level, aset, COST1, DecisionSet.fixed([alpha]),
                               outcomes=Y)
        sol = cp.solve()
        s = Y[:, 0] * alpha
        lip = u.lipschitz()

        def worst(k):
            return float(p @ u.value(-s - k)) + lip * delta * abs(alpha)

        lo, hi = -20.0, 20.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if worst(mid) <= level:
                hi = mid
            else:
                lo = mid
        assert sol.value == pytest.approx(hi, abs=1e-6)

    def test_q2_affine_closed_form(self):
        rng = np.random.default_rng(9)
        p = rng.dirichlet(np.ones(3))
        delta = 0.25
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(3, 1))
        alpha = 0.8
        a, b = 1.4, 0.2
        u = LossSpec.affine(a, b, 1.0)
        level = 0.3
        cp = compile_shortfall(u, level, aset, COST2, DecisionSet.fixed([alpha]),
                               outcomes=Y)
        s = Y[:, 0] * alpha
        closed = (-(level - b - a * np.sqrt(delta) * abs(alpha)) / a) - float(p @ s)
        assert cp.solve().value == pytest.approx(closed, abs=1e-6)

    def test_q2_pwl_utility_vs_lambda_bisection(self):
        rng = np.random.default_rng(9)
        p = rng.dirichlet(np.ones(3))
        delta = 0.25
        aset = build_pinned(p, delta)
        Y = rng.normal(size=(3, 1))
        alpha = 0.8
        u_pieces = [(0.5, 0.0), (2.0, -0.3)]
        u = LossSpec.pwl_max(u_pieces)
        level = 0.4
        cp = compile_shortfall(u, level, aset, COST2, DecisionSet.fixed([alpha]),
                               outcomes=Y)
        sol = cp.solve()

        def worst(k):
            pieces = [(0.0, -sl, c - sl * k) for sl, c in u_pieces]
            return orc.ball_worst_q2_pieces(pieces, Y[:, 0], p, delta, alpha)

        lo, hi = -20.0, 20.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if worst(mid) <= level:
                hi = mid
            else:
                lo = mid
        assert sol.value == pytest.approx(hi, abs=1e-5)

    def test_q2_smooth_utility_rejected(self):
        aset = build_pinned([1.0], 0.1)
        with pytest.raises(ValueError, match="piecewise linear"):
            compile_shortfall(LossSpec.power(2.0, 1.0), 0.3, aset, COST2,
                              DecisionSet.fixed([1.0]), outcomes=[[0.0]])

    def test_unreachable_level_rejected(self):
        aset = build_pinned([1.0], 0.1)
        u = LossSpec.pwl_max([(0.0, 0.0), (1.0, 0.0)])   # bounded below by 0
        with pytest.raises(ValueError, match="unreachable"):
            compile_shortfall(u, -0.5, aset, COST1, DecisionSet.fixed([1.0]),
                              outcomes=[[0.0]])

    def test_nonmonotone_utility_rejected(self):
        aset = build_pinned([1.0], 0.1)
        with pytest.raises(ValueError, match="nondecreasing"):
            compile_shortfall(LossSpec.abs_loss(0.0, 0.0, 1.0), 0.3, aset, COST1,
                              DecisionSet.fixed([1.0]), outcomes=[[0.0]])


class TestDistortionCompiler:
    def test_identity_matches_expectation(self):
        ident = DistortionFunction.pwl([0.0, 1.0], [0.0, 1.0])
        rng = np.random.default_rng(5)
        aset, part, _ = orc.random_full_set(rng, 4, n_y=2, gap=0.25)
        loss = LossSpec.abs_loss(0.1, 0.2, 1.3)
        dset = DecisionSet.box([-1.0, -1.0], [1.0, 1.0])
        va = compile_distortion_q1_exponential(ident, loss, aset, COST1, dset).solve()
        vb = compile_expectation_q1(loss, aset, COST1, dset).solve()
        assert va.value == pytest.approx(vb.value, abs=1e-7)

    def test_uniform_zero_radius_square_two_samples(self):
        sq = DistortionFunction.square().chord_pwl(600)
        aset, part = _uniform_zero_delta_full(1, 2)
        alpha = np.array([1.0])
        loss = LossSpec.affine(1.0, 0.0, 1.0)
        cp = compile_distortion_q1_exponential(sq, loss, aset, COST1,
                                               DecisionSet.fixed(alpha))
        sol = cp.solve()
        losses = part.outcomes @ alpha
        hand = 0.75 * losses.max() + 0.25 * losses.min()
        assert sol.value == pytest.approx(hand, abs=1e-6)
        assert sol.value == pytest.approx(
            distortion_value(sq, losses, np.array([0.5, 0.5])), abs=1e-6
        )

    def test_uniform_zero_radius_vs_reweight_lp(self):
        sq = DistortionFunction.square().chord_pwl(600)
        aset, part = _uniform_zero_delta_full(1, 3)
        alpha = np.array([1.0])
        loss = LossSpec.affine(1.0, 0.0, 1.0)
        cp = compile_distortion_q1_exponential(sq, loss, aset, COST1,
                                               DecisionSet.fixed(alpha))
        sol = cp.solve()
        losses = part.outcomes @ alpha
        lp_val, _ = orc.reweight_max_lp(losses, np.full(3, 1 / 3),
                                        lambda x: sq.value(x))
        assert sol.value == pytest.approx(lp_val, abs=1e-6)

    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_vertex_closed_form(self, seed):
        h = cvar_mix_distortion(0.5, 0.4)
        rng = np.random.default_rng(seed)
        aset, part, _ = orc.random_full_set(rng, 4, n_y=2, gap=0.3)
        alpha = rng.normal(size=2)
        loss = LossSpec.abs_loss(0.1, 0.2, 1.3)
        cp = compile_distortion_q1_exponential(h, loss, aset, COST1,
                                               DecisionSet.fixed(alpha))
        sol = cp.solve()
        losses = loss.value(part.outcomes @ alpha)
        lip = loss.lipschitz()
        best = -np.inf
        for row in orc.admissible_vertices(aset):
            rw, _ = orc.reweight_max_lp(losses, row[:-1], lambda x: h.value(x))
            best = max(best, rw + lip * h.hprime_inf * row[-1] * np.linalg.norm(alpha))
        assert sol.value == pytest.approx(best, abs=1e-6)

    def test_mass_splitting_amplifies_radius(self):
        # a single atom can split, so the transport gain scales with the
        # distortion's steepest tail weight, not just Lip(loss)
        h = cvar_mix_distortion(1.0, 0.5)          # steepest slope 1.5
        rng = np.random.default_rng(2)
        part = orc.random_partition(rng, 1, 1, n_y=1)
        part = override_distances(part, np.array([0.3]))
        aset = build_full(part, 0.3 + 0.4, MassInterval(1.0, 1.0))
        alpha = np.array([1.0])
        loss = LossSpec.affine(1.0, 0.0, 1.0)
        cp = compile_distortion_q1_exponential(h, loss, aset, COST1,
                                               DecisionSet.fixed(alpha))
        s = float((part.outcomes @ alpha).item())
        assert cp.solve().value == pytest.approx(s + 1.5 * 0.4, abs=1e-7)

    def test_wider_distortion_dominates_identity(self):
        ident = DistortionFunction.pwl([0.0, 1.0], [0.0, 1.0])
        sq = DistortionFunction.square().chord_pwl(400)
        rng = np.random.default_rng(31)
        aset, part, _ = orc.random_full_set(rng, 4, n_y=2, gap=0.2)
        alpha = rng.normal(size=2)
        loss = LossSpec.abs_loss(0.0, 0.1, 1.1)
        dset = DecisionSet.fixed(alpha)
        v_sq = compile_distortion_q1_exponential(sq, loss, aset, COST1, dset).solve()
        v_id = compile_distortion_q1_exponential(ident, loss, aset, COST1, dset).solve()
        assert v_sq.value >= v_id.value - 1e-7

    def test_sample_guard(self):
        rng = np.random.default_rng(4)
        aset, _, _ = orc.random_full_set(rng, 13, n_y=1, gap=0.2)
        ident = DistortionFunction.pwl([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(ValueError, match="2\\^N"):
            compile_distortion_q1_exponential(ident, LossSpec.abs_loss(0, 0, 1.0),
                                              aset, COST1, DecisionSet.free(1))

    def test_first_order_cost_required(self):
        rng = np.random.default_rng(4)
        aset, _, _ = orc.random_full_set(rng, 3, n_y=1, gap=0.2)
        ident = DistortionFunction.pwl([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(ValueError, match="first-order"):
            compile_distortion_q1_exponential(ident, LossSpec.abs_loss(0, 0, 1.0),
                                              aset, COST2, DecisionSet.free(1))

    def test_smooth_distortion_needs_chordal_envelope(self):
        rng = np.random.default_rng(4)
        aset, _, _ = orc.random_full_set(rng, 3, n_y=1, gap=0.2)
        with pytest.raises(ValueError, match="chord_pwl"):
            compile_distortion_q1_exponential(DistortionFunction.square(),
                                              LossSpec.abs_loss(0, 0, 1.0),
                                              aset, COST1, DecisionSet.free(1))


class TestMeanVariance:
    def test_point_mass_zero(self):
        cp = mean_variance_socp(0.0, build_pinned([1.0], 0.0), COST2,
                                DecisionSet.fixed([1.0]), outcomes=[[0.7]])
        assert cp.solve().value == pytest.approx(0.0, abs=1e-7)

    def test_objective_constant(self):
        rng = np.random.default_rng(3)
        aset = build_pinned(rng.dirichlet(np.ones(4)), 0.3)
        cp = mean_variance_socp(0.5, aset, COST2, DecisionSet.fixed([1.0]),
                                outcomes=rng.normal(size=(4, 1)))
        assert cp.program.obj_const == pytest.approx(-0.0625, abs=1e-12)

    @pytest.mark.parametrize("seed", [101, 102, 103])
    def test_matches_nested_oracle(self, seed):
        rng = np.random.default_rng(seed)
        aset, part, _ = orc.random_full_set(rng, 4, n_y=2, gap=0.25)
        alpha = rng.normal(size=2)
        theta = float(rng.uniform(0.0, 1.0))
        cp = mean_variance_socp(theta, aset, COST2, DecisionSet.fixed(alpha))
        sol = cp.solve()
        verts = orc.admissible_vertices(aset)
        scores = part.outcomes @ alpha
        expected = orc.nested_mean_variance_oracle(
            verts, scores, theta, float(alpha @ alpha)
        )
        assert sol.value == pytest.approx(expected, abs=1e-3)

    def test_needs_second_order_cost(self):
        aset = build_pinned([1.0], 0.1)
        with pytest.raises(ValueError, match="second-order"):
            mean_variance_socp(0.5, aset, COST1, DecisionSet.fixed([1.0]),
                               outcomes=[[0.0]])

    def test_negative_theta_rejected(self):
        aset = build_pinned([1.0], 0.1)
        with pytest.raises(ValueError, match="nonnegative"):
            mean_variance_socp(-0.1, aset, COST2, DecisionSet.fixed([1.0]),
                               outcomes=[[0.0]])


class TestMeanCvar:
    def test_level_one_equals_mean(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(4))
        Y = rng.normal(size=(4, 1))
        alpha = 1.3
        cp = mean_cvar_socp(0.0, 1.0, build_pinned(p, 0.0), COST2,
                            DecisionSet.fixed([alpha]), outcomes=Y)
        # the level-1 program has a flat direction in t; accuracy degrades
        assert cp.solve().value == pytest.approx(-(p @ (Y[:, 0] * alpha)), abs=5e-4)

    @pytest.mark.parametrize("seed", [111, 112, 113])
    def test_matches_nested_oracle(self, seed):
        rng = np.random.default_rng(seed)
        aset, part, _ = orc.random_full_set(rng, 4, n_y=2, gap=0.25)
        alpha = rng.normal(size=2)
        theta = float(rng.uniform(0.0, 0.8))
        kappa = float(rng.uniform(0.3, 0.9))
        cp = mean_cvar_socp(theta, kappa, aset, COST2, DecisionSet.fixed(alpha))
        sol = cp.solve()
        verts = orc.admissible_vertices(aset)
        scores = part.outcomes @ alpha
        expected = orc.nested_mean_cvar_oracle(
            verts, scores, theta, kappa, float(alpha @ alpha)
        )
        assert sol.value == pytest.approx(expected, abs=1e-3)

    def test_kappa_gate(self):
        aset = build_pinned([1.0], 0.1)
        for kappa in (0.0, 1.2, -0.5):
            with pytest.raises(ValueError, match="kappa"):
                mean_cvar_socp(0.0, kappa, aset, COST2, DecisionSet.fixed([1.0]),
                               outcomes=[[0.0]])
