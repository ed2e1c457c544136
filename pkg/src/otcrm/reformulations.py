"""Finite convex reformulations of worst-case conditional risk minimization.

Every compiler here turns ``min over decisions of the worst-case risk over
the admissible (p, delta) family`` into an explicit LP/SOCP: the admissible
polyhedron enters through its support-function dual (variables z >= 0 with
objective b.z and columns A^T z), the loss enters through epigraph rows at
the per-sample scores y_i . alpha, and the transport radius prices a
dual-norm penalty on alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .ambiguity import AdmissibleSet
from .conic import (
    DEFAULT_TOL,
    Aff,
    ConicProgram,
    Solution,
    SolveStatus,
    dual_norm_power,
    quad_over_linear,
    solve as conic_solve,
)
from .distortion import DistortionFunction, proper_subsets
from .geometry import CostSpec

__all__ = [
    "LossSpec",
    "InnerLossSpec",
    "DecisionSet",
    "CompiledProblem",
    "CompiledSolution",
    "compile_expectation_q1",
    "compile_expectation_special_q",
    "compile_expectation_general_q2",
    "compile_min_expectation",
    "compile_qnorm",
    "compile_shortfall",
    "compile_distortion_q1_exponential",
    "mean_variance_socp",
    "mean_cvar_socp",
]

_PWL_KINDS = ("affine", "abs", "hinge_plus", "hinge_minus", "abs_hinge", "pwl")
_NONNEG_BASE_KINDS = ("hinge_plus", "hinge_minus", "abs_hinge", "abs")


# ---------------------------------------------------------------------------
# loss specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossSpec:
    """Scalar convex loss ``scale * base(x)``, optionally raised to a power.

    Kinds and their base functions:

    - ``affine``:      a x + b
    - ``abs``:         |x - b1| + b2
    - ``hinge_plus``:  max(x - b, 0)
    - ``hinge_minus``: max(b - x, 0)
    - ``abs_hinge``:   max(|x - b1| - b2, 0)
    - ``pwl``:         max_j (a_j x + c_j)          (pieces = ((a_j, c_j), ...))
    - ``pwq``:         max_j (a_j x^2 + b_j x + c_j), a_j > 0
    - ``power``:       |x|^p / p                     (p = inner_power)

    ``wrap_power = q`` means the loss is ``(scale * base(x)) ** q``; only the
    nonnegative base kinds accept a wrap.
    """

    kind: str
    scale: float = 1.0
    a: float = 1.0
    b: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    pieces: tuple = ()
    inner_power: float = 2.0
    wrap_power: float | None = None

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.kind not in _PWL_KINDS + ("pwq", "power"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "pwl":
            if not self.pieces:
                raise ValueError("pwl loss needs at least one (slope, offset) piece")
        if self.kind == "pwq":
            if not self.pieces:
                raise ValueError("pwq loss needs (curvature, slope, offset) pieces")
            if any(p[0] <= 0 for p in self.pieces):
                raise ValueError("pwq pieces need strictly positive curvature")
        if self.wrap_power is not None:
            if self.wrap_power < 1:
                raise ValueError("wrap power must be >= 1")
            if self.kind not in _NONNEG_BASE_KINDS:
                raise ValueError(
                    f"only nonnegative base losses {_NONNEG_BASE_KINDS} can be "
                    f"raised to a power, not {self.kind!r}"
                )
            if self.kind == "abs" and self.b2 < 0:
                raise ValueError("abs base needs b2 >= 0 to stay nonnegative under a wrap")

    # -- factories ---------------------------------------------------------
    @staticmethod
    def affine(a: float, b: float, scale: float = 1.0) -> "LossSpec":
        return LossSpec("affine", scale=scale, a=a, b=b)

    @staticmethod
    def abs_loss(b1: float = 0.0, b2: float = 0.0, scale: float = 1.0) -> "LossSpec":
        return LossSpec("abs", scale=scale, b1=b1, b2=b2)

    @staticmethod
    def hinge_plus(b: float = 0.0, scale: float = 1.0) -> "LossSpec":
        return LossSpec("hinge_plus", scale=scale, b=b)

    @staticmethod
    def hinge_minus(b: float = 0.0, scale: float = 1.0) -> "LossSpec":
        return LossSpec("hinge_minus", scale=scale, b=b)

    @staticmethod
    def abs_hinge(b1: float = 0.0, b2: float = 0.0, scale: float = 1.0) -> "LossSpec":
        return LossSpec("abs_hinge", scale=scale, b1=b1, b2=b2)

    @staticmethod
    def pwl_max(pieces, scale: float = 1.0) -> "LossSpec":
        return LossSpec("pwl", scale=scale, pieces=tuple((float(a), float(c)) for a, c in pieces))

    @staticmethod
    def pwq_max(pieces, scale: float = 1.0) -> "LossSpec":
        return LossSpec(
            "pwq", scale=scale,
            pieces=tuple((float(a), float(b), float(c)) for a, b, c in pieces),
        )

    @staticmethod
    def power(p: float = 2.0, scale: float = 1.0) -> "LossSpec":
        return LossSpec("power", scale=scale, inner_power=p)

    def powered(self, q: float) -> "LossSpec":
        """The loss ``(scale * base) ** q`` (nonnegative base kinds only)."""
        return replace(self, wrap_power=float(q))

    # -- evaluation --------------------------------------------------------
    def base_value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "affine":
            out = self.a * x + self.b
        elif self.kind == "abs":
            out = np.abs(x - self.b1) + self.b2
        elif self.kind == "hinge_plus":
            out = np.maximum(x - self.b, 0.0)
        elif self.kind == "hinge_minus":
            out = np.maximum(self.b - x, 0.0)
        elif self.kind == "abs_hinge":
            out = np.maximum(np.abs(x - self.b1) - self.b2, 0.0)
        elif self.kind == "pwl":
            out = np.max(
                [a * x + c for a, c in self.pieces], axis=0
            )
        elif self.kind == "pwq":
            out = np.max(
                [a * x * x + b * x + c for a, b, c in self.pieces], axis=0
            )
        else:  # power
            out = np.abs(x) ** self.inner_power / self.inner_power
        return out

    def value(self, x):
        out = self.scale * self.base_value(x)
        if self.wrap_power is not None:
            out = out ** self.wrap_power
        return out

    # -- piecewise-linear structure ---------------------------------------
    def scaled_base_pieces(self):
        """(slope, offset) pieces of scale * base for PWL-representable kinds."""
        C = self.scale
        if self.kind == "affine":
            return [(C * self.a, C * self.b)]
        if self.kind == "abs":
            return [(C, C * (-self.b1 + self.b2)), (-C, C * (self.b1 + self.b2))]
        if self.kind == "hinge_plus":
            return [(0.0, 0.0), (C, -C * self.b)]
        if self.kind == "hinge_minus":
            return [(0.0, 0.0), (-C, C * self.b)]
        if self.kind == "abs_hinge":
            return [
                (0.0, 0.0),
                (C, C * (-self.b1 - self.b2)),
                (-C, C * (self.b1 - self.b2)),
            ]
        if self.kind == "pwl":
            return [(C * a, C * c) for a, c in self.pieces]
        raise ValueError(f"loss kind {self.kind!r} is not piecewise linear")

    def max_affine_pieces(self):
        """PWL pieces of the (unwrapped) loss; refuses wrapped losses."""
        if self.wrap_power is not None and self.wrap_power != 1:
            raise ValueError("loss raised to a power is not piecewise linear")
        return self.scaled_base_pieces()

    def lipschitz(self) -> float:
        """Global Lipschitz constant (PWL-representable, unwrapped kinds)."""
        return max(abs(s) for s, _ in self.max_affine_pieces())

    def scaled_pwq_pieces(self):
        if self.kind != "pwq":
            raise ValueError("not a piecewise-quadratic loss")
        C = self.scale
        return [(C * a, C * b, C * c) for a, b, c in self.pieces]


@dataclass(frozen=True)
class InnerLossSpec:
    """Jointly convex PWL loss in (score z, scalar auxiliary t).

    ``pieces`` holds (z_slope, t_slope, offset) triples so the loss is
    max over pieces of z_slope * z + t_slope * t + offset; ``lip_z`` is the
    Lipschitz constant in z alone.
    """

    pieces: tuple
    lip_z: float

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("need at least one piece")

    @staticmethod
    def from_pieces(pieces) -> "InnerLossSpec":
        pieces = tuple((float(a), float(b), float(c)) for a, b, c in pieces)
        lip = max(abs(a) for a, _, _ in pieces)
        return InnerLossSpec(pieces, lip)

    @staticmethod
    def cvar_mix(theta: float, kappa: float) -> "InnerLossSpec":
        """t + (1/kappa) max(-z - t, 0) - theta z (tail average plus mean)."""
        if not (0 < kappa <= 1):
            raise ValueError("kappa must lie in (0, 1]")
        if theta < 0:
            raise ValueError("theta must be nonnegative")
        return InnerLossSpec.from_pieces(
            [(-theta, 1.0, 0.0), (-theta - 1.0 / kappa, 1.0 - 1.0 / kappa, 0.0)]
        )

    def value(self, z, t):
        z = np.asarray(z, dtype=float)
        return np.max(
            [a * z + b * t + c for a, b, c in self.pieces], axis=0
        )


# ---------------------------------------------------------------------------
# decision sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecisionSet:
    """Feasible decisions: optional box bounds, simplex tie, and G alpha <= g."""

    n: int
    simplex: bool = False
    lower: tuple | None = None
    upper: tuple | None = None
    G: tuple | None = None  # rows of the matrix, as tuples
    g: tuple | None = None

    @staticmethod
    def free(n: int) -> "DecisionSet":
        return DecisionSet(n)

    @staticmethod
    def unit_simplex(n: int) -> "DecisionSet":
        return DecisionSet(n, simplex=True)

    @staticmethod
    def fixed(alpha0) -> "DecisionSet":
        alpha0 = tuple(float(v) for v in np.ravel(alpha0))
        return DecisionSet(len(alpha0), lower=alpha0, upper=alpha0)

    @staticmethod
    def box(lower, upper) -> "DecisionSet":
        lower = tuple(float(v) for v in np.ravel(lower))
        upper = tuple(float(v) for v in np.ravel(upper))
        if len(lower) != len(upper):
            raise ValueError("bound lengths differ")
        return DecisionSet(len(lower), lower=lower, upper=upper)

    def apply(self, prog: ConicProgram, alpha_idx: Sequence[int]):
        if len(alpha_idx) != self.n:
            raise ValueError("alpha dimension mismatch")
        if self.lower is not None:
            for j, v in zip(alpha_idx, self.lower):
                prog.lb[j] = float(v)
        if self.upper is not None:
            for j, v in zip(alpha_idx, self.upper):
                prog.ub[j] = float(v)
        if self.simplex:
            for j in alpha_idx:
                prog.lb[j] = max(prog.lb[j], 0.0)
            prog.add_eq(Aff.combo(alpha_idx, np.ones(self.n)), 1.0)
        if self.G is not None:
            G = np.asarray(self.G, dtype=float)
            g = np.asarray(self.g, dtype=float).ravel()
            if G.shape != (g.size, self.n):
                raise ValueError("G/g shapes inconsistent")
            for row, rhs in zip(G, g):
                prog.add_leq(Aff.combo(alpha_idx, row), float(rhs))

    def contains(self, alpha, tol: float = 1e-8) -> bool:
        alpha = np.asarray(alpha, dtype=float).ravel()
        if alpha.size != self.n:
            return False
        ok = True
        if self.lower is not None:
            ok &= bool((alpha >= np.array(self.lower) - tol).all())
        if self.upper is not None:
            ok &= bool((alpha <= np.array(self.upper) + tol).all())
        if self.simplex:
            ok &= bool((alpha >= -tol).all() and abs(alpha.sum() - 1) <= tol)
        if self.G is not None:
            ok &= bool((np.asarray(self.G) @ alpha <= np.asarray(self.g) + tol).all())
        return ok


# ---------------------------------------------------------------------------
# compiled problems
# ---------------------------------------------------------------------------


@dataclass
class CompiledSolution:
    status: SolveStatus
    value: float
    alpha: np.ndarray | None
    raw: Solution


@dataclass
class CompiledProblem:
    """A built conic program plus how to read its optimum back as a risk value."""

    program: ConicProgram
    alpha_idx: list
    value_map: Callable[[float], float] | None = None
    meta: dict = field(default_factory=dict)

    def solve(self, tol: float | None = None) -> CompiledSolution:
        tol = DEFAULT_TOL if tol is None else tol
        sol = conic_solve(self.program, tol)
        if sol.status is not SolveStatus.OPTIMAL:
            return CompiledSolution(sol.status, float("nan"), None, sol)
        value = sol.objective if self.value_map is None else self.value_map(sol.objective)
        alpha = np.array([sol.x[j] for j in self.alpha_idx], dtype=float)
        return CompiledSolution(SolveStatus.OPTIMAL, float(value), alpha, sol)


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _outcome_matrix(aset: AdmissibleSet, outcomes) -> np.ndarray:
    if outcomes is not None:
        Y = np.asarray(outcomes, dtype=float)
    elif aset.partition is not None:
        Y = aset.partition.outcomes
    else:
        raise ValueError("admissible set carries no sample outcomes; pass outcomes=")
    Y = np.atleast_2d(Y)
    if Y.shape[0] != aset.n:
        raise ValueError(f"need {aset.n} outcome rows, got {Y.shape[0]}")
    return Y


def _embed_support_dual(prog: ConicProgram, aset: AdmissibleSet, in_objective: bool = True):
    """Dual variables z >= 0 with objective/constraint value b.z and columns A^T z."""
    A, b = aset.poly.A, aset.poly.b
    z = prog.new_vars(A.shape[0], lb=0.0, name="z")
    zb = Aff.combo(z, b)
    if in_objective:
        prog.add_objective(zb)
    cols = [Aff.combo(z, A[:, c]) for c in range(A.shape[1])]
    return z, cols, zb


def _p_col_indices(aset: AdmissibleSet) -> list:
    s = aset.p_cols
    return list(range(s.start, s.stop))


def _pad_aux_columns(prog: ConicProgram, aset: AdmissibleSet, cols):
    """Support-function argument is zero on every auxiliary polyhedron column."""
    keep = set(_p_col_indices(aset)) | {aset.delta_col}
    for c in range(len(cols)):
        if c not in keep:
            prog.add_geq(cols[c], 0.0)


def _scores(alpha_idx, Y):
    return [Aff.combo(alpha_idx, Y[i]) for i in range(Y.shape[0])]


def _q_constants(q: float, C: float):
    """(leading y coefficient, perspective coefficient) of the powered catalog."""
    c1 = q ** (1.0 / (1.0 - q)) - q ** (q / (1.0 - q))
    return c1, C ** (q / (q - 1.0)) * c1


def _require_kind(aset: AdmissibleSet, kinds):
    if aset.kind not in kinds:
        raise ValueError(f"admissible set kind {aset.kind!r} not supported here")


# ---------------------------------------------------------------------------
# worst-case conditional expectation
# ---------------------------------------------------------------------------


def compile_expectation_q1(
    loss: LossSpec,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Worst-case expected PWL loss under first-order transport costs.

    min over alpha, z >= 0 of b.z subject to per-sample rows
    loss(y_i . alpha) <= [A^T z]_i, the Lipschitz dual-norm row on the
    radius column, and nonnegativity on auxiliary columns.
    """
    if cost.q != 1:
        raise ValueError("this compiler requires cost order q = 1")
    pieces = loss.max_affine_pieces()
    lip = loss.lipschitz()
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    _, cols, _ = _embed_support_dual(prog, aset)
    pc = _p_col_indices(aset)
    for i, score in enumerate(_scores(alpha, Y)):
        for s, c in pieces:
            prog.add_leq(score * s + c - cols[pc[i]], 0.0)
    aux = dual_norm_power(
        prog, alpha, cost.y_base_norm, 1, cols[aset.delta_col], scale=lip
    )
    _pad_aux_columns(prog, aset, cols)
    return CompiledProblem(
        prog, alpha,
        meta={"family": "expectation_q1", "norm_aux": aux, "lipschitz": lip},
    )


def compile_expectation_special_q(
    loss: LossSpec,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Worst-case expectation for the structured losses with higher-order costs.

    Plain unit-slope losses (affine with |a| = scale slope, or shifted
    absolute value) admit the additive radius penalty; the powered variants
    (scale * base)^q use the epigraph/perspective construction and report
    the optimum raised back to the q-th power.
    """
    if cost.q == 1:
        return compile_expectation_q1(loss, aset, cost, dset, outcomes)
    if cost.q != 2:
        raise ValueError("cost order must be 1 or 2")
    q = 2.0
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    _, cols, _ = _embed_support_dual(prog, aset)
    pc = _p_col_indices(aset)
    dc = aset.delta_col
    scores = _scores(alpha, Y)

    if loss.wrap_power is None:
        # slope magnitude must be uniform: the additive penalty prices the
        # radius at exactly C * delta^{1/q} * ||alpha||_*
        if loss.kind == "affine":
            if loss.a == 0:
                raise ValueError("constant loss has no robust counterpart here")
            C = loss.scale * abs(loss.a)
        elif loss.kind == "abs":
            C = loss.scale
        else:
            raise ValueError(
                "additive-penalty form needs an affine or shifted-absolute loss; "
                "wrap other nonnegative losses with .powered(q)"
            )
        for i, score in enumerate(scores):
            for s, c in loss.scaled_base_pieces():
                prog.add_leq(score * s + c - cols[pc[i]], 0.0)
        _, cq = _q_constants(q, C)
        w = prog.new_var(lb=0.0)
        dual_norm_power(prog, alpha, cost.y_base_norm, 2, Aff.var(w),
                        denominator=cols[dc])
        prog.add_objective(Aff.var(w, cq))
        _pad_aux_columns(prog, aset, cols)
        return CompiledProblem(
            prog, alpha, meta={"family": "expectation_special_q", "powered": False}
        )

    if loss.wrap_power != q:
        raise ValueError("wrap power must equal the cost order q")
    C = loss.scale
    c1, cq = _q_constants(q, C)
    y = prog.new_var(lb=0.0)
    for i, score in enumerate(scores):
        e = prog.new_var(lb=0.0)
        for s, c in loss.scaled_base_pieces():
            prog.add_leq(score * s + c - Aff.var(e), 0.0)
        quad_over_linear(prog, Aff.var(e), Aff.var(y), cols[pc[i]])
    w = prog.new_var(lb=0.0)
    dual_norm_power(prog, alpha, cost.y_base_norm, 2, Aff.var(w), denominator=cols[dc])
    prog.add_objective(Aff.var(y, c1) + Aff.var(w, cq))
    _pad_aux_columns(prog, aset, cols)
    return CompiledProblem(
        prog, alpha,
        value_map=lambda v: max(v, 0.0) ** q,
        meta={"family": "expectation_special_q", "powered": True},
    )


def compile_expectation_general_q2(
    loss: LossSpec,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Worst-case expectation at q = 2 through the smoothed-conjugate rows.

    A scalar eta >= 0 prices the squared-radius penalty; each sample row
    dominates sup over slopes of (slope * score - conj(loss) + eta slope^2/4),
    evaluated in closed form per loss kind.
    """
    if cost.q == 1 and loss.kind == "pwl":
        return compile_expectation_q1(loss, aset, cost, dset, outcomes)
    if cost.q != 2:
        raise ValueError("cost order must be 2 (or 1 for PWL losses)")
    if loss.wrap_power is not None:
        raise ValueError("powered losses use the structured compiler instead")
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    _, cols, _ = _embed_support_dual(prog, aset)
    pc = _p_col_indices(aset)
    eta = prog.new_var(lb=0.0, name="eta")
    scores = _scores(alpha, Y)

    if loss.kind in _PWL_KINDS:
        for i, score in enumerate(scores):
            for s, c in loss.scaled_base_pieces():
                prog.add_leq(
                    score * s + Aff.var(eta, s * s / 4.0) + c - cols[pc[i]], 0.0
                )
    elif loss.kind == "pwq":
        for i, score in enumerate(scores):
            for a_j, b_j, c_j in loss.scaled_pwq_pieces():
                u = prog.new_var()
                den = Aff.var(eta, -a_j) + 1.0  # 1 - a_j eta >= 0 via the cone
                num = (score + b_j / (2.0 * a_j)) * math.sqrt(a_j)
                quad_over_linear(prog, num, den, Aff.var(u))
                prog.add_leq(
                    Aff.var(u) + (c_j - b_j * b_j / (4.0 * a_j)) - cols[pc[i]], 0.0
                )
    elif loss.kind == "power":
        if loss.inner_power != 2:
            raise ValueError("only the squared kernel |x|^2/2 is supported at q = 2")
        C = loss.scale
        for i, score in enumerate(scores):
            den = Aff.var(eta, -C) + 2.0
            quad_over_linear(prog, score * math.sqrt(C), den, cols[pc[i]])
    else:
        raise ValueError(f"unsupported loss kind {loss.kind!r} at q = 2")

    dual_norm_power(
        prog, alpha, cost.y_base_norm, 2, cols[aset.delta_col],
        denominator=Aff.var(eta),
    )
    _pad_aux_columns(prog, aset, cols)
    return CompiledProblem(
        prog, alpha, meta={"family": "expectation_general_q2", "eta": eta}
    )


# ---------------------------------------------------------------------------
# worst case of an infimal (translated) expectation
# ---------------------------------------------------------------------------


def compile_min_expectation(
    loss,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Worst case of min over t of E[loss(score, t)].

    q = 1 takes a jointly PWL ``InnerLossSpec``; q = 2 takes a powered
    ``LossSpec`` applied at score - t (value reported re-raised to q).
    """
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    t = prog.new_var(name="t")
    _, cols, _ = _embed_support_dual(prog, aset)
    pc = _p_col_indices(aset)
    scores = _scores(alpha, Y)

    if cost.q == 1:
        if not isinstance(loss, InnerLossSpec):
            raise ValueError("q = 1 needs a jointly PWL inner loss")
        for i, score in enumerate(scores):
            for az, at, c in loss.pieces:
                prog.add_leq(score * az + Aff.var(t, at) + c - cols[pc[i]], 0.0)
        dual_norm_power(prog, alpha, cost.y_base_norm, 1, cols[aset.delta_col],
                        scale=loss.lip_z)
        _pad_aux_columns(prog, aset, cols)
        return CompiledProblem(prog, alpha, meta={"family": "min_expectation_q1"})

    if cost.q != 2:
        raise ValueError("cost order must be 1 or 2")
    if not isinstance(loss, LossSpec) or loss.wrap_power != 2:
        raise ValueError("q = 2 needs a LossSpec with wrap_power = 2")
    C = loss.scale
    c1, cq = _q_constants(2.0, C)
    y = prog.new_var(lb=0.0)
    for i, score in enumerate(scores):
        e = prog.new_var(lb=0.0)
        for s, c in loss.scaled_base_pieces():
            prog.add_leq((score - Aff.var(t)) * s + c - Aff.var(e), 0.0)
        quad_over_linear(prog, Aff.var(e), Aff.var(y), cols[pc[i]])
    w = prog.new_var(lb=0.0)
    dual_norm_power(prog, alpha, cost.y_base_norm, 2, Aff.var(w),
                    denominator=cols[aset.delta_col])
    prog.add_objective(Aff.var(y, c1) + Aff.var(w, cq))
    _pad_aux_columns(prog, aset, cols)
    return CompiledProblem(
        prog, alpha,
        value_map=lambda v: max(v, 0.0) ** 2,
        meta={"family": "min_expectation_q2"},
    )


def compile_qnorm(
    loss,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Worst case of the translated q-norm risk min over t of t + E[loss^q]^{1/q}.

    q = 1 takes a jointly PWL ``InnerLossSpec`` (objective t + support dual);
    q = 2 takes an unwrapped nonnegative ``LossSpec`` with scale > 1 applied
    at score - t.
    """
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    t = prog.new_var(name="t")
    prog.add_objective(Aff.var(t))
    _, cols, _ = _embed_support_dual(prog, aset)
    pc = _p_col_indices(aset)
    scores = _scores(alpha, Y)

    if cost.q == 1:
        if not isinstance(loss, InnerLossSpec):
            raise ValueError("q = 1 needs a jointly PWL inner loss")
        for i, score in enumerate(scores):
            for az, at, c in loss.pieces:
                prog.add_leq(score * az + Aff.var(t, at) + c - cols[pc[i]], 0.0)
        dual_norm_power(prog, alpha, cost.y_base_norm, 1, cols[aset.delta_col],
                        scale=loss.lip_z)
        _pad_aux_columns(prog, aset, cols)
        return CompiledProblem(prog, alpha, meta={"family": "qnorm_q1"})

    if cost.q != 2:
        raise ValueError("cost order must be 1 or 2")
    if not isinstance(loss, LossSpec) or loss.wrap_power is not None:
        raise ValueError("q = 2 needs an unwrapped nonnegative LossSpec")
    if loss.kind not in _NONNEG_BASE_KINDS:
        raise ValueError("q = 2 needs a nonnegative base loss")
    if loss.scale <= 1:
        raise ValueError("q = 2 translated q-norm form requires scale > 1")
    C = loss.scale
    c1, cq = _q_constants(2.0, C)
    y = prog.new_var(lb=0.0)
    for i, score in enumerate(scores):
        e = prog.new_var(lb=0.0)
        for s, c in loss.scaled_base_pieces():
            prog.add_leq((score - Aff.var(t)) * s + c - Aff.var(e), 0.0)
        quad_over_linear(prog, Aff.var(e), Aff.var(y), cols[pc[i]])
    w = prog.new_var(lb=0.0)
    dual_norm_power(prog, alpha, cost.y_base_norm, 2, Aff.var(w),
                    denominator=cols[aset.delta_col])
    prog.add_objective(Aff.var(y, c1) + Aff.var(w, cq))
    _pad_aux_columns(prog, aset, cols)
    return CompiledProblem(prog, alpha, meta={"family": "qnorm_q2"})


# ---------------------------------------------------------------------------
# expected-utility shortfall
# ---------------------------------------------------------------------------


def _increasing_pieces(u: LossSpec):
    pieces = u.max_affine_pieces()
    if any(s < 0 for s, _ in pieces):
        raise ValueError("utility penalty must be nondecreasing")
    if max(s for s, _ in pieces) <= 0:
        raise ValueError("utility penalty must increase somewhere")
    return pieces


def _check_shortfall_level(pieces, level: float):
    zero_offsets = [c for s, c in pieces if s == 0]
    lower = max(zero_offsets) if zero_offsets else -math.inf
    if level <= lower:
        raise ValueError(
            f"shortfall level {level} is unreachable: penalty is bounded below by {lower}"
        )


def compile_shortfall(
    u: LossSpec,
    level: float,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Least cash addition kappa keeping the worst-case expected penalty at
    ``level``: min kappa subject to worst-case E[u(-score - kappa)] <= level.
    """
    pieces = _increasing_pieces(u)
    _check_shortfall_level(pieces, level)
    lip = max(abs(s) for s, _ in pieces)
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    kappa = prog.new_var(name="kappa")
    prog.add_objective(Aff.var(kappa))
    _, cols, zb = _embed_support_dual(prog, aset, in_objective=False)
    pc = _p_col_indices(aset)
    scores = _scores(alpha, Y)

    def arg(i):  # -score_i - kappa
        return scores[i] * -1.0 - Aff.var(kappa)

    if cost.q == 1:
        for i in range(len(scores)):
            for s, c in pieces:
                prog.add_leq(arg(i) * s + c - cols[pc[i]], 0.0)
        dual_norm_power(prog, alpha, cost.y_base_norm, 1, cols[aset.delta_col],
                        scale=lip)
        _pad_aux_columns(prog, aset, cols)
        prog.add_leq(zb, level)
        return CompiledProblem(prog, alpha, meta={"family": "shortfall_q1"})

    if cost.q != 2:
        raise ValueError("cost order must be 1 or 2")

    if u.kind == "affine":
        # linear penalty: budget row carries the additive radius term directly
        C = u.scale * u.a
        if C <= 0:
            raise ValueError("linear penalty needs a positive slope")
        _, cq = _q_constants(2.0, C)
        for i in range(len(scores)):
            prog.add_leq(arg(i) * C + u.scale * u.b - cols[pc[i]], 0.0)
        w = prog.new_var(lb=0.0)
        dual_norm_power(prog, alpha, cost.y_base_norm, 2, Aff.var(w),
                        denominator=cols[aset.delta_col])
        _pad_aux_columns(prog, aset, cols)
        prog.add_leq(zb + Aff.var(w, cq), level)
        return CompiledProblem(prog, alpha, meta={"family": "shortfall_q2_linear"})

    # general convex increasing PWL penalty: smoothed-conjugate rows in eta
    eta = prog.new_var(lb=0.0, name="eta")
    for i in range(len(scores)):
        for s, c in pieces:
            prog.add_leq(arg(i) * s + Aff.var(eta, s * s / 4.0) + c - cols[pc[i]], 0.0)
    dual_norm_power(prog, alpha, cost.y_base_norm, 2, cols[aset.delta_col],
                    denominator=Aff.var(eta))
    _pad_aux_columns(prog, aset, cols)
    prog.add_leq(zb, level)
    return CompiledProblem(prog, alpha, meta={"family": "shortfall_q2_general"})


# ---------------------------------------------------------------------------
# distortion risk: exponential-size exact dual (small N only)
# ---------------------------------------------------------------------------


def compile_distortion_q1_exponential(
    h: DistortionFunction,
    loss: LossSpec,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    h_envelope: DistortionFunction | None = None,
    max_samples: int = 12,
) -> CompiledProblem:
    """Exact distortion-risk dual enumerating every proper sample subset.

    The reweighting envelope around each admissible p is dualized subset by
    subset, so the program has on the order of 2^N blocks; refuse N beyond
    ``max_samples``.  ``h_envelope`` may supply a PWL stand-in for the
    envelope/conjugate rows while norm constants still come from ``h``
    (useful to certify smooth distortions by chordal approximation).
    """
    _require_kind(aset, ("full", "partial"))
    n = aset.n
    if n > max_samples:
        raise ValueError(
            f"subset-enumeration dual grows as 2^N; refusing N = {n} > {max_samples}"
        )
    if cost.q != 1:
        raise ValueError("the exponential dual is a first-order-cost construction")
    h_env = h_envelope if h_envelope is not None else h
    if h_env.kind != "pwl":
        raise ValueError(
            "envelope rows need a PWL distortion; pass h_envelope=h.chord_pwl(k)"
        )
    if not h_env.is_convex:
        raise ValueError("distortion must be convex")
    xs, hs = h_env.conjugate_breakpoints()
    hinf = h.hprime_inf
    pieces = loss.max_affine_pieces()
    lip = loss.lipschitz()
    part = aset.partition
    d = part.require_d()
    m = part.m
    Y = _outcome_matrix(aset, None)

    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    lam = prog.new_var(name="lam")
    mu = prog.new_var(name="mu")
    xi1 = prog.new_var(lb=0.0, name="xi1")
    xi2 = prog.new_var(name="xi2")
    tau1 = prog.new_vars(n, lb=0.0, name="tau1")
    tau2 = prog.new_vars(n, lb=0.0, name="tau2")
    gam = prog.new_vars(n, lb=0.0, name="gam")
    masks = proper_subsets(n)
    J = len(masks)
    phi = prog.new_vars(J, name="phi")
    zeta = prog.new_vars(J, lb=0.0, name="zeta")
    wsub = prog.new_vars(J, name="wsub")
    v_lo = prog.new_vars(n, lb=0.0, name="v_lo")       # weight-block argument
    v_rad = prog.new_var(name="v_rad")                 # radius-block argument
    v_env = prog.new_vars(n, name="v_env")             # reweighted-loss argument

    # objective
    if aset.kind == "full":
        eta1 = prog.new_var(lb=0.0, name="eta1")
        eta2 = prog.new_var(lb=0.0, name="eta2")
        mass = aset.mass
        prog.add_objective(
            Aff.var(eta1, -1.0 / mass.hi) + Aff.var(eta2, 1.0 / mass.lo)
        )
        prog.add_objective(Aff.var(lam, -1.0) + Aff.var(mu, -1.0))
        prog.add_objective(Aff.combo(wsub, np.ones(J)))
        mean_out = float(np.sum(d[m:])) / n
        # (a) scale-multiplier balance
        prog.add_leq(
            Aff.var(xi2, -(aset.delta0 - mean_out))
            + Aff.combo(tau2, np.full(n, 1.0 / n))
            + Aff.var(eta1) - Aff.var(eta2),
            0.0,
        )
        cvec = np.concatenate([d[:m], -d[m:]])
    else:
        eps = aset.mass.lo
        prog.add_objective(Aff.var(lam, -1.0) + Aff.var(mu, -1.0))
        prog.add_objective(Aff.combo(tau2, np.full(n, 1.0 / (n * eps))))
        prog.add_objective(Aff.var(xi2, -aset.delta0))
        prog.add_objective(Aff.combo(wsub, np.ones(J)))
        cvec = np.concatenate([d[:m], np.zeros(n - m)])

    member = [[j for j, mask in enumerate(masks) if mask >> i & 1] for i in range(n)]

    # (b) weight rows
    for i in range(n):
        aff = (
            Aff.var(v_lo[i]) + Aff.var(lam) + Aff.var(tau1[i]) - Aff.var(tau2[i])
            + Aff.var(xi2, cvec[i])
        )
        if member[i]:
            aff = aff + Aff.combo([phi[j] for j in member[i]], np.ones(len(member[i])))
        prog.add_leq(aff, 0.0)
    # (c) reweighted rows
    for i in range(n):
        aff = Aff.var(v_env[i]) + Aff.var(mu) + Aff.var(gam[i])
        if member[i]:
            aff = aff + Aff.combo([zeta[j] for j in member[i]], np.ones(len(member[i])))
        prog.add_leq(aff, 0.0)
    # (d) radius row
    prog.add_leq(Aff.var(v_rad) + Aff.var(xi1) + Aff.var(xi2), 0.0)
    # (e) conjugate perspective epigraphs over the distortion breakpoints
    for j in range(J):
        for xk, hk in zip(xs, hs):
            prog.add_leq(
                Aff.var(phi[j], -float(xk)) + Aff.var(zeta[j], -float(hk))
                - Aff.var(wsub[j]),
                0.0,
            )

    # decision-side rows: reweighted losses and the radius penalty
    for i, score in enumerate(_scores(alpha, Y)):
        for s, c in pieces:
            prog.add_leq(score * s + c - Aff.var(v_env[i]), 0.0)
    aux = dual_norm_power(
        prog, alpha, cost.y_base_norm, 1, Aff.var(v_rad), scale=lip * hinf
    )
    return CompiledProblem(
        prog, alpha,
        meta={
            "family": f"distortion_exponential_{aset.kind}",
            "subsets": J,
            "norm_aux": aux,
            "hprime_inf": hinf,
        },
    )


# ---------------------------------------------------------------------------
# mean-variance and mean-tail-average second-order programs
# ---------------------------------------------------------------------------


def mean_variance_socp(
    theta: float,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Worst-case variance-minus-scaled-mean of the score, as one SOCP.

    min over alpha, t, 0 <= eta <= 1, z >= 0 of b.z - theta^2/4 - theta t
    with rows [A^T z]_i >= (score_i - theta/2 - t)^2 / (1 - eta) and the
    radius column dominating ||alpha||_*^2 / eta.
    """
    if cost.q != 2:
        raise ValueError("this program needs second-order costs (q = 2)")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    t = prog.new_var(name="t")
    eta = prog.new_var(lb=0.0, ub=1.0, name="eta")
    _, cols, _ = _embed_support_dual(prog, aset)
    pc = _p_col_indices(aset)
    prog.add_objective(Aff.var(t, -theta))
    prog.obj_const += -theta * theta / 4.0
    one_minus_eta = Aff.var(eta, -1.0) + 1.0
    for i, score in enumerate(_scores(alpha, Y)):
        quad_over_linear(
            prog, score - Aff.var(t) - theta / 2.0, one_minus_eta, cols[pc[i]]
        )
    dual_norm_power(prog, alpha, cost.y_base_norm, 2, cols[aset.delta_col],
                    denominator=Aff.var(eta))
    _pad_aux_columns(prog, aset, cols)
    return CompiledProblem(prog, alpha, meta={"family": "mean_variance"})


def mean_cvar_socp(
    theta: float,
    kappa: float,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
) -> CompiledProblem:
    """Worst-case tail-average-plus-mean risk of the negated score, one SOCP.

    Inner loss t + (1/kappa) max(-score - t, 0) - theta score; rows bound the
    two affine branches by [A^T z]_i, and the radius column prices the squared
    dual norm with coefficient ((1 + theta)^2 + (1 - kappa)/kappa) / 4.
    """
    if cost.q != 2:
        raise ValueError("this program needs second-order costs (q = 2)")
    if not (0 < kappa <= 1):
        raise ValueError("kappa must lie in (0, 1]")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    Y = _outcome_matrix(aset, outcomes)
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    t = prog.new_var(name="t")
    _, cols, _ = _embed_support_dual(prog, aset)
    pc = _p_col_indices(aset)
    inner = InnerLossSpec.cvar_mix(theta, kappa)
    for i, score in enumerate(_scores(alpha, Y)):
        for az, at, c in inner.pieces:
            prog.add_leq(score * az + Aff.var(t, at) + c - cols[pc[i]], 0.0)
    coeff = ((1.0 + theta) ** 2 + (1.0 - kappa) / kappa) / 4.0
    w = prog.new_var(lb=0.0)
    dual_norm_power(prog, alpha, cost.y_base_norm, 2, Aff.var(w),
                    denominator=cols[aset.delta_col])
    prog.add_objective(Aff.var(w, coeff))
    _pad_aux_columns(prog, aset, cols)
    return CompiledProblem(prog, alpha, meta={"family": "mean_cvar"})
