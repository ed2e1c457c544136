"""Minimal LP/SOCP intermediate representation and solver adapter.

Programs are built as linear objectives over named variables with linear
rows (<= / ==), variable bounds, and second-order-cone blocks ||t||_2 <= s
where t and s are affine.  Pure LPs are dispatched to HiGHS (scipy.linprog);
anything with a cone block goes to Clarabel.  Every reported optimum is
re-audited against the IR independently of the backend.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

__all__ = [
    "Aff",
    "ConicProgram",
    "Solution",
    "SolveStatus",
    "solve",
    "quad_over_linear",
    "dual_norm_power",
    "structural_counts",
    "DEFAULT_TOL",
]

DEFAULT_TOL = float(os.environ.get("OTCRM_SOLVER_TOL", "1e-8"))

_INF = float("inf")


class Aff:
    """Sparse affine expression: sum(coef * x[idx]) + const."""

    __slots__ = ("idx", "coef", "const")

    def __init__(self, idx=(), coef=(), const=0.0):
        self.idx = tuple(int(i) for i in idx)
        self.coef = tuple(float(c) for c in coef)
        self.const = float(const)

    @staticmethod
    def var(i: int, c: float = 1.0) -> "Aff":
        return Aff((i,), (c,), 0.0)

    @staticmethod
    def constant(c: float) -> "Aff":
        return Aff((), (), c)

    @staticmethod
    def combo(idx, coef, const: float = 0.0, prune: bool = True) -> "Aff":
        idx = np.asarray(idx, dtype=int)
        coef = np.asarray(coef, dtype=float)
        if prune:
            keep = coef != 0.0
            idx, coef = idx[keep], coef[keep]
        return Aff(idx.tolist(), coef.tolist(), const)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return Aff(self.idx, self.coef, self.const + other)
        return Aff(self.idx + other.idx, self.coef + other.coef, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Aff(self.idx, tuple(-c for c in self.coef), -self.const)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return Aff(self.idx, self.coef, self.const - other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k: float):
        return Aff(self.idx, tuple(k * c for c in self.coef), k * self.const)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return float(sum(c * x[i] for i, c in zip(self.idx, self.coef)) + self.const)

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for i, c in zip(self.idx, self.coef):
            out[i] += c
        return out


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERIC_FAILURE = "numeric_failure"


@dataclass
class Solution:
    status: SolveStatus
    x: np.ndarray | None
    objective: float
    solver_tol: float
    residual: float = float("nan")
    backend: str = ""
    message: str = ""


class ConicProgram:
    """Mutable builder + immutable-enough container for an LP/SOCP (min sense)."""

    def __init__(self):
        self.n_vars = 0
        self.obj_idx: list[int] = []
        self.obj_coef: list[float] = []
        self.obj_const = 0.0
        # rows: (idx tuple, coef tuple, rhs, sense) with sense in {"<=", "=="}
        self.linear_rows: list[tuple] = []
        # blocks: (t_affs tuple[Aff], s_aff Aff) meaning ||t||_2 <= s
        self.soc_blocks: list[tuple] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.names: dict[str, tuple[int, int]] = {}

    # -- building ---------------------------------------------------------
    def new_vars(self, k: int, lb: float = -_INF, ub: float = _INF, name: str | None = None):
        start = self.n_vars
        self.n_vars += k
        self.lb.extend([lb] * k)
        self.ub.extend([ub] * k)
        if name is not None:
            self.names[name] = (start, self.n_vars)
        return list(range(start, self.n_vars))

    def new_var(self, lb: float = -_INF, ub: float = _INF, name: str | None = None) -> int:
        return self.new_vars(1, lb, ub, name)[0]

    def slice(self, name: str) -> list[int]:
        start, stop = self.names[name]
        return list(range(start, stop))

    def add_objective(self, aff: Aff):
        self.obj_idx.extend(aff.idx)
        self.obj_coef.extend(aff.coef)
        self.obj_const += aff.const

    def add_leq(self, aff: Aff, rhs: float = 0.0):
        """Row aff <= rhs (affine constant folded into the right side)."""
        self.linear_rows.append((aff.idx, aff.coef, rhs - aff.const, "<="))

    def add_geq(self, aff: Aff, rhs: float = 0.0):
        self.add_leq(aff * -1.0, -rhs)

    def add_eq(self, aff: Aff, rhs: float = 0.0):
        self.linear_rows.append((aff.idx, aff.coef, rhs - aff.const, "=="))

    def add_soc(self, t_affs, s_aff: Aff):
        """Cone block ||(t_1, ..., t_k)||_2 <= s with affine entries."""
        t_affs = tuple(t_affs)
        if len(t_affs) < 1:
            raise ValueError("cone block needs at least one norm component")
        self.soc_blocks.append((t_affs, s_aff))

    # -- introspection ----------------------------------------------------
    def objective_value(self, x: np.ndarray) -> float:
        return float(np.sum(np.asarray(self.obj_coef) * x[self.obj_idx]) + self.obj_const) \
            if self.obj_idx else self.obj_const

    def objective_dense(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, v in zip(self.obj_idx, self.obj_coef):
            c[i] += v
        return c

    def feasibility_residual(self, x: np.ndarray) -> float:
        """Largest scaled constraint violation of x against the IR.

        Each violation is divided by 1 + the magnitude of the terms entering
        the row, so badly scaled data does not trip the audit spuriously.
        """
        worst = 0.0
        for idx, coef, rhs, sense in self.linear_rows:
            lhs = sum(c * x[i] for i, c in zip(idx, coef))
            viol = abs(lhs - rhs) if sense == "==" else max(0.0, lhs - rhs)
            scale = 1.0 + abs(rhs) + sum(abs(c * x[i]) for i, c in zip(idx, coef))
            worst = max(worst, viol / scale)
        for j in range(self.n_vars):
            scale = 1.0 + abs(x[j])
            if self.lb[j] > -_INF:
                worst = max(worst, (self.lb[j] - x[j]) / scale)
            if self.ub[j] < _INF:
                worst = max(worst, (x[j] - self.ub[j]) / scale)
        for t_affs, s_aff in self.soc_blocks:
            tval = math.sqrt(sum(a.value(x) ** 2 for a in t_affs))
            sval = s_aff.value(x)
            worst = max(worst, (tval - sval) / (1.0 + abs(tval) + abs(sval)))
        return float(worst)

    # -- serialization ----------------------------------------------------
    def to_json(self) -> str:
        def num(v):
            if v == _INF:
                return "inf"
            if v == -_INF:
                return "-inf"
            return v

        return json.dumps(
            {
                "n_vars": self.n_vars,
                "objective": {
                    "idx": self.obj_idx,
                    "coef": self.obj_coef,
                    "const": self.obj_const,
                },
                "linear_rows": [
                    {"idx": list(i), "coef": list(c), "rhs": r, "sense": s}
                    for i, c, r, s in self.linear_rows
                ],
                "soc_blocks": [
                    {
                        "t": [
                            {"idx": list(a.idx), "coef": list(a.coef), "const": a.const}
                            for a in t_affs
                        ],
                        "s": {
                            "idx": list(s_aff.idx),
                            "coef": list(s_aff.coef),
                            "const": s_aff.const,
                        },
                    }
                    for t_affs, s_aff in self.soc_blocks
                ],
                "lb": [num(v) for v in self.lb],
                "ub": [num(v) for v in self.ub],
                "names": {k: list(v) for k, v in self.names.items()},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ConicProgram":
        def num(v):
            if v == "inf":
                return _INF
            if v == "-inf":
                return -_INF
            return float(v)

        obj = json.loads(text)
        prog = cls()
        prog.n_vars = int(obj["n_vars"])
        prog.obj_idx = [int(i) for i in obj["objective"]["idx"]]
        prog.obj_coef = [float(c) for c in obj["objective"]["coef"]]
        prog.obj_const = float(obj["objective"]["const"])
        prog.linear_rows = [
            (tuple(r["idx"]), tuple(r["coef"]), float(r["rhs"]), r["sense"])
            for r in obj["linear_rows"]
        ]
        for blk in obj["soc_blocks"]:
            t_affs = tuple(
                Aff(a["idx"], a["coef"], a["const"]) for a in blk["t"]
            )
            s_aff = Aff(blk["s"]["idx"], blk["s"]["coef"], blk["s"]["const"])
            prog.soc_blocks.append((t_affs, s_aff))
        prog.lb = [num(v) for v in obj["lb"]]
        prog.ub = [num(v) for v in obj["ub"]]
        prog.names = {k: tuple(v) for k, v in obj.get("names", {}).items()}
        return prog


def _rows_to_sparse(rows, n_vars):
    data, ri, ci = [], [], []
    rhs = []
    for r, (idx, coef, b, _s) in enumerate(rows):
        ri.extend([r] * len(idx))
        ci.extend(idx)
        data.extend(coef)
        rhs.append(b)
    mat = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n_vars))
    return mat, np.array(rhs)


def _solve_lp(prog: ConicProgram, tol: float) -> Solution:
    ub_rows = [r for r in prog.linear_rows if r[3] == "<="]
    eq_rows = [r for r in prog.linear_rows if r[3] == "=="]
    A_ub, b_ub = (None, None)
    A_eq, b_eq = (None, None)
    if ub_rows:
        A_ub, b_ub = _rows_to_sparse(ub_rows, prog.n_vars)
    if eq_rows:
        A_eq, b_eq = _rows_to_sparse(eq_rows, prog.n_vars)
    bounds = [
        (None if lb == -_INF else lb, None if ub == _INF else ub)
        for lb, ub in zip(prog.lb, prog.ub)
    ]
    feas_tol = min(max(tol, 1e-10), 1e-7)
    res = linprog(
        c=prog.objective_dense(),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={
            "primal_feasibility_tolerance": feas_tol,
            "dual_feasibility_tolerance": feas_tol,
        },
    )
    if res.status == 2:
        return Solution(SolveStatus.INFEASIBLE, None, float("nan"), tol, backend="highs",
                        message=res.message)
    if res.status == 3:
        return Solution(SolveStatus.UNBOUNDED, None, float("-inf"), tol, backend="highs",
                        message=res.message)
    if res.status != 0 or res.x is None:
        return Solution(SolveStatus.NUMERIC_FAILURE, None, float("nan"), tol,
                        backend="highs", message=res.message)
    x = np.asarray(res.x, dtype=float)
    return Solution(SolveStatus.OPTIMAL, x, prog.objective_value(x), tol, backend="highs")


def _solve_socp(prog: ConicProgram, tol: float) -> Solution:
    import clarabel

    rows_A = []  # list of (row_list as (idx, coef)), rhs
    b_all = []

    def push(idx, coef, rhs):
        rows_A.append((idx, coef))
        b_all.append(rhs)

    cones = []
    eq_rows = [r for r in prog.linear_rows if r[3] == "=="]
    ub_rows = [r for r in prog.linear_rows if r[3] == "<="]
    if eq_rows:
        for idx, coef, rhs, _ in eq_rows:
            push(idx, coef, rhs)
        cones.append(clarabel.ZeroConeT(len(eq_rows)))
    n_ineq = 0
    for idx, coef, rhs, _ in ub_rows:
        push(idx, coef, rhs)
        n_ineq += 1
    for j, (lb, ub) in enumerate(zip(prog.lb, prog.ub)):
        if lb > -_INF:
            push((j,), (-1.0,), -lb)
            n_ineq += 1
        if ub < _INF:
            push((j,), (1.0,), ub)
            n_ineq += 1
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))
    for t_affs, s_aff in prog.soc_blocks:
        # slack vector (s, t) lives in the cone: s0 >= ||rest||
        push(s_aff.idx, tuple(-c for c in s_aff.coef), s_aff.const)
        for a in t_affs:
            push(a.idx, tuple(-c for c in a.coef), a.const)
        cones.append(clarabel.SecondOrderConeT(1 + len(t_affs)))

    data, ri, ci = [], [], []
    for r, (idx, coef) in enumerate(rows_A):
        ri.extend([r] * len(idx))
        ci.extend(idx)
        data.extend(coef)
    A = sp.csc_matrix((data, (ri, ci)), shape=(len(rows_A), prog.n_vars))
    b = np.array(b_all)
    P = sp.csc_matrix((prog.n_vars, prog.n_vars))
    q = prog.objective_dense()

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = min(max(tol, 1e-12), 1e-8)
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    out = solver.solve()
    status = str(out.status)
    if status in ("Solved", "SolverStatus.Solved", "AlmostSolved", "SolverStatus.AlmostSolved"):
        x = np.asarray(out.x, dtype=float)
        return Solution(SolveStatus.OPTIMAL, x, prog.objective_value(x), tol,
                        backend="clarabel", message=status)
    if "PrimalInfeasible" in status:
        return Solution(SolveStatus.INFEASIBLE, None, float("nan"), tol,
                        backend="clarabel", message=status)
    if "DualInfeasible" in status:
        return Solution(SolveStatus.UNBOUNDED, None, float("-inf"), tol,
                        backend="clarabel", message=status)
    return Solution(SolveStatus.NUMERIC_FAILURE, None, float("nan"), tol,
                    backend="clarabel", message=status)


def solve(prog: ConicProgram, tol: float = DEFAULT_TOL) -> Solution:
    """Solve the program and audit the reported optimum against the IR."""
    if prog.n_vars == 0:
        return Solution(SolveStatus.OPTIMAL, np.zeros(0), prog.obj_const, tol,
                        residual=0.0, backend="trivial")
    sol = _solve_socp(prog, tol) if prog.soc_blocks else _solve_lp(prog, tol)
    if sol.status is SolveStatus.OPTIMAL:
        sol.residual = prog.feasibility_residual(sol.x)
        if sol.residual > max(1e-6, 10 * tol):
            sol.status = SolveStatus.NUMERIC_FAILURE
            sol.message = (
                f"audit failed: residual {sol.residual:.3e} exceeds "
                f"{max(1e-6, 10 * tol):.1e} ({sol.message})"
            )
    return sol


def quad_over_linear(prog: ConicProgram, numerator, denominator: Aff, epigraph: Aff):
    """Rows enforcing epigraph >= ||numerator||^2 / denominator (denominator >= 0).

    ``numerator`` is one affine expression or a list of them; encoded as the
    cone block ||(2 a, epi - den)||_2 <= epi + den, which also forces
    epi, den >= 0.
    """
    nums = numerator if isinstance(numerator, (list, tuple)) else [numerator]
    t = [a * 2.0 for a in nums] + [epigraph - denominator]
    prog.add_soc(t, epigraph + denominator)


def dual_norm_power(prog: ConicProgram, alpha: list[int], y_base_norm: str, q: float,
                    epigraph: Aff, denominator: Aff | None = None, scale: float = 1.0):
    """Rows making ``epigraph`` dominate the dual-norm penalty of alpha.

    q = 1: epigraph >= scale * ||alpha||_* (dual of the outcome base norm).
    q = 2: epigraph >= ||scale * alpha||_*^2 / denominator (perspective form).
    ``scale`` must be nonnegative.  Returns the list of auxiliary variable
    indices created (possibly empty).
    """
    from .geometry import dual_norm_name

    if scale < 0:
        raise ValueError("scale must be nonnegative")
    dual = dual_norm_name(y_base_norm)
    aux: list[int] = []
    alpha_affs = [Aff.var(j, scale) for j in alpha]
    if q == 1:
        if dual == "l2":
            prog.add_soc(alpha_affs, epigraph)
        elif dual == "linf":
            for j in alpha:
                prog.add_leq(Aff.var(j, scale) - epigraph, 0.0)
                prog.add_leq(Aff.var(j, -scale) - epigraph, 0.0)
        else:  # dual l1: split signs
            for j in alpha:
                u = prog.new_var(lb=0.0)
                aux.append(u)
                prog.add_leq(Aff.var(j, scale) - Aff.var(u), 0.0)
                prog.add_leq(Aff.var(j, -scale) - Aff.var(u), 0.0)
            prog.add_leq(
                Aff.combo(aux, np.ones(len(aux))) - epigraph, 0.0
            )
        return aux
    if q == 2:
        if denominator is None:
            raise ValueError("q=2 perspective form needs a denominator expression")
        if dual == "l2":
            quad_over_linear(prog, alpha_affs, denominator, epigraph)
        else:
            t = prog.new_var(lb=0.0)
            aux.append(t)
            if dual == "linf":
                for j in alpha:
                    prog.add_leq(Aff.var(j, scale) - Aff.var(t), 0.0)
                    prog.add_leq(Aff.var(j, -scale) - Aff.var(t), 0.0)
            else:
                us = []
                for j in alpha:
                    u = prog.new_var(lb=0.0)
                    us.append(u)
                    prog.add_leq(Aff.var(j, scale) - Aff.var(u), 0.0)
                    prog.add_leq(Aff.var(j, -scale) - Aff.var(u), 0.0)
                aux.extend(us)
                prog.add_leq(Aff.combo(us, np.ones(len(us))) - Aff.var(t), 0.0)
            quad_over_linear(prog, Aff.var(t), denominator, epigraph)
        return aux
    raise ValueError(f"cost order q={q} outside the supported set {{1, 2}}")


def structural_counts(prog: ConicProgram, exclude_vars=()) -> dict:
    """Constraint/variable tallies for structural assertions.

    ``exclude_vars`` (decision variables such as alpha) are left out of the
    variable count and their bounds out of the row count.  Cone blocks count
    once among the linear rows (each prints as a single constraint) and once
    as the convex-constraint tally.
    """
    excl = set(exclude_vars)
    n_bound = sum(
        (prog.lb[j] > -_INF) + (prog.ub[j] < _INF)
        for j in range(prog.n_vars)
        if j not in excl
    )
    return {
        "dual_vars": prog.n_vars - len(excl),
        "linear": n_bound + len(prog.linear_rows) + len(prog.soc_blocks),
        "convex": len(prog.soc_blocks),
        "soc_blocks": len(prog.soc_blocks),
    }
