"""Scenario-pool algorithm for worst-case distortion risk minimization.

Alternates a master step (minimize the pooled lower envelope over decisions)
with a pricing step (find the admissible (p, delta) whose distorted risk of
the incumbent decision is largest).  The pricing objective is concave in the
cumulative weights, so piecewise-linear distortions price exactly through a
hypograph LP and smooth ones through tangent cuts refined to tolerance.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .ambiguity import AdmissibleSet
from .conic import Aff, ConicProgram, SolveStatus, solve as conic_solve, DEFAULT_TOL
from .distortion import DistortionFunction, distortion_value, distortion_weights
from .geometry import CostSpec, norm_value
from .reformulations import DecisionSet, LossSpec, _outcome_matrix, _p_col_indices
from .conic import dual_norm_power

__all__ = [
    "Scenario",
    "IterationRecord",
    "RdeuResult",
    "price_worst_scenario",
    "solve_rdeu",
]

_KELLEY_TOL = 1e-7
_KELLEY_CAP = 500


@dataclass(frozen=True)
class Scenario:
    """One pooled scenario: admissible weights, radius, and frozen reweighting."""

    p: np.ndarray
    delta: float
    p_bar: np.ndarray


@dataclass
class IterationRecord:
    iteration: int
    lower: float
    upper: float
    gap: float
    seconds: float


@dataclass
class RdeuResult:
    value: float
    alpha: np.ndarray
    lower: float
    upper: float
    converged: bool
    iterations: list
    scenarios: list

    def write_iteration_log(self, path_or_buf):
        rows = [
            (r.iteration, r.lower, r.upper, r.gap, r.seconds) for r in self.iterations
        ]
        if hasattr(path_or_buf, "write"):
            w = csv.writer(path_or_buf)
            w.writerow(["iter", "lb", "ub", "gap", "seconds"])
            w.writerows(rows)
        else:
            with open(path_or_buf, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["iter", "lb", "ub", "gap", "seconds"])
                w.writerows(rows)


# ---------------------------------------------------------------------------
# master problem
# ---------------------------------------------------------------------------


def _master_lower(pool, loss, cost, dset, Y, coeff):
    """min over alpha of max over pooled scenarios of the frozen-risk bound.

    Shared epigraphs r_i >= loss(score_i) and nu >= ||alpha||_* feed scenario
    rows sum(p_bar * r) + coeff * delta * nu <= s; minimize s.
    """
    n = Y.shape[0]
    pieces = loss.max_affine_pieces()
    prog = ConicProgram()
    alpha = prog.new_vars(dset.n, name="alpha")
    dset.apply(prog, alpha)
    s = prog.new_var(name="epigraph")
    prog.add_objective(Aff.var(s))
    r = prog.new_vars(n, name="r")
    for i in range(n):
        score = Aff.combo(alpha, Y[i])
        for sl, c in pieces:
            prog.add_leq(score * sl + c - Aff.var(r[i]), 0.0)
    nu = prog.new_var(lb=0.0, name="nu")
    dual_norm_power(prog, alpha, cost.y_base_norm, 1, Aff.var(nu))
    for scen in pool:
        aff = Aff.combo(r, scen.p_bar) + Aff.var(nu, coeff * scen.delta) - Aff.var(s)
        prog.add_leq(aff, 0.0)
    sol = conic_solve(prog, DEFAULT_TOL)
    if sol.status is not SolveStatus.OPTIMAL:
        raise RuntimeError(f"master step failed: {sol.status.value} ({sol.message})")
    a = np.array([sol.x[j] for j in alpha])
    return float(sol.objective), a


# ---------------------------------------------------------------------------
# pricing problem
# ---------------------------------------------------------------------------


def _h_pieces(h: DistortionFunction):
    xs, hs = h.conjugate_breakpoints()
    out = []
    for (x0, h0), (x1, h1) in zip(zip(xs, hs), zip(xs[1:], hs[1:])):
        slope = (h1 - h0) / (x1 - x0)
        out.append((slope, h0 - slope * x0))
    return out


class _PricingLP:
    """Hypograph LP: maximize sum(t_k) + delta_gain * delta + const over the set.

    Cumulative variables c_k chain the sorted sample weights; each hypograph
    variable t_k (one per strictly increasing loss gap) sits under tangent
    lines of neg_k * h(c_k).  All blocks are assembled sparse so refinement
    iterations stay cheap at large N.
    """

    def __init__(self, aset, order, neg, active, const_term, delta_gain):
        A, b = aset.poly.A, aset.poly.b
        self.ncols = A.shape[1]
        self.K = len(neg)
        self.active = list(active)
        self.tpos = {k: self.ncols + self.K + j for j, k in enumerate(self.active)}
        self.nvar = self.ncols + self.K + len(self.active)
        self.neg = neg
        self.order = order
        self.const_term = const_term
        pcs = _p_col_indices(aset)
        self.pcs = pcs
        self.delta_col = aset.delta_col
        self.poly_ub = sp.hstack(
            [sp.csr_array(A), sp.csr_array((A.shape[0], self.nvar - self.ncols))],
            format="csr",
        )
        self.poly_rhs = np.asarray(b, dtype=float)
        # chain: c_0 = u[p(order_0)], c_k = c_{k-1} + u[p(order_k)]
        ri, ci, vv = [], [], []
        for k in range(self.K):
            ri += [k, k]
            ci += [self.ncols + k, pcs[order[k]]]
            vv += [1.0, -1.0]
            if k > 0:
                ri.append(k)
                ci.append(self.ncols + k - 1)
                vv.append(-1.0)
        self.eq = sp.coo_array(
            (vv, (ri, ci)), shape=(self.K, self.nvar)
        ).tocsr() if self.K else None
        obj = np.zeros(self.nvar)
        obj[self.ncols + self.K:] = -1.0
        obj[self.delta_col] = -delta_gain
        self.obj = obj
        self.bounds = (
            [(0, None)] * self.ncols
            + [(None, None)] * (self.nvar - self.ncols)
        )
        self.cut_rows = ([], [], [])  # row idx, col idx, value triplets
        self.cut_rhs = []

    def add_cut(self, k, hslope, hoff):
        """t_k <= neg_k * (hslope * c_k + hoff); h lies above this line."""
        r = len(self.cut_rhs)
        ri, ci, vv = self.cut_rows
        ri += [r, r]
        ci += [self.tpos[k], self.ncols + k]
        vv += [1.0, -self.neg[k] * hslope]
        self.cut_rhs.append(self.neg[k] * hoff)

    def solve(self):
        blocks = [self.poly_ub]
        rhs = [self.poly_rhs]
        if self.cut_rhs:
            ri, ci, vv = self.cut_rows
            blocks.append(
                sp.coo_array(
                    (vv, (ri, ci)), shape=(len(self.cut_rhs), self.nvar)
                ).tocsr()
            )
            rhs.append(np.asarray(self.cut_rhs))
        res = linprog(
            c=self.obj,
            A_ub=sp.vstack(blocks, format="csr"),
            b_ub=np.concatenate(rhs),
            A_eq=self.eq,
            b_eq=np.zeros(self.K) if self.eq is not None else None,
            bounds=self.bounds,
            method="highs",
        )
        if res.status != 0:
            raise RuntimeError(
                f"pricing LP failed: status {res.status} {res.message}"
            )
        x = np.asarray(res.x)
        p = x[self.pcs]
        delta = float(x[self.delta_col])
        tvals = {k: float(x[self.tpos[k]]) for k in self.active}
        return float(-res.fun + self.const_term), p, delta, tvals


def _tangent(h, x0):
    """(slope, offset) of a supporting line of convex h at x0 in [0, 1]."""
    x0 = float(min(max(x0, 0.0), 1.0))
    slope = h.left_derivative(x0 if x0 > 0 else 1e-12)
    return slope, float(h.value(x0)) - slope * x0


def price_worst_scenario(
    h: DistortionFunction,
    losses: np.ndarray,
    aset: AdmissibleSet,
    delta_gain: float,
    kelley_tol: float = _KELLEY_TOL,
):
    """Largest distorted risk + radius gain over the admissible set.

    Returns (upper_bound, scenario) where the bound dominates the true
    supremum and the scenario is the best admissible point found, with its
    exact extremal reweighting frozen for the master pool.
    """
    losses = np.asarray(losses, dtype=float).ravel()
    n = aset.n

    if aset.kind == "pinned":
        p0, delta = aset.pinned
        val = distortion_value(h, losses, p0) + delta_gain * delta
        p_bar = distortion_weights(h, p0, losses=losses)
        return float(val), Scenario(np.asarray(p0, float), float(delta), p_bar)

    order = np.argsort(losses, kind="stable")
    sorted_losses = losses[order]
    neg = sorted_losses[:-1] - sorted_losses[1:]  # each <= 0
    const_term = float(sorted_losses[-1]) if n else 0.0
    active = [k for k in range(n - 1) if neg[k] < 0.0]
    lp = _PricingLP(aset, order, neg, active, const_term, delta_gain)

    def true_value(p, delta):
        return distortion_value(h, losses, p) + delta_gain * delta

    if h.kind == "pwl":
        for k in active:
            for s, o in _h_pieces(h):
                lp.add_cut(k, s, o)
        bound, p, delta, _ = lp.solve()
        p_bar = distortion_weights(h, p, losses=losses)
        return bound, Scenario(p, delta, p_bar)

    # smooth distortion: tangent cuts from below h, refined per position at
    # the incumbent cumulative weights (Kelley); the LP value is always a
    # valid upper bound on the true supremum
    grid = [_tangent(h, x0) for x0 in np.linspace(0.0, 1.0, 9)]
    for k in active:
        for s, o in grid:
            lp.add_cut(k, s, o)
    best = (-math.inf, None, None)
    bound = math.inf
    for _ in range(_KELLEY_CAP):
        bound, p, delta, tvals = lp.solve()
        val = true_value(p, delta)
        if val > best[0]:
            best = (val, p, delta)
        scale = 1.0 + abs(bound)
        if bound - best[0] <= kelley_tol * scale:
            break
        P = np.cumsum(p[order])
        refined = 0
        for k in active:
            gap = tvals[k] - neg[k] * float(h.value(min(max(P[k], 0.0), 1.0)))
            if gap > 0.1 * kelley_tol * scale / max(len(active), 1):
                lp.add_cut(k, *_tangent(h, P[k]))
                refined += 1
        if refined == 0:
            break
    _, p, delta = best
    p_bar = distortion_weights(h, p, losses=losses)
    return float(bound), Scenario(np.asarray(p, float), float(delta), p_bar)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


def _initial_scenario(h, aset):
    if aset.kind == "pinned":
        p0, delta = aset.pinned
        p0 = np.asarray(p0, dtype=float)
        return Scenario(p0, float(delta), p0.copy())
    # generic start: the admissible point with the largest radius
    c = np.zeros(aset.poly.n_cols)
    c[aset.delta_col] = -1.0
    res = linprog(
        c=c, A_ub=aset.poly.A, b_ub=aset.poly.b,
        bounds=[(0, None)] * aset.poly.n_cols, method="highs",
    )
    if res.status != 0:
        raise RuntimeError("admissible set appears empty; check the radius budget")
    p = np.asarray(res.x[_p_col_indices(aset)])
    delta = float(res.x[aset.delta_col])
    return Scenario(p, delta, p.copy())


def solve_rdeu(
    h: DistortionFunction,
    loss: LossSpec,
    aset: AdmissibleSet,
    cost: CostSpec,
    dset: DecisionSet,
    outcomes=None,
    psi_tol: float = 1e-4,
    max_iter: int = 200,
    initial: Scenario | None = None,
    kelley_tol: float | None = None,
) -> RdeuResult:
    """Minimize worst-case distorted risk by scenario pooling.

    Each iteration solves the master lower bound over the pooled scenarios,
    prices the worst admissible scenario at the incumbent decision (a valid
    upper bound), and stops once upper - lower <= psi_tol.
    """
    if cost.q != 1:
        raise ValueError("the scenario-pool solver is a first-order-cost method")
    if not h.is_convex:
        raise ValueError("distortion must be convex")
    Y = _outcome_matrix(aset, outcomes)
    lip = loss.lipschitz()
    coeff = lip * h.hprime_inf
    if kelley_tol is None:
        kelley_tol = min(max(psi_tol * 1e-2, 1e-9), 1e-6)
    pool = [initial if initial is not None else _initial_scenario(h, aset)]
    records = []
    start = time.perf_counter()
    lower = -math.inf
    upper = math.inf
    alpha = np.zeros(dset.n)
    converged = False
    for j in range(1, max_iter + 1):
        lower, alpha = _master_lower(pool, loss, cost, dset, Y, coeff)
        scores = Y @ alpha
        losses = np.asarray(loss.value(scores), dtype=float)
        gain = coeff * norm_value(alpha, cost.y_dual_norm)
        upper, scen = price_worst_scenario(h, losses, aset, gain, kelley_tol)
        records.append(
            IterationRecord(j, lower, upper, upper - lower,
                            time.perf_counter() - start)
        )
        if upper - lower <= psi_tol:
            converged = True
            break
        pool.append(scen)
    return RdeuResult(
        value=float(lower),
        alpha=alpha,
        lower=float(lower),
        upper=float(upper),
        converged=converged,
        iterations=records,
        scenarios=pool,
    )
