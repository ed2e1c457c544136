"""Union-ball admissible sets over (reference weights p, transport radius delta).

Builds the explicit polyhedra describing which (p, delta) pairs the
distributionally robust model may select, computes the smallest feasible
radius, evaluates support functions, and produces strictly feasible points
for algorithm initialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .geometry import Partition

__all__ = [
    "MassInterval",
    "Polyhedron",
    "AdmissibleSet",
    "InfeasibleRadiusError",
    "min_radius_full",
    "min_radius_partial",
    "build_full",
    "build_partial",
    "build_pinned",
    "build_envelope",
    "support",
    "support_primal",
    "feasible_point",
]


class InfeasibleRadiusError(ValueError):
    """Raised when the requested budget delta0 cannot make the model feasible."""

    def __init__(self, delta0: float, delta_min: float, strict: bool):
        self.delta0 = delta0
        self.delta_min = delta_min
        self.strict = strict
        cmp = ">" if strict else ">="
        super().__init__(
            f"budget delta0={delta0:.6g} infeasible: need delta0 {cmp} delta_min={delta_min:.6g}"
        )


@dataclass(frozen=True)
class MassInterval:
    """Admissible interval [lo, hi] for the probability mass of the region."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo <= self.hi <= 1):
            raise ValueError(f"need 0 < lo <= hi <= 1, got [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, w: float) -> "MassInterval":
        return cls(w, w)


@dataclass(frozen=True)
class Polyhedron:
    """System {u >= 0 : A u <= b} with named column slices."""

    A: np.ndarray
    b: np.ndarray
    var_layout: dict  # name -> (start, stop) column slice

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("A and b row counts differ")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("non-finite polyhedron data")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    def cols(self, name: str) -> slice:
        start, stop = self.var_layout[name]
        return slice(start, stop)

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.n_cols:
            raise ValueError("dimension mismatch")
        return bool((u >= -tol).all() and (self.A @ u <= self.b + tol).all())

    def to_json(self) -> str:
        return json.dumps(
            {
                "A": self.A.tolist(),
                "b": self.b.tolist(),
                "var_layout": {k: list(v) for k, v in self.var_layout.items()},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "Polyhedron":
        obj = json.loads(text)
        return cls(
            np.array(obj["A"], dtype=float),
            np.array(obj["b"], dtype=float),
            {k: tuple(v) for k, v in obj["var_layout"].items()},
        )


@dataclass(frozen=True)
class AdmissibleSet:
    """Admissible (p, delta) pairs as a polyhedron plus construction data."""

    kind: str  # "full" | "partial" | "envelope" | "pinned"
    poly: Polyhedron
    n: int
    delta0: float
    mass: MassInterval | None
    partition: Partition | None
    delta_min: float
    strict: bool
    minimizer_v: np.ndarray | None
    pinned: tuple | None = None  # (p0, delta) for singleton sets

    @property
    def p_cols(self) -> slice:
        return self.poly.cols("p")

    @property
    def delta_col(self) -> int:
        return self.poly.cols("delta").start

    def pad_v(self, v: np.ndarray) -> np.ndarray:
        """Extend a vector over (p, delta) with zeros on auxiliary columns."""
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.n + 1:
            raise ValueError(f"expected length {self.n + 1} (p plus delta), got {v.size}")
        full = np.zeros(self.poly.n_cols)
        full[self.p_cols] = v[: self.n]
        full[self.delta_col] = v[self.n]
        return full

    def contains_pd(self, p: np.ndarray, delta: float, tol: float = 1e-9) -> bool:
        """Membership of a (p, delta) point, maximizing over auxiliary columns."""
        p = np.asarray(p, dtype=float).ravel()
        if self.kind in ("partial", "pinned"):
            return self.poly.contains(np.concatenate([p, [delta]]), tol)
        # Auxiliary columns (epsilon, or divergence slacks) are existential:
        # check via a feasibility LP with p and delta pinned.
        n_aux = self.poly.n_cols - (self.n + 1)
        A = self.poly.A
        b = self.poly.b
        fixed = self.pad_v(np.concatenate([p, [delta]]))
        aux_cols = [
            c
            for c in range(self.poly.n_cols)
            if not (self.p_cols.start <= c < self.p_cols.stop) and c != self.delta_col
        ]
        rhs = b - A @ fixed
        if n_aux == 0:
            return bool((rhs >= -tol).all() and (fixed >= -tol).all())
        res = linprog(
            c=np.zeros(n_aux),
            A_ub=A[:, aux_cols],
            b_ub=rhs + tol,
            bounds=[(0, None)] * n_aux,
            method="highs",
        )
        return res.status == 0


def _greedy_interval_knapsack(rates: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Minimize sum(rates * v) over v in [0,1]^N with lo <= sum(v) <= hi.

    Units are added in ascending-rate order: negative-rate units whenever room
    remains below ``hi``, nonnegative-rate units only while forced below ``lo``.
    """
    order = np.argsort(rates, kind="stable")
    v = np.zeros(rates.size)
    total = 0.0
    for i in order:
        if rates[i] < 0:
            take = min(1.0, hi - total)
        else:
            take = min(1.0, max(0.0, lo - total))
        if take > 0:
            v[i] = take
            total += take
    return v


def min_radius_full(part: Partition, mass: MassInterval):
    """Smallest feasible budget for the full-transport model.

    Returns (delta_min, strict, v) where v attains the minimum of
    (1/N) (sum_{i<=m} v_i d_i + sum_{i>m} (1 - v_i) d_i) over v in [0,1]^N
    with mean(v) in [lo, hi]; feasibility requires delta0 > delta_min when
    strict (region mass cannot reach the sample's inside fraction), else >=.
    """
    d = part.require_d()
    n, m = part.n, part.m
    # Cost of raising v_i from 0: d_i for outside samples, -d_i for inside.
    rates = np.concatenate([d[:m], -d[m:]]) / n
    v = _greedy_interval_knapsack(rates, n * mass.lo, n * mass.hi)
    delta_min = float(np.sum(d[m:]) / n + rates @ v)
    delta_min = max(delta_min, 0.0)
    strict = (n - m) / n > mass.hi
    return delta_min, strict, v


def min_radius_partial(part: Partition, mass: MassInterval):
    """Smallest feasible budget for the inside-only transport model.

    Returns (delta_min, v) minimizing (1/(N eps)) sum_{i<=m} v_i d_i over
    v in [0,1]^N with sum(v) = N eps, where eps = mass.lo.
    """
    d = part.require_d()
    n, m = part.n, part.m
    eps = mass.lo
    target = n * eps
    v = np.zeros(n)
    # Inside samples contribute zero cost; fill them first (evenly), then the
    # cheapest outside samples.
    free = min(float(n - m), target)
    if n > m:
        v[m:] = free / (n - m)
    remaining = target - free
    if remaining > 1e-15:
        order = np.argsort(d[:m], kind="stable")
        for i in order:
            take = min(1.0, remaining)
            v[i] = take
            remaining -= take
            if remaining <= 1e-15:
                break
    delta_min = float(d[:m] @ v[:m] / target)
    return delta_min, v


def _check_budget(delta0, delta_min, strict, tol=1e-12):
    if strict:
        if not delta0 > delta_min + tol:
            raise InfeasibleRadiusError(delta0, delta_min, True)
    elif delta0 < delta_min - tol:
        raise InfeasibleRadiusError(delta0, delta_min, False)


def build_full(part: Partition, delta0: float, mass: MassInterval) -> AdmissibleSet:
    """Admissible set of the full-transport model as an explicit polyhedron.

    Columns (p_1..p_N, delta, eps); rows: sum(p) = 1 (two inequalities),
    1/hi <= eps <= 1/lo, p_i <= eps/N, and the defining equality
    delta = eps (delta0 - (1/N) sum_{i>m} d_i) - sum_{i<=m} p_i d_i
    + sum_{i>m} p_i d_i written as two opposite inequality rows.
    """
    d = part.require_d()
    n, m = part.n, part.m
    delta_min, strict, v = min_radius_full(part, mass)
    _check_budget(delta0, delta_min, strict)

    a = np.concatenate(
        [-d[:m], d[m:], [-1.0, delta0 - float(np.sum(d[m:])) / n]]
    )
    A = np.zeros((n + 6, n + 2))
    b = np.zeros(n + 6)
    A[0, :n] = 1.0
    b[0] = 1.0
    A[1, :n] = -1.0
    b[1] = -1.0
    A[2, n + 1] = 1.0
    b[2] = 1.0 / mass.lo
    A[3, n + 1] = -1.0
    b[3] = -1.0 / mass.hi
    for i in range(n):
        A[4 + i, i] = 1.0
        A[4 + i, n + 1] = -1.0 / n
    A[n + 4] = -a
    A[n + 5] = a
    poly = Polyhedron(A, b, {"p": (0, n), "delta": (n, n + 1), "eps": (n + 1, n + 2)})
    return AdmissibleSet(
        kind="full",
        poly=poly,
        n=n,
        delta0=delta0,
        mass=mass,
        partition=part,
        delta_min=delta_min,
        strict=strict,
        minimizer_v=v,
    )


def build_partial(part: Partition, delta0: float, mass: MassInterval) -> AdmissibleSet:
    """Admissible set of the inside-only transport model.

    Columns (p_1..p_N, delta); rows: sum(p) = 1 (two inequalities),
    p_i <= 1/(N eps), and delta = delta0 - sum_{i<=m} p_i d_i as two rows.
    """
    d = part.require_d()
    n, m = part.n, part.m
    eps = mass.lo
    delta_min, v = min_radius_partial(part, mass)
    _check_budget(delta0, delta_min, False)

    a = np.concatenate([d[:m], np.zeros(n - m), [1.0]])
    A = np.zeros((n + 4, n + 1))
    b = np.zeros(n + 4)
    A[0, :n] = 1.0
    b[0] = 1.0
    A[1, :n] = -1.0
    b[1] = -1.0
    for i in range(n):
        A[2 + i, i] = 1.0
        b[2 + i] = 1.0 / (n * eps)
    A[n + 2] = -a
    b[n + 2] = -delta0
    A[n + 3] = a
    b[n + 3] = delta0
    poly = Polyhedron(A, b, {"p": (0, n), "delta": (n, n + 1)})
    return AdmissibleSet(
        kind="partial",
        poly=poly,
        n=n,
        delta0=delta0,
        mass=mass,
        partition=part,
        delta_min=delta_min,
        strict=False,
        minimizer_v=v,
    )


def build_pinned(p0, delta: float) -> AdmissibleSet:
    """Singleton admissible set {(p0, delta)} as a degenerate polyhedron.

    Used for fixed-weight baselines (empirical risk, a single ball, or a
    reweighted sample with no transport budget).
    """
    p0 = np.asarray(p0, dtype=float).ravel()
    if abs(p0.sum() - 1) > 1e-9 or (p0 < -1e-12).any():
        raise ValueError("p0 must be a probability vector")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    n = p0.size
    A = np.zeros((2 * n + 2, n + 1))
    b = np.zeros(2 * n + 2)
    A[:n, :n] = np.eye(n)
    b[:n] = p0
    A[n:2 * n, :n] = -np.eye(n)
    b[n:2 * n] = -p0
    A[2 * n, n] = 1.0
    b[2 * n] = delta
    A[2 * n + 1, n] = -1.0
    b[2 * n + 1] = -delta
    poly = Polyhedron(A, b, {"p": (0, n), "delta": (n, n + 1)})
    return AdmissibleSet(
        kind="pinned",
        poly=poly,
        n=n,
        delta0=delta,
        mass=None,
        partition=None,
        delta_min=delta,
        strict=False,
        minimizer_v=None,
        pinned=(p0, float(delta)),
    )


def build_envelope(
    p_hat: np.ndarray,
    gamma_div: float,
    delta_hat: float,
    hbar_breaks,
    divergence: str = "tv",
) -> AdmissibleSet:
    """Admissible set {(p, delta): d(p, p_hat) <= gamma_div, 0 <= delta <= hbar(d)}.

    ``hbar_breaks`` is a list of (t, value) breakpoints of a concave,
    decreasing piecewise-linear radius map with hbar(0) = delta_hat and
    hbar(gamma_div) = 0.  ``divergence`` is "tv" (half L1) or "linf".
    """
    p_hat = np.asarray(p_hat, dtype=float).ravel()
    n = p_hat.size
    if abs(p_hat.sum() - 1) > 1e-9 or (p_hat < -1e-12).any():
        raise ValueError("p_hat must be a probability vector")
    if divergence not in ("tv", "linf"):
        raise ValueError("divergence must be 'tv' or 'linf'")
    pts = sorted((float(t), float(val)) for t, val in hbar_breaks)
    if abs(pts[0][0]) > 1e-12 or abs(pts[0][1] - delta_hat) > 1e-9:
        raise ValueError("radius map must start at (0, delta_hat)")
    if abs(pts[-1][0] - gamma_div) > 1e-9 or abs(pts[-1][1]) > 1e-9:
        raise ValueError("radius map must end at (gamma_div, 0)")
    slopes = []
    for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
        if t1 <= t0:
            raise ValueError("breakpoint abscissae must increase")
        slopes.append((v1 - v0) / (t1 - t0))
    if any(s > 1e-12 for s in slopes):
        raise ValueError("radius map must be decreasing")
    if any(s1 > s0 + 1e-12 for s0, s1 in zip(slopes, slopes[1:])):
        raise ValueError("radius map must be concave")

    # Columns: p (n), delta, t (divergence epigraph), and for TV the per-entry
    # absolute-deviation slacks e_i.
    aux = n if divergence == "tv" else 0
    ncols = n + 2 + aux
    rows = []
    rhs = []

    def row(coeffs: dict, r: float):
        line = np.zeros(ncols)
        for c, val in coeffs.items():
            line[c] = val
        rows.append(line)
        rhs.append(r)

    c_delta, c_t = n, n + 1
    row({c: 1.0 for c in range(n)}, 1.0)
    row({c: -1.0 for c in range(n)}, -1.0)
    row({c_t: 1.0}, gamma_div)
    if divergence == "tv":
        for i in range(n):
            e_i = n + 2 + i
            row({i: 1.0, e_i: -1.0}, p_hat[i])   # p_i - e_i <= p_hat_i
            row({i: -1.0, e_i: -1.0}, -p_hat[i])  # -p_i - e_i <= -p_hat_i
        row({**{n + 2 + i: 0.5 for i in range(n)}, c_t: -1.0}, 0.0)  # t >= sum(e)/2
    else:
        for i in range(n):
            row({i: 1.0, c_t: -1.0}, p_hat[i])
            row({i: -1.0, c_t: -1.0}, -p_hat[i])
    for (t0, v0), s in zip(pts, slopes):
        # delta <= v0 + s (t - t0)
        row({c_delta: 1.0, c_t: -s}, v0 - s * t0)

    layout = {"p": (0, n), "delta": (n, n + 1), "t": (n + 1, n + 2)}
    if aux:
        layout["e"] = (n + 2, ncols)
    poly = Polyhedron(np.vstack(rows), np.array(rhs), layout)
    return AdmissibleSet(
        kind="envelope",
        poly=poly,
        n=n,
        delta0=delta_hat,
        mass=None,
        partition=None,
        delta_min=0.0,
        strict=False,
        minimizer_v=None,
    )


def _solve_lp(c, A_ub, b_ub, bounds):
    res = linprog(c=c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return res


def support(aset: AdmissibleSet, v: np.ndarray) -> float:
    """Support value sup {v . (p, delta)} over the admissible set, via the dual LP.

    Solves inf b^T z subject to A^T z >= v_padded, z >= 0, whose optimum equals
    the supremum because the set is a nonempty bounded polyhedron.
    """
    padded = aset.pad_v(v)
    A, b = aset.poly.A, aset.poly.b
    res = _solve_lp(
        c=b,
        A_ub=-A.T,
        b_ub=-padded,
        bounds=[(0, None)] * A.shape[0],
    )
    if res.status == 2:
        raise ValueError(
            "support dual infeasible: admissible set is empty or unbounded"
        )
    if res.status != 0:
        raise RuntimeError(f"support LP failed: {res.message}")
    return float(res.fun)


def support_primal(aset: AdmissibleSet, v: np.ndarray) -> float:
    """Support value by maximizing directly over the polyhedron (cross-check)."""
    padded = aset.pad_v(v)
    res = _solve_lp(
        c=-padded,
        A_ub=aset.poly.A,
        b_ub=aset.poly.b,
        bounds=[(0, None)] * aset.poly.n_cols,
    )
    if res.status == 2:
        raise ValueError("admissible set is empty")
    if res.status != 0:
        raise RuntimeError(f"support LP failed: {res.message}")
    return float(-res.fun)


def feasible_point(aset: AdmissibleSet, delta_gap: float):
    """Strictly feasible (p_f, delta_f) built from the minimal-radius minimizer.

    Requires the set's budget to equal delta_min + delta_gap: the construction
    p_f = v / sum(v), delta_f = N delta_gap / sum(v) (full) or
    p_f = v / (N eps), delta_f = delta_gap (partial) then lands inside the set.
    """
    if aset.kind not in ("full", "partial"):
        raise ValueError("feasible_point supports full/partial sets only")
    if delta_gap <= 0:
        raise ValueError("delta_gap must be positive")
    if abs(aset.delta0 - (aset.delta_min + delta_gap)) > 1e-9:
        raise ValueError(
            f"set was built with delta0={aset.delta0:.6g} but delta_min + delta_gap "
            f"= {aset.delta_min + delta_gap:.6g}; rebuild with a matching budget"
        )
    v = aset.minimizer_v
    total = float(v.sum())
    if total <= 0:
        raise ValueError("degenerate minimizer (sum v = 0); cannot build a feasible point")
    if aset.kind == "full":
        p_f = v / total
        delta_f = aset.n * delta_gap / total
    else:
        eps = aset.mass.lo
        p_f = v / (aset.n * eps)
        delta_f = delta_gap
    if not aset.contains_pd(p_f, delta_f, tol=1e-10):
        raise AssertionError("constructed point violates the admissible polyhedron")
    return p_f, float(delta_f)
