"""Distortion risk machinery: distorted expectations, reweighting envelopes.

A distortion function h is nondecreasing with h(0) = 0, h(1) = 1.  The
distorted expectation of discrete losses reweights order statistics through
h; the associated risk envelope is the polytope of reweightings dominating h
on every cumulative subset, whose maximizer the sorted-weight formula gives
in closed form for convex h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DistortionFunction",
    "RiskEnvelope",
    "distortion_value",
    "distortion_weights",
    "envelope_membership",
    "cvar_mix_distortion",
    "proper_subsets",
    "subset_sums",
]


class DistortionFunction:
    """Convex distortion h on [0, 1], piecewise linear or smooth.

    PWL form stores breakpoints (xs, hs); smooth form stores value and
    left-derivative callables plus the norm constants tests and compilers
    need (sup and L^{q*} norms of the left derivative).
    """

    def __init__(self, kind: str, xs=None, hs=None, fn=None, dfn=None,
                 hprime_inf: float | None = None, hprime_qstar=None,
                 label: str = ""):
        self.kind = kind
        self.label = label or kind
        if kind == "pwl":
            xs = np.asarray(xs, dtype=float)
            hs = np.asarray(hs, dtype=float)
            if xs.ndim != 1 or xs.shape != hs.shape or xs.size < 2:
                raise ValueError("need matching 1-D breakpoint arrays, length >= 2")
            if abs(xs[0]) > 1e-12 or abs(xs[-1] - 1) > 1e-12:
                raise ValueError("breakpoints must span [0, 1]")
            if abs(hs[0]) > 1e-12 or abs(hs[-1] - 1) > 1e-9:
                raise ValueError("distortion must satisfy h(0)=0, h(1)=1")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("breakpoint abscissae must strictly increase")
            if np.any(np.diff(hs) < -1e-12):
                raise ValueError("distortion must be nondecreasing")
            self.xs, self.hs = xs, hs
            self.slopes = np.diff(hs) / np.diff(xs)
            self.fn = None
            self.dfn = None
        elif kind == "smooth":
            if fn is None or dfn is None:
                raise ValueError("smooth distortion needs value and derivative callables")
            if abs(fn(0.0)) > 1e-12 or abs(fn(1.0) - 1) > 1e-12:
                raise ValueError("distortion must satisfy h(0)=0, h(1)=1")
            self.fn, self.dfn = fn, dfn
            self.xs = self.hs = self.slopes = None
            if hprime_inf is None:
                raise ValueError("smooth distortion needs its sup-derivative constant")
        else:
            raise ValueError("kind must be 'pwl' or 'smooth'")
        self._hprime_inf = hprime_inf
        self._hprime_qstar = hprime_qstar

    # -- evaluation -------------------------------------------------------
    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "smooth":
            out = np.vectorize(self.fn, otypes=[float])(np.clip(x, 0.0, 1.0))
            return float(out) if out.ndim == 0 else out
        out = np.interp(np.clip(x, 0.0, 1.0), self.xs, self.hs)
        return float(out) if np.ndim(x) == 0 else out

    def __call__(self, x):
        return self.value(x)

    def left_derivative(self, x: float) -> float:
        x = float(min(max(x, 0.0), 1.0))
        if self.kind == "smooth":
            return float(self.dfn(x))
        if x <= self.xs[0]:
            return float(self.slopes[0])
        k = int(np.searchsorted(self.xs, x, side="left"))  # xs[k-1] < x <= xs[k]
        return float(self.slopes[k - 1])

    @property
    def is_convex(self) -> bool:
        if self.kind == "pwl":
            return bool(np.all(np.diff(self.slopes) >= -1e-10))
        return True  # smooth built-ins are convex by construction

    @property
    def hprime_inf(self) -> float:
        """Sup of the left derivative on (0, 1] (= h'(1-) for convex h)."""
        if self._hprime_inf is not None:
            return self._hprime_inf
        return float(np.max(self.slopes))

    def hprime_qstar(self, q_star: float) -> float:
        """L^{q*} norm of the left derivative over [0, 1]."""
        if math.isinf(q_star):
            return self.hprime_inf
        if self.kind == "pwl":
            return float(
                np.sum(self.slopes ** q_star * np.diff(self.xs)) ** (1.0 / q_star)
            )
        if self._hprime_qstar is not None:
            return float(self._hprime_qstar(q_star))
        raise ValueError("smooth distortion lacks an L^{q*} derivative-norm rule")

    # -- conjugate / approximation ---------------------------------------
    def conjugate_breakpoints(self):
        """Breakpoints (x_k, h(x_k)) realizing h*(s) = max_k (s x_k - h(x_k)).

        Exact for PWL convex h (the conjugate of a PWL function is attained at
        breakpoints); smooth h must be chord-approximated first.
        """
        if self.kind != "pwl":
            raise ValueError("conjugate breakpoints require a PWL distortion")
        return self.xs.copy(), self.hs.copy()

    def chord_pwl(self, n_segments: int = 64) -> "DistortionFunction":
        """Chord (secant) PWL over-approximation on a uniform grid.

        Exact at grid points; for convex h the chords lie above h, with error
        at most sup|h''| / (8 n^2).  PWL inputs are returned unchanged.
        """
        if self.kind == "pwl":
            return self
        xs = np.linspace(0.0, 1.0, n_segments + 1)
        hs = np.array([self.fn(x) for x in xs])
        hs[0], hs[-1] = 0.0, 1.0
        return DistortionFunction("pwl", xs=xs, hs=hs,
                                  label=f"{self.label}~chord{n_segments}")

    # -- constructors -----------------------------------------------------
    @staticmethod
    def identity() -> "DistortionFunction":
        return DistortionFunction("pwl", xs=[0.0, 1.0], hs=[0.0, 1.0], label="identity")

    @staticmethod
    def pwl(xs, hs, label: str = "pwl") -> "DistortionFunction":
        return DistortionFunction("pwl", xs=xs, hs=hs, label=label)

    @staticmethod
    def square() -> "DistortionFunction":
        return DistortionFunction(
            "smooth",
            fn=lambda x: x * x,
            dfn=lambda x: 2.0 * x,
            hprime_inf=2.0,
            hprime_qstar=lambda qs: (2.0 ** qs / (qs + 1.0)) ** (1.0 / qs),
            label="square",
        )

    @staticmethod
    def exp_scaled() -> "DistortionFunction":
        den = math.e - 1.0
        return DistortionFunction(
            "smooth",
            fn=lambda x: (math.exp(x) - 1.0) / den,
            dfn=lambda x: math.exp(x) / den,
            hprime_inf=math.e / den,
            hprime_qstar=lambda qs: ((math.exp(qs) - 1.0) / (qs * den ** qs)) ** (1.0 / qs),
            label="exp_scaled",
        )


def cvar_mix_distortion(theta: float, kappa: float) -> DistortionFunction:
    """Two-piece distortion whose risk is the normalized mean + tail-average mix.

    Slopes theta/(1+theta) up to 1-kappa and (1+theta kappa)/(kappa (1+theta))
    beyond; kappa = 1 collapses to a single piece.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if not (0 < kappa <= 1):
        raise ValueError("kappa must lie in (0, 1]")
    if kappa == 1.0:
        s2 = (1.0 + theta * kappa) / (kappa * (1.0 + theta))
        return DistortionFunction("pwl", xs=[0.0, 1.0], hs=[0.0, s2],
                                  label=f"cvar_mix({theta},{kappa})")
    brk = 1.0 - kappa
    s1 = theta / (1.0 + theta)
    hs_mid = s1 * brk
    return DistortionFunction(
        "pwl",
        xs=[0.0, brk, 1.0],
        hs=[0.0, hs_mid, 1.0],
        label=f"cvar_mix({theta},{kappa})",
    )


def _sort_order(losses: np.ndarray) -> np.ndarray:
    """Ascending stable order of losses (ties broken by original index)."""
    return np.argsort(losses, kind="stable")


def distortion_value(h: DistortionFunction, losses, p) -> float:
    """Distorted expectation of discrete losses under weights p.

    Sorts losses ascending and evaluates
    sum_{k<N} h(cum_k) (r_(k) - r_(k+1)) + r_(N).
    """
    r = np.asarray(losses, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    if r.size != p.size:
        raise ValueError("losses and weights must have equal length")
    order = _sort_order(r)
    rs = r[order]
    cum = np.cumsum(p[order])
    if rs.size == 1:
        return float(rs[0])
    hvals = h.value(cum[:-1])
    return float(np.sum(hvals * (rs[:-1] - rs[1:])) + rs[-1])


def distortion_weights(h: DistortionFunction, p, order=None, losses=None) -> np.ndarray:
    """Extremal reweighting p_bar for the given loss ordering (original order).

    In sorted positions, p_bar_(i) = h(cum_i) - h(cum_{i-1}); the result is
    scattered back so p_bar[j] applies to sample j.  Provide either the
    ascending ``order`` or raw ``losses`` to sort here.
    """
    p = np.asarray(p, dtype=float).ravel()
    if order is None:
        if losses is None:
            raise ValueError("need an ordering or losses to derive one")
        order = _sort_order(np.asarray(losses, dtype=float).ravel())
    order = np.asarray(order, dtype=int)
    cum = np.cumsum(p[order])
    hcum = h.value(cum)
    sorted_weights = np.diff(np.concatenate([[0.0], hcum]))
    out = np.zeros_like(p)
    out[order] = sorted_weights
    return out


def proper_subsets(n: int):
    """Bitmasks of all proper nonempty subsets of {0..n-1} (1 .. 2^n - 2)."""
    if n > 20:
        raise ValueError("subset enumeration capped at n = 20")
    return range(1, (1 << n) - 1)


def subset_sums(values: np.ndarray) -> np.ndarray:
    """sums[mask] = sum of values over the bits of mask, for all 2^n masks."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n > 20:
        raise ValueError("subset enumeration capped at n = 20")
    out = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        out[mask] = out[mask ^ low] + values[low.bit_length() - 1]
    return out


def envelope_membership(p_bar, p, h: DistortionFunction, tol: float = 1e-9) -> bool:
    """Exhaustively check h(sum_J p) <= sum_J p_bar over all proper subsets J."""
    p_bar = np.asarray(p_bar, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    if p_bar.size != p.size:
        raise ValueError("length mismatch")
    if abs(p_bar.sum() - 1.0) > 1e-7 or (p_bar < -tol).any():
        return False
    sums_p = subset_sums(p)
    sums_pb = subset_sums(p_bar)
    for mask in proper_subsets(p.size):
        if h.value(sums_p[mask]) > sums_pb[mask] + tol:
            return False
    return True


@dataclass(frozen=True)
class RiskEnvelope:
    """Reweighting polytope of a distortion around base weights p."""

    p: np.ndarray
    h: DistortionFunction

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        if abs(p.sum() - 1) > 1e-9 or (p < -1e-12).any():
            raise ValueError("base weights must form a probability vector")
        object.__setattr__(self, "p", p)

    def contains(self, p_bar, tol: float = 1e-9) -> bool:
        return envelope_membership(p_bar, self.p, self.h, tol)

    def max_reweighted(self, losses) -> tuple[float, np.ndarray]:
        """max over the envelope of sum(p_bar * losses), by the sorted formula."""
        losses = np.asarray(losses, dtype=float).ravel()
        val = distortion_value(self.h, losses, self.p)
        w = distortion_weights(self.h, self.p, losses=losses)
        return val, w
