"""Portfolio benchmark: synthetic generator, five decision models, oracle risk.

Covariates X in R^3 gate the conditional mean and covariance of six asset
outcomes; five strategies (robust-conditional, plain/robust unconditional,
plain/robust conditional-empirical) are fit per replication and scored by
Monte-Carlo conditional distortion risk under the true law.
"""

from __future__ import annotations

import itertools
import math
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .ambiguity import MassInterval, build_full, build_pinned, min_radius_full
from .cutting_plane import solve_rdeu
from .distortion import DistortionFunction, distortion_value
from .geometry import CostSpec, Dataset, Neighborhood, boundary_distances, partition
from .reformulations import DecisionSet, LossSpec

__all__ = [
    "GenerativeModel",
    "RunConfig",
    "ReplicationFailure",
    "MODEL_KINDS",
    "make_distortion",
    "sample_joint",
    "run_model",
    "oracle_conditional_risk",
    "oracle_grid_minimum",
    "replicate",
    "summarize",
]

MODEL_KINDS = ("UB-CDRO", "SAA", "UDRO", "CSAA", "CDRO")

_MU = np.array([86.8625, 71.6059, 75.3759, 97.6258, 52.7854, 84.8973])
_L = np.array([
    [136.687, 0.0, 0.0, 0.0, 0.0, 0.0],
    [8.79766, 142.279, 0.0, 0.0, 0.0, 0.0],
    [16.1504, 15.0637, 122.613, 0.0, 0.0, 0.0],
    [18.4944, 15.6961, 26.344, 139.148, 0.0, 0.0],
    [3.41394, 16.5922, 14.8795, 13.9914, 151.732, 0.0],
    [24.8156, 18.7292, 17.1574, 6.36536, 24.7703, 144.672],
])
_V1 = np.array([30.0, -40.0, 0.0, 15.0, -10.0, 5.0])
_V2 = np.array([-400.0, 60.0, 70.0, 80.0, 90.0, 100.0])
_V3 = np.array([0.0, 20.0, -25.0, 0.0, 15.0, -12.0])


class ReplicationFailure(RuntimeError):
    """A conditional model found no sample covariates inside the region."""


@dataclass(frozen=True)
class GenerativeModel:
    """Joint law of (X, Y): heteroscedastic Gaussian outcomes gated by x2."""

    mu: np.ndarray = field(default_factory=lambda: _MU.copy())
    L: np.ndarray = field(default_factory=lambda: _L.copy())
    v1: np.ndarray = field(default_factory=lambda: _V1.copy())
    v2: np.ndarray = field(default_factory=lambda: _V2.copy())
    v3: np.ndarray = field(default_factory=lambda: _V3.copy())
    x1_mean: float = 0.1
    x1_var: float = 10.0

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        if L.shape != (6, 6) or not np.allclose(L, np.tril(L)):
            raise ValueError("L must be 6x6 lower triangular")
        if (np.diag(L) <= 0).any():
            raise ValueError("L needs a positive diagonal")

    @staticmethod
    def gate(x2):
        return 1.0 / (1.0 + np.exp(-4.0 * (np.asarray(x2, dtype=float) - 0.5)))

    @staticmethod
    def scale_vector(x2):
        """Per-asset conditional volatility multipliers s(x2), shape (..., 6)."""
        g = GenerativeModel.gate(x2)
        g = np.asarray(g, dtype=float)
        out = np.ones(g.shape + (6,))
        out[..., 1] = 1.0 - 0.5 * g
        out[..., 2] = 1.0 + 6.0 * g
        out[..., 4] = 1.0 + 6.0 * g
        return out

    def conditional_mean(self, x):
        x = np.asarray(x, dtype=float)
        return (
            self.mu
            + np.multiply.outer(x[..., 0], self.v1)
            + np.multiply.outer(x[..., 1], self.v2)
            + np.multiply.outer(np.tanh(x[..., 2]), self.v3)
        )

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.standard_normal((n, 3))
        x[:, 0] = self.x1_mean + math.sqrt(self.x1_var) * x[:, 0]
        return x

    def sample_y_given_x(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = self.scale_vector(x[:, 1])
        xi = rng.standard_normal((x.shape[0], 6))
        return self.conditional_mean(x) + (s * xi) @ self.L.T


def sample_joint(model: GenerativeModel, n: int, rng: np.random.Generator) -> Dataset:
    if n < 1:
        raise ValueError("need n >= 1")
    x = model.sample_x(n, rng)
    y = model.sample_y_given_x(x, rng)
    return Dataset(covariates=x, outcomes=y)


def make_distortion(kind: str) -> DistortionFunction:
    if kind in ("square", "x2"):
        return DistortionFunction.square()
    if kind in ("exp", "exp_scaled"):
        return DistortionFunction.exp_scaled()
    if kind == "identity":
        return DistortionFunction.identity()
    raise ValueError(f"unknown distortion kind {kind!r}")


@dataclass(frozen=True)
class RunConfig:
    """Benchmark knobs; defaults are the desk-scale study."""

    ns: tuple = (50, 100, 200)
    reps: int = 10
    base_seed: int = 20260823
    h_kind: str = "square"
    mc_oracle: int = 20000
    x0: tuple = (0.1, 0.1, 0.0)
    gamma: float = 1.2
    ball_norm: str = "l1"
    x_base_norm: str = "l1"
    y_base_norm: str = "l2"
    # absolute gap tolerance; risks here are O(1e3), so this is ~1e-5 relative
    psi_tol: float = 1e-2
    models: tuple = MODEL_KINDS
    paper_scale: bool = False

    def __post_init__(self):
        if self.reps < 1 or any(n < 1 for n in self.ns):
            raise ValueError("need reps >= 1 and positive sample sizes")
        if self.paper_scale:
            object.__setattr__(self, "ns", (50, 100, 200, 400))
            object.__setattr__(self, "reps", 50)

    @property
    def neighborhood(self) -> Neighborhood:
        return Neighborhood(np.array(self.x0), self.gamma, self.ball_norm)

    @property
    def cost(self) -> CostSpec:
        return CostSpec(x_base_norm=self.x_base_norm, y_base_norm=self.y_base_norm, q=1.0)

    @property
    def loss(self) -> LossSpec:
        return LossSpec.affine(-1.0, 0.0)

    @property
    def decision_set(self) -> DecisionSet:
        return DecisionSet.unit_simplex(6)

    def delta_gap(self, n: int) -> float:
        return 0.1 * math.sqrt(math.log(100.0)) / n

    def ball_radius(self, n: int) -> float:
        return 100.0 / n

    def rep_seed(self, model_kind: str, n: int, rep: int) -> int:
        return (self.base_seed ^ zlib.crc32(f"{model_kind}|{n}|{rep}".encode())) & 0x7FFFFFFF


def run_model(kind: str, data: Dataset, config: RunConfig, h: DistortionFunction):
    """Fit one decision model; returns (alpha, solver diagnostics dict)."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
    n = data.n
    loss = config.loss
    cost = config.cost
    dset = DecisionSet.unit_simplex(data.n_y)
    nbhd = config.neighborhood

    if kind in ("SAA", "UDRO"):
        p_hat = np.full(n, 1.0 / n)
        delta = 0.0 if kind == "SAA" else config.ball_radius(n)
        aset = build_pinned(p_hat, delta)
        res = solve_rdeu(h, loss, aset, cost, dset, outcomes=data.outcomes,
                         psi_tol=config.psi_tol)
        return res.alpha, _diag(res)

    inside = np.array([nbhd.contains(x) for x in data.covariates])
    k_n = int(inside.sum())
    if k_n == 0:
        raise ReplicationFailure(
            f"{kind}: no sample covariates inside the conditioning region"
        )

    if kind in ("CSAA", "CDRO"):
        p_hat = inside.astype(float) / k_n
        delta = 0.0 if kind == "CSAA" else config.ball_radius(n)
        aset = build_pinned(p_hat, delta)
        res = solve_rdeu(h, loss, aset, cost, dset, outcomes=data.outcomes,
                         psi_tol=config.psi_tol)
        return res.alpha, _diag(res)

    # UB-CDRO: full-transport admissible set, region mass pinned to the
    # observed inside fraction, budget delta_min plus the shrinking gap
    part = boundary_distances(partition(data, nbhd), nbhd, cost)
    mass = MassInterval.point(k_n / n)
    delta_min, _, _ = min_radius_full(part, mass)
    aset = build_full(part, delta_min + config.delta_gap(n), mass)
    res = solve_rdeu(h, loss, aset, cost, dset, psi_tol=config.psi_tol)
    return res.alpha, _diag(res)


def _diag(res) -> dict:
    return {
        "iterations": len(res.iterations),
        "converged": res.converged,
        "lower": res.lower,
        "upper": res.upper,
    }


# ---------------------------------------------------------------------------
# out-of-sample oracle
# ---------------------------------------------------------------------------


def _conditional_draws(model, nbhd, count, rng, min_acceptance=1e-4):
    """Rejection-sample (X in region, Y | X); errors on hopeless acceptance."""
    xs = []
    accepted = 0
    drawn = 0
    cap = max(int(count / min_acceptance), 10000)
    while accepted < count:
        batch = max(2048, count)
        if drawn > cap:
            raise RuntimeError(
                f"rejection acceptance below {min_acceptance}: "
                f"{accepted}/{drawn} draws inside the region"
            )
        x = model.sample_x(batch, rng)
        drawn += batch
        dist = np.abs(x - np.asarray(nbhd.center)).sum(axis=1) \
            if nbhd.ball_norm == "l1" else np.array(
                [nbhd.distance_to_center(row) for row in x])
        keep = x[dist <= nbhd.radius]
        if keep.size:
            xs.append(keep)
            accepted += keep.shape[0]
    x = np.vstack(xs)[:count]
    y = model.sample_y_given_x(x, rng)
    return x, y


def oracle_conditional_risk(
    alpha,
    h: DistortionFunction,
    model: GenerativeModel,
    config: RunConfig,
    mc_samples: int | None = None,
    seed: int | None = None,
    batches: int = 10,
):
    """Monte-Carlo conditional distortion risk of the portfolio loss -Y.alpha.

    Returns (estimate, standard_error); the error is the batch-mean spread of
    the distortion statistic over ``batches`` equal splits.
    """
    mc = config.mc_oracle if mc_samples is None else int(mc_samples)
    if mc < 10**4:
        raise ValueError("oracle evaluation needs at least 1e4 draws")
    rng = np.random.default_rng(
        (config.base_seed ^ zlib.crc32(b"oracle")) & 0x7FFFFFFF if seed is None else seed
    )
    _, y = _conditional_draws(model, config.neighborhood, mc, rng)
    losses = -(y @ np.asarray(alpha, dtype=float))
    p = np.full(mc, 1.0 / mc)
    est = distortion_value(h, losses, p)
    size = mc // batches
    vals = [
        distortion_value(
            h, losses[b * size:(b + 1) * size], np.full(size, 1.0 / size)
        )
        for b in range(batches)
    ]
    se = float(np.std(vals, ddof=1) / math.sqrt(batches))
    return float(est), se


def _simplex_grid(dim: int, steps: int) -> np.ndarray:
    """All compositions of ``steps`` into ``dim`` parts, scaled to the simplex."""
    rows = []
    for cut in itertools.combinations(range(steps + dim - 1), dim - 1):
        prev = -1
        parts = []
        for c in cut:
            parts.append(c - prev - 1)
            prev = c
        parts.append(steps + dim - 2 - prev)
        rows.append(parts)
    return np.asarray(rows, dtype=float) / steps


def oracle_grid_minimum(
    h: DistortionFunction,
    model: GenerativeModel,
    config: RunConfig,
    steps: int = 8,
    mc_samples: int | None = None,
    seed: int | None = None,
):
    """Best conditional risk over a simplex grid of portfolios (common draws).

    Returns (best value, best alpha, grid size).  With uniform Monte-Carlo
    weights the distortion statistic is a fixed dot product with the sorted
    losses, so the whole grid is scored by one sort per column.
    """
    mc = config.mc_oracle if mc_samples is None else int(mc_samples)
    rng = np.random.default_rng(
        (config.base_seed ^ zlib.crc32(b"oracle-grid")) & 0x7FFFFFFF
        if seed is None else seed
    )
    _, y = _conditional_draws(model, config.neighborhood, mc, rng)
    grid = _simplex_grid(6, steps)
    losses = -(y @ grid.T)  # mc x n_grid
    cum = np.arange(1, mc + 1) / mc
    w = np.empty(mc)
    hv = h.value(cum)
    w[0] = hv[0]
    w[1:] = hv[1:] - hv[:-1]
    scores = w @ np.sort(losses, axis=0)
    j = int(np.argmin(scores))
    return float(scores[j]), grid[j], grid.shape[0]


# ---------------------------------------------------------------------------
# replication harness
# ---------------------------------------------------------------------------


def _one_replication(args):
    config, model_kind, n, rep = args
    gm = GenerativeModel()
    h = make_distortion(config.h_kind)
    rng = np.random.default_rng(config.rep_seed(model_kind, n, rep))
    data = sample_joint(gm, n, rng)
    start = time.perf_counter()
    try:
        alpha, diag = run_model(model_kind, data, config, h)
    except ReplicationFailure as exc:
        return {
            "model": model_kind, "N": n, "rep": rep, "risk": float("nan"),
            "seconds": time.perf_counter() - start, "failed": True,
            "message": str(exc), "alpha": None,
        }
    seconds = time.perf_counter() - start
    risk, se = oracle_conditional_risk(alpha, h, gm, config)
    return {
        "model": model_kind, "N": n, "rep": rep, "risk": risk,
        "seconds": seconds, "failed": False, "message": "",
        "alpha": alpha, "se": se, **{f"cp_{k}": v for k, v in diag.items()},
    }


def replicate(config: RunConfig, jobs: int = 1):
    """Run the whole grid of (model, N, replication); returns result rows."""
    tasks = [
        (config, mk, n, rep)
        for n in config.ns
        for mk in config.models
        for rep in range(config.reps)
    ]
    if jobs > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_one_replication, tasks))
    else:
        rows = [_one_replication(t) for t in tasks]
    rows.sort(key=lambda r: (r["N"], MODEL_KINDS.index(r["model"]), r["rep"]))
    return rows


def summarize(rows):
    """Per (model, N): mean, 15th/85th percentile of risk, failure count."""
    out = []
    keys = sorted({(r["model"], r["N"]) for r in rows},
                  key=lambda t: (t[1], MODEL_KINDS.index(t[0])))
    for model_kind, n in keys:
        vals = [r["risk"] for r in rows
                if r["model"] == model_kind and r["N"] == n and not r["failed"]]
        fails = sum(
            1 for r in rows
            if r["model"] == model_kind and r["N"] == n and r["failed"]
        )
        if vals:
            arr = np.asarray(vals)
            out.append({
                "model": model_kind, "N": n, "mean": float(arr.mean()),
                "p15": float(np.percentile(arr, 15)),
                "p85": float(np.percentile(arr, 85)),
                "failures": fails,
            })
        else:
            out.append({
                "model": model_kind, "N": n, "mean": float("nan"),
                "p15": float("nan"), "p85": float("nan"), "failures": fails,
            })
    return out
