"""Sample geometry: covariate neighborhoods, partitioning, and boundary transport distances.

Splits a paired (covariate, outcome) sample into the points lying outside /
inside a norm-ball conditioning region and computes, for every sample, the
transport cost of moving its covariate to the region boundary under a
separable power-of-norm ground cost.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Dataset",
    "Neighborhood",
    "CostSpec",
    "Partition",
    "partition",
    "boundary_distances",
    "override_distances",
    "norm_value",
    "dual_norm_name",
    "project_l1_ball",
]

NORMS = ("l1", "l2", "linf")

_DUAL = {"l1": "linf", "l2": "l2", "linf": "l1"}


def norm_value(x: np.ndarray, norm: str) -> float:
    """Value of the named norm of a vector."""
    if norm == "l1":
        return float(np.sum(np.abs(x)))
    if norm == "l2":
        return float(np.sqrt(np.sum(x * x)))
    if norm == "linf":
        return float(np.max(np.abs(x))) if x.size else 0.0
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")


def dual_norm_name(norm: str) -> str:
    """Name of the dual norm (l1 <-> linf, l2 <-> l2)."""
    try:
        return _DUAL[norm]
    except KeyError:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}") from None


@dataclass(frozen=True)
class Dataset:
    """Paired samples: covariates (N, n_x) and outcomes (N, n_y)."""

    covariates: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        Y = np.atleast_2d(np.asarray(self.outcomes, dtype=float))
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"covariates have {X.shape[0]} rows but outcomes have {Y.shape[0]}"
            )
        if X.shape[0] < 1:
            raise ValueError("need at least one sample")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ValueError("non-finite entries in dataset")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "outcomes", Y)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_x(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_y(self) -> int:
        return self.outcomes.shape[1]

    @classmethod
    def from_csv(cls, path_or_buf) -> "Dataset":
        """Read a dataset from CSV with header ``x1..xn,y1..yn``."""
        if hasattr(path_or_buf, "read"):
            rows = list(csv.reader(path_or_buf))
        else:
            with open(path_or_buf, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        if not rows:
            raise ValueError("empty CSV")
        header = [h.strip() for h in rows[0]]
        x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y")]
        if not x_cols or not y_cols or len(x_cols) + len(y_cols) != len(header):
            raise ValueError(
                "CSV header must name covariate columns x1..xn and outcome columns y1..yn"
            )
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
        if data.size == 0:
            raise ValueError("CSV has a header but no sample rows")
        return cls(data[:, x_cols], data[:, y_cols])

    def to_csv(self, path_or_buf) -> None:
        """Write the dataset as CSV with header ``x1..xn,y1..yn``."""
        header = [f"x{j + 1}" for j in range(self.n_x)] + [
            f"y{j + 1}" for j in range(self.n_y)
        ]
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for xi, yi in zip(self.covariates, self.outcomes):
                w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
        finally:
            if own:
                fh.close()


@dataclass(frozen=True)
class Neighborhood:
    """Closed norm ball {x : ||x - center|| <= radius} in covariate space."""

    center: np.ndarray
    radius: float
    ball_norm: str = "l2"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        object.__setattr__(self, "center", c)
        if not np.isfinite(c).all():
            raise ValueError("non-finite neighborhood center")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        if self.ball_norm not in NORMS:
            raise ValueError(f"ball_norm must be one of {NORMS}")

    def distance_to_center(self, x: np.ndarray) -> float:
        return norm_value(np.asarray(x, dtype=float).ravel() - self.center, self.ball_norm)

    def contains(self, x: np.ndarray) -> bool:
        return self.distance_to_center(x) <= self.radius


@dataclass(frozen=True)
class CostSpec:
    """Separable ground cost: ||.||_x^q on covariates plus ||.||_y^q on outcomes."""

    x_base_norm: str = "l2"
    y_base_norm: str = "l2"
    q: float = 1.0

    def __post_init__(self):
        if self.x_base_norm not in NORMS or self.y_base_norm not in NORMS:
            raise ValueError(f"base norms must be one of {NORMS}")
        if not self.q >= 1:
            raise ValueError("cost order q must be >= 1")

    @property
    def y_dual_norm(self) -> str:
        return dual_norm_name(self.y_base_norm)

    @property
    def q_conj(self) -> float:
        """Holder conjugate q* = q/(q-1) (inf for q=1)."""
        if self.q == 1:
            return float("inf")
        return self.q / (self.q - 1.0)


@dataclass(frozen=True)
class Partition:
    """Samples relabeled so the first ``m`` lie outside the neighborhood.

    ``covariates``/``outcomes`` are stored in relabeled order;
    ``perm[k]`` is the original index of relabeled sample k.  ``d`` holds the
    per-sample boundary transport cost (relabeled order) once computed.
    """

    covariates: np.ndarray
    outcomes: np.ndarray
    m: int
    perm: np.ndarray
    d: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def outside_idx(self) -> np.ndarray:
        """Original indices of the samples outside the region."""
        return self.perm[: self.m]

    @property
    def inside_idx(self) -> np.ndarray:
        """Original indices of the samples inside (or on the boundary of) the region."""
        return self.perm[self.m :]

    def require_d(self) -> np.ndarray:
        if self.d is None:
            raise ValueError(
                "boundary distances not computed; call boundary_distances or override_distances"
            )
        return self.d


def partition(dataset: Dataset, nbhd: Neighborhood) -> Partition:
    """Split samples by the neighborhood: strictly-outside points first.

    Points exactly on the boundary count as inside (the region is closed).
    Original order is preserved within each group and recorded in ``perm``.
    """
    if dataset.n_x != nbhd.center.size:
        raise ValueError(
            f"covariate dimension {dataset.n_x} != neighborhood dimension {nbhd.center.size}"
        )
    dist = np.array(
        [nbhd.distance_to_center(x) for x in dataset.covariates], dtype=float
    )
    outside = np.flatnonzero(dist > nbhd.radius)
    inside = np.flatnonzero(dist <= nbhd.radius)
    perm = np.concatenate([outside, inside]).astype(int)
    return Partition(
        covariates=dataset.covariates[perm],
        outcomes=dataset.outcomes[perm],
        m=int(outside.size),
        perm=perm,
        d=None,
    )


def project_l1_ball(u: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of ``u`` onto the closed L1 ball of given radius.

    Sort-based soft-thresholding; exact up to floating point.
    """
    u = np.asarray(u, dtype=float)
    if np.sum(np.abs(u)) <= radius:
        return u.copy()
    a = np.abs(u)
    s = np.sort(a)[::-1]
    css = np.cumsum(s)
    ks = np.arange(1, a.size + 1)
    # largest k with s_k > (cumsum_k - radius) / k
    valid = s > (css - radius) / ks
    k = int(np.max(np.flatnonzero(valid))) + 1
    theta = (css[k - 1] - radius) / k
    return np.sign(u) * np.maximum(a - theta, 0.0)


def _base_distance_to_boundary(
    x: np.ndarray, nbhd: Neighborhood, base_norm: str
) -> float:
    """Base-norm distance from x to the boundary of the neighborhood ball."""
    gamma = nbhd.radius
    r = nbhd.distance_to_center(x)
    if base_norm == nbhd.ball_norm:
        # Radial projection under the matching norm.
        return abs(r - gamma)
    if nbhd.ball_norm == "l1" and base_norm == "l2":
        u = np.asarray(x, dtype=float).ravel() - nbhd.center
        if r > gamma:
            proj = project_l1_ball(u, gamma)
            return float(np.linalg.norm(u - proj))
        # Interior: Euclidean distance to the nearest facet of the L1 sphere.
        # Each facet lies in a hyperplane with unit normal s/sqrt(n); the
        # nearest one has s = sign(u), giving (gamma - ||u||_1)/sqrt(n), and
        # the foot of the perpendicular stays inside that facet.
        return float((gamma - r) / np.sqrt(u.size))
    raise ValueError(
        f"unsupported (ball_norm={nbhd.ball_norm}, x_base_norm={base_norm}) pair; "
        "supply distances via override_distances"
    )


def boundary_distances(part: Partition, nbhd: Neighborhood, cost: CostSpec) -> Partition:
    """Attach d_i = (base-norm distance from sample i to the region boundary)^q.

    Supported pairs: matching ball/base norm (radial formula), and L1 ball with
    L2 base norm (projection outside, facet distance inside).  Other pairs must
    go through :func:`override_distances`.
    """
    d = np.array(
        [
            _base_distance_to_boundary(x, nbhd, cost.x_base_norm) ** cost.q
            for x in part.covariates
        ],
        dtype=float,
    )
    return replace(part, d=d)


def override_distances(part: Partition, d) -> Partition:
    """Attach caller-supplied boundary costs (relabeled order: outside first)."""
    d = np.asarray(d, dtype=float).ravel()
    if d.size != part.n:
        raise ValueError(f"expected {part.n} distances, got {d.size}")
    if (d < 0).any():
        raise ValueError("boundary costs must be nonnegative")
    return replace(part, d=d.copy())
