"""Point clouds, exact neighbor search and GMLS neighborhoods."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .config import NEIGHBOR_INFLATION


class InsufficientPointsError(ValueError):
    """The cloud has fewer points than a neighborhood requires."""


class DuplicatePointsError(ValueError):
    pass


def poly_dim(degree: int) -> int:
    """Dimension of bivariate polynomials of total degree <= ``degree``."""
    return (degree + 1) * (degree + 2) // 2


def default_min_count(degree: int) -> int:
    return 2 * poly_dim(degree)


@dataclass(eq=False)
class PointCloud:
    """Points on a surface with interior/boundary flags.

    ``meta`` carries provenance (surface spec, target h, seed, boundary rule)
    and is written to the header of a cloud file.
    """

    positions: np.ndarray
    boundary: np.ndarray | None = None
    source_model: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float).reshape(-1, 3)
        n = len(self.positions)
        if self.boundary is None:
            self.boundary = np.zeros(n, dtype=bool)
        self.boundary = np.asarray(self.boundary, dtype=bool).reshape(n)
        if n > 1 and self.index.tree.query_pairs(1e-12):
            raise DuplicatePointsError("cloud contains coincident points")

    def __len__(self):
        return len(self.positions)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @cached_property
    def index(self) -> "SpatialIndex":
        return SpatialIndex(self.positions)

    @cached_property
    def nn_distances(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros(self.n)
        d, _ = self.index.tree.query(self.positions, k=2)
        return d[:, 1]

    @property
    def measured_h(self) -> float:
        return measure_fill_distance(self)[0]

    def with_boundary(self, flags, rule: str | None = None) -> "PointCloud":
        meta = dict(self.meta)
        if rule is not None:
            meta["boundary"] = rule
        return PointCloud(self.positions, flags, self.source_model, meta)


class SpatialIndex:
    """Immutable kd-tree with exact k-nearest and radius queries."""

    def __init__(self, positions):
        self.positions = np.asarray(positions, dtype=float)
        self.tree = cKDTree(self.positions)

    def __len__(self):
        return len(self.positions)

    def knn(self, x, k: int):
        """Distances and indices of the ``k`` nearest points (fewer if the cloud is small)."""
        k = min(k, len(self))
        d, i = self.tree.query(np.asarray(x, dtype=float), k=k)
        if k == 1:
            d, i = d[..., None], i[..., None]
        return d, i

    def radius(self, x, r: float):
        """Indices within distance ``r`` (inclusive) of ``x``, sorted by distance."""
        x = np.asarray(x, dtype=float)
        # pad the radius by one ulp-scale amount so ties at r are kept
        idx = np.asarray(self.tree.query_ball_point(x, r * (1 + 1e-12) + 1e-300), dtype=int)
        d = np.linalg.norm(self.positions[idx] - x, axis=-1)
        keep = d <= r
        idx, d = idx[keep], d[keep]
        order = np.lexsort((idx, d))
        return idx[order], d[order]


def build_index(cloud: PointCloud) -> SpatialIndex:
    return cloud.index


@dataclass(frozen=True)
class Neighborhood:
    center: int
    indices: np.ndarray
    distances: np.ndarray
    epsilon: float

    def __len__(self):
        return len(self.indices)


def neighborhood_for(cloud: PointCloud, center: int, min_count: int,
                     inflation: float = NEIGHBOR_INFLATION) -> Neighborhood:
    """Neighbors within ``inflation`` times the distance to the ``min_count``-th point.

    The center counts as the first point, so the ``min_count``-th nearest is
    the ``(min_count - 1)``-th other point.
    """
    if min_count > cloud.n:
        raise InsufficientPointsError(f"need {min_count} points, cloud has {cloud.n}")
    x = cloud.positions[center]
    d, _ = cloud.index.knn(x, min_count)
    eps = inflation * float(d[-1])
    idx, dist = cloud.index.radius(x, eps)
    return Neighborhood(int(center), idx, dist, eps)


@dataclass
class NeighborTable:
    """All neighborhoods of a cloud as padded arrays.

    Row ``i`` lists ``counts[i]`` neighbor indices sorted by distance (the
    center first); entries past the count hold index ``-1`` and distance inf.
    """

    indices: np.ndarray
    distances: np.ndarray
    counts: np.ndarray
    epsilon: np.ndarray

    def __len__(self):
        return len(self.counts)

    def row(self, i: int) -> Neighborhood:
        c = self.counts[i]
        return Neighborhood(i, self.indices[i, :c], self.distances[i, :c], float(self.epsilon[i]))


def neighbor_table(cloud: PointCloud, min_count: int,
                   inflation: float = NEIGHBOR_INFLATION, centers=None) -> NeighborTable:
    """Vectorized :func:`neighborhood_for` over many centers."""
    if min_count > cloud.n:
        raise InsufficientPointsError(f"need {min_count} points, cloud has {cloud.n}")
    centers = np.arange(cloud.n) if centers is None else np.asarray(centers)
    pts = cloud.positions
    tree = cloud.index.tree
    dk, _ = tree.query(pts[centers], k=min_count)
    dk = dk.reshape(len(centers), -1)[:, -1]
    eps = inflation * dk
    # an over-sized k query is cheaper than ball queries; widen until every
    # row's k-th distance exceeds its radius
    k = min(cloud.n, int(math.ceil(min_count * inflation**2 * 1.4)) + 4)
    while True:
        d, idx = tree.query(pts[centers], k=k)
        d, idx = d.reshape(len(centers), -1), idx.reshape(len(centers), -1)
        if k >= cloud.n or np.all(d[:, -1] > eps):
            break
        k = min(cloud.n, 2 * k)
    # recompute distances exactly as the single-center path does
    safe = np.where(idx < cloud.n, idx, 0)
    d = np.linalg.norm(pts[safe] - pts[centers][:, None, :], axis=-1)
    d = np.where(idx < cloud.n, d, np.inf)
    inside = d <= eps[:, None]
    d = np.where(inside, d, np.inf)
    order = np.lexsort((idx, d), axis=-1)
    d = np.take_along_axis(d, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    counts = inside.sum(axis=1)
    width = int(counts.max())
    idx = np.where(np.isfinite(d), idx, -1)[:, :width]
    return NeighborTable(idx, d[:, :width], counts, eps)


def measure_fill_distance(cloud: PointCloud) -> tuple[float, float]:
    """Median nearest-neighbor distance and the count-based proxy 1/sqrt(n)."""
    n = cloud.n
    hbar = 1.0 / math.sqrt(n) if n else math.inf
    if n < 2:
        return 0.0, hbar
    return float(np.median(cloud.nn_distances)), hbar
