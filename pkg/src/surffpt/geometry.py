"""Geometry of a surface estimated from its point cloud alone.

At each point a tangent frame comes from PCA of the neighborhood, and the
neighbors' heights over that plane are fitted by GMLS (a Monge-gauge patch
h(u, v)).  Metric, Christoffel symbols and curvature then follow from the
first and second derivatives of h at the patch center.

The derivative stencils of a patch do double duty: applied to neighbor
heights they give h_u, ..., h_vv, and applied to the values of any field
they give that field's chart derivatives, which is what the generator needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import NeighborTable, PointCloud, default_min_count, neighbor_table
from .config import NEIGHBOR_INFLATION, TOL
from .gmls import (
    CHART_DERIVATIVES,
    PolynomialBasis,
    RankDeficientError,
    WeightFunction,
    _factor,
    batched_stencils,
    chart_derivative_functionals,
)
from .surfaces import ExactGeometry, SurfaceModel, exact_geometry_at_points

#: estimated geometry uses the same record as the exact oracle
EstimatedGeometry = ExactGeometry

_DERIV_ORDER = np.array([sum(a) for a in CHART_DERIVATIVES])


class DegenerateCovarianceError(ValueError):
    pass


class FoldOverError(ValueError):
    """Two neighbors project onto the same tangent-plane coordinates."""


class PointError(RuntimeError):
    """An estimation error at a specific cloud point."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"point {index}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class TangentFrame:
    origin: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    normal: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        """Rows psi1, psi2, n."""
        return np.vstack([self.psi1, self.psi2, self.normal])

    def to_local(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ self.matrix.T

    def rotated(self, angle: float) -> "TangentFrame":
        c, s = np.cos(angle), np.sin(angle)
        return TangentFrame(self.origin, c * self.psi1 + s * self.psi2, -s * self.psi1 + c * self.psi2,
                            self.normal)


def _frames_from_covariance(centered: np.ndarray, valid=None):
    """Eigen-frames of neighborhood covariances, shape (n, 3, 3) rows psi1, psi2, n."""
    if valid is None:
        valid = np.ones(centered.shape[:2], dtype=bool)
    cnt = valid.sum(axis=1)
    mean = np.einsum("nk,nkd->nd", valid, centered) / cnt[:, None]
    y = np.where(valid[..., None], centered - mean[:, None, :], 0.0)
    cov = np.einsum("nki,nkj->nij", y, y) / cnt[:, None, None]
    lam, vec = np.linalg.eigh(cov)
    scale = lam[:, 2]
    degenerate = (lam[:, 1] - lam[:, 0] <= TOL.frame * scale) | (lam[:, 1] <= TOL.frame * scale)
    frames = np.stack([vec[:, :, 2], vec[:, :, 1], vec[:, :, 0]], axis=1)
    return frames, degenerate


def _orient(frames: np.ndarray, outward: np.ndarray | None) -> np.ndarray:
    if outward is not None:
        flip = np.einsum("nd,nd->n", frames[:, 2], outward) < 0
        frames[flip, 2] *= -1
    # right-handed: psi2 = n x psi1
    frames[:, 1] = np.cross(frames[:, 2], frames[:, 0])
    return frames


def estimate_frame(positions, center: int = 0, outward_from=None) -> TangentFrame:
    """PCA frame of a neighborhood.

    ``outward_from`` (e.g. the cloud centroid) fixes the normal's sign so that
    it points away from that point.
    """
    x = np.asarray(positions, dtype=float)
    if len(x) < 3:
        raise DegenerateCovarianceError("need at least 3 points")
    origin = x[center]
    frames, bad = _frames_from_covariance((x - origin)[None])
    if bad[0]:
        raise DegenerateCovarianceError("neighborhood covariance is degenerate")
    outward = None if outward_from is None else (origin - np.asarray(outward_from))[None]
    f = _orient(frames, outward)[0]
    return TangentFrame(origin, f[0], f[1], f[2])


def project_to_tangent(v, normal) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.asarray(normal, dtype=float)
    return v - np.sum(v * n, axis=-1, keepdims=True) * n


@dataclass
class MongePatch:
    frame: TangentFrame
    degree: int
    epsilon: float
    coords: np.ndarray
    heights: np.ndarray
    stencils: np.ndarray
    derivatives: np.ndarray
    height_at_center: float

    @property
    def h_u(self):
        return self.derivatives[0]

    @property
    def h_v(self):
        return self.derivatives[1]

    @property
    def h_uu(self):
        return self.derivatives[2]

    @property
    def h_uv(self):
        return self.derivatives[3]

    @property
    def h_vv(self):
        return self.derivatives[4]


def _check_fold(coords: np.ndarray, valid: np.ndarray | None = None):
    """Indices of rows with two neighbors at the same tangent coordinates."""
    if coords.ndim == 2:
        coords = coords[None]
    if valid is None:
        valid = np.ones(coords.shape[:2], dtype=bool)
    bad = np.zeros(len(coords), dtype=bool)
    for s in range(0, len(coords), 512):
        c = coords[s:s + 512]
        v = valid[s:s + 512]
        d = np.linalg.norm(c[:, :, None, :] - c[:, None, :, :], axis=-1)
        pair = v[:, :, None] & v[:, None, :]
        k = c.shape[1]
        pair &= ~np.eye(k, dtype=bool)[None]
        bad[s:s + 512] = np.any(pair & (d < 1e-12), axis=(1, 2))
    return bad


def fit_monge_patch(positions, frame: TangentFrame, degree: int, epsilon: float | None = None) -> MongePatch:
    """GMLS height function over the frame's tangent plane, centered at the origin.

    ``positions`` are the neighborhood points; weights use ambient distances.
    """
    x = np.asarray(positions, dtype=float)
    local = frame.to_local(x)
    coords, heights = local[:, :2], local[:, 2]
    r = np.linalg.norm(x - frame.origin, axis=1)
    if epsilon is None:
        epsilon = NEIGHBOR_INFLATION * r.max()
    if _check_fold(coords)[0]:
        raise FoldOverError("neighbors fold over in the tangent plane")
    basis = PolynomialBasis(degree)
    w = WeightFunction(epsilon)(r)
    f = _factor(basis.evaluate(coords / epsilon), w)
    T = chart_derivative_functionals(basis, epsilon)
    W = f.stencils(T)
    value = f.stencils(np.eye(basis.dim)[:, :1])[:, 0]
    return MongePatch(frame, degree, epsilon, coords, heights, W, heights @ W, float(heights @ value))


def monge_geometry(frames: np.ndarray, origins: np.ndarray, hd: np.ndarray,
                   h0: np.ndarray | None = None) -> EstimatedGeometry:
    """Geometry at patch centers from height derivatives (n, 5) = (h_u, h_v, h_uu, h_uv, h_vv).

    ``frames`` is (n, 3, 3) with rows psi1, psi2, n.
    """
    hd = np.atleast_2d(hd)
    frames = np.asarray(frames).reshape(-1, 3, 3)
    n = len(hd)
    grad = hd[:, :2]
    H = np.empty((n, 2, 2))
    H[:, 0, 0], H[:, 0, 1], H[:, 1, 0], H[:, 1, 1] = hd[:, 2], hd[:, 3], hd[:, 3], hd[:, 4]
    q2 = 1.0 + np.sum(grad**2, axis=1)
    g = np.eye(2) + grad[:, :, None] * grad[:, None, :]
    g_inv = np.eye(2) - grad[:, :, None] * grad[:, None, :] / q2[:, None, None]
    sqrt_g = np.sqrt(q2)
    christoffel = grad[:, :, None, None] * H[:, None, :, :] / q2[:, None, None, None]
    K = (hd[:, 2] * hd[:, 4] - hd[:, 3] ** 2) / q2**2
    psi, nrm = frames[:, :2], frames[:, 2]
    sigma_q = psi + grad[:, :, None] * nrm[:, None, :]
    sigma_qq = H[..., None] * nrm[:, None, None, :]
    unit_n = (nrm - np.einsum("na,nad->nd", grad, psi)) / sqrt_g[:, None]
    second = H / sqrt_g[:, None, None]
    base = origins if h0 is None else origins + h0[:, None] * nrm
    return EstimatedGeometry(base, sigma_q, sigma_qq, g, g_inv, sqrt_g, christoffel, unit_n, second, K)


def estimate_geometry(patch: MongePatch) -> EstimatedGeometry:
    f = patch.frame
    return monge_geometry(f.matrix[None], f.origin[None], patch.derivatives[None])


@dataclass
class LocalCharts:
    """Stage-one data for a whole cloud.

    ``stencils[i]`` is (k, 5): weights for d_u, d_v, d_uu, d_uv, d_vv at
    point ``i`` in its own tangent chart; padded neighbor slots are zero.
    """

    cloud: PointCloud
    degree: int
    table: NeighborTable
    frames: np.ndarray
    stencils: np.ndarray
    height_derivatives: np.ndarray
    geometry: EstimatedGeometry
    centers: np.ndarray

    def chart_derivatives(self, values) -> np.ndarray:
        """Chart derivatives (n, 5) of sampled ``values`` at every center."""
        v = np.asarray(values, dtype=float)
        idx = np.where(self.table.indices >= 0, self.table.indices, 0)
        return np.einsum("nk,nkt->nt", v[idx], self.stencils)


def build_local_charts(cloud: PointCloud, degree: int, min_count: int | None = None,
                       inflation: float = NEIGHBOR_INFLATION, centers=None,
                       chunk: int = 2000, outward: np.ndarray | None = None) -> LocalCharts:
    """Frames, Monge patches and derivative stencils for (a subset of) the cloud."""
    if min_count is None:
        min_count = default_min_count(degree)
    centers = np.arange(cloud.n) if centers is None else np.asarray(centers)
    table = neighbor_table(cloud, min_count, inflation, centers)
    pts = cloud.positions
    if outward is None:
        outward = pts[centers] - pts.mean(axis=0)
    basis = PolynomialBasis(degree)
    T = chart_derivative_functionals(basis, 1.0)
    inv_scale = 1.0 / table.epsilon[:, None] ** _DERIV_ORDER[None, :]
    n, k = table.indices.shape
    frames = np.empty((n, 3, 3))
    stencils = np.empty((n, k, 5))
    hd = np.empty((n, 5))
    for s in range(0, n, chunk):
        sl = slice(s, min(n, s + chunk))
        idx = table.indices[sl]
        valid = idx >= 0
        rel = pts[np.where(valid, idx, 0)] - pts[centers[sl]][:, None, :]
        rel = np.where(valid[..., None], rel, 0.0)
        fr, bad = _frames_from_covariance(rel, valid)
        if bad.any():
            i = int(centers[sl][np.flatnonzero(bad)[0]])
            raise PointError(i, DegenerateCovarianceError("degenerate neighborhood covariance"))
        fr = _orient(fr, outward[sl])
        local = np.einsum("nkd,ncd->nkc", rel, fr)
        coords = local[..., :2]
        fold = _check_fold(coords, valid)
        if fold.any():
            i = int(centers[sl][np.flatnonzero(fold)[0]])
            raise PointError(i, FoldOverError("neighbors fold over in the tangent plane"))
        try:
            W = batched_stencils(coords, valid, table.epsilon[sl], basis, T)
        except RankDeficientError:
            # locate the offending row for the error message
            for j in range(len(coords)):
                try:
                    batched_stencils(coords[j:j + 1], valid[j:j + 1], table.epsilon[sl][j:j + 1], basis, T)
                except RankDeficientError as exc:
                    raise PointError(int(centers[sl][j]), exc) from None
            raise
        W *= inv_scale[sl][:, None, :]
        frames[sl] = fr
        stencils[sl] = W
        hd[sl] = np.einsum("nk,nkt->nt", local[..., 2], W)
    geo = monge_geometry(frames, pts[centers], hd)
    return LocalCharts(cloud, degree, table, frames, stencils, hd, geo, centers)


def estimate_curvature_field(cloud: PointCloud, degree: int, **kw) -> np.ndarray:
    return build_local_charts(cloud, degree, **kw).geometry.gaussian_curvature


def exact_curvature_field(model: SurfaceModel, cloud: PointCloud) -> np.ndarray:
    geo, _, _ = exact_geometry_at_points(model, cloud.positions)
    return geo.gaussian_curvature
