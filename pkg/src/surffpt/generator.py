"""Infinitesimal generator of a surface SDE in local charts.

For dX = a dt + b dW constrained to a surface with chart sigma(q), the
generator acting on u reads

    L u = alpha^c d_c u + 1/2 beta^c . beta^d  d_cd u,

with beta^c = g^{cb} sigma_b^T b,  a^c = g^{cb} <a, sigma_b>  and the
geometric drift correction alpha^c = a^c - 1/2 Gamma^c_ab beta^a . beta^b.
Only pointwise values of a and b enter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fields import DriftDiffusionSpec, ScalarField
from .geometry import LocalCharts, project_to_tangent
from .surfaces import ExactGeometry, SurfaceModel, _as_x, exact_geometry_at, fd_chart_derivatives


@dataclass
class ChartCoefficients:
    alpha: np.ndarray
    beta: np.ndarray
    diffusion: np.ndarray
    normal_residual: np.ndarray

    @property
    def D(self) -> np.ndarray:
        return self.diffusion


def tangential_fields(spec: DriftDiffusionSpec, x, normal):
    """Tangential parts of a and of each b column; also the largest removed normal part."""
    a = spec.a(x)
    b = spec.b(x)
    a_t = project_to_tangent(a, normal)
    b_t = b - normal[:, :, None] * np.einsum("nd,ndj->nj", normal, b)[:, None, :]
    res = np.maximum(np.abs(np.einsum("nd,nd->n", a, normal)),
                     np.abs(np.einsum("nd,ndj->nj", normal, b)).max(axis=1))
    return a_t, b_t, res


def chart_coefficients(a, b, geometry: ExactGeometry, residual=None) -> ChartCoefficients:
    """Chart drift alpha (n, 2), beta (n, 2, 3) and D = beta beta^T / 2 from ambient a, b."""
    s_q = geometry.sigma_q
    g_inv = geometry.metric_inv
    beta = np.einsum("ncb,nbj->ncj", g_inv, np.einsum("nbd,ndj->nbj", s_q, b))
    a_c = np.einsum("ncb,nb->nc", g_inv, np.einsum("nbd,nd->nb", s_q, a))
    bb = np.einsum("naj,nbj->nab", beta, beta)
    alpha = a_c - 0.5 * np.einsum("ncab,nab->nc", geometry.christoffel, bb)
    if residual is None:
        residual = np.zeros(len(a))
    return ChartCoefficients(alpha, beta, 0.5 * bb, residual)


def coefficients_for(spec: DriftDiffusionSpec, x, geometry: ExactGeometry) -> ChartCoefficients:
    a_t, b_t, res = tangential_fields(spec, _as_x(x), geometry.normal)
    return chart_coefficients(a_t, b_t, geometry, res)


def combine(coeffs: ChartCoefficients, derivs: np.ndarray) -> np.ndarray:
    """alpha^c d_c + D_cd d_cd applied to chart derivatives (..., 5) = (u, v, uu, uv, vv)."""
    al, D = coeffs.alpha, coeffs.diffusion
    return (al[:, 0, None] * derivs[:, 0] + al[:, 1, None] * derivs[:, 1]
            + D[:, 0, 0, None] * derivs[:, 2] + 2 * D[:, 0, 1, None] * derivs[:, 3]
            + D[:, 1, 1, None] * derivs[:, 4]) if derivs.ndim == 3 else (
        al[:, 0] * derivs[:, 0] + al[:, 1] * derivs[:, 1] + D[:, 0, 0] * derivs[:, 2]
        + 2 * D[:, 0, 1] * derivs[:, 3] + D[:, 1, 1] * derivs[:, 4])


@dataclass
class GeneratorStencils:
    """Generator weights per center: (L u)(x_i) ~ sum_j weights[i, j] u(x_{indices[i, j]})."""

    centers: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    coefficients: ChartCoefficients

    def apply(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        idx = np.where(self.indices >= 0, self.indices, 0)
        return np.einsum("nk,nk->n", self.weights, v[idx])

    def matrix(self, n_cols: int) -> sp.csr_matrix:
        valid = self.indices >= 0
        rows = np.repeat(np.arange(len(self.centers)), valid.sum(axis=1))
        return sp.csr_matrix((self.weights[valid], (rows, self.indices[valid])),
                             shape=(len(self.centers), n_cols))


def generator_stencils(charts: LocalCharts, spec: DriftDiffusionSpec) -> GeneratorStencils:
    x = charts.cloud.positions[charts.centers]
    coeffs = coefficients_for(spec, x, charts.geometry)
    # stencils are (n, k, 5); combine expects the derivative axis second
    w = combine(coeffs, np.moveaxis(charts.stencils, 2, 1))
    return GeneratorStencils(charts.centers, charts.table.indices, w, coeffs)


def apply_generator(charts: LocalCharts, spec: DriftDiffusionSpec, values) -> np.ndarray:
    return generator_stencils(charts, spec).apply(values)


# ---------------------------------------------------------------------------
# reference generator from exact geometry
# ---------------------------------------------------------------------------


def _chart_batches(model: SurfaceModel, x):
    q, chart = model.locate(x)
    for c in np.unique(chart):
        sel = np.flatnonzero(chart == c)
        yield sel, q[sel], int(c)


def reference_generator(model: SurfaceModel, spec: DriftDiffusionSpec, u, x,
                        step1: float = 1e-4, step2: float = 1e-3) -> np.ndarray:
    """L u at surface points using exact geometry and finite differences of u o sigma.

    Sixth-order central differences with one Richardson level; each point is
    evaluated in its best-conditioned chart.
    """
    x = _as_x(x)
    out = np.empty(len(x))
    for sel, q, c in _chart_batches(model, x):
        geo = exact_geometry_at(model, q, c)
        coeffs = coefficients_for(spec, geo.sigma, geo)
        _, d1, d2 = fd_chart_derivatives(lambda qq: u(model.sigma(qq, c))[:, None], q, step1, step2)
        derivs = np.column_stack([d1[:, 0, 0], d1[:, 1, 0], d2[:, 0, 0, 0], d2[:, 0, 1, 0], d2[:, 1, 1, 0]])
        out[sel] = combine(coeffs, derivs)
    return out


def reference_generator_analytic(model: SurfaceModel, spec: DriftDiffusionSpec, u: ScalarField, x):
    """Same operator through the chain rule with the ambient gradient and Hessian of u."""
    x = _as_x(x)
    out = np.empty(len(x))
    for sel, q, c in _chart_batches(model, x):
        geo = exact_geometry_at(model, q, c)
        coeffs = coefficients_for(spec, geo.sigma, geo)
        G = u.grad(geo.sigma)
        H = u.hess(geo.sigma)
        s_q, s_qq = geo.sigma_q, geo.sigma_qq
        d1 = np.einsum("nd,nad->na", G, s_q)
        d2 = np.einsum("nad,nde,nbe->nab", s_q, H, s_q) + np.einsum("nd,nabd->nab", G, s_qq)
        derivs = np.column_stack([d1[:, 0], d1[:, 1], d2[:, 0, 0], d2[:, 0, 1], d2[:, 1, 1]])
        out[sel] = combine(coeffs, derivs)
    return out


def operator_error(charts: LocalCharts, model: SurfaceModel, spec: DriftDiffusionSpec, u) -> float:
    """Root-mean-square difference between the GMLS and reference generators on u."""
    x = charts.cloud.positions[charts.centers]
    approx = apply_generator(charts, spec, u(charts.cloud.positions))
    exact = reference_generator(model, spec, u, x)
    return float(np.sqrt(np.mean((approx - exact) ** 2)))
