import numpy as np
import pytest
from hypothesis import given, strategies as st

from surffpt.cloud import PointCloud
from surffpt.geometry import (
    DegenerateCovarianceError, FoldOverError, PointError, TangentFrame, build_local_charts, estimate_curvature_field,
    estimate_frame, exact_curvature_field, fit_monge_patch, estimate_geometry, monge_geometry,
)
from surffpt.surfaces import Sphere, Torus


def paraboloid(rng, a, b, n=80, c=0.0):
    uv = rng.uniform(-0.3, 0.3, (n, 2))
    uv[0] = 0.0
    z = a * uv[:, 0] ** 2 + b * uv[:, 1] ** 2 + c * uv[:, 0] ** 3
    return np.column_stack([uv, z])


def test_frame_of_a_plane(rng):
    x = np.column_stack([rng.uniform(-1, 1, (30, 2)), np.zeros(30)])
    f = estimate_frame(x, outward_from=[0, 0, -1])
    assert np.allclose(f.normal, [0, 0, 1])
    assert np.allclose(f.matrix @ f.matrix.T, np.eye(3), atol=1e-12)
    assert np.allclose(np.cross(f.psi1, f.psi2), f.normal)


def test_collinear_frame_is_degenerate():
    t = np.linspace(0, 1, 10)
    with pytest.raises(DegenerateCovarianceError):
        estimate_frame(np.column_stack([t, t, t]))


def test_quadratic_patch_is_exact(rng):
    x = paraboloid(rng, 0.7, -0.4)
    frame = TangentFrame(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))
    patch = fit_monge_patch(x, frame, 2)
    assert np.allclose(patch.derivatives, [0, 0, 1.4, 0, -0.8], atol=1e-10)
    geo = estimate_geometry(patch)
    assert geo.gaussian_curvature[0] == pytest.approx(1.4 * -0.8)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0, 2 * np.pi))
def test_curvature_is_invariant_to_tangent_rotation(a, b, angle):
    rng = np.random.default_rng(7)
    x = paraboloid(rng, a, b, c=0.3)
    frame = TangentFrame(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))
    K0 = estimate_geometry(fit_monge_patch(x, frame, 3)).gaussian_curvature[0]
    K1 = estimate_geometry(fit_monge_patch(x, frame.rotated(angle), 3)).gaussian_curvature[0]
    assert K1 == pytest.approx(K0, abs=1e-8)
    assert K0 == pytest.approx(4 * a * b, abs=1e-8)


def test_fold_over_detected(rng):
    x = paraboloid(rng, 0.1, 0.1, n=30)
    x = np.vstack([x, x[5] + [0, 0, 0.5]])
    frame = TangentFrame(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))
    with pytest.raises(FoldOverError):
        fit_monge_patch(x, frame, 2)


def test_monge_christoffel_form(rng):
    hd = rng.normal(size=(4, 5))
    frames = np.broadcast_to(np.eye(3), (4, 3, 3))
    geo = monge_geometry(frames, np.zeros((4, 3)), hd)
    grad = hd[:, :2]
    H = np.array([[hd[:, 2], hd[:, 3]], [hd[:, 3], hd[:, 4]]]).transpose(2, 0, 1)
    expect = np.einsum("nk,nij->nkij", grad, H) / (1 + np.sum(grad**2, 1))[:, None, None, None]
    assert np.allclose(geo.christoffel, expect)
    assert np.allclose(np.einsum("nab,nbc->nac", geo.metric, geo.metric_inv), np.eye(2))


def test_sphere_cloud_geometry(sphere_cloud):
    charts = build_local_charts(sphere_cloud, 4)
    x = sphere_cloud.positions
    geo = charts.geometry
    assert np.allclose(np.abs(np.einsum("nd,nd->n", geo.normal, x)), 1.0, atol=1e-6)
    assert np.allclose(geo.gaussian_curvature, 1.0, atol=5e-4)


@pytest.mark.parametrize("degree,tol", [(2, 0.05), (4, 5e-3)])
def test_torus_curvature(torus_cloud, degree, tol):
    K = estimate_curvature_field(torus_cloud, degree)
    Ke = exact_curvature_field(Torus(0.7, 0.3), torus_cloud)
    assert np.sqrt(np.mean((K - Ke) ** 2) / np.mean(Ke**2)) < tol


def test_centers_subset(sphere_cloud):
    full = build_local_charts(sphere_cloud, 2)
    sub = build_local_charts(sphere_cloud, 2, centers=[3, 10, 99])
    assert np.allclose(sub.geometry.gaussian_curvature, full.geometry.gaussian_curvature[[3, 10, 99]])


def test_chart_derivatives_of_height(rng):
    # on a plane the chart derivatives of a linear field are its tangential gradient
    x = np.column_stack([rng.uniform(-1, 1, (400, 2)), np.zeros(400)])
    cloud = PointCloud(x)
    charts = build_local_charts(cloud, 2)
    d = charts.chart_derivatives(2 * x[:, 0] - x[:, 1])
    g = d[:, 0][:, None] * charts.frames[:, 0] + d[:, 1][:, None] * charts.frames[:, 1]
    assert np.allclose(g[:, :2], [2, -1], atol=1e-9)
    assert np.allclose(d[:, 2:], 0, atol=1e-8)


def test_point_error_reports_index():
    t = np.linspace(0, 1, 40)
    x = np.column_stack([t, 2 * t + 1e-3 * t**2, np.zeros(40)])
    with pytest.raises((PointError, DegenerateCovarianceError)):
        build_local_charts(PointCloud(x), 2)
