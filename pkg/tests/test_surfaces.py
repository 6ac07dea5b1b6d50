import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from surffpt.surfaces import (
    ChartError, Ellipsoid, FlatDisk, Neck, RadialHarmonic, SingularChartError, SlicedTorus, Sphere, Torus,
    TruncatedTorus, catalog, catalog_h, exact_geometry_at, exact_geometry_at_points, fd_chart_derivatives,
    parse_surface,
)

CLOSED = [Ellipsoid(1.2, 1.2, 1.0), RadialHarmonic(0.1, 3, 1), RadialHarmonic(0.1, 7, 1), Torus(0.7, 0.3)]


def _interior_q(model, rng, n=50, chart=0):
    lo, hi = model.chart_box(chart)
    q = lo + (hi - lo) * rng.random((n, 2))
    if chart in model.polar_charts:
        q[:, 1] = 0.2 + (math.pi - 0.4) * rng.random(n)
    return q


@pytest.mark.parametrize("model", CLOSED + [SlicedTorus(), Neck(0.4)], ids=repr)
def test_closed_form_derivatives_match_finite_differences(model, rng):
    for chart in range(model.n_charts):
        q = _interior_q(model, rng, chart=chart)
        if model.kind == "neck" and chart == 0:
            q[:, 1] = 0.06 + (model.z_c - 0.1) * rng.random(len(q))
        s, s_q, s_qq = model.derivatives(q, chart)
        _, d1, d2 = fd_chart_derivatives(lambda qq: model.sigma(qq, chart), q)
        assert np.allclose(s, model.sigma(q, chart))
        assert np.allclose(s_q, d1, atol=1e-7)
        assert np.allclose(s_qq, d2, atol=1e-5)


@pytest.mark.parametrize("model", CLOSED, ids=repr)
def test_sigma_lies_on_implicit_surface(model, rng):
    for chart in range(model.n_charts):
        x = model.sigma(_interior_q(model, rng, chart=chart), chart)
        assert np.max(np.abs(model.implicit(x))) < 1e-12


@pytest.mark.parametrize("model", CLOSED, ids=repr)
def test_chart_coords_invert_sigma(model, rng):
    for chart in range(model.n_charts):
        q = _interior_q(model, rng, chart=chart)
        x = model.sigma(q, chart)
        assert np.allclose(model.sigma(model.chart_coords(x, chart), chart), x, atol=1e-12)


def test_sphere_curvature_is_inverse_radius_squared(rng):
    m = Sphere(2.0)
    geo = exact_geometry_at(m, _interior_q(m, rng))
    assert np.allclose(geo.gaussian_curvature, 0.25)
    # normals of the outward chart point away from the center
    assert np.allclose(np.abs(np.einsum("nd,nd->n", geo.normal, geo.sigma / 2.0)), 1.0)


def test_torus_curvature_closed_form(rng):
    m = Torus(0.7, 0.3)
    q = _interior_q(m, rng)
    geo = exact_geometry_at(m, q)
    v = q[:, 1]
    assert np.allclose(geo.gaussian_curvature, np.cos(v) / (0.3 * (0.7 + 0.3 * np.cos(v))))


def test_torus_area_formula():
    assert catalog("D").area() == pytest.approx(4 * math.pi**2 * 0.7 * 0.3, rel=1e-10)


def test_ellipsoid_metric_is_positive_definite(rng):
    m = Ellipsoid(1.2, 1.2, 1.0)
    geo = exact_geometry_at(m, _interior_q(m, rng))
    assert np.all(np.linalg.eigvalsh(geo.metric) > 0)
    assert np.allclose(geo.metric @ geo.metric_inv, np.eye(2), atol=1e-12)


def test_christoffel_symbols_are_symmetric(rng):
    m = RadialHarmonic(0.1, 3, 1)
    geo = exact_geometry_at(m, _interior_q(m, rng))
    assert np.allclose(geo.christoffel, np.swapaxes(geo.christoffel, -1, -2))


def test_geometry_at_points_uses_regular_charts():
    m = Sphere(1.0)
    poles = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    geo, q, chart = exact_geometry_at_points(m, poles)
    assert np.all(np.isfinite(geo.gaussian_curvature))
    assert np.allclose(geo.gaussian_curvature, 1.0)


def test_polar_chart_rejects_the_pole():
    m = Sphere(1.0)
    with pytest.raises(SingularChartError):
        exact_geometry_at(m, [[0.3, 0.0]])


def test_nonperiodic_coordinate_out_of_range():
    with pytest.raises(ChartError):
        exact_geometry_at(FlatDisk(1.0), [[2.0, 0.1]])


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_torus_projection_lands_on_surface(x, y, z):
    m = Torus(0.7, 0.3)
    p = np.array([[x, y, z]])
    if np.hypot(np.hypot(x, y) - 0.7, z) < 1e-3 or np.hypot(x, y) < 1e-3:
        return
    q = m.project(p)
    assert abs(m.implicit(q)[0]) < 1e-12
    # a second projection is the identity
    assert np.allclose(m.project(q), q, atol=1e-14)


@given(st.floats(0.05, 1.0))
def test_neck_profile_endpoints(r0):
    m = Neck(r0)
    r, dr, _ = m.profile(np.array([0.0, m.z_c]))
    assert r[0] == pytest.approx(r0)
    assert r[1] == pytest.approx(1.0)
    assert np.all(np.isfinite(dr))


@pytest.mark.parametrize("r0", [0.8, 0.3, 0.1])
def test_neck_meridian_distances(r0):
    m = Neck(r0)
    top = m.meridian_point(math.pi + 0.05)
    assert np.allclose(top, [0.0, 0.0, m.height], atol=1e-9)
    assert m.meridian_point(0.0)[2] == 0.0
    # the junction with the cap sits at geodesic distance 0.05 + pi/2
    assert np.allclose(m.meridian_point(0.05 + math.pi / 2), [1.0, 0.0, m.z_c], atol=1e-8)


def test_edge_domains():
    for m in (Sphere(1.0, 0.0), TruncatedTorus(), SlicedTorus(), FlatDisk(1.0), Neck(0.5)):
        assert m.has_edge
        e = m.edge_nodes(0.05)
        assert len(e) > 10
        assert np.max(np.abs(m.domain(e))) < 1e-12


@pytest.mark.parametrize("text", ["A", "B", "C", "D", "hemisphere", "sphere:2.0", "torus:0.7,0.3",
                                  "sliced_torus", "truncated_torus", "neck:0.3", "flat_disk:1.5"])
def test_spec_text_round_trip(text):
    m = parse_surface(text)
    assert parse_surface(m.spec()) == m


def test_unknown_surface():
    with pytest.raises(KeyError):
        parse_surface("klein-bottle")


def test_catalog_levels_halve_h():
    assert catalog_h("A", 1) == 0.1
    assert catalog_h("D", 3) == pytest.approx(0.02)
