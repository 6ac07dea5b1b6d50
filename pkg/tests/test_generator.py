import numpy as np
import pytest

from surffpt.fields import (
    HARMONIC5, constant_spec, double_well, manufactured_spec, parse_spec, polynomial_field, pure_diffusion,
    variable_diffusivity,
)
from surffpt.generator import (
    apply_generator, chart_coefficients, coefficients_for, operator_error, reference_generator,
    reference_generator_analytic,
)
from surffpt.geometry import build_local_charts
from surffpt.surfaces import Sphere, Torus, catalog, exact_geometry_at, exact_geometry_at_points


@pytest.fixture(scope="module")
def sphere_charts(sphere_cloud):
    return build_local_charts(sphere_cloud, 4)


def test_constants_are_in_the_kernel(sphere_charts):
    for spec in (pure_diffusion(2.0), manufactured_spec("B")):
        Lu = apply_generator(sphere_charts, spec, np.full(sphere_charts.cloud.n, 3.0))
        assert np.max(np.abs(Lu)) < 1e-8


def test_coordinate_functions_on_the_sphere(sphere_charts):
    # the Laplace-Beltrami operator of the unit sphere maps x_i to -2 x_i
    x = sphere_charts.cloud.positions
    for i in range(3):
        Lu = apply_generator(sphere_charts, pure_diffusion(1.0), x[:, i])
        assert np.max(np.abs(Lu + 2 * x[:, i])) < 5e-4


def test_generator_scales_with_D(sphere_charts):
    v = sphere_charts.cloud.positions[:, 2] ** 2
    a = apply_generator(sphere_charts, pure_diffusion(1.0), v)
    b = apply_generator(sphere_charts, pure_diffusion(3.5), v)
    assert np.allclose(b, 3.5 * a)


def test_pure_diffusion_chart_coefficients(rng):
    m = Torus(0.7, 0.3)
    q = rng.uniform(0, 2 * np.pi, (20, 2))
    geo = exact_geometry_at(m, q)
    c = coefficients_for(pure_diffusion(0.5), geo.sigma, geo)
    assert np.allclose(c.diffusion, 0.5 * geo.metric_inv)
    # drift is the -1/2 Gamma : bb^T term only
    expect = -0.5 * np.einsum("ncab,nab->nc", geo.christoffel, 2 * c.diffusion)
    assert np.allclose(c.alpha, expect)
    # isotropic ambient noise keeps a normal part: the largest |n . b_j| is max_j |n_j|
    assert np.allclose(c.normal_residual, np.abs(geo.normal).max(axis=1))


def test_diffusion_tensor_is_symmetric_psd(rng):
    m = catalog("B")
    x = m.project(rng.normal(size=(50, 3)))
    geo, _, _ = exact_geometry_at_points(m, x)
    c = coefficients_for(manufactured_spec("B"), x, geo)
    assert np.allclose(c.diffusion, np.swapaxes(c.diffusion, 1, 2))
    assert np.all(np.linalg.eigvalsh(c.diffusion) > -1e-12)


def test_normal_components_are_dropped(rng):
    m = Sphere(1.0)
    x = m.project(rng.normal(size=(10, 3)))
    geo, _, _ = exact_geometry_at_points(m, x)
    radial = constant_spec((0.0, 0.0, 0.0))
    c0 = coefficients_for(radial, x, geo)
    b = radial.b(x) + x[:, :, None] * 0.3
    c1 = chart_coefficients(radial.a(x) + 2 * x, b - x[:, :, None] * np.einsum("nd,ndj->nj", x, b)[:, None, :],
                            geo)
    assert np.allclose(c0.diffusion, c1.diffusion)
    assert np.allclose(c0.alpha, c1.alpha)


@pytest.mark.parametrize("name", ["A", "B", "D"])
def test_reference_generators_agree(name, rng):
    m = catalog(name)
    x = m.project(rng.normal(size=(40, 3)) + ([0, 0, 0] if name != "D" else [0.7, 0, 0]))
    spec = manufactured_spec(name)
    fd = reference_generator(m, spec, HARMONIC5, x)
    an = reference_generator_analytic(m, spec, HARMONIC5, x)
    assert np.allclose(fd, an, rtol=1e-7, atol=1e-7)


def test_higher_degree_is_more_accurate(sphere_cloud):
    m = Sphere(1.0)
    spec = manufactured_spec("B")
    errs = [operator_error(build_local_charts(sphere_cloud, d), m, spec, HARMONIC5) for d in (2, 4)]
    assert errs[1] < errs[0] / 10


def test_polynomial_field_derivatives(rng):
    f = polynomial_field({(2, 1, 0): 1.5, (0, 0, 3): -2.0})
    x = rng.normal(size=(5, 3))
    assert np.allclose(f(x), 1.5 * x[:, 0] ** 2 * x[:, 1] - 2 * x[:, 2] ** 3)
    assert np.allclose(f.grad(x)[:, 0], 3 * x[:, 0] * x[:, 1])
    assert np.allclose(f.hess(x)[:, 2, 2], -12 * x[:, 2])


def test_double_well_drift_points_downhill():
    m = Torus(0.7, 0.3)
    spec = double_well(1.0, 1.0, m)
    q = np.array([[np.pi / 4, 0.5], [3 * np.pi / 4, 1.0]])
    x = m.sigma(q)
    geo = exact_geometry_at(m, q)
    a = spec.a(x)
    # U = k sin^2 u: the u-component of the drift is -sin(2u)/w^2 in chart units
    du = np.einsum("nd,nd->n", a, geo.sigma_q[:, 0]) / geo.metric[:, 0, 0]
    w = 0.7 + 0.3 * np.cos(q[:, 1])
    assert np.allclose(du, -np.sin(2 * q[:, 0]) / w**2)


def test_zero_barrier_is_pure_diffusion(rng):
    m = Torus(0.7, 0.3)
    x = m.project(rng.normal(size=(30, 3)) + [0.7, 0, 0])
    assert np.allclose(double_well(0.0).a(x), 0.0)
    assert np.allclose(double_well(0.0).b(x), pure_diffusion(1.0).b(x))
    assert np.allclose(variable_diffusivity(0.0, 0.5).b(x), pure_diffusion(1.0).b(x))


def test_diffusivity_dip():
    spec = variable_diffusivity(0.9, 0.5)
    from surffpt.fields import diffusivity_center
    xc = diffusivity_center()
    assert xc == pytest.approx([0.4, np.sqrt(2) / 2, np.sqrt(2) / 2])
    assert spec.diffusivity(xc[None])[0] == pytest.approx(np.sqrt(2) * 0.1)
    assert str(spec) == "diffusivity:c=0.9,r=0.5,D=1.0"


@pytest.mark.parametrize("text,name", [("diffusion:D=2", "diffusion"), ("langevin:k=1,D=1", "langevin"),
                                       ("diffusivity:c=0.5", "diffusivity"), ("manifold-A-ab", "manifold-A-ab"),
                                       ("constant:a=1;0;0,s=1", "constant")])
def test_parse_spec(text, name):
    assert parse_spec(text).name == name


def test_parse_spec_unknown():
    with pytest.raises(KeyError):
        parse_spec("levy:alpha=1.5")
