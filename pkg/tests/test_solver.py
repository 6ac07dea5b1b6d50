import math

import numpy as np
import pytest
import scipy.sparse as sp

from surffpt.cloud import PointCloud
from surffpt.fields import double_well, pure_diffusion, variable_diffusivity
from surffpt.sampling import EmptyBoundaryError, sample_cloud
from surffpt.solver import (
    SolverError, SparseSystem, StatisticProblem, assemble, evaluate_statistic, fpt_problem, interior_charts,
    relative_residual, solve, solve_fpt,
)
from surffpt.surfaces import SlicedTorus, Sphere, TruncatedTorus


def disk_exact(x, R=1.0, D=1.0):
    return (R**2 - x[:, 0] ** 2 - x[:, 1] ** 2) / (4 * D)


@pytest.mark.parametrize("method", ["direct", "iterative"])
@pytest.mark.parametrize("degree", [2, 4])
def test_disk_fpt_is_exact(disk_cloud, method, degree):
    sol = solve_fpt(disk_cloud, pure_diffusion(2.0), degree, method)
    assert np.allclose(sol.u, disk_exact(disk_cloud.positions, D=2.0), atol=1e-8)
    assert sol.method == method


def test_system_layout(disk_cloud):
    system = assemble(disk_cloud, fpt_problem(pure_diffusion(1.0), 2))
    b = disk_cloud.boundary
    assert np.all(system.rhs[b] == 0.0) and np.all(system.rhs[~b] == -1.0)
    A = system.matrix.tocsr()
    for i in np.flatnonzero(b)[:10]:
        row = A.getrow(i)
        assert row.nnz == 1 and row[0, i] == 1.0
    # generator rows annihilate constants
    assert np.allclose((A @ np.ones(disk_cloud.n))[~b], 0.0, atol=1e-8)


def test_boundary_and_source_data(disk_cloud):
    # x^2 - y^2 is harmonic: with g = 0 its boundary values extend to itself
    f = lambda x: x[:, 0] ** 2 - x[:, 1] ** 2  # noqa: E731
    sol = evaluate_statistic(disk_cloud, StatisticProblem(pure_diffusion(1.0), 2, 0.0, f))
    assert np.allclose(sol.u, f(disk_cloud.positions), atol=1e-9)
    # g = r^2 has the quartic solution (1 - r^4)/16
    g = lambda x: x[:, 0] ** 2 + x[:, 1] ** 2  # noqa: E731
    sol = evaluate_statistic(disk_cloud, StatisticProblem(pure_diffusion(1.0), 4, g, 0.0))
    r2 = g(disk_cloud.positions)
    assert np.allclose(sol.u, (1 - r2**2) / 16, atol=1e-8)


def test_no_boundary_is_an_error(sphere_cloud):
    with pytest.raises(EmptyBoundaryError):
        assemble(sphere_cloud, fpt_problem(pure_diffusion()))


def test_all_boundary_gives_identity():
    c = PointCloud(np.random.default_rng(0).normal(size=(10, 3)), np.ones(10, bool))
    sol = evaluate_statistic(c, StatisticProblem(pure_diffusion(), 2, 1.0, 2.5))
    assert np.allclose(sol.u, 2.5)


def test_charts_must_cover_the_interior(disk_cloud):
    charts = interior_charts(disk_cloud, 2)
    assemble(disk_cloud, fpt_problem(pure_diffusion(), 2), charts)
    from surffpt.geometry import build_local_charts
    with pytest.raises(ValueError):
        assemble(disk_cloud, fpt_problem(pure_diffusion(), 2), build_local_charts(disk_cloud, 2))


def test_unknown_method(disk_cloud):
    system = assemble(disk_cloud, fpt_problem(pure_diffusion(), 2))
    with pytest.raises(ValueError):
        solve(system, "cholesky")


def test_gmres_failure_is_reported(disk_cloud):
    system = assemble(disk_cloud, fpt_problem(pure_diffusion(), 2))
    with pytest.raises(SolverError) as err:
        solve(system, "iterative", rtol=1e-14, restart=2, maxiter=2)
    assert err.value.residual > 1e-14


def test_singular_matrix_is_reported():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(SolverError):
        solve(SparseSystem(A, np.ones(2), np.array([True, False])))


def test_relative_residual():
    A = sp.identity(3, format="csr")
    assert relative_residual(A, np.ones(3), np.ones(3)) == 0.0
    assert relative_residual(A, np.zeros(3), np.zeros(3)) == 0.0


@pytest.fixture(scope="module")
def cap_cloud():
    return sample_cloud(Sphere(1.0, 0.0), 0.05, boundary="edge::1e-9")


def test_cap_fpt_is_positive_and_peaks_at_the_pole(cap_cloud):
    sol = solve_fpt(cap_cloud, pure_diffusion(1.0), 4)
    u = sol.u
    assert np.all(u[~cap_cloud.boundary] > 0)
    pole = np.argmax(cap_cloud.positions[:, 2])
    assert np.argmax(u) == pole or u[pole] > 0.999 * u.max()
    # the radial ODE on the unit hemisphere gives u = ln(1 + z) / D, ln 2 at the pole
    assert u[pole] == pytest.approx(math.log(2), rel=2e-3)
    assert np.max(np.abs(u - np.log1p(cap_cloud.positions[:, 2]))) < 1e-3


def test_direct_and_iterative_agree(cap_cloud):
    a = solve_fpt(cap_cloud, pure_diffusion(1.0), 2, "direct").u
    b = solve_fpt(cap_cloud, pure_diffusion(1.0), 2, "iterative").u
    assert np.max(np.abs(a - b)) < 1e-6 * np.max(np.abs(a))


def test_zero_parameters_reduce_to_pure_diffusion():
    cloud = sample_cloud(TruncatedTorus(), 0.08, boundary="edge::1e-9")
    p0 = assemble(cloud, fpt_problem(pure_diffusion(1.0), 2)).matrix
    p1 = assemble(cloud, fpt_problem(double_well(0.0, 1.0), 2)).matrix
    assert abs(p0 - p1).max() < 1e-12
    cloud = sample_cloud(SlicedTorus(), 0.08, boundary="edge::1e-9")
    p0 = assemble(cloud, fpt_problem(pure_diffusion(1.0), 2)).matrix
    p1 = assemble(cloud, fpt_problem(variable_diffusivity(0.0, 0.5), 2)).matrix
    assert abs(p0 - p1).max() < 1e-12


def test_fpt_scales_inversely_with_D(disk_cloud):
    a = solve_fpt(disk_cloud, pure_diffusion(1.0), 2).u
    b = solve_fpt(disk_cloud, pure_diffusion(4.0), 2).u
    assert np.allclose(a, 4 * b)
