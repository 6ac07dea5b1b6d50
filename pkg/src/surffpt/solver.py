"""Collocation solve of L u = -g in the interior, u = f on the boundary."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cloud import PointCloud
from .config import TOL
from .fields import DriftDiffusionSpec
from .generator import GeneratorStencils, generator_stencils
from .geometry import LocalCharts, build_local_charts
from .sampling import EmptyBoundaryError

FieldLike = Union[float, Callable[[np.ndarray], np.ndarray]]


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` holds the last relative residual."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class StatisticProblem:
    """u(x) = E^x[ int_0^tau g(X_t) dt + f(X_tau) ]  <=>  L u = -g,  u = f on the boundary."""

    spec: DriftDiffusionSpec
    degree: int = 4
    g: FieldLike = 1.0
    f: FieldLike = 0.0

    def source(self, x) -> np.ndarray:
        return _evaluate(self.g, x)

    def boundary_data(self, x) -> np.ndarray:
        return _evaluate(self.f, x)


def _evaluate(field: FieldLike, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    if callable(field):
        return np.asarray(field(x), dtype=float).reshape(len(x))
    return np.full(len(x), float(field))


def fpt_problem(spec: DriftDiffusionSpec, degree: int = 4) -> StatisticProblem:
    """Mean first-passage time: g = 1, f = 0, so L u = -1."""
    return StatisticProblem(spec, degree, 1.0, 0.0)


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    boundary: np.ndarray
    stencils: GeneratorStencils | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SolutionField:
    u: np.ndarray
    residual: float
    iterations: int
    seconds: float
    method: str = "direct"


def interior_charts(cloud: PointCloud, degree: int, **kw) -> LocalCharts:
    return build_local_charts(cloud, degree, centers=np.flatnonzero(~cloud.boundary), **kw)


def assemble(cloud: PointCloud, problem: StatisticProblem, charts: LocalCharts | None = None) -> SparseSystem:
    """Generator stencils on interior rows, identity rows on the boundary.

    Raises :class:`~surffpt.geometry.PointError` for a rank-deficient
    interior neighborhood and :class:`EmptyBoundaryError` if the cloud has
    no boundary points.
    """
    bnd = np.asarray(cloud.boundary, dtype=bool)
    if not bnd.any():
        raise EmptyBoundaryError("cloud has no boundary points")
    n = cloud.n
    x = cloud.positions
    rhs = np.empty(n)
    rhs[bnd] = problem.boundary_data(x[bnd])
    interior = np.flatnonzero(~bnd)
    if len(interior) == 0:
        return SparseSystem(sp.identity(n, format="csr"), rhs, bnd)
    if charts is None:
        charts = build_local_charts(cloud, problem.degree, centers=interior)
    elif not np.array_equal(charts.centers, interior):
        raise ValueError("charts must be built on exactly the interior points")
    gs = generator_stencils(charts, problem.spec)
    rhs[interior] = -problem.source(x[interior])
    A_int = gs.matrix(n).tocoo()
    b_idx = np.flatnonzero(bnd)
    rows = np.concatenate([interior[A_int.row], b_idx])
    cols = np.concatenate([A_int.col, b_idx])
    vals = np.concatenate([A_int.data, np.ones(len(b_idx))])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    return SparseSystem(A, rhs, bnd, gs)


def relative_residual(A, u, rhs) -> float:
    r = np.linalg.norm(A @ u - rhs)
    scale = np.linalg.norm(rhs)
    return float(r / scale) if scale > 0 else float(r)


def _solve_direct(A, rhs, rtol):
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from None
    u = lu.solve(rhs)
    res = relative_residual(A, u, rhs)
    steps = 0
    # a few sweeps of iterative refinement
    while res > rtol and steps < 3:
        u = u + lu.solve(rhs - A @ u)
        res = relative_residual(A, u, rhs)
        steps += 1
    if not np.all(np.isfinite(u)):
        raise SolverError("factorization is singular")
    return u, res, steps


def _solve_iterative(A, rhs, rtol, restart, maxiter):
    d = A.diagonal()
    if np.any(d == 0):
        raise SolverError("zero diagonal entry; Jacobi preconditioner undefined")
    M = spla.LinearOperator(A.shape, matvec=lambda v: v / d, dtype=float)
    count = [0]

    def tick(_):
        count[0] += 1

    u = np.zeros_like(rhs)
    tol = rtol
    for _ in range(3):
        cycles = max(1, math.ceil((maxiter - count[0]) / restart))
        u, _info = spla.gmres(A, rhs, x0=u, rtol=tol, atol=0.0, restart=restart, maxiter=cycles,
                              M=M, callback=tick, callback_type="pr_norm")
        res = relative_residual(A, u, rhs)
        # the Krylov stopping test is on the preconditioned residual
        if res <= rtol or count[0] >= maxiter:
            break
        tol = tol * 0.1
    if res > rtol:
        raise SolverError(f"GMRES did not converge after {count[0]} iterations "
                          f"(relative residual {res:.3e})", res)
    return u, res, count[0]


def solve(system: SparseSystem, method: str = "direct", rtol: float = TOL.solver_rtol,
          restart: int = 100, maxiter: int = 10000) -> SolutionField:
    A, rhs = system.matrix, system.rhs
    t0 = time.perf_counter()
    if method == "direct":
        u, res, its = _solve_direct(A, rhs, rtol)
        if res > rtol:
            raise SolverError(f"direct solve residual {res:.3e} above {rtol:g}", res)
    elif method == "iterative":
        u, res, its = _solve_iterative(A, rhs, rtol, restart, maxiter)
    else:
        raise ValueError(f"unknown solver {method!r}")
    return SolutionField(u, res, its, time.perf_counter() - t0, method)


def evaluate_statistic(cloud: PointCloud, problem: StatisticProblem, method: str = "direct",
                       charts: LocalCharts | None = None) -> SolutionField:
    return solve(assemble(cloud, problem, charts), method)


def solve_fpt(cloud: PointCloud, spec: DriftDiffusionSpec, degree: int = 4, method: str = "direct",
              charts: LocalCharts | None = None) -> SolutionField:
    return evaluate_statistic(cloud, fpt_problem(spec, degree), method, charts)
