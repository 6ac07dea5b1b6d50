"""Generalized moving least squares (GMLS).

A GMLS fit solves

    min_p  sum_j (u_j - p(x_j))^2 w_j,   p in V_m,

with compactly supported weights ``w_j = (1 - r_j/eps)_+^p``.  A linear
target functional applied to the fit is a fixed linear combination of the
samples, so the per-neighborhood "stencil" is all downstream code needs.

Monomials are taken in coordinates shifted to a center and divided by the
support radius, which keeps the design matrix well conditioned under
refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np
import scipy.linalg as sla

from .config import TOL, WEIGHT_EXPONENT


class RankDeficientError(np.linalg.LinAlgError):
    """The weighted design matrix does not have full column rank."""


@dataclass(frozen=True)
class PolynomialBasis:
    """Scaled monomials ((x - c)/scale)^alpha with |alpha| <= degree."""

    degree: int
    nvars: int = 2

    @cached_property
    def exponents(self) -> np.ndarray:
        exps = [e for e in product(range(self.degree + 1), repeat=self.nvars) if sum(e) <= self.degree]
        exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
        return np.array(exps, dtype=int).reshape(-1, self.nvars)

    @property
    def dim(self) -> int:
        return math.comb(self.degree + self.nvars, self.nvars)

    def index(self, alpha) -> int:
        hit = np.flatnonzero((self.exponents == np.asarray(alpha)).all(axis=1))
        if hit.size == 0:
            raise KeyError(f"monomial {tuple(alpha)} not in degree-{self.degree} basis")
        return int(hit[0])

    def evaluate(self, x, center=None, scale: float = 1.0) -> np.ndarray:
        """Basis values, shape (..., dim), for points of shape (..., nvars)."""
        x = np.asarray(x, dtype=float)
        if center is not None:
            x = x - center
        x = x / scale
        # powers table (..., nvars, degree+1)
        pw = x[..., :, None] ** np.arange(self.degree + 1)
        out = np.ones(x.shape[:-1] + (self.dim,))
        for v in range(self.nvars):
            out = out * pw[..., v, :][..., self.exponents[:, v]]
        return out


@dataclass(frozen=True)
class WeightFunction:
    epsilon: float
    p: int = WEIGHT_EXPONENT

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.clip(1.0 - r / self.epsilon, 0.0, None) ** self.p


# -- target functionals ------------------------------------------------------
# A functional is represented by its values on the basis, tau[phi_i].


def derivative_functional(basis: PolynomialBasis, alpha, scale: float = 1.0) -> np.ndarray:
    """tau = d^alpha/dx^alpha evaluated at the basis center."""
    alpha = np.asarray(alpha, dtype=int)
    tau = np.zeros(basis.dim)
    if alpha.sum() <= basis.degree:
        fact = float(np.prod([math.factorial(int(a)) for a in alpha]))
        tau[basis.index(alpha)] = fact / scale ** int(alpha.sum())
    return tau


def point_functional(basis: PolynomialBasis, x, center=None, scale: float = 1.0) -> np.ndarray:
    return basis.evaluate(np.asarray(x, dtype=float)[None], center, scale)[0]


def laplacian_functional(basis: PolynomialBasis, scale: float = 1.0) -> np.ndarray:
    tau = np.zeros(basis.dim)
    for v in range(basis.nvars):
        alpha = np.zeros(basis.nvars, dtype=int)
        alpha[v] = 2
        tau += derivative_functional(basis, alpha, scale)
    return tau


#: chart derivative multi-indices used by the surface operators
CHART_DERIVATIVES = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def chart_derivative_functionals(basis: PolynomialBasis, scale: float) -> np.ndarray:
    """Columns d_u, d_v, d_uu, d_uv, d_vv at the origin, shape (dim, 5)."""
    return np.column_stack([derivative_functional(basis, a, scale) for a in CHART_DERIVATIVES])


# -- fits ----------------------------------------------------------------------


@dataclass
class GMLSFit:
    coefficients: np.ndarray
    basis: PolynomialBasis
    center: np.ndarray
    scale: float
    condition: float
    residual: float
    rank: int

    def __call__(self, x) -> np.ndarray:
        return self.basis.evaluate(x, self.center, self.scale) @ self.coefficients


@dataclass
class _Factor:
    """Orthogonal factorization of the sqrt-weighted design matrix."""

    sqrt_w: np.ndarray
    q: np.ndarray
    r: np.ndarray | None
    perm: np.ndarray | None
    # truncated-SVD fallback: A = U diag(s) Vt
    svd: tuple | None
    condition: float

    def coefficients(self, rhs: np.ndarray) -> np.ndarray:
        """Least-squares coefficients for right-hand sides (rows already sqrt-weighted)."""
        if self.svd is None:
            y = sla.solve_triangular(self.r, self.q.T @ rhs)
            out = np.empty_like(y)
            out[self.perm] = y
            return out
        U, s, Vt = self.svd
        return Vt.T @ ((U.T @ rhs) / s[:, None] if rhs.ndim == 2 else (U.T @ rhs) / s)

    def stencils(self, targets: np.ndarray) -> np.ndarray:
        """Sample weights for targets of shape (dim, t); returns (k, t)."""
        if self.svd is None:
            z = sla.solve_triangular(self.r, targets[self.perm], trans="T")
            return self.sqrt_w[:, None] * (self.q @ z)
        U, s, Vt = self.svd
        return self.sqrt_w[:, None] * (U @ ((Vt @ targets) / s[:, None]))


def _factor(P: np.ndarray, w: np.ndarray) -> _Factor:
    k, d = P.shape
    if k < d or np.count_nonzero(w > 0) < d:
        raise RankDeficientError(f"{np.count_nonzero(w > 0)} weighted samples for {d} unknowns")
    sw = np.sqrt(w)
    A = sw[:, None] * P
    q, r, perm = sla.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    cond = float(diag[0] / diag[-1]) if diag[-1] > 0 else math.inf
    if diag[-1] > TOL.qr_rank * diag[0]:
        return _Factor(sw, q, r, perm, None, cond)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[-1] <= TOL.svd_cutoff * s[0]:
        rank = int(np.count_nonzero(s > TOL.svd_cutoff * s[0]))
        raise RankDeficientError(f"design matrix rank {rank} < {d}")
    return _Factor(sw, q, None, None, (U, s, Vt), float(s[0] / s[-1]))


def fit(positions, values, weights: WeightFunction, basis: PolynomialBasis, center=None) -> GMLSFit:
    """Weighted least-squares polynomial fit of ``values`` sampled at ``positions``."""
    x = np.asarray(positions, dtype=float).reshape(-1, basis.nvars)
    u = np.asarray(values, dtype=float)
    c = x[0] * 0.0 if center is None else np.asarray(center, dtype=float)
    r = np.linalg.norm(x - c, axis=1)
    w = weights(r)
    P = basis.evaluate(x, c, weights.epsilon)
    f = _factor(P, w)
    coef = f.coefficients(f.sqrt_w * u)
    res = f.sqrt_w * (P @ coef - u)
    # residual of the weighted normal equations, relative to the data scale
    normal = (f.sqrt_w[:, None] * P).T @ res
    scale = np.linalg.norm((f.sqrt_w[:, None] * P).T @ (f.sqrt_w * u)) or 1.0
    return GMLSFit(coef, basis, c, weights.epsilon, f.condition, float(np.linalg.norm(normal) / scale),
                   basis.dim)


def apply_target(fit_: GMLSFit, target: np.ndarray) -> float | np.ndarray:
    """tau[Phi]^T a* for one functional (vector) or several (columns)."""
    return np.asarray(target).T @ fit_.coefficients


def stencil_weights(positions, weights: WeightFunction, basis: PolynomialBasis, targets,
                    center=None) -> np.ndarray:
    """Weights w with tau~[u] = sum_j w_j u_j; ``targets`` is (dim,) or (dim, t)."""
    x = np.asarray(positions, dtype=float).reshape(-1, basis.nvars)
    c = x[0] * 0.0 if center is None else np.asarray(center, dtype=float)
    w = weights(np.linalg.norm(x - c, axis=1))
    f = _factor(basis.evaluate(x, c, weights.epsilon), w)
    T = np.asarray(targets, dtype=float)
    out = f.stencils(T.reshape(basis.dim, -1))
    return out[:, 0] if T.ndim == 1 else out


def batched_stencils(coords: np.ndarray, valid: np.ndarray, epsilon: np.ndarray,
                     basis: PolynomialBasis, targets: np.ndarray, p: int = WEIGHT_EXPONENT):
    """Stencils for many neighborhoods at once.

    ``coords`` is (n, k, nvars) relative to each center, ``valid`` masks the
    padding and ``targets`` is (dim, t) in the basis scaled by each row's
    epsilon, so derivative targets built with ``scale=1`` need their
    stencils divided by eps^|alpha| afterwards.
    Returns (n, k, t); padded entries are zero.  Rows whose unpivoted QR
    looks rank deficient are redone through the pivoted/SVD path, which
    raises :class:`RankDeficientError` if they really are.
    """
    n, k, _ = coords.shape
    r = np.linalg.norm(coords, axis=-1)
    w = np.where(valid, np.clip(1.0 - r / epsilon[:, None], 0.0, None) ** p, 0.0)
    P = basis.evaluate(coords / epsilon[:, None, None])
    sw = np.sqrt(w)
    A = sw[..., None] * P
    out = np.zeros((n, k, targets.shape[1]))
    if k < basis.dim:
        raise RankDeficientError(f"{k} samples for {basis.dim} unknowns")
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    good = diag.min(axis=1) > TOL.qr_rank * diag.max(axis=1)
    if good.any():
        Rg = R[good]
        # R^T z = tau  (lower triangular), batched
        z = np.linalg.solve(np.swapaxes(Rg, 1, 2), np.broadcast_to(targets, (len(Rg),) + targets.shape))
        out[good] = sw[good][..., None] * (Q[good] @ z)
    for i in np.flatnonzero(~good):
        f = _factor(P[i], w[i])
        out[i] = f.stencils(targets)
    return out
