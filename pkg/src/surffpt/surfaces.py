"""Benchmark surfaces with exact parameterizations and geometry oracles.

Every model exposes one or more coordinate charts ``sigma(q, chart)`` with
their first and second derivatives, an implicit residual ``F(x)`` used for
projection, and (for surfaces with an edge) a domain function that is
non-negative on the retained part of the surface.

Chart coordinate conventions
----------------------------
Sphere-like surfaces use ``q = (theta, phi)`` with ``theta`` the azimuth and
``phi`` the polar angle measured from the chart's pole axis.  Chart 0 has its
pole on +z, chart 1 on +x, so every point is covered by a chart whose polar
angle stays well away from 0 and pi.  Tori use ``q = (u, v)`` with ``u`` the
angle around the symmetry axis and ``v`` the angle around the tube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .config import POLE_MARGIN, TOL

TWO_PI = 2.0 * math.pi


class ChartError(ValueError):
    """Chart coordinates outside the chart's parameter range."""


class SingularChartError(ValueError):
    """Chart coordinates too close to a parameterization singularity."""


class ProjectionError(RuntimeError):
    """Newton projection onto the implicit surface failed to converge."""


# ---------------------------------------------------------------------------
# geometry records
# ---------------------------------------------------------------------------


@dataclass
class ExactGeometry:
    """Differential geometry of a chart at a batch of points.

    Arrays carry a leading batch axis.  ``christoffel[..., k, i, j]`` holds
    the second-kind symbol with upper index ``k``.
    """

    sigma: np.ndarray
    sigma_q: np.ndarray
    sigma_qq: np.ndarray
    metric: np.ndarray
    metric_inv: np.ndarray
    sqrt_g: np.ndarray
    christoffel: np.ndarray
    normal: np.ndarray
    second_form: np.ndarray
    gaussian_curvature: np.ndarray

    @property
    def weingarten(self) -> np.ndarray:
        return self.metric_inv @ self.second_form


def geometry_from_derivatives(s, s_q, s_qq) -> ExactGeometry:
    """Assemble metric, Christoffel symbols and curvature from chart derivatives."""
    g = np.einsum("...ad,...bd->...ab", s_q, s_q)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    g_inv = np.empty_like(g)
    g_inv[..., 0, 0] = g[..., 1, 1] / det
    g_inv[..., 1, 1] = g[..., 0, 0] / det
    g_inv[..., 0, 1] = -g[..., 0, 1] / det
    g_inv[..., 1, 0] = -g[..., 1, 0] / det
    cross = np.cross(s_q[..., 0, :], s_q[..., 1, :])
    sqrt_g = np.linalg.norm(cross, axis=-1)
    normal = cross / sqrt_g[..., None]
    # first-kind symbols sigma_l . sigma_ij, raised with the inverse metric
    first = np.einsum("...ld,...ijd->...lij", s_q, s_qq)
    christoffel = np.einsum("...kl,...lij->...kij", g_inv, first)
    second = np.einsum("...d,...ijd->...ij", normal, s_qq)
    K = (second[..., 0, 0] * second[..., 1, 1] - second[..., 0, 1] * second[..., 1, 0]) / det
    return ExactGeometry(s, s_q, s_qq, g, g_inv, sqrt_g, christoffel, normal, second, K)


# 6th-order central stencils on offsets -3..3
_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
_D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
_OFF = np.arange(-3, 4)


def fd_chart_derivatives(func, q, step1=1e-4, step2=1e-3):
    """Sixth-order central differences of ``func`` in two chart variables.

    One Richardson level (steps h and h/2) is applied to every derivative.
    ``func`` maps an (N, 2) array to an (N, D) array.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    f0 = np.asarray(func(q))
    n, d = f0.shape

    def first(h):
        out = np.zeros((n, 2, d))
        for a in range(2):
            for o, c in zip(_OFF, _D1):
                if c == 0.0:
                    continue
                qs = q.copy()
                qs[:, a] += o * h
                out[:, a] += c * func(qs)
        return out / h

    def second(h):
        out = np.zeros((n, 2, 2, d))
        for a in range(2):
            for o, c in zip(_OFF, _D2):
                qs = q.copy()
                qs[:, a] += o * h
                out[:, a, a] += c * func(qs)
        out[:, 0, 0] /= h * h
        out[:, 1, 1] /= h * h
        mixed = np.zeros((n, d))
        for o1, c1 in zip(_OFF, _D1):
            if c1 == 0.0:
                continue
            for o2, c2 in zip(_OFF, _D1):
                if c2 == 0.0:
                    continue
                qs = q.copy()
                qs[:, 0] += o1 * h
                qs[:, 1] += o2 * h
                mixed += c1 * c2 * func(qs)
        mixed /= h * h
        out[:, 0, 1] = mixed
        out[:, 1, 0] = mixed
        return out

    d1 = (64.0 * first(step1 / 2) - first(step1)) / 63.0
    d2 = (64.0 * second(step2 / 2) - second(step2)) / 63.0
    return f0, d1, d2


# ---------------------------------------------------------------------------
# base model
# ---------------------------------------------------------------------------


def _as_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q.reshape(1, 2) if q.ndim == 1 else q


def _as_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(1, 3) if x.ndim == 1 else x


@dataclass(frozen=True)
class Patch:
    chart: int
    lo: tuple[float, float]
    hi: tuple[float, float]


class SurfaceModel:
    """Common interface of the benchmark surfaces."""

    kind: str = "surface"
    n_charts: int = 1
    #: charts whose second coordinate is a polar angle (singular at 0 and pi)
    polar_charts: tuple[int, ...] = ()

    # -- charts ----------------------------------------------------------
    def chart_box(self, chart: int = 0):
        raise NotImplementedError

    def periodic(self, chart: int = 0) -> tuple[bool, bool]:
        return (False, False)

    def sigma(self, q, chart: int = 0) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, q, chart: int = 0):
        """Return (sigma, sigma_q, sigma_qq) at chart coordinates ``q``."""
        return fd_chart_derivatives(lambda qq: self.sigma(qq, chart), q)

    def chart_coords(self, x, chart: int = 0) -> np.ndarray:
        raise NotImplementedError

    def chart_quality(self, q, chart: int = 0) -> np.ndarray:
        """Larger is better; used to pick a chart for a point."""
        q = _as_q(q)
        if chart in self.polar_charts:
            return np.sin(q[:, 1])
        return np.ones(len(q))

    def locate(self, x):
        """Best chart index and chart coordinates for each point of ``x``."""
        x = _as_x(x)
        best_q = self.chart_coords(x, 0)
        best_c = np.zeros(len(x), dtype=int)
        best_s = self.chart_quality(best_q, 0)
        for c in range(1, self.n_charts):
            q = self.chart_coords(x, c)
            s = self.chart_quality(q, c)
            s = np.where(self._chart_valid_for(x, c), s, -np.inf)
            better = s > best_s
            best_q[better] = q[better]
            best_c[better] = c
            best_s[better] = s[better]
        return best_q, best_c

    def _chart_valid_for(self, x, chart: int) -> np.ndarray:
        return np.ones(len(x), dtype=bool)

    def check_chart(self, q, chart: int = 0) -> np.ndarray:
        """Validate and wrap chart coordinates; raises on range/singularity errors."""
        q = _as_q(q).copy()
        lo, hi = self.chart_box(chart)
        per = self.periodic(chart)
        for a in range(2):
            if per[a]:
                q[:, a] = lo[a] + np.mod(q[:, a] - lo[a], hi[a] - lo[a])
            elif np.any(q[:, a] < lo[a] - 1e-12) or np.any(q[:, a] > hi[a] + 1e-12):
                raise ChartError(f"chart {chart} coordinate {a} outside [{lo[a]}, {hi[a]}]")
        if chart in self.polar_charts:
            phi = q[:, 1]
            if np.any(phi < POLE_MARGIN) or np.any(phi > math.pi - POLE_MARGIN):
                raise SingularChartError(f"polar angle within {POLE_MARGIN} rad of a pole")
        return q

    # -- implicit form ---------------------------------------------------
    def implicit(self, x) -> np.ndarray:
        raise NotImplementedError

    def implicit_grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def project(self, x, tol: float = TOL.projection, maxiter: int = TOL.projection_maxiter):
        """Newton iteration on F along its gradient until |F| < tol."""
        x = _as_x(x).copy()
        active = np.arange(len(x))
        for _ in range(maxiter):
            f = self.implicit(x[active])
            done = np.abs(f) < tol
            active = active[~done]
            if active.size == 0:
                return x
            f = f[~done]
            gr = self.implicit_grad(x[active])
            x[active] -= (f / np.einsum("ij,ij->i", gr, gr))[:, None] * gr
        f = self.implicit(x[active])
        if np.any(np.abs(f) >= tol):
            raise ProjectionError(f"projection did not reach {tol:g} for {active.size} points")
        return x

    def normal(self, x) -> np.ndarray:
        gr = self.implicit_grad(_as_x(x))
        return gr / np.linalg.norm(gr, axis=1, keepdims=True)

    # -- domain (surfaces with an edge) ----------------------------------
    has_edge: bool = False

    def domain(self, x) -> np.ndarray:
        """Non-negative on the retained part of the surface."""
        return np.full(len(_as_x(x)), np.inf)

    def clamp(self, x, margin: float) -> np.ndarray:
        """Move points that left the domain back inside, onto the surface."""
        return _as_x(x)

    def edge_nodes(self, spacing: float) -> np.ndarray:
        return np.zeros((0, 3))

    # -- sampling support -------------------------------------------------
    def seed_patches(self) -> list[Patch]:
        lo, hi = self.chart_box(0)
        return [Patch(0, tuple(lo), tuple(hi))]

    def area_element(self, q, chart: int = 0) -> np.ndarray:
        _, s_q, _ = self.derivatives(q, chart)
        return np.linalg.norm(np.cross(s_q[:, 0], s_q[:, 1]), axis=1)

    def patch_area(self, patch: Patch, n: int = 200) -> float:
        xs, ws = np.polynomial.legendre.leggauss(n)
        lo, hi = np.asarray(patch.lo), np.asarray(patch.hi)
        a = lo[0] + (xs + 1) * (hi[0] - lo[0]) / 2
        b = lo[1] + (xs + 1) * (hi[1] - lo[1]) / 2
        A, B = np.meshgrid(a, b, indexing="ij")
        W = np.outer(ws, ws) * (hi[0] - lo[0]) * (hi[1] - lo[1]) / 4
        q = np.column_stack([A.ravel(), B.ravel()])
        dens = self.area_element(q, patch.chart) * self._inside_q(q, patch.chart)
        return float(np.sum(dens * W.ravel()))

    def _inside_q(self, q, chart: int) -> np.ndarray:
        return np.ones(len(q))

    def area(self) -> float:
        return sum(self.patch_area(p) for p in self.seed_patches())

    def spec(self) -> str:
        """Compact textual description, parsable by :func:`parse_surface`."""
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec()}>"


def exact_geometry_at(model: SurfaceModel, q, chart: int = 0) -> ExactGeometry:
    """Closed-form (or finite-difference) geometry of ``model`` at chart coordinates."""
    q = model.check_chart(q, chart)
    return geometry_from_derivatives(*model.derivatives(q, chart))


def exact_geometry_at_points(model: SurfaceModel, x):
    """Geometry at surface points, each evaluated in its best chart.

    Returns ``(geometry, q, chart)``.
    """
    x = _as_x(x)
    q, chart = model.locate(x)
    parts = []
    geo = None
    for c in np.unique(chart):
        sel = chart == c
        parts.append((sel, exact_geometry_at(model, q[sel], int(c))))
    fields_ = ExactGeometry.__dataclass_fields__
    out = {}
    for name in fields_:
        ref = getattr(parts[0][1], name)
        arr = np.empty((len(x),) + ref.shape[1:])
        for sel, g in parts:
            arr[sel] = getattr(g, name)
        out[name] = arr
    geo = ExactGeometry(**out)
    return geo, q, chart


# ---------------------------------------------------------------------------
# sphere-like surfaces
# ---------------------------------------------------------------------------

# (pole axis, first equatorial axis, second equatorial axis) per chart
_SPH_AXES = (
    (np.array([0.0, 0, 1]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])),
    (np.array([1.0, 0, 0]), np.array([0.0, 1, 0]), np.array([0.0, 0, 1])),
)


def _direction_derivs(q, chart):
    """Unit direction d(theta, phi) and its first/second derivatives."""
    ep, e1, e2 = _SPH_AXES[chart]
    th, ph = q[:, 0:1], q[:, 1:2]
    ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ph), np.sin(ph)
    radial = ct * e1 + st * e2
    tang = -st * e1 + ct * e2
    d = cp * ep + sp * radial
    d_q = np.stack([sp * tang, -sp * ep + cp * radial], axis=1)
    d_qq = np.empty((len(q), 2, 2, 3))
    d_qq[:, 0, 0] = -sp * radial
    d_qq[:, 0, 1] = d_qq[:, 1, 0] = cp * tang
    d_qq[:, 1, 1] = -cp * ep - sp * radial
    return d, d_q, d_qq


def _spherical_coords(x, chart):
    ep, e1, e2 = _SPH_AXES[chart]
    a, b, c = x @ e1, x @ e2, x @ ep
    r = np.sqrt(a * a + b * b + c * c)
    th = np.mod(np.arctan2(b, a), TWO_PI)
    ph = np.arccos(np.clip(c / r, -1.0, 1.0))
    return np.column_stack([th, ph])


class _SphereLike(SurfaceModel):
    n_charts = 2
    polar_charts = (0, 1)

    def chart_box(self, chart=0):
        return np.array([0.0, 0.0]), np.array([TWO_PI, math.pi])

    def periodic(self, chart=0):
        return (True, False)


@dataclass(frozen=True, repr=False)
class Ellipsoid(_SphereLike):
    """x^2/a^2 + y^2/b^2 + z^2 = s0^2 (semi-axes a*s0, b*s0, s0)."""

    a: float = 1.2
    b: float = 1.2
    s0: float = 1.0
    kind: str = field(default="ellipsoid", init=False)

    @property
    def _scale(self):
        return np.array([self.a * self.s0, self.b * self.s0, self.s0])

    def sigma(self, q, chart=0):
        d, _, _ = _direction_derivs(_as_q(q), chart)
        return d * self._scale

    def derivatives(self, q, chart=0):
        d, d_q, d_qq = _direction_derivs(_as_q(q), chart)
        s = self._scale
        return d * s, d_q * s, d_qq * s

    def chart_coords(self, x, chart=0):
        return _spherical_coords(_as_x(x) / self._scale, chart)

    def implicit(self, x):
        x = _as_x(x)
        return np.sqrt((x[:, 0] / self.a) ** 2 + (x[:, 1] / self.b) ** 2 + x[:, 2] ** 2) - self.s0

    def implicit_grad(self, x):
        x = _as_x(x)
        r = np.sqrt((x[:, 0] / self.a) ** 2 + (x[:, 1] / self.b) ** 2 + x[:, 2] ** 2)
        return np.column_stack([x[:, 0] / self.a**2, x[:, 1] / self.b**2, x[:, 2]]) / r[:, None]

    def spec(self):
        return f"ellipsoid:{self.a!r},{self.b!r},{self.s0!r}"


@dataclass(frozen=True, repr=False)
class Sphere(_SphereLike):
    """Sphere of radius R, optionally clipped to z >= z_min."""

    R: float = 1.0
    z_min: float | None = None
    kind: str = field(default="sphere", init=False)

    @property
    def has_edge(self):
        return self.z_min is not None

    @property
    def _phi_max(self):
        return math.acos(self.z_min / self.R)

    def sigma(self, q, chart=0):
        d, _, _ = _direction_derivs(_as_q(q), chart)
        return self.R * d

    def derivatives(self, q, chart=0):
        d, d_q, d_qq = _direction_derivs(_as_q(q), chart)
        return self.R * d, self.R * d_q, self.R * d_qq

    def chart_coords(self, x, chart=0):
        return _spherical_coords(_as_x(x), chart)

    def implicit(self, x):
        return np.linalg.norm(_as_x(x), axis=1) - self.R

    def implicit_grad(self, x):
        x = _as_x(x)
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    def domain(self, x):
        x = _as_x(x)
        if self.z_min is None:
            return np.full(len(x), np.inf)
        return x[:, 2] - self.z_min

    def clamp(self, x, margin):
        x = _as_x(x)
        if self.z_min is None:
            return x
        q = self.chart_coords(x, 0)
        lim = self._phi_max - margin / self.R
        bad = q[:, 1] > lim
        if np.any(bad):
            q[bad, 1] = lim
            x = x.copy()
            x[bad] = self.sigma(q[bad], 0)
        return x

    def edge_nodes(self, spacing):
        if self.z_min is None:
            return np.zeros((0, 3))
        rho = math.sqrt(self.R**2 - self.z_min**2)
        m = max(3, int(round(TWO_PI * rho / spacing)))
        t = TWO_PI * np.arange(m) / m
        return np.column_stack([rho * np.cos(t), rho * np.sin(t), np.full(m, self.z_min)])

    def seed_patches(self):
        hi = math.pi if self.z_min is None else self._phi_max
        return [Patch(0, (0.0, 0.0), (TWO_PI, hi))]

    def spec(self):
        return f"sphere:{self.R!r}" if self.z_min is None else f"sphere:{self.R!r},{self.z_min!r}"


def _chebyshev_u(n: int):
    """Power-series coefficients of the Chebyshev polynomial U_n."""
    u0, u1 = np.polynomial.Polynomial([1.0]), np.polynomial.Polynomial([0.0, 2.0])
    if n == 0:
        return u0
    t = np.polynomial.Polynomial([0.0, 1.0])
    for _ in range(n - 1):
        u0, u1 = u1, 2 * t * u1 - u0
    return u1


@dataclass(frozen=True, repr=False)
class RadialHarmonic(_SphereLike):
    """Star-shaped surface r(theta, phi) = 1 + r0 sin(m_phi phi) cos(m_theta theta)."""

    r0: float = 0.1
    m_phi: int = 3
    m_theta: int = 1
    kind: str = field(default="radial_harmonic", init=False)

    def _r_angles(self, th, ph):
        r0, k, m = self.r0, self.m_phi, self.m_theta
        skp, ckp = np.sin(k * ph), np.cos(k * ph)
        smt, cmt = np.sin(m * th), np.cos(m * th)
        r = 1 + r0 * skp * cmt
        r_t = -r0 * m * skp * smt
        r_p = r0 * k * ckp * cmt
        r_tt = -r0 * m * m * skp * cmt
        r_tp = -r0 * m * k * ckp * smt
        r_pp = -r0 * k * k * skp * cmt
        return r, r_t, r_p, r_tt, r_tp, r_pp

    def radius_of_direction(self, d):
        d = _as_x(d)
        if self.m_theta == 1:
            # sin(k phi) cos(theta) = U_{k-1}(cos phi) * d_x, smooth through the poles
            u = _chebyshev_u(self.m_phi - 1)
            return 1 + self.r0 * u(d[:, 2]) * d[:, 0]
        q = _spherical_coords(d, 0)
        return self._r_angles(q[:, 0], q[:, 1])[0]

    def sigma(self, q, chart=0):
        d, _, _ = _direction_derivs(_as_q(q), chart)
        return self.radius_of_direction(d)[:, None] * d

    def derivatives(self, q, chart=0):
        q = _as_q(q)
        if chart != 0:
            return super().derivatives(q, chart)
        d, d_q, d_qq = _direction_derivs(q, 0)
        r, r_t, r_p, r_tt, r_tp, r_pp = self._r_angles(q[:, 0], q[:, 1])
        r_q = np.column_stack([r_t, r_p])
        r_qq = np.stack([np.column_stack([r_tt, r_tp]), np.column_stack([r_tp, r_pp])], axis=1)
        s = r[:, None] * d
        s_q = r_q[:, :, None] * d[:, None, :] + r[:, None, None] * d_q
        s_qq = (
            r_qq[..., None] * d[:, None, None, :]
            + r_q[:, :, None, None] * d_q[:, None, :, :]
            + r_q[:, None, :, None] * d_q[:, :, None, :]
            + r[:, None, None, None] * d_qq
        )
        return s, s_q, s_qq

    def chart_coords(self, x, chart=0):
        return _spherical_coords(_as_x(x), chart)

    def implicit(self, x):
        x = _as_x(x)
        r = np.linalg.norm(x, axis=1)
        return r - self.radius_of_direction(x / r[:, None])

    def implicit_grad(self, x):
        x = _as_x(x)
        rad = np.linalg.norm(x, axis=1)
        q = _spherical_coords(x, 0)
        th, ph = q[:, 0], q[:, 1]
        k, m, r0 = self.m_phi, self.m_theta, self.r0
        sp = np.sin(ph)
        small = np.abs(sp) < 1e-8
        # sin(k phi)/sin(phi), with its limit at the poles
        ratio = np.where(small, k * np.cos(k * ph) / np.where(small, np.cos(ph), 1.0),
                         np.sin(k * ph) / np.where(small, 1.0, sp))
        rt_over_sin = -r0 * m * ratio * np.sin(m * th)
        r_p = r0 * k * np.cos(k * ph) * np.cos(m * th)
        e_t = np.column_stack([-np.sin(th), np.cos(th), np.zeros_like(th)])
        e_p = np.column_stack([np.cos(ph) * np.cos(th), np.cos(ph) * np.sin(th), -sp])
        grad_r = (rt_over_sin[:, None] * e_t + r_p[:, None] * e_p) / rad[:, None]
        return x / rad[:, None] - grad_r

    def spec(self):
        return f"radial:{self.r0!r},{self.m_phi},{self.m_theta}"


# ---------------------------------------------------------------------------
# tori
# ---------------------------------------------------------------------------


@dataclass(frozen=True, repr=False)
class Torus(SurfaceModel):
    """Torus about the z axis, major radius s1, tube radius s2."""

    s1: float = 0.7
    s2: float = 0.3
    kind: str = field(default="torus", init=False)

    def chart_box(self, chart=0):
        return np.array([0.0, 0.0]), np.array([TWO_PI, TWO_PI])

    def periodic(self, chart=0):
        return (True, True)

    def sigma(self, q, chart=0):
        q = _as_q(q)
        u, v = q[:, 0], q[:, 1]
        w = self.s1 + self.s2 * np.cos(v)
        return np.column_stack([w * np.cos(u), w * np.sin(u), self.s2 * np.sin(v)])

    def derivatives(self, q, chart=0):
        q = _as_q(q)
        u, v = q[:, 0], q[:, 1]
        R, r = self.s1, self.s2
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        w = R + r * cv
        z0 = np.zeros_like(u)
        s = np.column_stack([w * cu, w * su, r * sv])
        s_u = np.column_stack([-w * su, w * cu, z0])
        s_v = np.column_stack([-r * sv * cu, -r * sv * su, r * cv])
        s_uu = np.column_stack([-w * cu, -w * su, z0])
        s_uv = np.column_stack([r * sv * su, -r * sv * cu, z0])
        s_vv = np.column_stack([-r * cv * cu, -r * cv * su, -r * sv])
        s_q = np.stack([s_u, s_v], axis=1)
        s_qq = np.stack([np.stack([s_uu, s_uv], 1), np.stack([s_uv, s_vv], 1)], axis=1)
        return s, s_q, s_qq

    def chart_coords(self, x, chart=0):
        x = _as_x(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        u = np.mod(np.arctan2(x[:, 1], x[:, 0]), TWO_PI)
        v = np.mod(np.arctan2(x[:, 2], rho - self.s1), TWO_PI)
        return np.column_stack([u, v])

    def implicit(self, x):
        x = _as_x(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        return np.hypot(rho - self.s1, x[:, 2]) - self.s2

    def implicit_grad(self, x):
        x = _as_x(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        d = np.hypot(rho - self.s1, x[:, 2])
        c = (rho - self.s1) / (rho * d)
        return np.column_stack([c * x[:, 0], c * x[:, 1], x[:, 2] / d])

    def gaussian_curvature(self, q):
        """Closed form cos v / (s2 (s1 + s2 cos v))."""
        v = _as_q(q)[:, 1]
        return np.cos(v) / (self.s2 * (self.s1 + self.s2 * np.cos(v)))

    def spec(self):
        return f"torus:{self.s1!r},{self.s2!r}"


@dataclass(frozen=True, repr=False)
class TruncatedTorus(Torus):
    """Torus restricted to u in [u_min, u_max]."""

    u_min: float = math.pi / 4
    u_max: float = 7 * math.pi / 4
    kind: str = field(default="truncated_torus", init=False)
    has_edge: bool = field(default=True, init=False)

    def chart_box(self, chart=0):
        return np.array([self.u_min, 0.0]), np.array([self.u_max, TWO_PI])

    def periodic(self, chart=0):
        return (False, True)

    def _u(self, x):
        return np.mod(np.arctan2(x[:, 1], x[:, 0]), TWO_PI)

    def domain(self, x):
        x = _as_x(x)
        u = self._u(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        du = np.minimum(u - self.u_min, self.u_max - u)
        return rho * du

    def clamp(self, x, margin):
        x = _as_x(x)
        q = self.chart_coords(x)
        # u lives in [0, 2pi) and the removed wedge straddles 0, so a clip
        # sends each point to the nearer cut
        u = q[:, 0]
        rho = np.hypot(x[:, 0], x[:, 1])
        uu = np.clip(u, self.u_min + margin / rho, self.u_max - margin / rho)
        bad = uu != u
        if np.any(bad):
            q[bad, 0] = uu[bad]
            x = x.copy()
            x[bad] = self.sigma(q[bad])
        return x

    def edge_nodes(self, spacing):
        m = max(3, int(round(TWO_PI * self.s2 / spacing)))
        v = TWO_PI * np.arange(m) / m
        out = [self.sigma(np.column_stack([np.full(m, u), v])) for u in (self.u_min, self.u_max)]
        return np.vstack(out)

    def spec(self):
        return f"truncated_torus:{self.s1!r},{self.s2!r},{self.u_min!r},{self.u_max!r}"


@dataclass(frozen=True, repr=False)
class SlicedTorus(SurfaceModel):
    """Torus about the x axis, major radius ``major``, tube ``minor``, kept for z >= 0.

    X(u, v) = (minor sin v, sin u (major + minor cos v), -cos u (major + minor cos v)),
    so z >= 0 is u in [pi/2, 3pi/2].
    """

    minor: float = 0.4
    major: float = 1.0
    kind: str = field(default="sliced_torus", init=False)
    has_edge: bool = field(default=True, init=False)

    def chart_box(self, chart=0):
        return np.array([math.pi / 2, 0.0]), np.array([1.5 * math.pi, TWO_PI])

    def periodic(self, chart=0):
        return (False, True)

    def sigma(self, q, chart=0):
        q = _as_q(q)
        u, v = q[:, 0], q[:, 1]
        w = self.major + self.minor * np.cos(v)
        return np.column_stack([self.minor * np.sin(v), np.sin(u) * w, -np.cos(u) * w])

    def derivatives(self, q, chart=0):
        q = _as_q(q)
        u, v = q[:, 0], q[:, 1]
        r = self.minor
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        w = self.major + r * cv
        w_v, w_vv = -r * sv, -r * cv
        z0 = np.zeros_like(u)
        s = np.column_stack([r * sv, su * w, -cu * w])
        s_u = np.column_stack([z0, cu * w, su * w])
        s_v = np.column_stack([r * cv, su * w_v, -cu * w_v])
        s_uu = np.column_stack([z0, -su * w, cu * w])
        s_uv = np.column_stack([z0, cu * w_v, su * w_v])
        s_vv = np.column_stack([-r * sv, su * w_vv, -cu * w_vv])
        s_q = np.stack([s_u, s_v], axis=1)
        s_qq = np.stack([np.stack([s_uu, s_uv], 1), np.stack([s_uv, s_vv], 1)], axis=1)
        return s, s_q, s_qq

    def chart_coords(self, x, chart=0):
        x = _as_x(x)
        rho = np.hypot(x[:, 1], x[:, 2])
        u = np.mod(np.arctan2(x[:, 1], -x[:, 2]), TWO_PI)
        v = np.mod(np.arctan2(x[:, 0], rho - self.major), TWO_PI)
        return np.column_stack([u, v])

    def implicit(self, x):
        x = _as_x(x)
        rho = np.hypot(x[:, 1], x[:, 2])
        return np.hypot(rho - self.major, x[:, 0]) - self.minor

    def implicit_grad(self, x):
        x = _as_x(x)
        rho = np.hypot(x[:, 1], x[:, 2])
        d = np.hypot(rho - self.major, x[:, 0])
        c = (rho - self.major) / (rho * d)
        return np.column_stack([x[:, 0] / d, c * x[:, 1], c * x[:, 2]])

    def domain(self, x):
        return _as_x(x)[:, 2]

    def clamp(self, x, margin):
        x = _as_x(x)
        q = self.chart_coords(x)
        u = q[:, 0]
        w = np.hypot(x[:, 1], x[:, 2])
        lo = math.pi / 2 + margin / w
        hi = 1.5 * math.pi - margin / w
        # u lives in [0, 2pi), so clipping sends z < 0 to the nearer cut
        uu = np.clip(u, lo, hi)
        bad = uu != u
        if np.any(bad):
            q[bad, 0] = uu[bad]
            x = x.copy()
            x[bad] = self.sigma(q[bad])
        return x

    def edge_nodes(self, spacing):
        m = max(3, int(round(TWO_PI * self.minor / spacing)))
        v = TWO_PI * np.arange(m) / m
        out = [self.sigma(np.column_stack([np.full(m, u), v])) for u in (0.5 * math.pi, 1.5 * math.pi)]
        out = np.vstack(out)
        out[:, 2] = 0.0
        return out

    def spec(self):
        return f"sliced_torus:{self.minor!r},{self.major!r}"


# ---------------------------------------------------------------------------
# flat disk
# ---------------------------------------------------------------------------


@dataclass(frozen=True, repr=False)
class FlatDisk(SurfaceModel):
    """Disk of radius R in the plane z = 0."""

    R: float = 1.0
    kind: str = field(default="flat_disk", init=False)
    has_edge: bool = field(default=True, init=False)

    def chart_box(self, chart=0):
        return np.array([-self.R, -self.R]), np.array([self.R, self.R])

    def sigma(self, q, chart=0):
        q = _as_q(q)
        return np.column_stack([q[:, 0], q[:, 1], np.zeros(len(q))])

    def derivatives(self, q, chart=0):
        q = _as_q(q)
        n = len(q)
        s_q = np.zeros((n, 2, 3))
        s_q[:, 0, 0] = 1.0
        s_q[:, 1, 1] = 1.0
        return self.sigma(q), s_q, np.zeros((n, 2, 2, 3))

    def chart_coords(self, x, chart=0):
        return _as_x(x)[:, :2].copy()

    def implicit(self, x):
        return _as_x(x)[:, 2].copy()

    def implicit_grad(self, x):
        g = np.zeros_like(_as_x(x))
        g[:, 2] = 1.0
        return g

    def domain(self, x):
        x = _as_x(x)
        return self.R - np.hypot(x[:, 0], x[:, 1])

    def _inside_q(self, q, chart):
        return (np.hypot(q[:, 0], q[:, 1]) <= self.R).astype(float)

    def clamp(self, x, margin):
        x = _as_x(x).copy()
        rho = np.hypot(x[:, 0], x[:, 1])
        lim = self.R - margin
        bad = rho > lim
        x[bad, :2] *= (lim / rho[bad])[:, None]
        x[:, 2] = 0.0
        return x

    def edge_nodes(self, spacing):
        m = max(3, int(round(TWO_PI * self.R / spacing)))
        t = TWO_PI * np.arange(m) / m
        return np.column_stack([self.R * np.cos(t), self.R * np.sin(t), np.zeros(m)])

    def spec(self):
        return f"flat_disk:{self.R!r}"


# ---------------------------------------------------------------------------
# neck surface of revolution
# ---------------------------------------------------------------------------

NECK_CYLINDER_HEIGHT = 0.05


def _bump_parts(s, b):
    """exp(1 - b^2/(b^2 - s^2)) and the first two s-derivatives of its exponent."""
    den = b * b - s * s
    safe = den > 1e-300
    den_s = np.where(safe, den, 1.0)
    f = 1.0 - b * b / den_s
    E = np.where(safe, np.exp(np.where(safe, f, -np.inf)), 0.0)
    fp = -2.0 * b * b * s / den_s**2
    fpp = -2.0 * b * b * (b * b + 3.0 * s * s) / den_s**3
    return E, np.where(safe, fp, 0.0), np.where(safe, fpp, 0.0)


@dataclass(frozen=True, repr=False)
class Neck(SurfaceModel):
    """Unit hemisphere joined to a cylinder of radius r0 by a smooth bump profile.

    The meridian is a cylinder of radius ``r0`` on z in [0, 0.05], then

        r(z) = (1 - A) + A exp(1 - b^2 / (b^2 - (b + 0.05 - z)^2)),  A = 1 - r0,

    on z in [0.05, 0.05 + b], then a unit hemisphere centred at z_c = 0.05 + b.
    ``b`` is found by bisection so that the bump meridian has arc length pi/2,
    keeping the geodesic distance from the pole to z = 0 fixed at pi + 0.05.
    """

    r0: float = 0.5
    kind: str = field(default="neck", init=False)
    has_edge: bool = field(default=True, init=False)
    n_charts: int = field(default=3, init=False)
    polar_charts: tuple = field(default=(1, 2), init=False)

    @property
    def amplitude(self) -> float:
        return 1.0 - self.r0

    @property
    def b(self) -> float:
        return _neck_length(self.r0)

    @property
    def z_c(self) -> float:
        return NECK_CYLINDER_HEIGHT + self.b

    @property
    def height(self) -> float:
        return self.z_c + 1.0

    def profile(self, z):
        """Meridian radius r(z) and its first two z-derivatives on z <= z_c."""
        z = np.asarray(z, dtype=float)
        b, A = self.b, self.amplitude
        s = np.clip(self.z_c - z, 0.0, b)
        E, fp, fpp = _bump_parts(s, b)
        r = (1.0 - A) + A * E
        dr = -A * E * fp
        d2r = A * E * (fp * fp + fpp)
        below = z <= NECK_CYLINDER_HEIGHT
        r = np.where(below, self.r0, r)
        dr = np.where(below, 0.0, dr)
        d2r = np.where(below, 0.0, d2r)
        return r, dr, d2r

    def free_energy(self, z):
        """Entropic free energy Q(z) = -log(2 pi r(z)) along the axis."""
        z = np.asarray(z, dtype=float)
        r = np.where(z <= self.z_c, self.profile(z)[0],
                     np.sqrt(np.clip(1.0 - (z - self.z_c) ** 2, 0.0, None)))
        return -np.log(TWO_PI * r)

    # charts: 0 = (theta, z) below z_c; 1 = cap spherical about +z; 2 = cap spherical about +x
    def chart_box(self, chart=0):
        if chart == 0:
            return np.array([0.0, 0.0]), np.array([TWO_PI, self.z_c])
        return np.array([0.0, 0.0]), np.array([TWO_PI, math.pi])

    def periodic(self, chart=0):
        return (True, False)

    def _centre(self):
        return np.array([0.0, 0.0, self.z_c])

    def sigma(self, q, chart=0):
        return self.derivatives(q, chart)[0]

    def derivatives(self, q, chart=0):
        q = _as_q(q)
        if chart == 0:
            th, z = q[:, 0], q[:, 1]
            r, dr, d2r = self.profile(z)
            ct, st = np.cos(th), np.sin(th)
            z0 = np.zeros_like(th)
            s = np.column_stack([r * ct, r * st, z])
            s_t = np.column_stack([-r * st, r * ct, z0])
            s_z = np.column_stack([dr * ct, dr * st, np.ones_like(z)])
            s_tt = np.column_stack([-r * ct, -r * st, z0])
            s_tz = np.column_stack([-dr * st, dr * ct, z0])
            s_zz = np.column_stack([d2r * ct, d2r * st, z0])
            s_q = np.stack([s_t, s_z], axis=1)
            s_qq = np.stack([np.stack([s_tt, s_tz], 1), np.stack([s_tz, s_zz], 1)], axis=1)
            return s, s_q, s_qq
        d, d_q, d_qq = _direction_derivs(q, chart - 1)
        return d + self._centre(), d_q, d_qq

    def chart_coords(self, x, chart=0):
        x = _as_x(x)
        if chart == 0:
            th = np.mod(np.arctan2(x[:, 1], x[:, 0]), TWO_PI)
            return np.column_stack([th, x[:, 2]])
        return _spherical_coords(x - self._centre(), chart - 1)

    def _chart_valid_for(self, x, chart):
        return x[:, 2] >= self.z_c if chart > 0 else x[:, 2] <= self.z_c

    def chart_quality(self, q, chart=0):
        q = _as_q(q)
        if chart == 0:
            return np.full(len(q), 0.5)
        return np.sin(q[:, 1])

    def locate(self, x):
        x = _as_x(x)
        q, c = super().locate(x)
        cap = x[:, 2] > self.z_c
        # below the junction only chart 0 applies
        q[~cap] = self.chart_coords(x[~cap], 0)
        c[~cap] = 0
        return q, c

    def implicit(self, x):
        x = _as_x(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        cap = x[:, 2] > self.z_c
        f = rho - self.profile(np.minimum(x[:, 2], self.z_c))[0]
        f[cap] = np.linalg.norm(x[cap] - self._centre(), axis=1) - 1.0
        return f

    def implicit_grad(self, x):
        x = _as_x(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        rho_s = np.where(rho > 0, rho, 1.0)
        cap = x[:, 2] > self.z_c
        _, dr, _ = self.profile(np.minimum(x[:, 2], self.z_c))
        g = np.column_stack([x[:, 0] / rho_s, x[:, 1] / rho_s, -dr])
        y = x[cap] - self._centre()
        g[cap] = y / np.linalg.norm(y, axis=1, keepdims=True)
        return g

    def domain(self, x):
        return _as_x(x)[:, 2]

    def clamp(self, x, margin):
        x = _as_x(x).copy()
        bad = x[:, 2] < margin
        if np.any(bad):
            th = np.arctan2(x[bad, 1], x[bad, 0])
            x[bad] = self.sigma(np.column_stack([th, np.full(bad.sum(), margin)]), 0)
        return x

    def edge_nodes(self, spacing):
        m = max(3, int(round(TWO_PI * self.r0 / spacing)))
        t = TWO_PI * np.arange(m) / m
        return np.column_stack([self.r0 * np.cos(t), self.r0 * np.sin(t), np.zeros(m)])

    def seed_patches(self):
        return [Patch(0, (0.0, 0.0), (TWO_PI, self.z_c)), Patch(1, (0.0, 0.0), (TWO_PI, math.pi / 2))]

    def meridian_point(self, s):
        """Point on the x-z meridian at geodesic distance ``s`` from the edge z = 0."""
        h = NECK_CYLINDER_HEIGHT
        if s <= h:
            return np.array([self.r0, 0.0, s])
        if s <= h + math.pi / 2:
            # arc length is measured down from the junction with the cap
            target = math.pi / 2 - (s - h)
            f = lambda z: _arc_length(self.b, self.amplitude, self.z_c - z) - target  # noqa: E731
            z = optimize.bisect(f, h, self.z_c, xtol=1e-14)
            return np.array([float(self.profile(z)[0]), 0.0, z])
        psi = min(s - h - math.pi / 2, math.pi / 2)
        return np.array([math.cos(psi), 0.0, self.z_c + math.sin(psi)])

    def spec(self):
        return f"neck:{self.r0!r}"


def _arc_length(b: float, A: float, s_from: float) -> float:
    """Arc length of the bump meridian between s = 0 (junction) and ``s_from``."""

    def integrand(s):
        E, fp, _ = _bump_parts(np.asarray(s), b)
        return float(np.sqrt(1.0 + (A * E * fp) ** 2))

    return integrate.quad(integrand, 0.0, s_from, limit=200, epsabs=1e-13, epsrel=1e-12)[0]


_NECK_CACHE: dict[float, float] = {}


def _neck_length(r0: float) -> float:
    if r0 not in _NECK_CACHE:
        if not 0.0 < r0 <= 1.0:
            raise ValueError("neck radius must lie in (0, 1]")
        A = 1.0 - r0
        target = math.pi / 2
        f = lambda b: _arc_length(b, A, b) - target  # noqa: E731
        _NECK_CACHE[r0] = optimize.bisect(f, 1e-6, target, xtol=1e-13, maxiter=200)
    return _NECK_CACHE[r0]


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

#: level-1 target fill distance, and reference point counts per level
CATALOG_H = {"A": 0.1, "B": 0.1, "C": 0.1, "D": 0.08}
REFERENCE_COUNTS = {
    "A": (2350, 9566, 38486, 154182),
    "B": (2306, 9206, 36854, 147634),
    "C": (2002, 7998, 31898, 127346),
    "D": (1912, 7478, 29494, 118942),
}


def catalog(name: str) -> SurfaceModel:
    """Manifolds A-D of the convergence study."""
    name = name.upper()
    if name == "A":
        return Ellipsoid(1.2, 1.2, 1.0)
    if name == "B":
        return RadialHarmonic(0.1, 3, 1)
    if name == "C":
        return RadialHarmonic(0.1, 7, 1)
    if name == "D":
        return Torus(0.7, 0.3)
    raise KeyError(f"unknown catalog manifold {name!r}")


def catalog_h(name: str, level: int) -> float:
    return CATALOG_H[name.upper()] / 2 ** (level - 1)


def parse_surface(text: str) -> SurfaceModel:
    """Parse ``kind[:p1,p2,...]``; catalog letters A-D are accepted too."""
    text = text.strip()
    if text.upper() in CATALOG_H:
        return catalog(text)
    kind, _, rest = text.partition(":")
    args = [a for a in rest.split(",") if a] if rest else []
    kind = kind.replace("-", "_").lower()
    if kind == "hemisphere":
        return Sphere(float(args[0]) if args else 1.0, 0.0)
    if kind == "sphere":
        R = float(args[0]) if args else 1.0
        return Sphere(R, float(args[1]) if len(args) > 1 else None)
    if kind == "ellipsoid":
        return Ellipsoid(*map(float, args))
    if kind in ("radial", "radial_harmonic"):
        r0 = float(args[0]) if args else 0.1
        ints = [int(a) for a in args[1:]]
        return RadialHarmonic(r0, *ints)
    if kind == "torus":
        return Torus(*map(float, args))
    if kind == "truncated_torus":
        return TruncatedTorus(*map(float, args))
    if kind == "sliced_torus":
        return SlicedTorus(*map(float, args))
    if kind == "flat_disk":
        return FlatDisk(*map(float, args))
    if kind == "neck":
        return Neck(float(args[0]) if args else 0.5)
    raise KeyError(f"unknown surface {text!r}")
