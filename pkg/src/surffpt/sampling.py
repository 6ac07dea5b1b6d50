"""Quasi-uniform sampling of surfaces, boundary labeling and cloud files."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .surfaces import SurfaceModel, catalog, catalog_h, parse_surface

#: points per unit area at fill distance h is POINTS_PER_AREA / h^2
#: (calibrated against the reference counts of the catalog surfaces)
POINTS_PER_AREA = 1.457
SPACING_TOLERANCE = 0.35
SPACING_QUANTILE = 0.99


class RelaxationError(RuntimeError):
    """Repulsion relaxation did not reach the spacing tolerance."""


class EmptyBoundaryError(ValueError):
    """A boundary rule selected no points."""


@dataclass(frozen=True)
class SamplingPlan:
    target_h: float
    expected_n: int | None = None
    relaxation_iters: int = 60
    seed: int = 0
    method: str = "auto"

    def __post_init__(self):
        if not self.target_h > 0:
            raise ValueError("target_h must be positive")
        if self.method not in ("auto", "lattice", "relax"):
            raise ValueError(f"unknown sampling method {self.method!r}")

    def refined(self, levels: int = 1) -> "SamplingPlan":
        n = None if self.expected_n is None else self.expected_n * 4**levels
        return replace(self, target_h=self.target_h / 2**levels, expected_n=n)


def catalog_plan(name: str, level: int, seed: int = 0) -> SamplingPlan:
    return SamplingPlan(catalog_h(name, level), seed=seed)


# ---------------------------------------------------------------------------
# seeding and relaxation
# ---------------------------------------------------------------------------


def _seed_patch(model: SurfaceModel, patch, n: int, rng) -> np.ndarray:
    """``n`` points in a chart patch with density proportional to area.

    Candidates come from a jittered grid in parameter space and are thinned
    by the area element, which keeps the seed stratified.
    """
    if n <= 0:
        return np.zeros((0, 3))
    lo, hi = np.asarray(patch.lo), np.asarray(patch.hi)
    probe = lo + (hi - lo) * rng.random((4000, 2))
    dens = model.area_element(probe, patch.chart) * model._inside_q(probe, patch.chart)
    dmax = 1.05 * dens.max()
    area = model.patch_area(patch)
    box = float(np.prod(hi - lo))
    m = n * dmax * box / area * 1.1
    aspect = (hi[0] - lo[0]) / (hi[1] - lo[1])
    nx = max(1, int(math.ceil(math.sqrt(m * aspect))))
    ny = max(1, int(math.ceil(m / nx)))
    gx, gy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cells = np.column_stack([gx.ravel(), gy.ravel()]).astype(float)
    q = lo + (cells + rng.random(cells.shape)) * (hi - lo) / [nx, ny]
    keep = rng.random(len(q)) * dmax < model.area_element(q, patch.chart) * model._inside_q(q, patch.chart)
    q = q[keep]
    if len(q) > n:
        q = q[np.sort(rng.choice(len(q), n, replace=False))]
    while len(q) < n:
        extra = lo + (hi - lo) * rng.random((2 * (n - len(q)) + 8, 2))
        acc = rng.random(len(extra)) * dmax < model.area_element(extra, patch.chart) * model._inside_q(extra, patch.chart)
        q = np.vstack([q, extra[acc][: n - len(q)]])
    return model.sigma(q, patch.chart)


def _spacing_ok(d: np.ndarray, h: float) -> float:
    return float(np.mean(np.abs(d - h) <= SPACING_TOLERANCE * h))


def relax(model: SurfaceModel, free: np.ndarray, fixed: np.ndarray, spacing: float,
          iters: int, step: float = 0.2):
    """Tangential repulsion between nearest neighbors, reprojecting every sweep."""
    x = free.copy()
    n_fixed = len(fixed)
    rest = 1.2 * spacing
    margin = 0.5 * spacing
    k = 7
    for _ in range(iters):
        allp = np.vstack([fixed, x]) if n_fixed else x
        tree = cKDTree(allp)
        d, idx = tree.query(x, k=k + 1)
        d, idx = d[:, 1:], idx[:, 1:]
        push = np.clip(rest - d, 0.0, None)
        diff = x[:, None, :] - allp[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = diff / d[..., None]
        unit = np.nan_to_num(unit)
        force = np.einsum("ij,ijk->ik", push, unit)
        nrm = model.normal(x)
        force -= np.einsum("ij,ij->i", force, nrm)[:, None] * nrm
        # cap each move at a fraction of the spacing for stability
        mag = np.linalg.norm(force, axis=1, keepdims=True)
        limit = 0.3 * spacing
        force *= np.minimum(1.0, limit / np.maximum(step * mag, 1e-300))
        x = model.project(x + step * force)
        if model.has_edge:
            x = model.clamp(x, margin)
    return x


def expected_count(model: SurfaceModel, h: float) -> int:
    return int(round(POINTS_PER_AREA * model.area() / h**2))


def seed_points(model: SurfaceModel, h: float, seed: int, n_total: int | None = None):
    """Stratified area-weighted seed plus fixed edge nodes; returns (free, fixed, spacing)."""
    rng = np.random.default_rng(seed)
    n_total = n_total or expected_count(model, h)
    spacing = math.sqrt(2.0 * model.area() / (math.sqrt(3.0) * n_total))
    fixed = model.edge_nodes(spacing) if model.has_edge else np.zeros((0, 3))
    n_free = max(n_total - len(fixed), 1)
    patches = model.seed_patches()
    areas = np.array([model.patch_area(p) for p in patches])
    shares = np.floor(n_free * areas / areas.sum()).astype(int)
    shares[np.argmax(areas)] += n_free - shares.sum()
    free = np.vstack([_seed_patch(model, p, s, rng) for p, s in zip(patches, shares)])
    free = model.project(free)
    if model.has_edge:
        free = model.clamp(free, 0.5 * spacing)
    return free, fixed, spacing


# ---------------------------------------------------------------------------
# lattice seeding for closed surfaces
# ---------------------------------------------------------------------------

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def _cumulative_area(model: SurfaceModel, lo: float, hi: float, nt: int = 4000, nu: int = 256):
    """Area swept by chart 0 as its second coordinate runs from lo to hi.

    Returns the grid, the cumulative area and the ring density dA/dt.
    """
    t = np.linspace(lo, hi, nt)
    u = (np.arange(nu) + 0.5) / nu * 2.0 * math.pi
    T, U = np.meshgrid(t, u, indexing="ij")
    dens = model.area_element(np.column_stack([U.ravel(), T.ravel()])).reshape(nt, nu).mean(axis=1)
    dens *= 2.0 * math.pi
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    return t, cum, dens


def lattice_kind(model: SurfaceModel) -> str | None:
    """'sphere' for closed polar charts, 'torus' for doubly periodic ones, else None."""
    if model.has_edge:
        return None
    lo, hi = model.chart_box(0)
    per = model.periodic(0)
    if not per[0] or not np.isclose(hi[0] - lo[0], 2.0 * math.pi):
        return None
    if per[1]:
        return "torus"
    if 0 in getattr(model, "polar_charts", ()):
        return "sphere"
    return None


def _torus_generator(model: SurfaceModel, n: int, t, cum, dens) -> int:
    """Generator g of the rank-1 lattice {(k g / n, k / n)} with the most even spacing.

    Lattice offsets are measured in the surface metric at a grid of sample
    points; the score is the ratio of the shortest to the longest local
    minimum distance.
    """
    total = cum[-1]
    spacing = math.sqrt(2.0 * total / (math.sqrt(3.0) * n))
    vs = np.linspace(t[0], t[-1], 24, endpoint=False)
    us = np.linspace(0.0, 2.0 * math.pi, 3, endpoint=False)
    U, V = np.meshgrid(us, vs, indexing="ij")
    q = np.column_stack([U.ravel(), V.ravel()])
    _, s_q, _ = model.derivatives(q, 0)
    dvdt = total / np.interp(q[:, 1], t, dens)
    # first fundamental form in (u, area fraction) coordinates
    E = np.einsum("nd,nd->n", s_q[:, 0], s_q[:, 0])[:, None]
    F = (np.einsum("nd,nd->n", s_q[:, 0], s_q[:, 1]) * dvdt)[:, None]
    G = (np.einsum("nd,nd->n", s_q[:, 1], s_q[:, 1]) * dvdt**2)[:, None]
    # offsets longer than twice the spacing along the ring direction cannot be nearest
    j_max = min(n - 1, int(math.ceil(2.0 * spacing * n / math.sqrt(G.min()))) + 1)
    dt = np.arange(1, j_max + 1) / n
    best, best_g = -1.0, 1
    for g in range(1, n // 2 + 1):
        if math.gcd(g, n) != 1:
            continue
        du = 2.0 * math.pi * np.mod(np.arange(1, j_max + 1) * g / n, 1.0)
        du = np.where(du > math.pi, du - 2.0 * math.pi, du)
        short = (E * du**2 + 2.0 * F * du * dt + G * dt**2).min(axis=1)
        score = math.sqrt(short.min() / short.max())
        if score > best:
            best, best_g = score, g
    return best_g


def lattice_points(model: SurfaceModel, n: int, seed: int = 0) -> np.ndarray:
    """Smooth image of a planar lattice on a closed surface.

    The second chart coordinate is reparametrized by cumulative area so that
    rings carry equal area.  Polar charts take a golden-angle spiral, doubly
    periodic charts a rank-1 lattice that wraps in both directions.  Because
    the map is smooth, neighborhoods are centrally symmetric up to O(h),
    which random seeds followed by relaxation do not achieve.  The seed
    rotates the lattice about the first coordinate.
    """
    kind = lattice_kind(model)
    if kind is None:
        raise ValueError(f"no lattice seeding for {model.spec()}")
    lo, hi = model.chart_box(0)
    t, cum, dens = _cumulative_area(model, lo[1], hi[1])
    inv = PchipInterpolator(cum / cum[-1], t)
    shift = np.random.default_rng(seed).random(2) if seed else np.zeros(2)
    k = np.arange(n)
    if kind == "sphere":
        v = inv((k + 0.5) / n)
        u = 2.0 * math.pi * np.mod(k / GOLDEN + shift[0], 1.0)
    else:
        g = _torus_generator(model, n, t, cum, dens)
        v = inv(np.mod(k / n + shift[1] / n, 1.0))
        u = 2.0 * math.pi * np.mod(k * g / n + shift[0], 1.0)
    return model.project(model.sigma(np.column_stack([u, v]), 0))


def sample_cloud(model: SurfaceModel | str, plan: SamplingPlan | float, seed: int | None = None,
                 boundary: "BoundaryRule | str | None" = None) -> PointCloud:
    """Quasi-uniform cloud with median spacing close to ``plan.target_h``.

    Closed surfaces use :func:`lattice_points` unless ``plan.method`` is
    ``"relax"``; surfaces with an edge are seeded and relaxed.
    ``plan`` may be a bare target fill distance.  Raises
    :class:`RelaxationError` if fewer than 99% of nearest-neighbor distances
    fall within 35% of the target after relaxation.
    """
    if isinstance(model, str):
        model = parse_surface(model)
    if not isinstance(plan, SamplingPlan):
        plan = SamplingPlan(float(plan), seed=0 if seed is None else seed)
    elif seed is not None:
        plan = replace(plan, seed=seed)
    h = plan.target_h
    method = plan.method
    if method == "auto":
        method = "lattice" if lattice_kind(model) else "relax"
    if method == "lattice":
        pts = lattice_points(model, plan.expected_n or expected_count(model, h), plan.seed)
    else:
        free, fixed, spacing = seed_points(model, h, plan.seed, plan.expected_n)
        x = relax(model, free, fixed, spacing, plan.relaxation_iters)
        pts = np.vstack([fixed, x]) if len(fixed) else x
    d, _ = cKDTree(pts).query(pts, k=2)
    frac = _spacing_ok(d[:, 1], h)
    if frac < SPACING_QUANTILE:
        how = "lattice seeding" if method == "lattice" else f"{plan.relaxation_iters} sweeps"
        raise RelaxationError(
            f"only {frac:.3%} of spacings within {SPACING_TOLERANCE:.0%} of h={h:g} after {how}")
    meta = {"surface": model.spec(), "h": repr(float(h)), "seed": str(plan.seed)}
    cloud = PointCloud(pts, None, model.spec(), meta)
    if boundary is not None:
        cloud = label_boundary(cloud, boundary)
    return cloud


def sample_catalog(name: str, level: int, seed: int = 0) -> PointCloud:
    return sample_cloud(catalog(name), catalog_plan(name, level, seed))


# ---------------------------------------------------------------------------
# boundary labeling
# ---------------------------------------------------------------------------

_RULE_KINDS = ("x", "y", "z", "rho", "r", "edge")


@dataclass(frozen=True)
class BoundaryRule:
    """Points with |s(x) - center| < half_width are boundary points.

    ``s`` is a coordinate (x, y, z), the cylindrical radius ``rho``, the
    spherical radius ``r`` or, for ``edge``, the surface model's distance to
    its cut edges (requires ``model``).  Text form: ``"z:0:0.04"``
    (kind:center:half_width).
    """

    kind: str = "z"
    center: float = 0.0
    half_width: float = 4e-2
    model: SurfaceModel | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in _RULE_KINDS:
            raise ValueError(f"unknown boundary coordinate {self.kind!r}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def bind(self, model: SurfaceModel | None) -> "BoundaryRule":
        return replace(self, model=model) if model is not None else self

    def coordinate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, 3)
        if self.kind == "edge":
            if self.model is None:
                raise ValueError("edge rule needs a surface model")
            return self.model.domain(x)
        if self.kind == "rho":
            return np.hypot(x[:, 0], x[:, 1])
        if self.kind == "r":
            return np.linalg.norm(x, axis=1)
        return x[:, "xyz".index(self.kind)]

    def signed_distance(self, x) -> np.ndarray:
        """Positive inside the absorbing band, zero on its edge.

        Edge bands are one-sided: everything closer than ``half_width`` to
        the cut, or beyond it, is absorbing.
        """
        c = self.coordinate(x)
        if self.kind == "edge":
            return self.half_width - c
        return self.half_width - np.abs(c - self.center)

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) > 0

    def __str__(self):
        return f"{self.kind}:{self.center!r}:{self.half_width!r}"

    @classmethod
    def parse(cls, text: "str | BoundaryRule") -> "BoundaryRule":
        if isinstance(text, BoundaryRule):
            return text
        m = re.fullmatch(r"\s*(\w+)\s*(?::\s*([^:]*))?(?::\s*([^:]*))?\s*", text)
        if not m:
            raise ValueError(f"bad boundary rule {text!r}")
        kind, c, w = m.groups()
        c, w = (c or "").strip(), (w or "").strip()
        return cls(kind, float(c) if c else 0.0, float(w) if w else 4e-2)


def label_boundary(cloud: PointCloud, rule: BoundaryRule | str = BoundaryRule()) -> PointCloud:
    rule = BoundaryRule.parse(rule)
    if rule.kind == "edge" and rule.model is None:
        if cloud.source_model is None:
            raise ValueError("edge rule needs a cloud with a known surface")
        rule = rule.bind(parse_surface(cloud.source_model))
    flags = rule.contains(cloud.positions)
    if not flags.any():
        raise EmptyBoundaryError(f"rule {rule} selects no points")
    return cloud.with_boundary(flags, str(rule))


# ---------------------------------------------------------------------------
# cloud files
# ---------------------------------------------------------------------------

_FLAG_TEXT = {False: "interior", True: "boundary"}


def format_cloud(cloud: PointCloud) -> str:
    header = " ".join(f"{k}={v}" for k, v in cloud.meta.items())
    lines = [f"# n={cloud.n} {header}".rstrip()]
    for p, b in zip(cloud.positions.tolist(), cloud.boundary.tolist()):
        lines.append(f"{p[0]!r},{p[1]!r},{p[2]!r},{_FLAG_TEXT[b]}")
    return "\n".join(lines) + "\n"


def write_cloud(path, cloud: PointCloud) -> None:
    Path(path).write_text(format_cloud(cloud))


def parse_cloud(text: str) -> PointCloud:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("cloud file must start with a '#' header line")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    n = int(meta.pop("n", len(lines) - 1))
    rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
    if len(rows) != n:
        raise ValueError(f"header declares {n} points, found {len(rows)}")
    pos = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows]).reshape(-1, 3)
    try:
        flags = np.array([{"interior": False, "boundary": True}[r[3].strip()] for r in rows], dtype=bool)
    except KeyError as exc:
        raise ValueError(f"bad point flag {exc.args[0]!r}") from None
    return PointCloud(pos, flags, meta.get("surface"), meta)


def read_cloud(path) -> PointCloud:
    return parse_cloud(Path(path).read_text())
