"""Convergence tables and first-passage-time studies."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .fields import HARMONIC5, double_well, manufactured_spec, pure_diffusion, variable_diffusivity
from .generator import apply_generator, reference_generator
from .geometry import build_local_charts
from .sampling import catalog_plan, sample_cloud
from .solver import assemble, fpt_problem, interior_charts, solve
from .surfaces import Neck, SlicedTorus, SurfaceModel, TruncatedTorus, catalog

log = logging.getLogger(__name__)

PI = math.pi


def estimate_rate(errors, hs) -> list[float]:
    """Pairwise log-log slopes log(e_i / e_{i+1}) / log(h_i / h_{i+1})."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape or e.ndim != 1 or len(e) < 2:
        raise ValueError("need two equal-length sequences with at least 2 entries")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and spacings must be positive")
    return (np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])).tolist()


# ---------------------------------------------------------------------------
# operator convergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    manifold: str
    degree: int
    level: int
    target_h: float
    measured_h: float
    n: int
    error: float
    rate: float | None = None
    rate_measured: float | None = None

    HEADER = "manifold,degree,level,target_h,measured_h,n,l2_error,rate,rate_measured_h"

    def format(self) -> str:
        def r(v):
            return "" if v is None else f"{v:.6f}"

        return (f"{self.manifold},{self.degree},{self.level},{self.target_h!r},{self.measured_h:.10g},"
                f"{self.n},{self.error:.10e},{r(self.rate)},{r(self.rate_measured)}")


class StudyError(RuntimeError):
    pass


def run_convergence(manifold: str, degrees=(2, 4), levels: int = 3, seed: int = 0,
                    field=HARMONIC5) -> list[ConvergenceRow]:
    """l2 error of the GMLS generator against the exact-geometry reference, per level and degree."""
    manifold = manifold.upper()
    model = catalog(manifold)
    spec = manufactured_spec(manifold)
    degrees = sorted(set(int(d) for d in degrees))
    errs = {m: [] for m in degrees}
    info = []
    for level in range(1, levels + 1):
        plan = catalog_plan(manifold, level, seed)
        cloud = sample_cloud(model, plan)
        x = cloud.positions
        exact = reference_generator(model, spec, field, x)
        values = field(x)
        info.append((plan.target_h, cloud.measured_h, cloud.n))
        for m in degrees:
            try:
                charts = build_local_charts(cloud, m)
            except Exception as exc:
                raise StudyError(f"manifold {manifold}, level {level}, degree {m}: {exc}") from exc
            approx = apply_generator(charts, spec, values)
            errs[m].append(float(np.sqrt(np.mean((approx - exact) ** 2))))
            log.info("manifold %s level %d m=%d n=%d err=%.4e", manifold, level, m, cloud.n, errs[m][-1])
    rows = []
    for m in degrees:
        hs = [i[0] for i in info]
        mh = [i[1] for i in info]
        rates = [None] + (estimate_rate(errs[m], hs) if levels > 1 else [])
        rates_m = [None] + (estimate_rate(errs[m], mh) if levels > 1 else [])
        for lv in range(levels):
            rows.append(ConvergenceRow(manifold, m, lv + 1, hs[lv], mh[lv], info[lv][2], errs[m][lv],
                                       rates[lv], rates_m[lv]))
    return rows


def format_convergence(rows) -> str:
    return "\n".join([ConvergenceRow.HEADER] + [r.format() for r in rows]) + "\n"


# ---------------------------------------------------------------------------
# first-passage-time studies
# ---------------------------------------------------------------------------

DOUBLE_WELL_STARTS = [(PI, 0.0), (PI, PI / 2), (PI, PI), (PI / 2, 0.0), (PI / 2, PI / 2), (PI / 2, PI),
                      (PI / 3, 0.0), (PI / 3, PI / 2), (PI / 3, PI)]
DIFFUSIVITY_STARTS = [(PI, 0.0), (PI, PI / 2), (PI, PI), (3 * PI / 4, 0.0), (3 * PI / 4, PI / 2),
                      (3 * PI / 4, PI), (5 * PI / 4, 0.0), (5 * PI / 4, PI / 2), (5 * PI / 4, PI)]
# neck starts: geodesic distance to the edge along the x-z meridian
NECK_STARTS = [PI + 0.05, 0.75 * PI + 0.05, 0.5 * PI + 0.05, 0.25 * PI + 0.05]

STUDY_DEFAULTS = {
    "double-well": {"values": [0.0, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0], "starts": DOUBLE_WELL_STARTS},
    "diffusivity-depth": {"values": [0.0, 0.25, 0.5, 0.75, 0.9, 0.95], "starts": DIFFUSIVITY_STARTS},
    "diffusivity-extent": {"values": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "starts": DIFFUSIVITY_STARTS},
    "neck": {"values": [0.8, 0.6, 0.4, 0.3, 0.2, 0.15, 0.1], "starts": NECK_STARTS},
}


@dataclass(frozen=True)
class StudyConfig:
    """Sweep definition.

    ``values`` holds k~ (double-well), c (diffusivity-depth), r
    (diffusivity-extent) or r0 (neck).  Start points are chart coordinates
    (u, v), or geodesic distances from the edge for the neck.  Sweep values
    are stored ascending except for the neck, which runs from wide to narrow.
    """

    name: str
    values: tuple = ()
    starts: tuple = ()
    h: float = 0.025
    degree: int = 4
    seed: int = 0
    D: float = 1.0
    c: float = 0.9
    r: float = 0.5
    boundary_width: float = 1e-9
    solver: str = "direct"

    def __post_init__(self):
        if self.name not in STUDY_DEFAULTS:
            raise ValueError(f"unknown study {self.name!r}; choose from {sorted(STUDY_DEFAULTS)}")
        d = STUDY_DEFAULTS[self.name]
        vals = tuple(float(v) for v in (self.values or d["values"]))
        vals = tuple(sorted(vals, reverse=self.name == "neck"))
        starts = self.starts or d["starts"]
        starts = tuple(float(s) if self.name == "neck" else tuple(float(t) for t in s) for s in starts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "starts", starts)

    @classmethod
    def from_mapping(cls, data: dict) -> "StudyConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, name: str | None = None) -> "StudyConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        if name is not None:
            data.setdefault("name", name)
            if data["name"] != name:
                raise ValueError(f"config is for study {data['name']!r}, not {name!r}")
        return cls.from_mapping(data)


@dataclass
class StudyResult:
    name: str
    header: str
    rows: list
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def format(self) -> str:
        lines = [self.header] + [",".join(_fmt(v) for v in row) for row in self.rows]
        for key, table in self.extra.items():
            lines.append(f"# {key}")
            lines.extend(table)
        for key, val in self.diagnostics.items():
            lines.append(f"# {key}={_fmt(val)}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def map_starts(cloud: PointCloud, points) -> tuple[np.ndarray, np.ndarray]:
    """Nearest interior cloud point to each start; returns indices and distances."""
    interior = np.flatnonzero(~cloud.boundary)
    dist, k = cKDTree(cloud.positions[interior]).query(np.asarray(points, float).reshape(-1, 3))
    return interior[k], dist


def _study_cloud(model: SurfaceModel, config: StudyConfig) -> PointCloud:
    return sample_cloud(model, config.h, seed=config.seed, boundary=f"edge::{config.boundary_width!r}")


def _fpt(cloud, charts, spec, config):
    return solve(assemble(cloud, fpt_problem(spec, config.degree), charts), config.solver)


def run_double_well(config: StudyConfig) -> StudyResult:
    model = TruncatedTorus()
    cloud = _study_cloud(model, config)
    charts = interior_charts(cloud, config.degree)
    idx, dist = map_starts(cloud, model.sigma(np.array(config.starts)))
    rows, table = [], []
    for k in config.values:
        sol = _fpt(cloud, charts, double_well(k, config.D, model), config)
        table.append(sol.u[idx])
        for i, (j, d) in enumerate(zip(idx, dist)):
            rows.append((k, i, sol.u[j], d))
    table = np.array(table)
    diag = {"n": cloud.n, "monotone_X0": bool(np.all(np.diff(table[:, 0]) > 0))}
    ks = np.array(config.values)
    if len(ks) >= 3:
        lg = np.log(table[-3:, 0])
        slopes = np.diff(lg) / np.diff(ks[-3:])
        diag["log_slopes_X0"] = slopes.tolist()
        diag["slope_spread"] = float(np.max(np.abs(slopes - slopes.mean())) / abs(slopes.mean()))
    return StudyResult(config.name, "k,start,fpt,map_distance", rows, diag)


def run_diffusivity(config: StudyConfig) -> StudyResult:
    model = SlicedTorus()
    cloud = _study_cloud(model, config)
    charts = interior_charts(cloud, config.degree)
    idx, dist = map_starts(cloud, model.sigma(np.array(config.starts)))
    depth = config.name == "diffusivity-depth"
    rows, table = [], []
    for v in config.values:
        c, r = (v, config.r) if depth else (config.c, v)
        if 1.0 - c < 1e-3:
            log.warning("diffusivity nearly vanishes at the center (c=%g)", c)
        sol = _fpt(cloud, charts, variable_diffusivity(c, r, config.D, model), config)
        table.append(sol.u[idx])
        for i, (j, d) in enumerate(zip(idx, dist)):
            rows.append((v, i, sol.u[j], d))
    table = np.array(table)
    param = "c" if depth else "r"
    diag = {"n": cloud.n, "nondecreasing": bool(np.all(np.diff(table, axis=0) >= 0))}
    return StudyResult(config.name, f"{param},start,fpt,map_distance", rows, diag)


def run_neck(config: StudyConfig) -> StudyResult:
    rows, table = [], []
    profiles = []
    n_total = 0
    for r0 in config.values:
        model = Neck(r0)
        cloud = _study_cloud(model, config)
        n_total += cloud.n
        sol = _fpt(cloud, None, pure_diffusion(config.D), config)
        pts = np.array([model.meridian_point(s) for s in config.starts])
        idx, dist = map_starts(cloud, pts)
        table.append(sol.u[idx])
        for i, (j, d) in enumerate(zip(idx, dist)):
            rows.append((r0, i, sol.u[j], d))
        z = np.linspace(0.0, model.height, 41)[:-1]
        q = model.free_energy(z)
        profiles.extend(f"{r0:.10g},{zz:.10g},{qq:.10g}" for zz, qq in zip(z, q))
    table = np.array(table)
    lr = np.log(np.array(config.values))
    slopes = [float(-np.polyfit(lr, np.log(table[:, i]), 1)[0]) for i in range(table.shape[1])]
    diag = {
        "increasing_as_r0_shrinks": bool(np.all(np.diff(table, axis=0) > 0)),
        "loglog_slopes": slopes,
    }
    return StudyResult(config.name, "r0,start,fpt,map_distance", rows, diag,
                       {"free_energy r0,z,Q": ["r0,z,Q"] + profiles})


def run_study(config: StudyConfig) -> StudyResult:
    if config.name == "double-well":
        return run_double_well(config)
    if config.name.startswith("diffusivity"):
        return run_diffusivity(config)
    return run_neck(config)


def default_config_text() -> str:
    lines = ["Study config (YAML); every key is optional except name:"]
    for f_ in StudyConfig.__dataclass_fields__.values():
        default = f_.default if f_.default is not f_.default_factory else None
        lines.append(f"  {f_.name}: {default!r}")
    lines.append("Default sweeps:")
    for k, v in STUDY_DEFAULTS.items():
        lines.append(f"  {k}: {v['values']}")
    return "\n".join(lines)


__all__ = [
    "ConvergenceRow", "StudyConfig", "StudyResult", "StudyError", "estimate_rate", "run_convergence",
    "format_convergence", "run_double_well", "run_diffusivity", "run_neck", "run_study", "map_starts",
    "default_config_text",
]
