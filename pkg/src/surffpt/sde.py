"""Monte Carlo exit times of surface-constrained diffusions.

Each step is an Euler-Maruyama increment in the tangent plane followed by a
closest-point projection.  Trajectory ``j`` under seed ``s`` draws its
normals from a Philox4x32-10 stream keyed by ``s`` with counter words
``(step, retry, j_lo, j_hi)``, so results do not depend on how trajectories are
scheduled.  Exits are detected on the continuous positions with the same
band rule used to label clouds; a Brownian-bridge test catches excursions
that leave and re-enter within one step.

Closest-point projection shortens a tangent step by about kappa^2 l^3 / 3,
which slows the walk by a relative O(D dt kappa^2).  On surfaces with known
principal curvatures the compiled kernel pre-distorts the tangent step so
that the second moments of the projected step, in the local Monge chart,
match those of the exact diffusion up to O(dt^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .config import TOL
from .fields import DriftDiffusionSpec
from .sampling import BoundaryRule
from .surfaces import FlatDisk, SlicedTorus, Sphere, SurfaceModel, Torus, TruncatedTorus, ProjectionError


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-5
    max_steps: int = 10_000_000
    seed: int = 0
    projection_tol: float = TOL.projection
    bridge: bool = True
    curvature_correction: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.projection_tol <= 1e-10:
            raise ValueError("projection tolerance must be at most 1e-10")
        if self.max_steps < 1 or self.max_steps >= 2**32:
            raise ValueError("max_steps must lie in [1, 2^32)")


class MaxStepsExceeded(RuntimeError):
    def __init__(self, censored: int, total: int):
        super().__init__(f"{censored} of {total} trajectories did not exit within max_steps")
        self.censored = censored
        self.total = total


@dataclass(frozen=True)
class ExitTimeEstimate:
    mean: float
    stderr: float
    count: int
    censored: int = 0
    hits: np.ndarray | None = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------------------
# counter-based normals
# ---------------------------------------------------------------------------

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


@numba.njit(cache=True, inline="always", error_model="numpy")
def _philox(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0) & _MASK, lo1, (hi0 ^ c3 ^ k1) & _MASK, lo0
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@numba.njit(cache=True, error_model="numpy")
def philox4x32(counter, key):
    """Philox4x32-10 block; counter (4,) and key (2,) hold 32-bit words."""
    r = _philox(np.uint64(counter[0]), np.uint64(counter[1]), np.uint64(counter[2]),
                np.uint64(counter[3]), np.uint64(key[0]), np.uint64(key[1]))
    out = np.empty(4, np.uint64)
    for i in range(4):
        out[i] = r[i]
    return out


@numba.njit(cache=True, inline="always", error_model="numpy")
def _draw(step, traj, k0, k1):
    """Two standard normals and one uniform for (step, trajectory).

    Marsaglia's polar method; a rejected pair is redrawn from the block with
    the next value of the (otherwise unused) second counter word.
    """
    s = np.uint64(step)
    t0 = np.uint64(traj) & _MASK
    t1 = np.uint64(traj) >> _S32
    r0, r1, r2, _ = _philox(s, np.uint64(0), t0, t1, k0, k1)
    u3 = (np.int64(r2) + 0.5) * 2.3283064365386963e-10
    retry = np.uint64(0)
    while True:
        v1 = (np.int64(r0) + 0.5) * 4.656612873077393e-10 - 1.0
        v2 = (np.int64(r1) + 0.5) * 4.656612873077393e-10 - 1.0
        q = v1 * v1 + v2 * v2
        if q < 1.0:
            f = math.sqrt(-2.0 * math.log(q) / q)
            return v1 * f, v2 * f, u3
        retry += np.uint64(1)
        r0, r1, _, _ = _philox(s, retry, t0, t1, k0, k1)


@numba.njit(cache=True, error_model="numpy")
def _draw_many(steps, trajs, k0, k1):
    out = np.empty((len(trajs), 3))
    for i in range(len(trajs)):
        a, b, c = _draw(steps[i], trajs[i], k0, k1)
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
    return out


def _key(seed: int):
    s = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(s & 0xFFFFFFFF), np.uint64(s >> 32)


def random_draws(seed: int, trajs, step: int) -> np.ndarray:
    """(n, 3): two normals and a uniform per trajectory at ``step``."""
    trajs = np.asarray(trajs, dtype=np.int64)
    k0, k1 = _key(seed)
    return _draw_many(np.full(len(trajs), step, np.int64), trajs, k0, k1)


# ---------------------------------------------------------------------------
# compiled kernel for surfaces with closed-form projection
# ---------------------------------------------------------------------------

# surface codes: 0 plane z=0, 1 sphere radius p0, 2 torus about z (p0, p1), 3 torus about x (p0 major, p1 minor)
# spec codes: 0 constant scale p0; 1 Gaussian dip p0 (1 - p1 exp(-|x-c|^2/p2^2)), c = p3..p5;
#             2 double well on a torus about z: scale p0, D k = p1
# band codes: 0..4 coordinate x, y, z, rho, r with center and half width; 5 truncated-torus cut distance


@numba.njit(cache=True, inline="always", error_model="numpy")
def _project(code, p, x):
    if code == 0:
        x[2] = 0.0
    elif code == 1:
        r = math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
        for i in range(3):
            x[i] *= p[0] / r
    elif code == 2:
        rho = math.hypot(x[0], x[1])
        c0 = p[0] * x[0] / rho
        c1 = p[0] * x[1] / rho
        d0, d1, d2 = x[0] - c0, x[1] - c1, x[2]
        dn = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        x[0] = c0 + p[1] * d0 / dn
        x[1] = c1 + p[1] * d1 / dn
        x[2] = p[1] * d2 / dn
    else:
        w = math.hypot(x[1], x[2])
        c1 = p[0] * x[1] / w
        c2 = p[0] * x[2] / w
        d0, d1, d2 = x[0], x[1] - c1, x[2] - c2
        dn = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        x[0] = p[1] * d0 / dn
        x[1] = c1 + p[1] * d1 / dn
        x[2] = c2 + p[1] * d2 / dn


@numba.njit(cache=True, inline="always", error_model="numpy")
def _normal(code, p, x, n):
    if code == 0:
        n[0], n[1], n[2] = 0.0, 0.0, 1.0
        return
    if code == 1:
        n[0], n[1], n[2] = x[0], x[1], x[2]
    elif code == 2:
        rho = math.hypot(x[0], x[1])
        n[0] = x[0] - p[0] * x[0] / rho
        n[1] = x[1] - p[0] * x[1] / rho
        n[2] = x[2]
    else:
        w = math.hypot(x[1], x[2])
        n[0] = x[0]
        n[1] = x[1] - p[0] * x[1] / w
        n[2] = x[2] - p[0] * x[2] / w
    s = math.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2)
    n[0] /= s
    n[1] /= s
    n[2] /= s


@numba.njit(cache=True, inline="always", error_model="numpy")
def _principal(code, p, x, t):
    """First principal direction into ``t``; returns its curvature and the other one.

    Signs are irrelevant to the step correction, which is even in II.
    """
    if code == 0:
        t[0], t[1], t[2] = 1.0, 0.0, 0.0
        return 0.0, 0.0
    if code == 1:
        # umbilic: any tangent direction will do, the caller's frame is kept
        t[0], t[1], t[2] = 0.0, 0.0, 0.0
        return 1.0 / p[0], 1.0 / p[0]
    if code == 2:
        rho = math.hypot(x[0], x[1])
        t[0], t[1], t[2] = -x[1] / rho, x[0] / rho, 0.0
        return (rho - p[0]) / (p[1] * rho), 1.0 / p[1]
    w = math.hypot(x[1], x[2])
    t[0], t[1], t[2] = 0.0, -x[2] / w, x[1] / w
    return (w - p[0]) / (p[1] * w), 1.0 / p[1]


@numba.njit(cache=True, inline="always", error_model="numpy")
def _band_distance(code, bp, x):
    """Distance to the absorbing set; <= 0 inside it.

    bp = (half width, center, side): side 0 is a two-sided band around the
    center, side +1 / -1 absorbs everything below / above center + / - width.
    """
    if code == 5:
        # bp = (half width, u_min, u_max)
        rho = math.hypot(x[0], x[1])
        u = math.atan2(x[1], x[0])
        if u < 0.0:
            u += 2.0 * math.pi
        du = min(u - bp[1], bp[2] - u)
        return rho * du - bp[0]
    if code == 3:
        c = math.hypot(x[0], x[1])
    elif code == 4:
        c = math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
    else:
        c = x[code]
    if bp[2] == 0.0:
        return abs(c - bp[1]) - bp[0]
    return bp[2] * (c - bp[1]) - bp[0]


@numba.njit(cache=True, inline="always", error_model="numpy")
def _coefficients(code, sp, x, a):
    """Drift into ``a``; returns the isotropic noise scale."""
    a[0], a[1], a[2] = 0.0, 0.0, 0.0
    if code == 0:
        return sp[0]
    if code == 1:
        d2 = (x[0] - sp[3]) ** 2 + (x[1] - sp[4]) ** 2 + (x[2] - sp[5]) ** 2
        return sp[0] * (1.0 - sp[1] * math.exp(-d2 / sp[2] ** 2))
    # double well U = k sin^2(u) on a torus about z; surface gradient sin(2u)/w^2 sigma_u
    rho2 = x[0] * x[0] + x[1] * x[1]
    rho = math.sqrt(rho2)
    cu = x[0] / rho
    su = x[1] / rho
    s2u = 2.0 * su * cu
    f = -sp[1] * s2u / rho2
    a[0] = f * (-rho * su)
    a[1] = f * (rho * cu)
    return sp[0]


@numba.njit(cache=True, error_model="numpy")
def _run_kernel(x0, first, n_traj, k0, k1, dt, max_steps, scode, spar, ccode, cpar, bcode, bpar,
                bridge, correct, times, steps_out, hits):
    sq = math.sqrt(dt)
    x = np.empty(3)
    y = np.empty(3)
    nrm = np.empty(3)
    a = np.empty(3)
    tp = np.empty(3)
    for j in range(n_traj):
        traj = first + j
        x[0], x[1], x[2] = x0[0], x0[1], x0[2]
        d0 = _band_distance(bcode, bpar, x)
        t_exit = -1.0
        k = 0
        if d0 <= 0.0:
            t_exit = 0.0
        while t_exit < 0.0 and k < max_steps:
            g1, g2, u = _draw(k, traj, k0, k1)
            s = _coefficients(ccode, cpar, x, a)
            _normal(scode, spar, x, nrm)
            # orthonormal tangent pair, principal directions when known
            ka, kb = _principal(scode, spar, x, tp)
            if tp[0] != 0.0 or tp[1] != 0.0 or tp[2] != 0.0:
                t10, t11, t12 = tp[0], tp[1], tp[2]
            else:
                if abs(nrm[0]) < 0.9:
                    e0, e1, e2 = 1.0, 0.0, 0.0
                else:
                    e0, e1, e2 = 0.0, 1.0, 0.0
                dp = e0 * nrm[0] + e1 * nrm[1] + e2 * nrm[2]
                t10, t11, t12 = e0 - dp * nrm[0], e1 - dp * nrm[1], e2 - dp * nrm[2]
                tn = math.sqrt(t10 * t10 + t11 * t11 + t12 * t12)
                t10 /= tn
                t11 /= tn
                t12 /= tn
            t20 = nrm[1] * t12 - nrm[2] * t11
            t21 = nrm[2] * t10 - nrm[0] * t12
            t22 = nrm[0] * t11 - nrm[1] * t10
            c1 = s * sq * g1
            c2 = s * sq * g2
            if correct:
                # undo the projection's pull-back (1/2)(v.IIv) IIv and add the
                # exact O(dt^2) second-moment term -(l^2/16)(II^2 + tr II II) v
                kn = 0.5 * (ka * c1 * c1 + kb * c2 * c2)
                l2 = (c1 * c1 + c2 * c2) / 16.0
                hh = ka + kb
                c1, c2 = c1 + ka * c1 * (kn - l2 * (ka + hh)), c2 + kb * c2 * (kn - l2 * (kb + hh))
            an = a[0] * nrm[0] + a[1] * nrm[1] + a[2] * nrm[2]
            y[0] = x[0] + (a[0] - an * nrm[0]) * dt + c1 * t10 + c2 * t20
            y[1] = x[1] + (a[1] - an * nrm[1]) * dt + c1 * t11 + c2 * t21
            y[2] = x[2] + (a[2] - an * nrm[2]) * dt + c1 * t12 + c2 * t22
            _project(scode, spar, y)
            d1 = _band_distance(bcode, bpar, y)
            if d1 <= 0.0:
                t_exit = (k + d0 / (d0 - d1)) * dt
                hits[j, 0], hits[j, 1], hits[j, 2] = y[0], y[1], y[2]
            elif bridge and s > 0.0 and u < math.exp(-2.0 * d0 * d1 / (s * s * dt)):
                t_exit = (k + 0.5) * dt
                hits[j, 0], hits[j, 1], hits[j, 2] = y[0], y[1], y[2]
            x[0], x[1], x[2] = y[0], y[1], y[2]
            d0 = d1
            k += 1
        times[j] = t_exit
        steps_out[j] = k


def _surface_code(model: SurfaceModel):
    if isinstance(model, FlatDisk):
        return 0, np.zeros(2)
    if isinstance(model, Sphere):
        return 1, np.array([model.R, 0.0])
    if isinstance(model, (Torus, TruncatedTorus)):
        return 2, np.array([model.s1, model.s2])
    if isinstance(model, SlicedTorus):
        return 3, np.array([model.major, model.minor])
    return None


def _spec_code(spec: DriftDiffusionSpec):
    p = spec.params
    if spec.name == "constant" and not any(p["a"]):
        return 0, np.array([p["s"], 0, 0, 0, 0, 0], float)
    if spec.name == "diffusion":
        return 0, np.array([math.sqrt(2.0 * p["D"]), 0, 0, 0, 0, 0], float)
    if spec.name == "diffusivity":
        xc = p.get("_center")
        if xc is None:
            return None
        if p["r"] == 0.0:
            return 0, np.array([math.sqrt(2.0 * p["D"]), 0, 0, 0, 0, 0], float)
        return 1, np.array([math.sqrt(2.0 * p["D"]), p["c"], p["r"], *xc], float)
    if spec.name == "langevin":
        return 2, np.array([math.sqrt(2.0 * p["D"]), p["D"] * p["k"], 0, 0, 0, 0], float)
    return None


def _band_code(rule: BoundaryRule, model: SurfaceModel):
    w = rule.half_width
    if rule.kind == "edge":
        if isinstance(model, Sphere) and model.z_min is not None:
            return 2, np.array([w, model.z_min, 1.0])
        if isinstance(model, FlatDisk):
            return 3, np.array([w, model.R, -1.0])
        if isinstance(model, SlicedTorus):
            return 2, np.array([w, 0.0, 1.0])
        if isinstance(model, TruncatedTorus):
            return 5, np.array([w, model.u_min, model.u_max])
        return None
    code = "xyz".index(rule.kind) if rule.kind in "xyz" else {"rho": 3, "r": 4}[rule.kind]
    return code, np.array([w, rule.center, 0.0])


def _compiled(model, spec, rule):
    s = _surface_code(model)
    c = _spec_code(spec)
    b = _band_code(rule, model)
    if s is None or c is None or b is None:
        return None
    if c[0] == 2 and s[0] != 2:
        return None
    return s, c, b


# ---------------------------------------------------------------------------
# generic vectorized path
# ---------------------------------------------------------------------------


def step(x, spec: DriftDiffusionSpec, model: SurfaceModel, config: IntegratorConfig, draws=None) -> np.ndarray:
    """One constrained Euler-Maruyama step for a batch of points.

    ``draws`` is (n, 3) normals; by default they come from the seed's stream
    at step 0 (two normals plus an independent third via the next counter).
    """
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    if draws is None:
        n = len(x)
        d0 = random_draws(config.seed, np.arange(n), 0)
        d1 = random_draws(config.seed, np.arange(n), 1)
        draws = np.column_stack([d0[:, :2], d1[:, 0]])
    nrm = model.normal(x)
    a = spec.a(x)
    b = spec.b(x)
    a = a - np.einsum("nd,nd->n", a, nrm)[:, None] * nrm
    noise = np.einsum("ndj,nj->nd", b, draws)
    noise -= np.einsum("nd,nd->n", noise, nrm)[:, None] * nrm
    y = x + a * config.dt + math.sqrt(config.dt) * noise
    try:
        return model.project(y)
    except ProjectionError:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        raise ProjectionError(str(exc)) from exc


def _generic_exit(x0, spec, rule, model, config, n_traj, first=0):
    """Lockstep simulation of all trajectories with numpy, for cases without a compiled kernel."""
    x = np.repeat(np.asarray(x0, float).reshape(1, 3), n_traj, axis=0)
    times = np.full(n_traj, -1.0)
    hits = np.full((n_traj, 3), np.nan)
    alive = np.arange(n_traj)
    dist = lambda p: -rule.signed_distance(p)  # noqa: E731
    d0 = dist(x)
    times[d0 <= 0] = 0.0
    alive = alive[d0 > 0]
    d0 = d0[d0 > 0]
    dt = config.dt
    k = 0
    while len(alive) and k < config.max_steps:
        dr = random_draws(config.seed, first + alive, k)
        g = np.column_stack([dr[:, :2], np.zeros(len(alive))])
        xa = x[alive]
        nrm = model.normal(xa)
        # tangential normals through an orthonormal tangent pair, then b acts isotropically
        t1 = np.where(np.abs(nrm[:, :1]) < 0.9, [1.0, 0, 0], [0, 1.0, 0])
        t1 = t1 - np.einsum("nd,nd->n", t1, nrm)[:, None] * nrm
        t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
        t2 = np.cross(nrm, t1)
        xi = g[:, :1] * t1 + g[:, 1:2] * t2
        a = spec.a(xa)
        a -= np.einsum("nd,nd->n", a, nrm)[:, None] * nrm
        b = spec.b(xa)
        noise = np.einsum("ndj,nj->nd", b, xi)
        noise -= np.einsum("nd,nd->n", noise, nrm)[:, None] * nrm
        y = model.project(xa + a * dt + math.sqrt(dt) * noise)
        d1 = dist(y)
        out = d1 <= 0
        if config.bridge:
            s2 = np.einsum("ndj,ndj->n", b, b) / 3.0
            with np.errstate(divide="ignore", over="ignore"):
                pb = np.exp(-2.0 * d0 * np.maximum(d1, 0) / np.maximum(s2 * dt, 1e-300))
            bridged = ~out & (dr[:, 2] < pb)
        else:
            bridged = np.zeros_like(out)
        times[alive[out]] = (k + d0[out] / (d0[out] - d1[out])) * dt
        times[alive[bridged]] = (k + 0.5) * dt
        done = out | bridged
        hits[alive[done]] = y[done]
        x[alive] = y
        keep = ~done
        alive, d0 = alive[keep], d1[keep]
        k += 1
    return times, hits


def simulate_exit_times(x0, spec: DriftDiffusionSpec, rule: BoundaryRule, model: SurfaceModel,
                        config: IntegratorConfig, n_traj: int, first: int = 0):
    """Raw exit times (-1 for censored) and exit positions of trajectories first..first+n_traj-1."""
    rule = BoundaryRule.parse(rule).bind(model)
    x0 = model.project(np.asarray(x0, float).reshape(1, 3))[0]
    comp = _compiled(model, spec, rule)
    if comp is None:
        return _generic_exit(x0, spec, rule, model, config, n_traj, first)
    (scode, spar), (ccode, cpar), (bcode, bpar) = comp
    k0, k1 = _key(config.seed)
    times = np.empty(n_traj)
    steps = np.empty(n_traj, np.int64)
    hits = np.full((n_traj, 3), np.nan)
    _run_kernel(x0, first, n_traj, k0, k1, config.dt, config.max_steps, scode, spar, ccode, cpar,
                bcode, bpar, config.bridge, config.curvature_correction, times, steps, hits)
    return times, hits


def pairwise_sum(v: np.ndarray) -> float:
    """Deterministic pairwise summation (independent of any chunking)."""
    v = np.asarray(v, dtype=float)
    if len(v) <= 8:
        return float(sum(v.tolist()))
    mid = len(v) // 2
    return pairwise_sum(v[:mid]) + pairwise_sum(v[mid:])


def exit_time(x0, spec: DriftDiffusionSpec, rule: BoundaryRule | str, model: SurfaceModel,
              config: IntegratorConfig = IntegratorConfig(), n_traj: int = 1000,
              keep_hits: bool = False, allow_censored: bool = False) -> ExitTimeEstimate:
    if n_traj < 2:
        raise ValueError("need at least 2 trajectories")
    times, hits = simulate_exit_times(x0, spec, BoundaryRule.parse(rule), model, config, n_traj)
    censored = int(np.sum(times < 0))
    if censored and not allow_censored:
        raise MaxStepsExceeded(censored, n_traj)
    t = times[times >= 0]
    mean = pairwise_sum(t) / len(t)
    var = pairwise_sum((t - mean) ** 2) / (len(t) - 1)
    return ExitTimeEstimate(mean, math.sqrt(var / len(t)), len(t), censored,
                            hits[times >= 0] if keep_hits else None)


# ---------------------------------------------------------------------------
# PDE cross-check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationRow:
    index: int
    u_pde: float
    u_mc: float
    stderr: float
    z: float


@dataclass(frozen=True)
class ValidationReport:
    rows: tuple
    excluded: tuple = ()
    threshold: float = 3.0

    @property
    def within(self) -> int:
        return sum(abs(r.z) <= self.threshold for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.within >= 0.95 * len(self.rows)

    def format(self) -> str:
        lines = ["index,u_pde,u_mc,stderr,z"]
        for r in self.rows:
            lines.append(f"{r.index},{r.u_pde!r},{r.u_mc!r},{r.stderr!r},{r.z!r}")
        for i in self.excluded:
            lines.append(f"{i},excluded,,,")
        return "\n".join(lines) + "\n"


def validate_against_pde(solution, positions, points, spec: DriftDiffusionSpec, rule, model: SurfaceModel,
                         config: IntegratorConfig = IntegratorConfig(), n_traj: int = 10_000,
                         degenerate_ratio: float = 1e-3) -> ValidationReport:
    """Compare PDE values with Monte Carlo exit times started at the same cloud points.

    Points where the noise scale falls below ``degenerate_ratio`` times its
    cloud maximum are excluded: exit times there are not finite in practice.
    """
    u = solution.u if hasattr(solution, "u") else np.asarray(solution)
    positions = np.asarray(positions, float)
    scale = np.sqrt(np.einsum("ndj,ndj->n", spec.b(positions), spec.b(positions)))
    rows, excluded = [], []
    for i in points:
        i = int(i)
        if scale[i] <= degenerate_ratio * scale.max():
            excluded.append(i)
            continue
        est = exit_time(positions[i], spec, rule, model, config, n_traj)
        z = (float(u[i]) - est.mean) / est.stderr if est.stderr > 0 else (0.0 if u[i] == est.mean else math.inf)
        rows.append(ValidationRow(i, float(u[i]), est.mean, est.stderr, z))
    return ValidationReport(tuple(rows), tuple(excluded))
