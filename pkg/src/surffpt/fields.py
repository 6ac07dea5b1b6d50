"""Scalar test fields and drift/diffusion presets.

Drift ``a`` and diffusion ``b`` are ambient fields: ``drift(x)`` returns
(n, 3) and ``diffusion(x)`` returns (n, 3, 3) whose column ``j`` is the
vector field b_j, so that dX = a dt + sum_j b_j dW_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .surfaces import SlicedTorus, Torus, TruncatedTorus, _as_x, catalog


@dataclass(frozen=True)
class ScalarField:
    """Ambient scalar field with analytic gradient and Hessian."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    hess: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x):
        return self.value(_as_x(x))


def _u5(x):
    X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
    return Z * (X**4 + Y**4 - 6 * X**2 * Y**2)


def _u5_grad(x):
    X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
    return np.column_stack([
        Z * (4 * X**3 - 12 * X * Y**2),
        Z * (4 * Y**3 - 12 * X**2 * Y),
        X**4 + Y**4 - 6 * X**2 * Y**2,
    ])


def _u5_hess(x):
    X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
    H = np.zeros((len(x), 3, 3))
    H[:, 0, 0] = Z * (12 * X**2 - 12 * Y**2)
    H[:, 1, 1] = Z * (12 * Y**2 - 12 * X**2)
    H[:, 0, 1] = H[:, 1, 0] = -24 * X * Y * Z
    H[:, 0, 2] = H[:, 2, 0] = 4 * X**3 - 12 * X * Y**2
    H[:, 1, 2] = H[:, 2, 1] = 4 * Y**3 - 12 * X**2 * Y
    return H


#: harmonic degree-5 polynomial z (x^4 + y^4 - 6 x^2 y^2)
HARMONIC5 = ScalarField("harmonic5", _u5, _u5_grad, _u5_hess)


def polynomial_field(coeffs: dict[tuple[int, int, int], float], name="poly") -> ScalarField:
    """Sum of c * x^i y^j z^k with analytic derivatives."""
    items = list(coeffs.items())

    def mono(x, e):
        return x[:, 0] ** e[0] * x[:, 1] ** e[1] * x[:, 2] ** e[2]

    def d(e, axis):
        if e[axis] == 0:
            return 0.0, e
        f = list(e)
        f[axis] -= 1
        return float(e[axis]), tuple(f)

    def value(x):
        return sum(c * mono(x, e) for e, c in items) + 0.0 * x[:, 0]

    def grad(x):
        out = np.zeros((len(x), 3))
        for e, c in items:
            for a in range(3):
                k, f = d(e, a)
                if k:
                    out[:, a] += c * k * mono(x, f)
        return out

    def hess(x):
        out = np.zeros((len(x), 3, 3))
        for e, c in items:
            for a in range(3):
                k1, f = d(e, a)
                if not k1:
                    continue
                for b in range(3):
                    k2, g = d(f, b)
                    if k2:
                        out[:, a, b] += c * k1 * k2 * mono(x, g)
        return out

    return ScalarField(name, value, grad, hess)


# ---------------------------------------------------------------------------
# drift / diffusion specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DriftDiffusionSpec:
    """Pointwise drift a(x) and diffusion columns b_j(x) in ambient coordinates.

    ``diffusivity`` is set for isotropic specs b = s(x) I and lets the
    Monte Carlo kernels take a fast path.
    """

    name: str
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    diffusivity: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def a(self, x) -> np.ndarray:
        return self.drift(_as_x(x))

    def b(self, x) -> np.ndarray:
        return self.diffusion(_as_x(x))

    def __str__(self):
        shown = {k: v for k, v in self.params.items() if not k.startswith("_")}
        if not shown:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v!r}" for k, v in shown.items())


def _zero_drift(x):
    return np.zeros_like(x)


def isotropic(scale: Callable[[np.ndarray], np.ndarray], name: str, drift=_zero_drift, params=None):
    def diffusion(x):
        s = scale(x)
        return s[:, None, None] * np.eye(3)

    return DriftDiffusionSpec(name, drift, diffusion, scale, dict(params or {}))


def pure_diffusion(D: float = 1.0) -> DriftDiffusionSpec:
    """b = sqrt(2D) I, a = 0: the generator is D times the Laplace-Beltrami operator."""
    s = math.sqrt(2.0 * D)
    return isotropic(lambda x: np.full(len(x), s), "diffusion", params={"D": D})


def _gram_schmidt(t1, t2):
    n1 = np.linalg.norm(t1, axis=1, keepdims=True)
    bad = n1[:, 0] < 1e-14
    e1 = np.where(bad[:, None], [1.0, 0.0, 0.0], t1 / np.where(bad, 1.0, n1[:, 0])[:, None])
    t2 = t2 - np.sum(t2 * e1, axis=1, keepdims=True) * e1
    n2 = np.linalg.norm(t2, axis=1, keepdims=True)
    e2 = np.where(bad[:, None], [0.0, 1.0, 0.0], t2 / np.maximum(n2, 1e-300))
    return e1, e2


def _columns(c1, c2, t1, t2):
    """b with column j = c1[:, j] t1 + c2[:, j] t2."""
    return c1[:, None, :] * t1[:, :, None] + c2[:, None, :] * t2[:, :, None]


def manifold_a_fields() -> DriftDiffusionSpec:
    """Ellipsoid test tensors in the Gram-Schmidt frame of the (theta, phi) chart tangents."""
    model = catalog("A")

    def frame(x):
        q = model.chart_coords(x, 0)
        _, s_q, _ = model.derivatives(q, 0)
        return _gram_schmidt(s_q[:, 0], s_q[:, 1])

    def drift(x):
        e1, e2 = frame(x)
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        return Y[:, None] * e1 + (X * Z)[:, None] * e2

    def diffusion(x):
        e1, e2 = frame(x)
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        c1 = np.column_stack([X * Z, X * Y * Z, Z])
        c2 = np.column_stack([Y**2, np.cos(Y**2), Y**3 + X])
        return _columns(c1, c2, e1, e2)

    return DriftDiffusionSpec("manifold-A-ab", drift, diffusion)


def manifold_bc_fields() -> DriftDiffusionSpec:
    def drift(x):
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        return np.column_stack([Y, X * Z, X**2 * Y * Z])

    def diffusion(x):
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        b = np.empty((len(x), 3, 3))
        b[:, 0] = np.column_stack([X * Z, X * Y * Z, Z])
        b[:, 1] = np.column_stack([Y**2, np.cos(Y**2), Y**3 + X])
        b[:, 2] = np.column_stack([X**2 + Y, np.exp(-Z), np.exp(Y)])
        return b

    return DriftDiffusionSpec("manifold-BC-ab", drift, diffusion)


def manifold_d_fields() -> DriftDiffusionSpec:
    """Torus test tensors in the parameterization tangents sigma_u, sigma_v."""
    model = catalog("D")

    def tangents(x):
        _, s_q, _ = model.derivatives(model.chart_coords(x), 0)
        return s_q[:, 0], s_q[:, 1]

    def drift(x):
        su, sv = tangents(x)
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        return Y[:, None] * su + (X * Z)[:, None] * sv

    def diffusion(x):
        su, sv = tangents(x)
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        c1 = np.column_stack([np.sin(X * Y), X * Y * Z, np.exp(Z)])
        c2 = np.column_stack([Y**2, np.cos(Y**2), Y**3 + X])
        return _columns(c1, c2, su, sv)

    return DriftDiffusionSpec("manifold-D-ab", drift, diffusion)


def double_well(k: float = 1.0, D: float = 1.0, model: Torus | None = None) -> DriftDiffusionSpec:
    """Surface Langevin dynamics in U = k kT sin^2(u) on a torus.

    a = -(1/gamma) grad U = -D k grad_M sin^2(u); with the torus metric
    diag(w^2, r^2), grad_M sin^2(u) = sin(2u)/w^2 sigma_u.
    """
    model = model or TruncatedTorus()
    s = math.sqrt(2.0 * D)

    def drift(x):
        q = model.chart_coords(x)
        u, v = q[:, 0], q[:, 1]
        w = model.s1 + model.s2 * np.cos(v)
        sigma_u = np.column_stack([-w * np.sin(u), w * np.cos(u), np.zeros_like(u)])
        return (-D * k * np.sin(2 * u) / w**2)[:, None] * sigma_u

    return isotropic(lambda x: np.full(len(x), s), "langevin", drift, {"k": k, "D": D})


def variable_diffusivity(c: float = 0.9, r: float = 0.5, D: float = 1.0,
                         model: SlicedTorus | None = None) -> DriftDiffusionSpec:
    """b = sqrt(2D)(1 - c exp(-|x - x_c|^2 / r^2)) I centred at (u, v) = (3pi/4, pi/2)."""
    model = model or SlicedTorus()
    xc = model.sigma(np.array([3 * math.pi / 4, math.pi / 2]))[0]
    s0 = math.sqrt(2.0 * D)

    def scale(x):
        if r == 0.0:
            return np.full(len(x), s0)
        d2 = np.sum((x - xc) ** 2, axis=1)
        return s0 * (1.0 - c * np.exp(-d2 / r**2))

    # keys starting with "_" are carried for the Monte Carlo kernels but not printed
    return isotropic(scale, "diffusivity", params={"c": c, "r": r, "D": D, "_center": tuple(xc.tolist())})


def diffusivity_center(model: SlicedTorus | None = None) -> np.ndarray:
    model = model or SlicedTorus()
    return model.sigma(np.array([3 * math.pi / 4, math.pi / 2]))[0]


def constant_spec(a=(0.0, 0.0, 0.0), s: float = math.sqrt(2.0)) -> DriftDiffusionSpec:
    a = np.asarray(a, dtype=float)
    return isotropic(lambda x: np.full(len(x), s), "constant",
                     lambda x: np.broadcast_to(a, x.shape).copy(), {"a": tuple(a.tolist()), "s": s})


def tabulated_spec(path) -> DriftDiffusionSpec:
    """Per-point values from a CSV with columns x,y,z,a1,a2,a3,b11,b12,...,b33.

    Queries take the row of the nearest tabulated position.
    """
    data = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
    tree = cKDTree(data[:, :3])
    A = data[:, 3:6]
    B = data[:, 6:15].reshape(-1, 3, 3)

    def lookup(x):
        return tree.query(x)[1]

    return DriftDiffusionSpec("table", lambda x: A[lookup(x)], lambda x: B[lookup(x)],
                              params={"path": str(path)})


def _parse_params(text: str) -> dict:
    out = {}
    for tok in filter(None, text.split(",")):
        k, _, v = tok.partition("=")
        out[k.strip()] = v.strip()
    return out


def parse_spec(text: str) -> DriftDiffusionSpec:
    """Build a spec from ``name[:key=value,...]``.

    Names: ``manifold-A-ab``, ``manifold-BC-ab``, ``manifold-D-ab``,
    ``diffusion:D=1``, ``langevin:k=1,D=1``, ``diffusivity:c=0.9,r=0.5,D=1``,
    ``constant:a=ax;ay;az,s=1.414``, ``table:path=file.csv``.
    """
    name, _, rest = text.strip().partition(":")
    p = _parse_params(rest)
    key = name.lower()
    if key == "manifold-a-ab":
        return manifold_a_fields()
    if key in ("manifold-bc-ab", "manifold-b-ab", "manifold-c-ab"):
        return manifold_bc_fields()
    if key == "manifold-d-ab":
        return manifold_d_fields()
    if key in ("diffusion", "brownian", "fpt"):
        return pure_diffusion(float(p.get("D", 1.0)))
    if key in ("langevin", "double-well"):
        return double_well(float(p.get("k", 1.0)), float(p.get("D", 1.0)))
    if key == "diffusivity":
        return variable_diffusivity(float(p.get("c", 0.9)), float(p.get("r", 0.5)), float(p.get("D", 1.0)))
    if key == "constant":
        a = tuple(float(v) for v in p.get("a", "0;0;0").split(";"))
        return constant_spec(a, float(p.get("s", math.sqrt(2.0))))
    if key == "table":
        return tabulated_spec(p["path"])
    raise KeyError(f"unknown spec preset {text!r}")


def manufactured_spec(manifold: str) -> DriftDiffusionSpec:
    m = manifold.upper()
    if m == "A":
        return manifold_a_fields()
    if m in ("B", "C"):
        return manifold_bc_fields()
    if m == "D":
        return manifold_d_fields()
    raise KeyError(manifold)
