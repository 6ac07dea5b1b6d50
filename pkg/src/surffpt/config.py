"""Project-wide numerical tolerances and defaults."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # polynomial reproduction / exactness checks
    exactness: float = 1e-9
    # weighted normal-equation residual of a GMLS fit
    normal_residual: float = 1e-10
    # truncated-SVD cutoff relative to the largest singular value
    svd_cutoff: float = 1e-12
    # pivoted-QR rank threshold relative to |R_00|
    qr_rank: float = 1e-10
    # implicit-surface projection
    projection: float = 1e-12
    projection_maxiter: int = 50
    # linear solver relative residual
    solver_rtol: float = 1e-10
    # orthonormality of estimated frames
    frame: float = 1e-12


TOL = Tolerances()

# GMLS defaults
WEIGHT_EXPONENT = 4
NEIGHBOR_INFLATION = 1.2
# spherical-chart pole margin (radians)
POLE_MARGIN = 1e-3
# default half-width of a coordinate boundary band
DEFAULT_BAND = 4e-2
