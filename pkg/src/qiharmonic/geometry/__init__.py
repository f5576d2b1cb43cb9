"""Hyperbolic geometry kernel (hyperboloid model)."""

from . import hyperboloid
from .core import (
    CurvaturePinching,
    HPoint,
    TangentVector,
    angle,
    dist,
    embed_coords,
    embed_totally_geodesic,
    exp,
    geodesic_point,
    gromov_product,
    karcher_mean,
    log,
    parallel_transport,
)

__all__ = [
    "CurvaturePinching",
    "HPoint",
    "TangentVector",
    "angle",
    "dist",
    "embed_coords",
    "embed_totally_geodesic",
    "exp",
    "geodesic_point",
    "gromov_product",
    "hyperboloid",
    "karcher_mean",
    "log",
    "parallel_transport",
]
