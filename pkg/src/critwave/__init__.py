"""Numerical laboratory for blow-up of critical semilinear wave equations."""

from critwave.exponents import DimensionParams, critical_exponent, make_params, verify_critical_identities

__all__ = [
    "DimensionParams",
    "critical_exponent",
    "make_params",
    "verify_critical_identities",
]

__version__ = "0.1.0"
