"""Critical Strauss exponent and the exponent identities used in the blow-up argument."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

MAX_DIMENSION = 64


@dataclass(frozen=True)
class DimensionParams:
    n: int
    p: float
    q: float
    p_conj: float

    @property
    def is_critical(self) -> bool:
        return abs(self.p - critical_exponent(self.n)) <= 1e-12 * self.p


def _check_dimension(n: int) -> None:
    if int(n) != n or n < 2:
        raise ValueError(f"space dimension must be an integer >= 2, got {n!r}")
    if n > MAX_DIMENSION:
        raise ValueError(f"space dimension {n} above supported range 2..{MAX_DIMENSION}")


def critical_exponent(n: int) -> float:
    """Positive root of (n-1)p^2 - (n+1)p - 2 = 0."""
    _check_dimension(n)
    a, b = n - 1, n + 1
    disc = b * b + 8 * a
    return (b + math.sqrt(disc)) / (2 * a)


def quadratic_residual(n: int, p: float) -> float:
    """Relative residual of the critical quadratic at p."""
    terms = ((n - 1) * p * p, (n + 1) * p, 2.0)
    return ((n - 1) * p * p - (n + 1) * p - 2.0) / max(abs(t) for t in terms)


def make_params(n: int, p: float) -> DimensionParams:
    _check_dimension(n)
    if not p > 1:
        raise ValueError(f"exponent p must exceed 1, got {p!r}")
    q = (n - 1) / 2 - 1 / p
    return DimensionParams(n=int(n), p=float(p), q=q, p_conj=p / (p - 1))


def verify_critical_identities(params: DimensionParams) -> dict[str, float]:
    """Residuals of the exponent identities that hold at the critical power.

    Every residual is returned, also off-critical, so callers can probe how
    badly a given p misses. Evaluation runs in extended precision (``Fraction``
    of the float inputs) except for the single square-root free rounding at
    the end, so at the critical power residuals sit at the float64 floor.
    """
    n = Fraction(params.n)
    p = Fraction(params.p)
    q = Fraction(params.q)
    pc = Fraction(params.p_conj)
    half = (n - 1) / 2
    report = {
        # q written two ways: (n-1)/2 - 1/p versus n-1 - 2/(p-1)
        "q_consistency": float(((n - 1) / 2 - 1 / p) - (n - 1 - 2 / (p - 1))),
        "conjugate": float(1 / p + 1 / pc - 1),
        "space_time_power": float((n - q - pc / p) - (1 + pc / p)),
        "boundary_layer_power": float(pc * (q + 1 - half) - 1),
        "weighted_volume_power": float(n - 1 + q * (pc - 1) - half * pc - pc / p),
        "lower_bound_power": float(1 - q + n - 1 - half * p),
    }
    return report


def lp_bound_exponent(n: int, p: float) -> float:
    """Power of (1+t) in the weighted L^p lower bound, n-1 - (n-1)p/2."""
    return (n - 1) - (n - 1) * p / 2
