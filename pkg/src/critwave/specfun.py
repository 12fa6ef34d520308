"""Hypergeometric test functions for the radial wave operator.

The family is

    phi_q(t, r) = (t + r)^(-q) h_q(2r / (t + r)),   h_q(z) = 2F1(q, (n-1)/2; n-1; z),

which solves the free wave equation inside the light cone r <= t. ``h_q`` is
evaluated by the Gauss series for small z and by the Euler integral for z
close to 1, where the series converges slowly.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

Z_SWITCH = 0.5
MAX_SERIES_TERMS = 20000
DOMAIN_SLACK = 1e-12


class ConvergenceError(RuntimeError):
    """A series or quadrature failed to reach the requested tolerance."""


class AccuracyWarning(UserWarning):
    pass


class Strategy(enum.Enum):
    SERIES = "series"
    EULER_INTEGRAL = "euler"
    AUTO = "auto"


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    beta: float
    gamma: float
    z: float


@dataclass(frozen=True)
class TestFunctionSpec:
    n: int
    q: float
    strategy: Strategy = Strategy.AUTO
    series_tol: float = 1e-16
    quad_points: int = 16

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n!r}")
        if not self.q > 0:
            raise ValueError(f"q must be positive, got {self.q!r}")
        if self.quad_points < 2:
            raise ValueError("quad_points must be at least 2")

    @property
    def beta(self) -> float:
        return (self.n - 1) / 2

    @property
    def gamma(self) -> float:
        return float(self.n - 1)

    def shifted(self, dq: float) -> "TestFunctionSpec":
        return TestFunctionSpec(self.n, self.q + dq, self.strategy, self.series_tol, self.quad_points)


def _check_gamma(gamma: float) -> None:
    if gamma <= 0 and float(gamma).is_integer():
        raise ValueError(f"gamma = {gamma} is a nonpositive integer; 2F1 undefined")


def _series(alpha, beta, gamma, z, tol):
    z = np.asarray(z, dtype=float)
    term = np.ones_like(z)
    total = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    for k in range(MAX_SERIES_TERMS):
        term = term * ((alpha + k) * (beta + k) / ((k + 1) * (gamma + k))) * z
        total = total + term
        # tail bound for a geometric-like remainder once the ratio settles below 1
        ratio = abs((alpha + k + 1) * (beta + k + 1) / ((k + 2) * (gamma + k + 1))) * np.abs(z)
        tail = np.where(ratio < 1, np.abs(term) * ratio / np.maximum(1 - ratio, 1e-300), np.inf)
        active = tail > tol * np.abs(total)
        if not active.any():
            return total
    raise ConvergenceError(
        f"2F1 series did not reach tol={tol:g} in {MAX_SERIES_TERMS} terms (max z={np.max(z):.6g})"
    )


def _graded_nodes(max_z: float, m: int):
    """Gauss-Legendre nodes on [0, pi/2] in the angle, graded toward pi/2.

    After t = sin^2(theta) the Euler integrand peaks at theta = pi/2 with
    width ~ sqrt(1 - z); panels shrink geometrically to resolve it.
    """
    width = math.sqrt(max(1.0 - max_z, 1e-300))
    levels = int(np.clip(math.ceil(math.log2((math.pi / 2) / (0.25 * width))), 3, 60))
    # distances from pi/2: pi/2, pi/4, ..., then 0
    edges = (math.pi / 2) * 0.5 ** np.arange(levels + 1)
    edges = np.append(edges, 0.0)
    x, w = np.polynomial.legendre.leggauss(m)
    lo, hi = edges[1:], edges[:-1]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    dist = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return math.pi / 2 - dist, weights, dist


def _euler_graded(alpha, beta, gamma, z, m):
    z = np.asarray(z, dtype=float)
    theta, weights, dist = _graded_nodes(float(np.max(z)) if z.size else 0.0, m)
    s = np.sin(theta)
    c = np.sin(dist)  # cos(theta) without cancellation near pi/2
    kernel = 2.0 * s ** (2 * beta - 1) * c ** (2 * (gamma - beta) - 1) * weights
    # 1 - z sin^2 = (1 - z) + z cos^2, kept in that form for z -> 1
    base = (1.0 - z)[..., None] + z[..., None] * (c * c)
    vals = (base ** (-alpha)) @ kernel
    log_pref = math.lgamma(gamma) - math.lgamma(beta) - math.lgamma(gamma - beta)
    return math.exp(log_pref) * vals


def _euler_quad(alpha, beta, gamma, z, tol):
    """Euler integral through QUADPACK's algebraic endpoint weights."""
    log_pref = math.lgamma(gamma) - math.lgamma(beta) - math.lgamma(gamma - beta)
    out = []
    for zz in np.atleast_1d(np.asarray(z, dtype=float)):
        val, err = integrate.quad(
            lambda t: (1.0 - zz * t) ** (-alpha),
            0.0,
            1.0,
            weight="alg",
            wvar=(beta - 1, gamma - beta - 1),
            epsabs=0.0,
            epsrel=max(tol, 1e-13),
            limit=200,
        )
        if abs(err) > 1e3 * max(tol, 1e-13) * abs(val):
            raise ConvergenceError(f"Euler integral at z={zz:g}: error estimate {err:g}")
        out.append(val)
    return math.exp(log_pref) * np.asarray(out).reshape(np.shape(z))


def gauss_2f1(params: HyperParams, tol: float = 1e-15, route: str = "auto", quad_points: int = 16) -> float:
    """Gauss hypergeometric function F(alpha, beta; gamma; z) for real 0 <= z < 1.

    ``route`` is ``"series"``, ``"euler"`` (graded Gauss-Legendre after the
    substitution t = sin^2 theta), ``"quadpack"`` (QAWS algebraic weights) or
    ``"auto"`` (series up to z = 0.5, Euler integral beyond).
    """
    a, b, g, z = params.alpha, params.beta, params.gamma, params.z
    _check_gamma(g)
    if not 0 <= z < 1:
        raise ValueError(f"z must lie in [0, 1), got {z!r}")
    if route == "auto":
        route = "series" if z <= Z_SWITCH else "euler"
    if route == "series":
        return float(_series(a, b, g, z, tol))
    if not g > b > 0:
        raise ValueError("Euler integral needs gamma > beta > 0")
    if route == "euler":
        if b >= 0.5 and g - b >= 0.5:
            return float(_euler_graded(a, b, g, np.array([z]), quad_points)[0])
        route = "quadpack"
    if route == "quadpack":
        return float(_euler_quad(a, b, g, z, tol))
    raise ValueError(f"unknown route {route!r}")


def h_q(spec: TestFunctionSpec, z):
    """h_q(z) = 2F1(q, (n-1)/2; n-1; z); accepts scalars or arrays."""
    z_arr = np.asarray(z, dtype=float)
    if z_arr.size and (np.min(z_arr) < 0 or np.max(z_arr) >= 1):
        raise ValueError("h_q is defined for 0 <= z < 1")
    if spec.q > spec.beta and z_arr.size and 1 - np.max(z_arr) < 1e-12:
        warnings.warn(
            "h_q near z = 1 with q > (n-1)/2: value dominated by the (1-z) power envelope",
            AccuracyWarning,
            stacklevel=2,
        )
    a, b, g = spec.q, spec.beta, spec.gamma
    flat = z_arr.ravel()
    out = np.empty_like(flat)
    if spec.strategy is Strategy.SERIES:
        use_series = np.ones(flat.shape, dtype=bool)
    elif spec.strategy is Strategy.EULER_INTEGRAL:
        use_series = np.zeros(flat.shape, dtype=bool)
    else:
        use_series = flat <= Z_SWITCH
    if use_series.any():
        out[use_series] = _series(a, b, g, flat[use_series], spec.series_tol)
    if (~use_series).any():
        out[~use_series] = _euler_graded(a, b, g, flat[~use_series], spec.quad_points)
    out = out.reshape(z_arr.shape)
    return float(out) if out.ndim == 0 else out


def phi_q(spec: TestFunctionSpec, t, r, slack: float = DOMAIN_SLACK):
    """(t + r)^(-q) h_q(2r / (t + r)) on the cone r <= t."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(t < 0):
        raise ValueError("phi_q needs t >= 0 and r >= 0")
    if np.any(r > t + slack):
        raise ValueError("phi_q evaluated outside the cone r <= t")
    s = t + r
    if np.any(s <= 0):
        raise ValueError("phi_q is singular at t + r = 0")
    z = np.minimum(2 * r / s, np.nextafter(1.0, 0.0))
    out = s ** (-spec.q) * h_q(spec, z)
    return float(out) if np.ndim(out) == 0 else out


def capital_phi_q(spec: TestFunctionSpec, tau, r, slack: float = DOMAIN_SLACK):
    """phi_q shifted by two in time; used on the support r <= tau + 1."""
    tau = np.asarray(tau, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    if np.any(r > tau + 1 + slack):
        raise ValueError("Phi_q is only evaluated on the support r <= tau + 1")
    return phi_q(spec, tau + 2, r)


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere S^dim in R^(dim+1)."""
    k = dim + 1
    return 2 * math.pi ** (k / 2) / math.gamma(k / 2)


def phi1_weight(n: int, r: float) -> float:
    """Spherical mean weight: integral of exp(x . omega) over S^(n-1), |x| = r."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if r < 0:
        raise ValueError("r must be nonnegative")
    # e^(r cos) rescaled by e^(-r) to keep the integrand O(1)
    val, err = integrate.quad(
        lambda th: math.exp(r * (math.cos(th) - 1.0)) * math.sin(th) ** (n - 2),
        0.0,
        math.pi,
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    if err > 1e-9 * abs(val):
        raise ConvergenceError(f"phi1 quadrature at r={r}: error estimate {err:g}")
    return sphere_area(n - 2) * val * math.exp(r)


# --------------------------------------------------------------------------
# identity checks
# --------------------------------------------------------------------------


def check_hypergeometric_ode(spec: TestFunctionSpec, z_samples, step: float = 1e-4, func=None) -> float:
    """Max normalized residual of z(1-z)h'' + [n-1 - (q+(n+1)/2) z] h' - (n-1) q h / 2.

    Derivatives are central differences; at z = 0 a one-sided second-order
    stencil is used (the h'' term carries a factor z there). ``func`` swaps
    in another profile, e.g. to confirm the check is not vacuous.
    """
    n, q = spec.n, spec.q
    f = func if func is not None else (lambda z: h_q(spec, z))
    worst = 0.0
    for z in np.atleast_1d(np.asarray(z_samples, dtype=float)):
        if z < step:
            v = np.asarray(f(np.array([z, z + step, z + 2 * step])), dtype=float)
            h0 = v[0]
            d1 = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * step)
            d2 = (v[0] - 2 * v[1] + v[2]) / step**2
        else:
            v = np.asarray(f(np.array([z - step, z, z + step])), dtype=float)
            h0 = v[1]
            d1 = (v[2] - v[0]) / (2 * step)
            d2 = (v[2] - 2 * v[1] + v[0]) / step**2
        terms = (
            z * (1 - z) * d2,
            (n - 1 - (q + (n + 1) / 2) * z) * d1,
            -(n - 1) / 2 * q * h0,
        )
        scale = max(abs(x) for x in terms)
        worst = max(worst, abs(sum(terms)) / scale)
    return worst


def check_wave_identity(spec: TestFunctionSpec, t: float, r_samples, step: float = 1e-3) -> tuple[float, float]:
    """Residuals of the radial wave equation and of d/dt phi_q = -q phi_{q+1}.

    Returns ``(wave, derivative)``, both normalized: the discrete
    d'Alembertian by its largest term, the derivative identity relative to
    q phi_{q+1}.
    """
    n, q = spec.n, spec.q
    up = spec.shifted(1.0)
    wave = deriv = 0.0
    for r in np.atleast_1d(np.asarray(r_samples, dtype=float)):
        if not r + step < t - step:
            raise ValueError(f"sample r={r} too close to the cone r = t={t}")
        c = phi_q(spec, t, r)
        tp, tm = phi_q(spec, t + step, r), phi_q(spec, t - step, r)
        phi_tt = (tp - 2 * c + tm) / step**2
        if r < step:
            # even extension: (n-1)/r phi_r -> (n-1) phi_rr at the origin
            rp = phi_q(spec, t, r + step)
            phi_rr = 2 * (rp - c) / step**2
            terms = (phi_tt, -phi_rr, -(n - 1) * phi_rr)
        else:
            rp, rm = phi_q(spec, t, r + step), phi_q(spec, t, r - step)
            phi_rr = (rp - 2 * c + rm) / step**2
            phi_r = (rp - rm) / (2 * step)
            terms = (phi_tt, -phi_rr, -(n - 1) / r * phi_r)
        wave = max(wave, abs(sum(terms)) / max(abs(x) for x in terms))
        target = q * phi_q(up, t, r)
        deriv = max(deriv, abs((tp - tm) / (2 * step) + target) / abs(target))
    return wave, deriv


@dataclass(frozen=True)
class EnvelopeReport:
    regime: str  # "bounded" (q < (n-1)/2) or "singular" (q > (n-1)/2)
    lower: float
    upper: float

    @property
    def empirical_c0(self) -> float:
        """Smallest C with 1/C <= envelope <= C."""
        return max(self.upper, 1.0 / self.lower)


def check_envelopes(spec: TestFunctionSpec, z_grid) -> EnvelopeReport:
    """Empirical two-sided bounds on h_q, or on h_q (1-z)^(q-(n-1)/2) when q > (n-1)/2."""
    z = np.asarray(z_grid, dtype=float)
    half = spec.beta
    if math.isclose(spec.q, half, rel_tol=0, abs_tol=1e-14):
        raise ValueError("q = (n-1)/2 sits between the two envelope regimes and is not supported")
    h = np.asarray(h_q(spec, z))
    if spec.q < half:
        vals, regime = h, "bounded"
    else:
        vals, regime = h * (1 - z) ** (spec.q - half), "singular"
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if not (np.isfinite(lo) and np.isfinite(hi) and lo > 0):
        raise ConvergenceError(f"envelope not finite and positive: [{lo}, {hi}]")
    return EnvelopeReport(regime, lo, hi)
