"""ODE side of the lifespan argument.

* an adaptive Dormand-Prince integrator with blow-up detection,
* the comparison principle for a(t) y'' + y' = b(t) y^(1+alpha),
* the Riccati subsolution H3' = delta H3^((p+1)/2) and its blow-up time,
* the margin conditions that make s H3(s) a strict subsolution,
* the lifespan bound exp(eps^(-p(p-1)) s1) - 2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

DIVERGENCE_THRESHOLD = 1e12
RTOL = 1e-8
ATOL = 1e-10
EXP_OVERFLOW = 700.0

# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class StiffnessError(RuntimeError):
    """Step size collapsed while the solution stayed bounded."""


class Side(enum.Enum):
    EQUALITY = "equality"
    SUPER = "super"  # right-hand side scaled by (1 + m)
    SUB = "sub"  # right-hand side scaled by (1 - m)


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    blew_up: bool = False
    blowup_time: float | None = None


def _rk_step(f, t, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(f(t + _C[i] * h, yi))
    y5 = y + h * sum(b * k for b, k in zip(_B5, ks))
    y4 = y + h * sum(b * k for b, k in zip(_B4, ks))
    return y5, y5 - y4, ks[-1]


def dopri(
    f: Callable,
    t0: float,
    y0,
    t_end: float,
    rtol: float = RTOL,
    atol: float = ATOL,
    watch: Callable | None = None,
    threshold: float = DIVERGENCE_THRESHOLD,
):
    """Integrate y' = f(t, y) on [t0, t_end] with local error control.

    ``watch(y)`` returns the magnitude tested against ``threshold`` (default:
    max |y|). On a crossing the last step is bisected for the crossing time.
    Returns ``(times, states, blowup_time)``; ``blowup_time`` is None when
    t_end is reached.
    """
    watch = watch or (lambda y: float(np.max(np.abs(y))))
    t = float(t0)
    y = np.array(y0, dtype=float)
    span = t_end - t0
    h_min = 1e-14 * max(abs(t_end), span, 1.0)
    times, states = [t], [y.copy()]
    k1 = f(t, y)
    h = min(span, 1e-3 * max(span, 1.0))
    while t < t_end:
        h = min(h, t_end - t)
        with np.errstate(over="ignore", invalid="ignore"):
            y_new, err, k_last = _rk_step(f, t, y, h, k1)
        finite = np.all(np.isfinite(y_new)) and np.all(np.isfinite(err))
        if finite:
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            e = float(np.sqrt(np.mean((err / scale) ** 2)))
        else:
            e = math.inf
        if e <= 1.0:
            if watch(y_new) >= threshold:
                tb = _bisect_crossing(f, t, y, h, k1, watch, threshold)
                return np.array(times), np.array(states), tb
            t += h
            y = y_new
            k1 = k_last
            times.append(t)
            states.append(y.copy())
            fac = 0.9 * e ** (-1 / 5) if e > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
        else:
            fac = 0.9 * e ** (-1 / 5) if np.isfinite(e) else 0.1
            h *= max(0.1, fac)
        if h < h_min:
            # collapse counts as blow-up once the value is past the geometric
            # midpoint of the threshold; below that it is stiffness
            if watch(y) >= math.sqrt(threshold) or not finite:
                return np.array(times), np.array(states), t
            raise StiffnessError(f"step size collapsed to {h:.3g} at t={t:.6g} with bounded solution")
    return np.array(times), np.array(states), None


def _bisect_crossing(f, t, y, h, k1, watch, threshold, iters=60):
    lo, hi = 0.0, h
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        with np.errstate(over="ignore", invalid="ignore"):
            ym, _, _ = _rk_step(f, t, y, mid, k1)
        val = watch(ym) if np.all(np.isfinite(ym)) else math.inf
        if val >= threshold:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(abs(t), 1.0):
            break
    return t + hi


def _rhs_factor(side: Side, margin: float) -> float:
    if side is Side.EQUALITY:
        return 1.0
    if side is Side.SUPER:
        return 1.0 + margin
    return 1.0 - margin


def _coeff(fn, t, name):
    val = fn(t)
    if not val > 0:
        raise ValueError(f"coefficient {name}(t) must be positive, got {val!r} at t={t:.6g}")
    return val


def integrate_second_order(
    a: Callable,
    b: Callable,
    alpha: float,
    y0: float,
    y0_slope: float,
    t_end: float,
    side: Side = Side.EQUALITY,
    margin: float = 0.0,
    rtol: float = RTOL,
    atol: float = ATOL,
    threshold: float = DIVERGENCE_THRESHOLD,
) -> Trajectory:
    """Solve a(t) y'' + y' = c b(t) |y|^(1+alpha), c = 1 or 1 +- margin.

    ``b`` may vanish identically (the decoupled damped case); ``a`` must stay
    positive.
    """
    if not y0 > 0:
        raise ValueError("y0 must be positive")
    c = _rhs_factor(side, margin)

    def f(t, y):
        at = _coeff(a, t, "a")
        bt = b(t)
        if bt < 0:
            raise ValueError(f"coefficient b(t) negative at t={t:.6g}")
        return np.array([y[1], (c * bt * abs(y[0]) ** (1 + alpha) - y[1]) / at])

    times, states, tb = dopri(
        f, 0.0, [y0, y0_slope], t_end, rtol, atol, watch=lambda y: abs(y[0]), threshold=threshold
    )
    return Trajectory(times, states[:, 0], states[:, 1], tb is not None, tb)


# --------------------------------------------------------------------------
# comparison principle
# --------------------------------------------------------------------------


@dataclass
class ComparisonProblem:
    a: Callable
    b: Callable
    alpha: float
    K_init: float
    K_slope_init: float
    h_init: float
    h_slope_init: float
    t_end: float
    K_side: Side = Side.EQUALITY
    h_side: Side = Side.EQUALITY
    margin: float = 0.0

    def admissible(self) -> bool:
        return (
            self.alpha >= 0
            and self.h_init > 0
            and self.K_init > self.h_init
            and self.K_slope_init >= self.h_slope_init
            and self.K_side is not Side.SUB
            and self.h_side is not Side.SUPER
        )


@dataclass(frozen=True)
class ComparisonVerdict:
    holds: bool
    admissible: bool
    counterexample: float | None
    t_reached: float
    blew_up: bool
    samples: int


def comparison_check(problem: ComparisonProblem, rtol: float = RTOL, atol: float = ATOL) -> ComparisonVerdict:
    """Integrate K and h on one shared grid and test K'(t) > h'(t) for t > 0.

    Equal initial slopes with K(0) > h(0) are handled by nudging h'(0) down
    by 1e-9, standing in for restarting the argument at a small positive
    time. Inadmissible problems are integrated as given and judged the same
    way, so a degenerate input cannot be reported as strict domination.
    """
    pr = problem
    ok = pr.admissible()
    h_slope = pr.h_slope_init
    if ok and pr.K_slope_init == pr.h_slope_init:
        h_slope -= 1e-9
    cK = _rhs_factor(pr.K_side, pr.margin)
    ch = _rhs_factor(pr.h_side, pr.margin)
    exp1 = 1 + pr.alpha

    def f(t, y):
        at = _coeff(pr.a, t, "a")
        bt = _coeff(pr.b, t, "b")
        return np.array([
            y[1],
            (cK * bt * abs(y[0]) ** exp1 - y[1]) / at,
            y[3],
            (ch * bt * abs(y[2]) ** exp1 - y[3]) / at,
        ])

    times, states, tb = dopri(
        f, 0.0, [pr.K_init, pr.K_slope_init, pr.h_init, h_slope], pr.t_end, rtol, atol,
        watch=lambda y: max(abs(y[0]), abs(y[2])),
    )
    positive = times > 0
    bad = positive & ~(states[:, 1] > states[:, 3])
    first = float(times[np.argmax(bad)]) if bad.any() else None
    return ComparisonVerdict(
        holds=first is None,
        admissible=ok,
        counterexample=first,
        t_reached=float(tb if tb is not None else times[-1]),
        blew_up=tb is not None,
        samples=int(positive.sum()),
    )


# --------------------------------------------------------------------------
# Riccati subsolution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SubsolutionConfig:
    s0: float = 64.0
    delta: float = 1e-3
    C0: float = 1.0
    K0: float = 1.0
    p: float = 2.0

    def regime_ok(self) -> bool:
        """K0, C0 << s0 << 1/delta, read as s0 >= 10 max(K0, C0) and delta s0 <= 0.1."""
        return self.s0 >= 10 * max(self.K0, self.C0) and self.delta * self.s0 <= 0.1

    @property
    def power(self) -> float:
        return (self.p + 1) / 2


def riccati_blowup_time(config: SubsolutionConfig) -> float:
    """Blow-up time of H3' = delta H3^((p+1)/2), H3(s0) = C0/4, by separation of variables."""
    if not config.p > 1:
        raise ValueError("p must exceed 1 for finite-time blow-up")
    if not (config.delta > 0 and config.C0 > 0):
        raise ValueError("delta and C0 must be positive")
    return config.s0 + (config.C0 / 4) ** ((1 - config.p) / 2) * 2 / (config.delta * (config.p - 1))


def riccati_h3(config: SubsolutionConfig, s):
    """Closed-form H3(s) on [s0, s1)."""
    m = config.power
    s = np.asarray(s, dtype=float)
    base = (config.C0 / 4) ** (1 - m) - config.delta * (m - 1) * (s - config.s0)
    return base ** (1 / (1 - m))


def riccati_numerical_blowup(
    config: SubsolutionConfig, rtol: float = RTOL, atol: float = ATOL, threshold: float = DIVERGENCE_THRESHOLD
) -> float:
    """Blow-up time of the Riccati equation from the adaptive integrator."""
    m = config.power
    s1 = riccati_blowup_time(config)
    _, _, tb = dopri(
        lambda s, y: config.delta * np.abs(y) ** m,
        config.s0,
        [config.C0 / 4],
        config.s0 + 4 * (s1 - config.s0),
        rtol,
        atol,
        threshold=threshold,
    )
    if tb is None:
        raise RuntimeError("Riccati integration did not blow up")
    return tb


@dataclass(frozen=True)
class SubsolutionReport:
    margins: dict
    regime_ok: bool
    s1: float

    @property
    def admissible(self) -> bool:
        return self.regime_ok and all(v > 0 for v in self.margins.values())

    @property
    def worst(self) -> float:
        return min(self.margins.values())


def subsolution_grid(config: SubsolutionConfig, points: int = 400) -> np.ndarray:
    s1 = riccati_blowup_time(config)
    hi = config.s0 + 0.99 * (s1 - config.s0)
    lin = np.linspace(config.s0, hi, points)
    # cluster toward the blow-up end, where H3 changes fastest
    near = hi - (hi - config.s0) * np.geomspace(1e-4, 1, points // 2)
    return np.unique(np.concatenate([lin, near]))


def verify_subsolution(config: SubsolutionConfig, epsilon: float, grid: np.ndarray | None = None) -> SubsolutionReport:
    """Relative margins 1 - lhs/rhs of every condition making s H3(s) a strict subsolution.

    A positive margin means the inequality holds with that relative slack.
    Grid conditions report their worst value over ``grid`` (default: s0 up
    to 99% of the way to the Riccati blow-up time).
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    p, d, K0, C0, s0 = config.p, config.delta, config.K0, config.C0, config.s0
    m = config.power
    e = epsilon ** (p * (p - 1))
    s = subsolution_grid(config) if grid is None else np.asarray(grid, dtype=float)
    H3 = riccati_h3(config, s)
    H2 = s * H3
    dH2 = H3 + d * s * H3**m
    d2H2 = 2 * d * H3**m + d * d * s * m * H3**p
    margins = {
        # (1/8) K0 s0 (C0/4)^(p-1) > 1, so that H3 < (1/8) K0 s^(1-p) H2^p
        "linear_term": 1 - 1 / (K0 * s0 * (C0 / 4) ** (p - 1) / 8),
        # 2 delta eps^(p(p-1)) H3^m + 2 delta s H3^m <= (1/8) K0 s H3^p
        "riccati_terms": float(np.min(1 - (2 * d * e * H3**m + 2 * d * s * H3**m) / (K0 * s * H3**p / 8))),
        # eps^(p(p-1)) (p+1)/2 delta^2 < K0 / 8
        "second_derivative": 1 - e * m * d * d / (K0 / 8),
        # H2'(s0) = C0/4 + delta s0 (C0/4)^m < C0
        "initial_slope": 1 - (C0 / 4 + d * s0 * (C0 / 4) ** m) / C0,
        # eps^(p(p-1)) H2'' + 2 H2' < K0 s^(1-p) H2^p on the grid
        "subsolution": float(np.min(1 - (e * d2H2 + 2 * dH2) / (K0 * s ** (1 - p) * H2**p))),
    }
    return SubsolutionReport(margins, config.regime_ok(), riccati_blowup_time(config))


# --------------------------------------------------------------------------
# lifespan bound and the change of variables
# --------------------------------------------------------------------------


class LifespanBound(NamedTuple):
    value: float
    overflow: bool


def lifespan_upper_bound(epsilon: float, s1: float, p: float) -> LifespanBound:
    """exp(eps^(-p(p-1)) s1) - 2; +inf with ``overflow=True`` past exp(700)."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if not s1 > 0:
        raise ValueError("s1 must be positive")
    expo = epsilon ** (-p * (p - 1)) * s1
    if expo > EXP_OVERFLOW:
        return LifespanBound(math.inf, True)
    return LifespanBound(math.exp(expo) - 2, False)


def _fd(f, x, h):
    fp, f0, fm = f(x + h), f(x), f(x - h)
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / h**2


def scaled_sides(H0, dH0, d2H0, s, p: float, epsilon: float, K0: float = 1.0):
    """Both sides of the rescaled inequality for H1(s) = eps^(p^2-2p) H0(eps^(-p(p-1)) s).

    Returns ``(lhs, rhs)`` with lhs = eps^(p(p-1)) H1'' + 2 H1' and
    rhs = K0 s^(1-p) H1^p, built from H0 and its derivatives by the chain rule.
    """
    lam = epsilon ** (-p * (p - 1))
    c = epsilon ** (p * p - 2 * p)
    s = np.asarray(s, dtype=float)
    tau = lam * s
    H1 = c * H0(tau)
    dH1 = c * lam * dH0(tau)
    d2H1 = c * lam * lam * d2H0(tau)
    return epsilon ** (p * (p - 1)) * d2H1 + 2 * dH1, K0 * s ** (1 - p) * H1**p


def transform_chain_check(
    H: Callable,
    t_grid,
    p: float = 2.0,
    epsilon: float = 0.5,
    K0: float = 1.0,
    step: float = 1e-4,
) -> dict:
    """Finite-difference residuals of the log-time substitution and the eps scaling.

    With t + 2 = exp(tau) and H0(tau) = H(t):
      H0' = (t+2) H',   H0'' = (t+2)^2 H'' + (t+2) H'.
    With H1(s) = eps^(p^2-2p) H0(eps^(-p(p-1)) s) both sides of
    eps^(p(p-1)) H1'' + 2 H1' > K0 s^(1-p) H1^p equal eps^(-p) times the
    corresponding sides of H0'' + 2 H0' > K0 tau^(1-p) H0^p.
    """
    t = np.asarray(t_grid, dtype=float)
    tau = np.log(t + 2)
    H0 = lambda x: H(np.exp(x) - 2)
    dH, d2H = _fd(H, t, step)
    dH0, d2H0 = _fd(H0, tau, step)
    first = np.abs(dH0 - (t + 2) * dH) / np.maximum(np.abs(dH0), 1e-300)
    second = np.abs(d2H0 - ((t + 2) ** 2 * d2H + (t + 2) * dH)) / np.maximum(
        np.abs((t + 2) ** 2 * d2H) + np.abs((t + 2) * dH), 1e-300
    )
    lam = epsilon ** (-p * (p - 1))
    s = tau / lam
    H1 = lambda x: epsilon ** (p * p - 2 * p) * H0(lam * x)
    dH1, d2H1 = _fd(H1, s, step / lam)
    lhs1 = epsilon ** (p * (p - 1)) * d2H1 + 2 * dH1
    rhs1 = K0 * s ** (1 - p) * H1(s) ** p
    lhs0 = d2H0 + 2 * dH0
    rhs0 = K0 * tau ** (1 - p) * H0(tau) ** p
    scale = epsilon ** (-p)
    return {
        "chain_first": float(np.max(first)),
        "chain_second": float(np.max(second)),
        "scaling_lhs": float(np.max(np.abs(lhs1 - scale * lhs0) / np.abs(scale * lhs0))),
        "scaling_rhs": float(np.max(np.abs(rhs1 - scale * rhs0) / np.abs(scale * rhs0))),
        "inequality_preserved": bool(np.all((lhs1 > rhs1) == (lhs0 > rhs0))),
    }
