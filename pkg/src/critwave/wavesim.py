"""Radial leapfrog solver for u_tt - Laplace(u) = |u|^p and functional monitors.

The Laplacian is discretized in flux form,

    (1 / r^(n-1)) d/dr (r^(n-1) du/dr),

with cell-face weights ``r_(j+1/2)^(n-1)``; at the origin this reduces to
``2n (u_1 - u_0) / dr^2``, i.e. n u_rr(0) for the even extension.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from critwave.specfun import TestFunctionSpec, capital_phi_q, sphere_area

DEFAULT_THRESHOLD = 1e6
SNAPSHOT_CADENCE = 0.1


class InstabilityError(RuntimeError):
    """The run grew through a grid-scale (checkerboard) mode, not a focusing blow-up."""


class QuadratureResolutionWarning(UserWarning):
    pass


def bump(r):
    """(1 - r^2)^4 on r <= 1, zero beyond."""
    r = np.asarray(r, dtype=float)
    return np.where(r < 1, np.clip(1 - r * r, 0, None) ** 4, 0.0)


@dataclass(frozen=True)
class InitialData:
    profile_f: Callable = bump
    profile_g: Callable = bump
    epsilon: float = 1.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")


@dataclass
class RadialSimState:
    n: int
    p: float
    dr: float
    dt: float
    t: float
    r: np.ndarray
    u_prev: np.ndarray
    u_curr: np.ndarray
    r_support: float
    nonlinear: bool = True
    steps: int = 0


@dataclass
class FunctionalTrace:
    times: list = field(default_factory=list)
    max_u: list = field(default_factory=list)
    lp_norm: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    r: np.ndarray | None = None
    # filled by the monitors
    G: np.ndarray | None = None
    G_slope: np.ndarray | None = None
    lp_ratio: np.ndarray | None = None
    K0_estimate: np.ndarray | None = None


@dataclass(frozen=True)
class RunResult:
    blowup: bool
    T_num: float | None
    t_final: float
    trace: FunctionalTrace
    max_support_excess: float


def _weights(r: np.ndarray, n: int, dr: float):
    faces = (r[:-1] + 0.5 * dr) ** (n - 1)
    vol = np.empty_like(r)
    vol[0] = (0.5 * dr) ** n / n
    vol[1:] = r[1:] ** (n - 1) * dr
    return faces, vol


def radial_laplacian(u: np.ndarray, r: np.ndarray, n: int, dr: float, faces=None, vol=None) -> np.ndarray:
    if faces is None or vol is None:
        faces, vol = _weights(r, n, dr)
    flux = faces * np.diff(u) / dr
    out = np.empty_like(u)
    out[0] = flux[0]
    out[1:-1] = flux[1:] - flux[:-1]
    out[-1] = -flux[-1]
    out /= vol
    return out


def initialize(
    data: InitialData,
    n: int,
    p: float,
    dr: float,
    cfl: float = 0.5,
    t_end: float = 10.0,
    nonlinear: bool = True,
) -> RadialSimState:
    if dr <= 0:
        raise ValueError("dr must be positive")
    if not 0 < cfl < 1:
        raise ValueError("cfl must lie in (0, 1)")
    nr = int(math.ceil((t_end + 1) / dr)) + 5
    r = dr * np.arange(nr)
    f = np.asarray(data.profile_f(r), dtype=float)
    g = np.asarray(data.profile_g(r), dtype=float)
    if np.any(f < 0) or np.any(g < 0):
        raise ValueError("initial profiles must be nonnegative")
    dt = cfl * dr
    eps = data.epsilon
    u0 = eps * f
    lap = radial_laplacian(u0, r, n, dr)
    force = np.abs(u0) ** p if nonlinear else 0.0
    u1 = u0 + dt * eps * g + 0.5 * dt * dt * (lap + force)
    return RadialSimState(
        n=n, p=p, dr=dr, dt=dt, t=dt, r=r, u_prev=u0, u_curr=u1,
        r_support=_support_radius(u1, r), nonlinear=nonlinear, steps=1,
    )


def _support_radius(u: np.ndarray, r: np.ndarray, rel: float = 1e-12) -> float:
    amp = np.max(np.abs(u))
    if amp == 0:
        return 0.0
    idx = np.nonzero(np.abs(u) > rel * amp)[0]
    return float(r[idx[-1]])


def step(state: RadialSimState) -> RadialSimState:
    """One leapfrog step; returns a new state."""
    u = state.u_curr
    lap = radial_laplacian(u, state.r, state.n, state.dr)
    rhs = lap + (np.abs(u) ** state.p if state.nonlinear else 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        u_next = 2 * u - state.u_prev + state.dt**2 * rhs
    u_next[-1] = 0.0
    return replace(
        state, t=(state.steps + 1) * state.dt, u_prev=u, u_curr=u_next,
        r_support=_support_radius(u_next, state.r) if np.all(np.isfinite(u_next)) else math.inf,
        steps=state.steps + 1,
    )


def lp_norm(state_or_u, r=None, n=None, p=None) -> float:
    """|S^(n-1)| * integral of |u|^p r^(n-1) dr, composite Simpson on the grid."""
    if isinstance(state_or_u, RadialSimState):
        st = state_or_u
        u, r, n, p = st.u_curr, st.r, st.n, st.p
    else:
        u = np.asarray(state_or_u, dtype=float)
    r = np.asarray(r, dtype=float)
    vals = np.abs(u) ** p * r ** (n - 1)
    if not np.any(vals):
        return 0.0
    return sphere_area(n - 1) * float(integrate.simpson(vals, x=r))


def discrete_energy(u_next: np.ndarray, u_prev: np.ndarray, u_curr: np.ndarray, r, n, dr, dt) -> float:
    """Linear wave energy (1/2) * integral of (u_t^2 + u_r^2) r^(n-1) dr at the middle level."""
    faces, vol = _weights(r, n, dr)
    ut = (u_next - u_prev) / (2 * dt)
    ur = np.diff(u_curr) / dr
    return 0.5 * sphere_area(n - 1) * (float(np.sum(vol * ut * ut)) + float(np.sum(faces * ur * ur * dr)))


def _roughness(u: np.ndarray) -> float:
    amp = np.max(np.abs(u))
    if amp == 0:
        return 0.0
    return float(np.max(np.abs(u[2:] - 2 * u[1:-1] + u[:-2]))) / (4 * amp)


def _extrapolate_cascade(times, amps, threshold, p):
    """Blow-up time from the last amplitude samples around the threshold crossing.

    Near a focusing point the amplitude follows the ODE cascade
    A ~ c (T - t)^(-2/(p-1)), so A^(-(p-1)/2) falls linearly to zero at T.
    The two samples bracketing the crossing fix that line; its root is T.
    If the bracket is not strictly increasing the log-linear crossing time
    is returned instead.
    """
    t = np.asarray(times, dtype=float)
    a = np.asarray(amps, dtype=float)
    i = int(np.argmax(a >= threshold))
    if i == 0:
        return float(t[0])
    t0, t1, a0, a1 = t[i - 1], t[i], a[i - 1], min(a[i], 1e300)
    if not 0 < a0 < a1:
        return float(t1)
    t_cross = t0 + (t1 - t0) * (math.log(threshold) - math.log(a0)) / (math.log(a1) - math.log(a0))
    k = (p - 1) / 2
    w0, w1 = a0 ** (-k), a1 ** (-k)
    t_root = t1 + (t1 - t0) * w1 / (w0 - w1)
    return float(min(max(t_cross, t_root), t1 + (t1 - t0)))


def run_until_blowup(
    state: RadialSimState,
    t_max: float,
    threshold: float = DEFAULT_THRESHOLD,
    cadence: float = SNAPSHOT_CADENCE,
    keep_snapshots: bool = True,
) -> RunResult:
    """Leapfrog until max|u| reaches ``threshold`` or t reaches ``t_max``.

    Raises ``InstabilityError`` on the signatures of a CFL violation rather
    than focusing: the value at the peak changing sign on three consecutive
    steps while growing, or a spatial checkerboard growing while the
    nonlinearity is still resolved by the time step (dt^2 max|u|^(p-1) small).
    """
    if state.r[-1] < t_max + 1:
        raise ValueError("radial grid too short for t_max; initialize with t_end >= t_max")
    trace = FunctionalTrace(r=state.r)
    every = max(1, int(round(cadence / state.dt)))
    hist_t, hist_a = [], []
    amp0 = float(np.max(np.abs(state.u_prev)))
    excess = -math.inf
    flips = 0

    def record(t, u):
        trace.times.append(t)
        trace.max_u.append(float(np.max(np.abs(u))))
        trace.lp_norm.append(lp_norm(u, state.r, state.n, state.p))
        if keep_snapshots:
            k = min(len(u), int(math.floor((t + 1) / state.dr + 1e-9)) + 1)
            trace.snapshots.append(u[:k].copy())

    record(0.0, state.u_prev)
    if state.steps % every == 0:
        record(state.t, state.u_curr)
    hist_t.append(state.t)
    hist_a.append(float(np.max(np.abs(state.u_curr))))
    while state.t < t_max - 1e-12:
        state = step(state)
        u = state.u_curr
        amp = float(np.max(np.abs(u))) if np.all(np.isfinite(u)) else math.inf
        if np.isfinite(amp):
            # focusing keeps the sign at the peak; a grid mode flips it every step
            k = int(np.argmax(np.abs(u)))
            flips = flips + 1 if u[k] * state.u_prev[k] < 0 else 0
            grown = amp > 10 * max(amp0, 1e-300)
            resolved = state.dt**2 * amp ** (state.p - 1) < 0.05
            if grown and (flips >= 3 or (resolved and _roughness(u) > 0.5)):
                raise InstabilityError(
                    f"grid-scale growth at t={state.t:.4g} (dt/dr={state.dt / state.dr:.3g}); "
                    "reduce the CFL factor"
                )
        elif flips >= 2 or (_roughness(state.u_prev) > 0.5 and state.dt**2 * hist_a[-1] ** (state.p - 1) < 0.05):
            raise InstabilityError(f"overflow from a grid-scale mode at t={state.t:.4g}")
        hist_t.append(state.t)
        hist_a.append(amp)
        if amp >= threshold:
            T = _extrapolate_cascade(hist_t, hist_a, threshold, state.p)
            return RunResult(True, T, state.t, trace, excess)
        excess = max(excess, state.r_support - (state.t + 1))
        if state.steps % every == 0:
            record(state.t, u)
    return RunResult(False, None, state.t, trace, excess)


# --------------------------------------------------------------------------
# functional monitors
# --------------------------------------------------------------------------


def _window(times, lo, hi):
    t = np.asarray(times)
    return (t >= lo - 1e-12) & (t <= hi + 1e-12)


@dataclass(frozen=True)
class LpBoundMonitor:
    ratio: np.ndarray
    window: np.ndarray
    empirical_C1: float
    min_over_median: float

    @property
    def positive(self) -> bool:
        return self.empirical_C1 > 0 and self.min_over_median >= 0.1


def monitor_lp_bound(times, lp, n: int, p: float, epsilon: float, t_hi: float | None = None) -> LpBoundMonitor:
    """lp_norm(t) / (eps^p (1+t)^(n-1-(n-1)p/2)) and its infimum over [1, t_hi]."""
    t = np.asarray(times, dtype=float)
    lp = np.asarray(lp, dtype=float)
    expo = (n - 1) - (n - 1) * p / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(epsilon > 0, lp / (epsilon**p * (1 + t) ** expo), 0.0)
    ratio = np.nan_to_num(ratio)
    win = _window(t, 1.0, t[-1] if t_hi is None else t_hi)
    vals = ratio[win]
    if vals.size == 0:
        return LpBoundMonitor(ratio, win, 0.0, 0.0)
    med = float(np.median(vals))
    c1 = float(np.min(vals))
    return LpBoundMonitor(ratio, win, c1, c1 / med if med > 0 else 0.0)


def compute_G(times, r, snapshots, n: int, p: float, spec: TestFunctionSpec | None = None):
    """G(t) and G'(t) from radial snapshots.

    G'(t) = int_0^t (1+tau) I(tau) dtau,  G(t) = t G'(t) - int_0^t tau (1+tau) I(tau) dtau,
    with I(tau) = integral of Phi_q(tau, x) |u|^p dx restricted to the support
    r <= tau + 1. The inner integral is Simpson on the grid, the outer one
    cumulative trapezoid over the snapshot times.
    """
    q = (n - 1) / 2 - 1 / p
    spec = spec or TestFunctionSpec(n, q)
    t = np.asarray(times, dtype=float)
    r = np.asarray(r, dtype=float)
    area = sphere_area(n - 1)
    inner = np.zeros_like(t)
    worst_var = 0.0
    for k, (tau, u) in enumerate(zip(t, snapshots)):
        u = np.asarray(u, dtype=float)
        m = min(len(u), int(np.searchsorted(r, tau + 1 + 1e-9, side="right")))
        if m < 2:
            continue
        uu = np.abs(u[:m]) ** p
        if not np.any(uu):
            continue
        rr = r[:m]
        f = capital_phi_q(spec, tau, rr) * uu * rr ** (n - 1)
        fmax = np.max(np.abs(f))
        worst_var = max(worst_var, float(np.max(np.abs(np.diff(f)))) / fmax)
        inner[k] = area * integrate.simpson(f, x=rr)
    if worst_var > 0.1:
        warnings.warn(
            f"inner integrand varies by {worst_var:.0%} of its maximum across one cell; "
            "G is under-resolved",
            QuadratureResolutionWarning,
            stacklevel=2,
        )
    j1 = integrate.cumulative_trapezoid((1 + t) * inner, t, initial=0.0)
    j2 = integrate.cumulative_trapezoid(t * (1 + t) * inner, t, initial=0.0)
    G = t * j1 - j2
    return G, j1


@dataclass(frozen=True)
class GInequalityMonitor:
    k: np.ndarray  # nan where the lower integral is not yet positive
    window: np.ndarray
    empirical_K0: float

    @property
    def positive(self) -> bool:
        return bool(np.isfinite(self.empirical_K0) and self.empirical_K0 > 0)


def monitor_g_inequality(times, G, G_slope, p: float, t_lo: float = 1.0, t_hi: float | None = None) -> GInequalityMonitor:
    """k(t) = G'(t) / [(ln(2+t))^(1-p) (2+t) (int_0^t (2+tau)^(-3) G dtau)^p]."""
    t = np.asarray(times, dtype=float)
    G = np.asarray(G, dtype=float)
    low = integrate.cumulative_trapezoid((2 + t) ** -3.0 * G, t, initial=0.0)
    k = np.full_like(t, np.nan)
    ok = low > 0
    k[ok] = np.asarray(G_slope)[ok] / (np.log(2 + t[ok]) ** (1 - p) * (2 + t[ok]) * low[ok] ** p)
    win = _window(t, t_lo, t[-1] if t_hi is None else t_hi) & ok
    k0 = float(np.min(k[win])) if win.any() else math.nan
    return GInequalityMonitor(k, win, k0)


def g_growth_constant(times, G, epsilon: float, p: float, t_lo: float = 2.0, t_hi: float | None = None) -> float:
    """inf of G(t) / (eps^p t^2) over [t_lo, t_hi]."""
    t = np.asarray(times, dtype=float)
    win = _window(t, t_lo, t[-1] if t_hi is None else t_hi)
    if not win.any() or epsilon == 0:
        return 0.0
    return float(np.min(np.asarray(G)[win] / (epsilon**p * t[win] ** 2)))


def fill_monitors(result: RunResult, n: int, p: float, epsilon: float, window_fraction: float = 0.9):
    """Compute every monitor on a finished run and attach the series to its trace.

    The window upper end is ``window_fraction`` of T_num, or of the final
    time when no blow-up was observed.
    """
    tr = result.trace
    t = np.asarray(tr.times)
    t_end = result.T_num if result.blowup else result.t_final
    t_hi = window_fraction * t_end
    lem = monitor_lp_bound(t, tr.lp_norm, n, p, epsilon, t_hi)
    G, Gs = compute_G(t, tr.r, tr.snapshots, n, p)
    ineq = monitor_g_inequality(t, G, Gs, p, 1.0, t_hi)
    tr.G, tr.G_slope, tr.lp_ratio, tr.K0_estimate = G, Gs, lem.ratio, ineq.k
    return {
        "lp_bound": lem,
        "g_inequality": ineq,
        "g_inequality_t2": monitor_g_inequality(t, G, Gs, p, 2.0, t_hi),
        "G_over_t2": g_growth_constant(t, G, epsilon, p, 2.0, t_hi),
        "t_hi": t_hi,
    }


def trace_rows(trace: FunctionalTrace):
    """JSON-ready rows {t, max_u, lp_norm, G, G_slope, lemma22_ratio, k_estimate}.

    The key names are the fixed trace format; ``lemma22_ratio`` carries ``lp_ratio``.
    """

    def val(arr, i):
        if arr is None:
            return None
        x = float(arr[i])
        return x if math.isfinite(x) else None

    for i, t in enumerate(trace.times):
        yield {
            "t": float(t),
            "max_u": trace.max_u[i],
            "lp_norm": trace.lp_norm[i],
            "G": val(trace.G, i),
            "G_slope": val(trace.G_slope, i),
            "lemma22_ratio": val(trace.lp_ratio, i),
            "k_estimate": val(trace.K0_estimate, i),
        }
