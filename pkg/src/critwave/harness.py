"""Epsilon sweeps, lifespan-law fits, persistence and plots."""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from critwave.blowup_ode import EXP_OVERFLOW, LifespanBound, lifespan_upper_bound
from critwave.exponents import DimensionParams, critical_exponent, make_params
from critwave.wavesim import (
    DEFAULT_THRESHOLD,
    InitialData,
    InstabilityError,
    bump,
    fill_monitors,
    initialize,
    run_until_blowup,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("epsilon", "x", "T_num", "y")


@dataclass
class SweepConfig:
    n: int = 4
    use_critical_p: bool = True
    p: float | None = None
    eps_values: list = field(default_factory=lambda: list(np.round(np.linspace(0.4, 1.2, 8), 12)))
    dr: float = 0.02
    cfl: float = 0.5
    t_max: float = 50.0
    threshold: float = DEFAULT_THRESHOLD
    output_path: str = "records.jsonl"
    seed: int = 0
    amplitude: float = 1.0  # scales both bump profiles

    def __post_init__(self):
        self.eps_values = [float(e) for e in self.eps_values]
        if not self.eps_values:
            raise ValueError("eps_values must be nonempty")
        if any(not e > 0 for e in self.eps_values):
            raise ValueError("every epsilon must be positive")
        if not self.t_max > 1:
            raise ValueError("t_max must exceed 1")
        if not self.dr > 0:
            raise ValueError("dr must be positive")
        if not self.use_critical_p and self.p is None:
            raise ValueError("give p or set use_critical_p")

    @property
    def exponent(self) -> float:
        return critical_exponent(self.n) if self.use_critical_p else float(self.p)


@dataclass
class SweepRecord:
    epsilon: float
    T_num: float | None
    blowup_observed: bool
    empirical_C1: float
    empirical_K0: float
    dr: float
    dt: float
    wall_time: float
    n: int = 4
    p: float = 2.0
    status: str = "ok"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SweepRecord":
        return cls(**json.loads(line))


@dataclass(frozen=True)
class FitResult:
    slope_B_hat: float
    intercept: float
    r_squared: float
    points_used: int
    transform: str = "ln(2+T) vs eps^(-p(p-1))"


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

_SECTION = "sweep"


def load_config(path, **overrides) -> SweepConfig:
    """Read a flat ``key = value`` file; keyword overrides win over the file.

    Keys: n, use_critical_p, p, eps_values (comma separated), dr, cfl, t_max,
    threshold, output_path, seed, amplitude.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    parser.read_string(f"[{_SECTION}]\n" + text)
    raw = dict(parser[_SECTION])
    known = {f.name for f in fields(SweepConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for key, val in raw.items():
        if key == "eps_values":
            kw[key] = [float(v) for v in val.replace(",", " ").split()]
        elif key in ("n", "seed"):
            kw[key] = int(val)
        elif key == "use_critical_p":
            kw[key] = parser.getboolean(_SECTION, key)
        elif key == "output_path":
            kw[key] = val
        else:
            kw[key] = float(val)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SweepConfig(**kw)


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------


def run_one(config: SweepConfig, epsilon: float) -> SweepRecord:
    """One simulation with monitors; instability is recorded, not raised."""
    n, p = config.n, config.exponent
    amp = config.amplitude
    data = InitialData(lambda r: amp * bump(r), lambda r: amp * bump(r), epsilon)
    state = initialize(data, n, p, config.dr, config.cfl, t_end=config.t_max)
    start = time.perf_counter()
    try:
        result = run_until_blowup(state, config.t_max, config.threshold)
    except InstabilityError as exc:
        return SweepRecord(epsilon, None, False, 0.0, 0.0, config.dr, state.dt,
                           time.perf_counter() - start, n, p, f"unstable: {exc}")
    # monitors use the physical amplitude of the data
    mons = fill_monitors(result, n, p, epsilon * amp)
    c1 = max(mons["lp_bound"].empirical_C1, 0.0)
    k0 = mons["g_inequality"].empirical_K0
    k0 = max(k0, 0.0) if math.isfinite(k0) else 0.0
    return SweepRecord(
        epsilon=epsilon,
        T_num=result.T_num,
        blowup_observed=result.blowup,
        empirical_C1=c1,
        empirical_K0=k0,
        dr=config.dr,
        dt=state.dt,
        wall_time=time.perf_counter() - start,
        n=n,
        p=p,
    )


def run_sweep(config: SweepConfig, jobs: int = 1, out_path=None) -> list[SweepRecord]:
    """Run every epsilon (duplicates included) and append each record as a JSON line.

    Records are written as they complete by this process alone; the returned
    list follows ``config.eps_values`` order.
    """
    path = Path(out_path or config.output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    results: list[SweepRecord | None] = [None] * len(config.eps_values)
    with path.open("a") as sink:

        def sink_write(i, rec):
            results[i] = rec
            sink.write(rec.to_json() + "\n")
            sink.flush()
            log.info("eps=%g T_num=%s status=%s", rec.epsilon, rec.T_num, rec.status)

        if jobs <= 1:
            for i, eps in enumerate(config.eps_values):
                sink_write(i, run_one(config, eps))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futs = {pool.submit(run_one, config, eps): i for i, eps in enumerate(config.eps_values)}
                for fut in as_completed(futs):
                    sink_write(futs[fut], fut.result())
    return results


def read_records(path) -> list[SweepRecord]:
    with Path(path).open() as fh:
        return [SweepRecord.from_json(line) for line in fh if line.strip()]


def write_records(records, path) -> None:
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------


def scaling_x(epsilon, p):
    return np.asarray(epsilon, dtype=float) ** (-p * (p - 1))


def fit_points(xs, ys) -> FitResult:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 3:
        raise ValueError(f"need at least 3 blow-up observations, got {x.size}")
    # sort so the sums do not depend on input order
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-300 * max(1.0, float(np.sum(x * x))):
        raise ValueError("degenerate fit: all epsilon values coincide")
    slope = float(np.sum((x - xm) * (y - ym))) / sxx
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1 - ss_res / ss_tot))
    return FitResult(slope, intercept, r2, int(x.size))


def fit_lifespan_scaling(records, params: DimensionParams) -> FitResult:
    """OLS of ln(2 + T_num) on eps^(-p(p-1)) over the records that blew up."""
    used = [r for r in records if r.blowup_observed and r.T_num is not None]
    x = scaling_x([r.epsilon for r in used], params.p)
    y = np.log(2 + np.array([r.T_num for r in used], dtype=float))
    return fit_points(x, y)


def compare_with_bound(records, s1: float, p: float) -> list[dict]:
    """Per-record check T_num <= exp(eps^(-p(p-1)) s1) - 2.

    A violation points at witness constants that are too small for this data;
    the bound itself only asserts existence of some admissible constant.
    """
    rows = []
    for rec in records:
        if rec.epsilon <= 1:
            bound = lifespan_upper_bound(rec.epsilon, s1, p)
        else:
            # sweeps may step past eps = 1; same formula, evaluated directly
            expo = rec.epsilon ** (-p * (p - 1)) * s1
            bound = LifespanBound(math.inf, True) if expo > EXP_OVERFLOW else LifespanBound(math.exp(expo) - 2, False)
        ok = (not rec.blowup_observed) or rec.T_num <= bound.value
        rows.append({
            "epsilon": rec.epsilon,
            "T_num": rec.T_num,
            "bound": bound.value,
            "overflow": bound.overflow,
            "within_bound": bool(ok),
            "diagnostic": None if ok else "witness constants too aggressive for this data",
        })
    return rows


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def write_csv(records, p: float, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            if not rec.blowup_observed:
                continue
            x = float(scaling_x(rec.epsilon, p))
            w.writerow([repr(rec.epsilon), repr(x), repr(float(rec.T_num)), repr(math.log(2 + rec.T_num))])


def read_csv(path):
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in row.items()} for row in rows]


def emit_plot(records, fit: FitResult | None, path, p: float | None = None) -> tuple[Path, Path]:
    """SVG scatter of ln(2+T_num) against eps^(-p(p-1)) with the fitted line, plus a CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not records:
        raise ValueError("no records to plot")
    path = Path(path)
    p = records[0].p if p is None else p
    csv_path = path.with_suffix(".csv")
    try:
        write_csv(records, p, csv_path)
        done = [r for r in records if r.blowup_observed]
        x = scaling_x([r.epsilon for r in done], p)
        y = np.log(2 + np.array([r.T_num for r in done], dtype=float))
        with matplotlib.rc_context({"svg.hashsalt": "critwave", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.scatter(x, y, color="k", s=14, label="simulations")
            if fit is not None and len(done) >= 3:
                xx = np.linspace(x.min(), x.max(), 50)
                ax.plot(xx, fit.slope_B_hat * xx + fit.intercept, "r-",
                        label=f"B = {fit.slope_B_hat:.4g}, R$^2$ = {fit.r_squared:.4f}")
            else:
                ax.text(0.05, 0.9, "fewer than 3 blow-ups: no fit", transform=ax.transAxes, color="r")
            ax.set_xlabel(r"$\varepsilon^{-p(p-1)}$")
            ax.set_ylabel(r"$\ln(2+T)$")
            ax.legend(loc="lower right", fontsize=8)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
    except OSError as exc:
        raise OSError(f"writing plot artifacts next to {path}: {exc}") from exc
    return path, csv_path


def fit_from_records_file(path, params: DimensionParams | None = None) -> FitResult:
    recs = read_records(path)
    if params is None:
        params = make_params(recs[0].n, recs[0].p)
    return fit_lifespan_scaling(recs, params)
