"""Command line entry point; every subcommand prints JSON on stdout."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from critwave import blowup_ode, exponents, harness, specfun, wavesim


def _dump(obj) -> None:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    json.dump(obj, sys.stdout, indent=2, default=default, allow_nan=True)
    sys.stdout.write("\n")


def cmd_exponent(args):
    p0 = exponents.critical_exponent(args.n)
    p = p0 if args.p is None else args.p
    params = exponents.make_params(args.n, p)
    _dump({
        "n": args.n,
        "critical_p": p0,
        "p": p,
        "q": params.q,
        "p_conj": params.p_conj,
        "identities": exponents.verify_critical_identities(params),
    })


def cmd_testfun(args):
    spec = specfun.TestFunctionSpec(args.n, args.q)
    z = np.linspace(0.1, 0.9, 9)
    wave_a, deriv_a = specfun.check_wave_identity(spec, 4.0, [0.5, 1.0, 2.0, 3.0])
    out = {
        "n": args.n,
        "q": args.q,
        "ode_residual": specfun.check_hypergeometric_ode(spec, z),
        "wave_residual": wave_a,
        "derivative_identity_residual": deriv_a,
    }
    try:
        env = specfun.check_envelopes(spec, np.linspace(0, 0.999, args.grid))
        out["envelope"] = asdict(env) | {"empirical_C0": env.empirical_c0}
    except ValueError as exc:
        out["envelope"] = {"error": str(exc)}
    _dump(out)


def _poly(coeffs):
    coeffs = [float(c) for c in coeffs]
    return lambda t: sum(c * t**k for k, c in enumerate(coeffs))


def cmd_compare(args):
    parser = configparser.ConfigParser()
    parser.read_string("[problem]\n" + Path(args.config).read_text())
    cfg = parser["problem"]

    def coeffs(key):
        return [float(v) for v in cfg.get(key).replace(",", " ").split()]

    problem = blowup_ode.ComparisonProblem(
        a=_poly(coeffs("a")),
        b=_poly(coeffs("b")),
        alpha=cfg.getfloat("alpha"),
        K_init=cfg.getfloat("K_init"),
        K_slope_init=cfg.getfloat("K_slope_init"),
        h_init=cfg.getfloat("h_init"),
        h_slope_init=cfg.getfloat("h_slope_init"),
        t_end=cfg.getfloat("t_end"),
    )
    _dump(asdict(blowup_ode.comparison_check(problem)))


def cmd_riccati(args):
    cfg = blowup_ode.SubsolutionConfig(s0=args.s0, delta=args.delta, C0=args.c0, K0=args.k0, p=args.p)
    _dump({
        "s1_closed_form": blowup_ode.riccati_blowup_time(cfg),
        "s1_numerical": blowup_ode.riccati_numerical_blowup(cfg),
    })


def cmd_lifespan(args):
    b = blowup_ode.lifespan_upper_bound(args.eps, args.s1, args.p)
    _dump({"bound": b.value if math.isfinite(b.value) else "inf", "overflow": b.overflow})


def cmd_simulate(args):
    p = exponents.critical_exponent(args.n) if args.critical or args.p is None else args.p
    data = wavesim.InitialData(epsilon=args.eps)
    state = wavesim.initialize(data, args.n, p, args.dr, args.cfl, t_end=args.tmax)
    result = wavesim.run_until_blowup(state, args.tmax, args.threshold)
    mons = wavesim.fill_monitors(result, args.n, p, args.eps)
    if args.trace:
        with open(args.trace, "w") as fh:
            for row in wavesim.trace_rows(result.trace):
                fh.write(json.dumps(row) + "\n")
    _dump({
        "n": args.n,
        "p": p,
        "eps": args.eps,
        "blowup_observed": result.blowup,
        "T_num": result.T_num,
        "t_final": result.t_final,
        "empirical_C1": mons["lp_bound"].empirical_C1,
        "empirical_K0": mons["g_inequality"].empirical_K0,
        "G_over_t2": mons["G_over_t2"],
        "max_support_excess": result.max_support_excess,
    })


def cmd_sweep(args):
    cfg = harness.load_config(args.config)
    out = Path(args.out) / "records.jsonl" if args.out else Path(cfg.output_path)
    records = harness.run_sweep(cfg, jobs=args.jobs, out_path=out)
    summary = {"records": str(out), "n_records": len(records),
               "blowups": sum(r.blowup_observed for r in records)}
    try:
        fit = harness.fit_lifespan_scaling(records, exponents.make_params(cfg.n, cfg.exponent))
        summary["fit"] = asdict(fit)
    except ValueError as exc:
        summary["fit"] = {"error": str(exc)}
    _dump(summary)


def cmd_fit(args):
    _dump(asdict(harness.fit_from_records_file(args.records)))


def cmd_plot(args):
    records = harness.read_records(args.records)
    try:
        fit = harness.fit_lifespan_scaling(records, exponents.make_params(records[0].n, records[0].p))
    except ValueError:
        fit = None
    svg, csv_path = harness.emit_plot(records, fit, args.out)
    _dump({"svg": str(svg), "csv": str(csv_path)})


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critwave", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("exponent", help="critical exponent and identity residuals")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=float)
    s.set_defaults(func=cmd_exponent)

    s = sub.add_parser("testfun-check", help="residuals of the hypergeometric test functions")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--grid", type=int, default=200)
    s.set_defaults(func=cmd_testfun)

    s = sub.add_parser("compare", help="comparison principle on a problem file")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("riccati", help="Riccati subsolution blow-up time")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--c0", type=float, required=True)
    s.add_argument("--s0", type=float, required=True)
    s.add_argument("--k0", type=float, default=1.0)
    s.set_defaults(func=cmd_riccati)

    s = sub.add_parser("lifespan-bound", help="exp(eps^(-p(p-1)) s1) - 2")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--s1", type=float, required=True)
    s.add_argument("--p", type=float, required=True)
    s.set_defaults(func=cmd_lifespan)

    s = sub.add_parser("simulate", help="radial simulation with functional monitors")
    s.add_argument("--n", type=int, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--p", type=float)
    g.add_argument("--critical", action="store_true")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--dr", type=float, default=0.02)
    s.add_argument("--cfl", type=float, default=0.5)
    s.add_argument("--tmax", type=float, required=True)
    s.add_argument("--threshold", type=float, default=wavesim.DEFAULT_THRESHOLD)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="epsilon sweep from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", help="fit the lifespan law to a records file")
    s.add_argument("--records", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("plot", help="SVG and CSV of a records file")
    s.add_argument("--records", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
