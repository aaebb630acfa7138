"""voltsmile command line.

Exit codes: 0 success, 1 no-arbitrage violation found, 2 bad input,
3 numerical failure.  Data goes to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import calibration as cal
from .forward_model import (GaussianConst, LabelError, MultiFactorCF, TwoFactorCF, TwoFactorParams,
                            atomic_decomposition, noa_check, period_from_label, resolve_gamma2)
from .fourier_pricer import PricingGrid, QuadratureError, black_call, call_price, implied_vol_array
from .market_data import InputError, MarketSnapshot, filter_strikes, load_futures, load_snapshot
from .mc_oracle import McConfig, mc_call_price
from .nig_core import density_centered, moments

log = logging.getLogger("voltsmile")

EXIT_OK, EXIT_NOA, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_EXERCISE_LAG = 3

# Option defaults per subcommand.  Flags default to None so that an explicit
# flag beats a --config value, which beats these.
DEFAULTS = {
    "price": dict(mode="fourier", quad="adaptive_simpson", A=10.0, N=4096, abs_tol=1e-8,
                  paths=1_000_000, steps=32, seed=0, scheme="left"),
    "calibrate": dict(model="two-factor", objective="price", seed=0, multistart=1, budget=3000,
                      quad="euler_sum", A=10.0, N=2048, abs_tol=1e-8, band=[0.9, 1.1],
                      penalty_weight=1.0, spread=0.2, polish=True),
    "check-noa": dict(tol=1e-4),
    "plotdata": dict(factor=1, points=401, width=6.0),
}
REQUIRED = {
    "price": ["futures", "date", "contract", "strikes"],
    "calibrate": ["futures", "options", "date", "out"],
    "check-noa": ["futures", "date"],
    "plotdata": ["kind"],
}


class UsageError(Exception):
    """Bad flags or input files; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Parameter files: two columns "parameter,value"
# ---------------------------------------------------------------------------

FACTOR_NAMES = ("alpha1", "beta1", "alpha2", "beta2", "gamma1", "mu")


def read_param_rows(path) -> dict:
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or [h.strip() for h in head] != ["parameter", "value"]:
            raise UsageError(f"{path}: expected header 'parameter,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise UsageError(f"{path}:{lineno}: expected 2 fields")
            try:
                rows[row[0].strip()] = float(row[1])
            except ValueError:
                raise UsageError(f"{path}:{lineno}: value {row[1]!r} is not a number") from None
    return rows


def params_from_rows(rows: dict, reference: dt.date) -> TwoFactorParams:
    """Two-factor parameters from file rows; 'alpha'/'beta' alone mean the one-factor model."""
    g2 = {}
    for key, val in rows.items():
        if key.startswith("gamma2:"):
            g2[period_from_label(key.split(":", 1)[1], reference)] = val
    if "alpha" in rows:
        return TwoFactorParams(1.0, 0.0, rows["alpha"], rows["beta"], 0.0, 0.0, g2)
    missing = [n for n in FACTOR_NAMES if n not in rows]
    if missing:
        raise UsageError(f"parameter file lacks {', '.join(missing)}")
    return TwoFactorParams(*(rows[n] for n in FACTOR_NAMES), g2)


def param_rows(result: cal.CalibrationResult, snapshot: MarketSnapshot) -> list:
    if result.model_kind == "black":
        return [(f"sigma:{lab}", s) for lab, s in result.params.items()]
    p = result.params
    if result.model_kind == "one_factor":
        rows = [("alpha", p.alpha2), ("beta", p.beta2)]
    else:
        rows = [(n, getattr(p, n)) for n in FACTOR_NAMES]
    for label, (period, _) in snapshot.futures.items():
        rows.append((f"gamma2:{label}", resolve_gamma2(p, period, snapshot.decomp)))
    return rows


def _write_csv(path_or_fh, header, rows):
    own = not hasattr(path_or_fh, "write")
    fh = open(path_or_fh, "w", newline="", encoding="utf-8") if own else path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid date {text!r}, expected YYYY-MM-DD") from None


def parse_strikes(text: str) -> np.ndarray:
    """'30,35,40' or an inclusive range 'lo:hi:step'."""
    try:
        if ":" in text:
            lo, hi, step = (float(t) for t in text.split(":"))
            if not step > 0 or hi < lo:
                raise ValueError
            n = int(math.floor((hi - lo) / step + 1e-9))
            k = lo + step * np.arange(n + 1)
        else:
            k = np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"cannot parse strikes {text!r}; use 'k1,k2,...' or 'lo:hi:step'") from None
    if k.size == 0 or np.any(k <= 0):
        raise UsageError("strikes must be positive")
    return k


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="voltsmile", description="Two-factor NIG option pricing and calibration for "
                 "electricity futures.")
    ap.add_argument("--config", help="JSON file with option overrides for the subcommand")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def grid_flags(p):
        p.add_argument("--quad", choices=["adaptive_simpson", "euler_sum"])
        p.add_argument("--A", type=float, help="initial frequency cut-off")
        p.add_argument("--N", type=int, help="nodes for the Euler sum")
        p.add_argument("--abs-tol", type=float)

    p = sub.add_parser("price", help="price calls on one contract")
    p.add_argument("--params", help="parameter CSV (parameter,value)")
    p.add_argument("--futures")
    p.add_argument("--date", type=_date, help="valuation date")
    p.add_argument("--contract")
    p.add_argument("--strikes", help="'k1,k2,...' or 'lo:hi:step'")
    p.add_argument("--mode", choices=["fourier", "mc", "black"])
    p.add_argument("--exercise", type=_date,
                   help=f"exercise date (default {DEFAULT_EXERCISE_LAG} days before delivery)")
    p.add_argument("--gaussian-sigma", type=float,
                   help="price a single Brownian factor with this volatility per sqrt(day)")
    p.add_argument("--paths", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=["left", "midpoint"])
    p.add_argument("--out", help="also write the table to this CSV file")
    grid_flags(p)

    p = sub.add_parser("calibrate", help="fit a model to an option snapshot")
    p.add_argument("--futures")
    p.add_argument("--options")
    p.add_argument("--date", type=_date)
    p.add_argument("--model", choices=["black", "one-factor", "two-factor"])
    p.add_argument("--objective", choices=["price", "iv"])
    p.add_argument("--seed", type=int)
    p.add_argument("--multistart", type=int)
    p.add_argument("--budget", type=int, help="objective evaluations per start")
    p.add_argument("--start", help="parameter CSV used as the first starting point")
    p.add_argument("--spread", type=float, help="perturbation scale for further starts around --start")
    p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), help="strike band as fraction of F")
    p.add_argument("--penalty-weight", type=float)
    p.add_argument("--no-polish", dest="polish", action="store_const", const=False)
    p.add_argument("--out", help="output directory")
    grid_flags(p)

    p = sub.add_parser("check-noa", help="check overlapping-delivery consistency")
    p.add_argument("--futures")
    p.add_argument("--date", type=_date)
    p.add_argument("--gamma2", help="parameter CSV with gamma2:<label> rows")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("plotdata", help="CSV series for external plotting")
    p.add_argument("--kind", choices=["smile", "surface", "density", "gamma2"])
    p.add_argument("--report", help="report.csv from calibrate (smile, surface)")
    p.add_argument("--params", help="parameter CSV (density, gamma2)")
    p.add_argument("--factor", type=int, choices=[1, 2], help="which NIG factor (density)")
    p.add_argument("--points", type=int)
    p.add_argument("--width", type=float, help="half-width of the density grid in standard deviations")
    p.add_argument("--series", help="restrict the surface to one series (default market)")
    p.add_argument("--out", help="output CSV (default stdout)")
    return ap


def resolve_args(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    cmd = args.command
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in overrides.items():
            dest = key.replace("-", "_")
            if dest not in vars(args) or dest in ("command", "config", "verbose"):
                raise UsageError(f"unknown config key {key!r} for {cmd}")
            if getattr(args, dest) is None:
                if dest in ("date", "exercise"):
                    val = _date(val)
                setattr(args, dest, val)
    for key, val in DEFAULTS.get(cmd, {}).items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    missing = [f"--{k.replace('_', '-')}" for k in REQUIRED[cmd] if getattr(args, k) is None]
    if missing:
        raise UsageError(f"{cmd}: missing {', '.join(missing)}")
    return args


def _grid(args) -> PricingGrid:
    return PricingGrid(A=args.A, quad_mode=args.quad, N=args.N, abs_tol=args.abs_tol)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_price(args, out=None) -> int:
    out = out or sys.stdout
    futures = load_futures(args.futures, args.date)
    if args.contract not in futures:
        raise UsageError(f"unknown contract {args.contract!r}; futures file lists {', '.join(futures)}")
    period, F = futures[args.contract]
    if args.exercise is not None:
        T = (args.exercise - args.date).days
    else:
        T = period.start - DEFAULT_EXERCISE_LAG
    if not 0 < T <= period.start:
        raise UsageError(f"exercise must lie after the valuation date and not after delivery start "
                         f"(got day {T}, delivery starts on day {period.start})")
    strikes = parse_strikes(args.strikes)
    stderr = None
    if args.mode == "black":
        if not args.params:
            raise UsageError("--mode black needs --params with sigma:<label> rows")
        rows = read_param_rows(args.params)
        key = f"sigma:{args.contract}"
        if key not in rows:
            raise UsageError(f"{args.params} has no {key} row")
        prices = black_call(F, strikes, rows[key], T)
    elif args.gaussian_sigma is not None:
        if args.mode != "fourier":
            raise UsageError("--gaussian-sigma is only available with --mode fourier")
        if not args.gaussian_sigma > 0:
            raise UsageError("--gaussian-sigma must be positive")
        cf = MultiFactorCF(0.0, T, [GaussianConst(args.gaussian_sigma)])
        prices = call_price(strikes, F, cf, _grid(args))
    else:
        if not args.params:
            raise UsageError(f"--mode {args.mode} needs --params")
        params = params_from_rows(read_param_rows(args.params), args.date)
        decomp = atomic_decomposition([p for p, _ in futures.values()])
        try:
            resolve_gamma2(params, period, decomp)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        if args.mode == "fourier":
            prices = call_price(strikes, F, TwoFactorCF(params, 0.0, T, period, decomp), _grid(args))
        else:
            mc = McConfig(args.paths, args.steps, args.seed, args.scheme)
            prices, stderr = mc_call_price(strikes, params, 0.0, T, period, decomp, mc, F)
    ivs = implied_vol_array(prices, F, strikes, T)
    header = ["strike", "price"] + (["stderr"] if stderr is not None else []) + ["implied_vol"]
    rows = []
    for i, k in enumerate(strikes):
        row = [k, prices[i]] + ([stderr[i]] if stderr is not None else []) + [ivs[i]]
        rows.append([_fmt(x) for x in row])
    _write_csv(out, header, rows)
    if args.out:
        _write_csv(args.out, header, rows)
    return EXIT_OK


def cmd_calibrate(args, out=None) -> int:
    out = out or sys.stdout
    snapshot = load_snapshot(args.futures, args.options, args.date)
    snapshot = filter_strikes(snapshot, *args.band)
    if not snapshot.options:
        raise UsageError("no option quotes inside the strike band")
    kind = args.model.replace("-", "_")
    start = None
    if args.start:
        start = params_from_rows(read_param_rows(args.start), args.date)
        atoms = cal.atomic_periods(snapshot)
        absent = [a.label for a in atoms if a not in start.gamma2]
        if absent:
            raise UsageError(f"{args.start} lacks gamma2 for {', '.join(absent)}")
        start = replace(start, gamma2={a: start.gamma2[a] for a in atoms})
    config = cal.CalibrationConfig(model_kind=kind, objective=args.objective, grid=_grid(args),
                                   optimizer_budget=args.budget, multistart=args.multistart,
                                   seed=args.seed, penalty_weight=args.penalty_weight, start=start,
                                   start_spread=args.spread, polish=args.polish)
    result = cal.calibrate(snapshot, config)
    os.makedirs(args.out, exist_ok=True)
    prows = param_rows(result, snapshot)
    _write_csv(os.path.join(args.out, "params.csv"), ["parameter", "value"],
               [[n, _fmt(v)] for n, v in prows])
    report = cal.fit_report(result, snapshot, config)
    _write_csv(os.path.join(args.out, "report.csv"), cal.REPORT_FIELDS,
               [[_fmt(r[k]) for k in cal.REPORT_FIELDS] for r in report])
    with open(os.path.join(args.out, "run.log"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"model {kind} objective {args.objective} seed {args.seed} "
                 f"multistart {args.multistart} budget {args.budget}\n")
        fh.write(f"quotes {len(snapshot.options)} contracts {len(snapshot.contracts())}\n")
        for line in result.trace:
            fh.write(line + "\n")
        fh.write(f"best start {result.start_index} evaluations {result.n_evals} "
                 f"converged {result.converged}\n")
        fh.write(f"objective {result.objective!r}\n")
        for label in result.rmse_price:
            fh.write(f"rmse {label} price {result.rmse_price[label]!r} iv {result.rmse_iv[label]!r}\n")
    _write_csv(out, ["parameter", "value"], [[n, _fmt(v)] for n, v in prows])
    log.info("objective %.6e after %d evaluations", result.objective, result.n_evals)
    return EXIT_OK


def cmd_check_noa(args, out=None) -> int:
    out = out or sys.stdout
    futures = load_futures(args.futures, args.date)
    snapshot = MarketSnapshot(args.date, futures)
    gamma2 = None
    if args.gamma2:
        rows = read_param_rows(args.gamma2)
        gamma2 = {period_from_label(k.split(":", 1)[1], args.date): v
                  for k, v in rows.items() if k.startswith("gamma2:")}
    violations = noa_check(snapshot, args.tol, gamma2)
    for v in violations:
        print(v, file=out)
    if not violations:
        log.info("no violations among %d composite periods", len(snapshot.decomp.compositions))
    return EXIT_NOA if violations else EXIT_OK


def _read_report(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(cal.REPORT_FIELDS) - set(reader.fieldnames):
            raise UsageError(f"{path}: not a calibration report (expected columns "
                             f"{','.join(cal.REPORT_FIELDS)})")
        return list(reader)


def _plot_smile(report):
    rows, seen = [], set()
    for r in report:
        key = (r["contract"], r["strike"])
        if key not in seen:
            seen.add(key)
            rows.append([r["contract"], r["strike"], "market", r["market_iv"]])
        rows.append([r["contract"], r["strike"], r["model"], r["model_iv"]])
    return ["contract", "strike", "series", "value"], rows


def _plot_surface(report, series):
    rows, seen = [], set()
    for r in report:
        if series == "market":
            key = (r["delivery_start"], r["strike"])
            if key in seen:
                continue
            seen.add(key)
            rows.append([r["delivery_start"], r["strike"], r["market_iv"]])
        elif r["model"] == series:
            rows.append([r["delivery_start"], r["strike"], r["model_iv"]])
    if not rows:
        raise UsageError(f"report has no series {series!r}")
    return ["delivery_start", "strike", "iv"], rows


def _plot_density(params: TwoFactorParams, factor, points, width):
    nig = params.nig1 if factor == 1 else params.nig2
    _, var, _, _ = moments(nig)
    sd = math.sqrt(var)
    x = np.linspace(-width * sd, width * sd, points)
    model = density_centered(nig, x)
    gauss = np.exp(-0.5 * (x / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    return ["x", "model_density", "gaussian_density"], [[_fmt(a), _fmt(b), _fmt(c)]
                                                        for a, b, c in zip(x, model, gauss)]


def _plot_gamma2(rows_in: dict):
    # Periods are only compared with each other, so any reference date works.
    ref = dt.date(2000, 1, 1)
    entries = [(k.split(":", 1)[1], v) for k, v in rows_in.items() if k.startswith("gamma2:")]
    if not entries:
        raise UsageError("parameter file has no gamma2:<label> rows")
    periods = [period_from_label(lab, ref) for lab, _ in entries]
    decomp = atomic_decomposition(periods)
    return ["period", "gamma2", "is_composite"], [[lab, _fmt(v), str(decomp.is_composite(p)).lower()]
                                                   for (lab, v), p in zip(entries, periods)]


def cmd_plotdata(args, out=None) -> int:
    out = out or sys.stdout
    if args.kind in ("smile", "surface"):
        if not args.report:
            raise UsageError(f"--kind {args.kind} needs --report")
        report = _read_report(args.report)
        if args.kind == "smile":
            header, rows = _plot_smile(report)
        else:
            header, rows = _plot_surface(report, args.series or "market")
    else:
        if not args.params:
            raise UsageError(f"--kind {args.kind} needs --params")
        prm = read_param_rows(args.params)
        if args.kind == "density":
            if args.points < 2 or not args.width > 0:
                raise UsageError("--points must be at least 2 and --width positive")
            params = params_from_rows(prm, dt.date(2000, 1, 1))
            header, rows = _plot_density(params, args.factor, args.points, args.width)
        else:
            header, rows = _plot_gamma2(prm)
    _write_csv(args.out or out, header, rows)
    return EXIT_OK


COMMANDS = {"price": cmd_price, "calibrate": cmd_calibrate, "check-noa": cmd_check_noa,
            "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = resolve_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.INFO)
        return COMMANDS[args.command](args)
    except (UsageError, InputError, LabelError, argparse.ArgumentTypeError, OSError) as exc:
        print(f"voltsmile: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (QuadratureError, cal.CalibrationError, FloatingPointError, ArithmeticError) as exc:
        print(f"voltsmile: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # Remaining ValueErrors come from parameter validation of user-supplied values.
        print(f"voltsmile: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
