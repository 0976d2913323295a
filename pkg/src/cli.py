"""Command-line surface.

Exit codes: 0 success, 1 failed verification or non-converged iteration,
2 usage or validation error. Reports go to stdout as key=value lines.
"""

import argparse
import csv
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml

from src.config_loader import ConfigError, RazConfig
from src.file_writer import atomic_write, csv_text, fmt_float
from src.logger import logger
from src.model import (
    DomainError,
    Params,
    boundary_sigma,
    classify_region,
    derived_constants,
    validate,
)
from src.razumikhin import (
    BracketError,
    ConvergenceError,
    GasVerdict,
    dq_dv,
    q_closed,
    q_quadrature,
)
from src.sdde import (
    DelayCollapse,
    HistoryFunction,
    StepTooLarge,
    classify_behaviour,
    default_step,
    export_csv,
    integrate,
    tail_amplitude,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".15g")
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def report(**items: Any) -> None:
    for key, value in items.items():
        print(f"{key}={_fmt(value)}")


def load_run_config(path: str) -> dict:
    """Read a YAML (or JSON) document whose keys mirror the flag names."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"Run config not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Failed to parse run config {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Run config root must be a mapping: {path}")
    return {str(key).replace("-", "_"): value for key, value in data.items()}


def _merge(args: argparse.Namespace, values: dict) -> None:
    """Fill flags left unset on the command line from the run config."""
    for key, value in values.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _params(args: argparse.Namespace) -> Params:
    missing = [name for name in ("a", "c", "mu", "sigma") if getattr(args, name, None) is None]
    if missing:
        raise DomainError(f"missing model parameters: {', '.join('--' + m for m in missing)}")
    return Params(a=float(args.a), c=float(args.c), mu=float(args.mu), sigma=float(args.sigma))


def _pick(value: Any, default: Any) -> Any:
    return default if value is None else value


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_constants(args: argparse.Namespace, config: RazConfig) -> int:
    params = validate(_params(args))
    consts = derived_constants(params, n_override=args.n)
    report(
        m0=consts.m0,
        n0=consts.n0,
        tau0=consts.tau0,
        tau=consts.tau,
        region=classify_region(params, config.boundary_eps),
    )
    return EXIT_OK


def cmd_region(args: argparse.Namespace, config: RazConfig) -> int:
    params = _params(args)
    report(
        region=classify_region(params, config.boundary_eps),
        boundary_sigma=boundary_sigma(params.mu, params.a),
    )
    return EXIT_OK


def cmd_q_eval(args: argparse.Namespace, config: RazConfig) -> int:
    params = _params(args)
    k = int(_pick(args.k, 2))
    v, x, y = float(args.v), float(args.x), float(args.y)
    report(
        q_closed=q_closed(k, v, x, y, params),
        q_quadrature=q_quadrature(k, v, x, y, params, tol=config.quadrature_tol),
        dq_dv=dq_dv(k, v, x, y, params),
    )
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace, config: RazConfig) -> int:
    from src.pipeline import analyse_point

    params = _params(args)
    k = int(_pick(args.k, 2))
    tol = float(_pick(args.tol, config.fixed_point_tol))
    max_n = int(_pick(args.max_iter, config.max_iterations))
    result = analyse_point(
        a=params.a, c=params.c, mu=params.mu, sigma=params.sigma, orders=[k], tol=tol,
        max_n=max_n,
    )
    pair, residual = result["limits"][k]
    verdict = result["verdicts"][k]
    trace = result["traces"].get(k)
    if args.out:
        rows = []
        if trace is not None:
            rows = [
                (str(n), fmt_float(t), fmt_float(p.m), fmt_float(p.n))
                for n, (t, p) in enumerate(zip(trace.settle_times, trace.pairs))
            ]
        atomic_write(args.out, csv_text(("n", "t_settle", "m", "n_upper"), rows))
    report(
        k=k,
        m_inf=pair.m,
        n_inf=pair.n,
        iters=trace.iterations if trace else 0,
        residual=residual,
        gas=verdict != GasVerdict.NOT_CERTIFIED,
        verdict=verdict,
        region=result["region"],
    )
    return EXIT_OK


def _history(args: argparse.Namespace, params: Params, config: RazConfig) -> HistoryFunction:
    if args.phi_table:
        with open(args.phi_table, "r", newline="", encoding="utf-8") as f:
            records = list(csv.DictReader(f))
        try:
            times = [float(r["t"]) for r in records]
            values = [float(r["u"]) for r in records]
        except (KeyError, ValueError) as e:
            raise DomainError(f"history table {args.phi_table} needs numeric t,u columns: {e}")
        return HistoryFunction.table(times, values)
    if args.phi is not None:
        return HistoryFunction.constant(float(args.phi))
    if params.sigma > 0:
        raise DomainError("sigma > 0 has no N0; give the initial value with --phi")
    return HistoryFunction.constant(config.history_fraction * derived_constants(params).n0)


def cmd_simulate(args: argparse.Namespace, config: RazConfig) -> int:
    params = validate(_params(args))
    history = _history(args, params, config)
    t_end = float(_pick(args.t_end, config.t_end))
    step = float(_pick(args.step, min(config.default_step, default_step(params))))
    window = float(_pick(args.window, min(config.tail_window, t_end / 2.0)))
    traj = integrate(params, history, t_end, step)
    if args.out:
        export_csv(traj, args.out)
    low, high = tail_amplitude(traj, window)
    report(
        behaviour=classify_behaviour(traj, window, config.noise_floor),
        tail_min=low,
        tail_max=high,
        extrema=len(traj.extrema),
        u_end=float(traj.u[-1]),
        steps=len(traj.t) - 1,
    )
    return EXIT_OK


def _grid_axis(values: Optional[Sequence[Any]], default: tuple) -> tuple[float, float, int]:
    if values is None:
        return default
    if len(values) != 3:
        raise DomainError(f"grid axis needs lo hi count (got {values})")
    try:
        lo, hi, count = float(values[0]), float(values[1]), int(values[2])
    except ValueError as e:
        raise DomainError(f"grid axis needs numeric lo hi and an integer count: {e}")
    return lo, hi, count


def cmd_sweep(args: argparse.Namespace, config: RazConfig) -> int:
    from src.sweep import GridSpec, emit_csv, emit_heatmap_svg, sweep_limit_bounds

    spec = GridSpec(
        mu_range=_grid_axis(args.mu_range, config.grid_mu),
        sigma_range=_grid_axis(args.sigma_range, config.grid_sigma),
        a=float(_pick(args.a, 1.0)),
        c=float(_pick(args.c, 1.0)),
        k=int(_pick(args.k, config.sweep_order)),
    )
    tol = float(_pick(args.tol, config.fixed_point_tol))
    rows = sweep_limit_bounds(
        spec, tol=tol, max_n=int(_pick(args.max_iter, config.max_iterations)),
        root_tol=config.root_tol,
    )
    out = args.out or str(Path(config.report_folder) / f"sweep_k{spec.k}.csv")
    emit_csv(rows, out)
    if args.svg:
        for field in args.field or ["n_ratio"]:
            target = Path(args.svg)
            if len(args.field or []) > 1:
                target = target.with_name(f"{target.stem}_{field}{target.suffix or '.svg'}")
            emit_heatmap_svg(rows, field, target, a=spec.a, c=spec.c)
    report(
        points=len(rows),
        ok=sum(r.status.value == "Ok" for r in rows),
        skipped=sum(r.status.value == "Skipped" for r in rows),
        failed=sum(r.status.value == "Failed" for r in rows),
        gas=sum(bool(r.gas) for r in rows),
        out=out,
    )
    return EXIT_OK


def cmd_gas_boundary(args: argparse.Namespace, config: RazConfig) -> int:
    from src.sweep import gas_boundary

    if args.mu_values:
        mus = [float(mu) for mu in args.mu_values]
    else:
        lo, hi, count = _grid_axis(args.mu_range, config.grid_mu)
        if count < 1:
            raise DomainError("empty mu grid")
        mus = [float(mu) for mu in np.linspace(lo, hi, count)]
    orders = [int(k) for k in (args.k or [1, 2])]
    tol = float(_pick(args.tol, config.gas_tol))
    a, c = float(_pick(args.a, 1.0)), float(_pick(args.c, 1.0))
    rows = []
    for k in orders:
        for mu, sigma in gas_boundary(mus, k, tol=tol, a=a, c=c):
            rows.append((fmt_float(mu), str(k), "" if sigma is None else fmt_float(sigma)))
            print(f"k={k} mu={_fmt(mu)} sigma={_fmt(sigma)}")
    if args.out:
        atomic_write(args.out, csv_text(("mu", "k", "sigma_boundary"), rows))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, config: RazConfig) -> int:
    from src.sweep import compare_bounds_vs_orbit, emit_compare_csv

    if args.mu is None or not args.sigma_values:
        raise DomainError("compare needs --mu and --sigma-values")
    t_end = float(_pick(args.t_end, config.t_end))
    rows = compare_bounds_vs_orbit(
        float(args.mu),
        [float(s) for s in args.sigma_values],
        a=float(_pick(args.a, 1.0)),
        c=float(_pick(args.c, 1.0)),
        t_end=t_end,
        window=float(_pick(args.window, min(config.tail_window, t_end / 2.0))),
        step=args.step,
        tol=float(_pick(args.tol, config.fixed_point_tol)),
    )
    if args.out:
        emit_compare_csv(rows, args.out)
    for row in rows:
        print(
            " ".join(
                f"{name}={_fmt(getattr(row, name))}"
                for name in ("sigma", "m1", "n1", "m2", "n2", "sim_min", "sim_max", "status")
            )
        )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, config: RazConfig) -> int:
    from src.verify import run_suites

    seed = int(_pick(args.seed, config.verify_seed))
    samples = int(_pick(args.samples, config.verify_samples))
    results = run_suites(seed, samples, perturb=float(args.perturb or 0.0))
    for result in results:
        print(
            f"suite={result.name} passed={_fmt(result.passed)} "
            f"worst={format(result.worst, '.15g')} samples={result.samples}"
        )
    logger.create_report(
        [r.as_record() for r in results],
        prefix="verify",
        run={"command": "verify", "seed": str(seed), "samples": str(samples)},
    )
    passed = all(r.passed for r in results)
    report(verdict="pass" if passed else "fail")
    return EXIT_OK if passed else EXIT_FAILED


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--a", type=float, help="delay offset a > 0")
    parser.add_argument("--c", type=float, help="state dependence c > 0")
    parser.add_argument("--mu", type=float, help="instantaneous feedback mu < 0")
    parser.add_argument("--sigma", type=float, help="delayed feedback sigma")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="razumikhin",
        description="Lyapunov-Razumikhin bounds for u' = mu*u + sigma*u(t - a - c*u).",
    )
    parser.add_argument("--config", help="YAML/JSON run config whose keys mirror the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="M0, N0, tau0 and region label")
    _add_model_flags(p)
    p.add_argument("--n", type=float, help="upper solution bound (required for sigma > 0)")
    p.set_defaults(handler=cmd_constants)

    p = sub.add_parser("region", help="region label and the g* boundary sigma")
    _add_model_flags(p)
    p.set_defaults(handler=cmd_region)

    p = sub.add_parser("q-eval", help="Q(k), its quadrature check and dQ/dv at one tuple")
    _add_model_flags(p)
    p.add_argument("--k", type=int, choices=(1, 2))
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.set_defaults(handler=cmd_q_eval)

    p = sub.add_parser("bounds", help="bound iteration, limit pair and GAS verdict")
    _add_model_flags(p)
    p.add_argument("--k", type=int, choices=(1, 2))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--out", help="trace CSV (n,t_settle,m,n_upper)")
    p.set_defaults(handler=cmd_bounds)

    p = sub.add_parser("simulate", help="integrate the equation and classify the tail")
    _add_model_flags(p)
    p.add_argument("--phi", type=float, help="constant initial value")
    p.add_argument("--phi-table", help="CSV with t,u knots covering [-tau, 0]")
    p.add_argument("--t-end", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--out", help="trajectory CSV (t,u,udot)")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("sweep", help="limit bounds over a (mu, sigma) grid")
    p.add_argument("--a", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--mu", dest="mu_range", nargs=3, metavar=("LO", "HI", "COUNT"))
    p.add_argument("--sigma", dest="sigma_range", nargs=3, metavar=("LO", "HI", "COUNT"))
    p.add_argument("--k", type=int, choices=(1, 2))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--out", help="sweep CSV")
    p.add_argument("--svg", help="heatmap SVG path")
    p.add_argument(
        "--field", action="append", choices=("m_inf", "n_inf", "m_ratio", "n_ratio")
    )
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("gas-boundary", help="certified-GAS boundary in sigma for each mu")
    p.add_argument("--a", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--mu-values", nargs="+", type=float)
    p.add_argument("--mu", dest="mu_range", nargs=3, metavar=("LO", "HI", "COUNT"))
    p.add_argument("--k", type=int, nargs="+", choices=(1, 2))
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="boundary CSV (mu,k,sigma_boundary)")
    p.set_defaults(handler=cmd_gas_boundary)

    p = sub.add_parser("compare", help="limit bounds next to simulated tail ranges")
    p.add_argument("--a", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma-values", nargs="+", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="comparison CSV")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("verify", help="run the oracle suites")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--perturb", type=float, help=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        config = RazConfig()
        if args.config:
            _merge(args, load_run_config(args.config))
        logger.log(f"Running '{args.command}'")
        return args.handler(args, config)
    except (DomainError, ConfigError, StepTooLarge) as e:
        print(f"error: {e}", file=sys.stderr)
        logger.log(f"'{args.command}' rejected: {e}", level="error")
        return EXIT_USAGE
    except (ConvergenceError, BracketError, DelayCollapse) as e:
        print(f"error: {e}", file=sys.stderr)
        logger.log(f"'{args.command}' failed: {e}", level="error")
        return EXIT_FAILED
