"""Command-line entry point: train, dump surfaces, run benchmarks,
extract exercise boundaries, evaluate against market files.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, market
from .conditions import OptionSpec, OptionStyle
from .network import (NetworkConfig, default_config, forward_values, load_params,
                      price)
from .residual import greeks
from .trainer import TrainConfig, TrainingDiverged, train
from .market import MarketDataError

log = logging.getLogger("bspinn.cli")

_SPEC_REQUIRED = ("style", "strike", "rate", "sigma", "maturity")


class ConfigError(ValueError):
    """Bad or incomplete run configuration."""


@dataclass
class RunConfig:
    spec: OptionSpec
    network: NetworkConfig
    training: TrainConfig
    output_dir: Path


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc

    option = data.get("option")
    if option is None:
        raise ConfigError("config missing required section: option")
    for key in _SPEC_REQUIRED:
        if key not in option:
            raise ConfigError(f"option config missing field: {key}")
    try:
        spec = OptionSpec.from_dict(option)
        training = TrainConfig.from_dict(data.get("training", {}))
        if "network" in data:
            network = NetworkConfig.from_dict(data["network"])
        else:
            network = default_config(spec, seed=training.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    out = data.get("output_dir")
    if out is None:
        raise ConfigError("config missing required field: output_dir")
    return RunConfig(spec=spec, network=network, training=training,
                     output_dir=Path(out))


def _spec_from_checkpoint(meta: dict) -> OptionSpec:
    if "option" not in meta:
        raise ConfigError("checkpoint carries no option metadata")
    return OptionSpec.from_dict(meta["option"])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.output_dir / "checkpoint.npz"
    params, trace = train(cfg.spec, cfg.network, cfg.training,
                          checkpoint_path=None, log_every=args.log_every)
    # persist with the option attached so downstream commands are self-contained
    from .network import save_params
    save_params(ckpt, params, meta={"option": cfg.spec.to_dict(),
                                    "train_config": cfg.training.to_dict()})
    curve = cfg.output_dir / "training_curve.csv"
    curve.write_text(trace.curve_csv_text())
    if args.timings:
        (cfg.output_dir / "training_timing.csv").write_text(trace.timing_csv_text())
    print(f"trained {cfg.training.epochs} epochs; "
          f"final total loss {trace.reports[-1].total:.6g}")
    print(f"wrote {ckpt} and {curve}")
    return 0


def _grid(lo, hi, n):
    return np.linspace(lo, hi, n)


def cmd_surface(args) -> int:
    params, _, meta = load_params(args.checkpoint)
    spec = _spec_from_checkpoint(meta)
    s_grid = _grid(spec.s_min, spec.s_max, args.n_s)
    t_grid = _grid(0.0, spec.maturity, args.n_t)
    surf = baselines.surface_from_fn(lambda S, t: forward_values(params, S, t),
                                     s_grid, t_grid)
    greeks_cols = None
    if args.greeks:
        SS, TT = np.meshgrid(s_grid, t_grid, indexing="ij")
        jet = price(params, SS.ravel(), TT.ravel())
        g = greeks(jet)
        shape = SS.shape
        greeks_cols = {"delta": np.asarray(g.delta, dtype=float).reshape(shape),
                       "gamma": np.asarray(g.gamma, dtype=float).reshape(shape),
                       "theta": np.asarray(g.theta, dtype=float).reshape(shape)}
    surf.to_csv(args.out, greeks=greeks_cols)
    print(f"wrote {args.out} ({len(s_grid)}x{len(t_grid)} nodes)")
    return 0


def _bench_surface(spec: OptionSpec, method: str, resolution: int,
                   s_grid, t_grid) -> baselines.PriceSurface:
    if method == "closed_form":
        return baselines.surface_from_fn(
            lambda S, t: baselines.closed_form_call(spec, S, t), s_grid, t_grid)
    if method == "binomial":
        return baselines.binomial_put(spec, resolution, s_grid, t_grid)
    if method == "fdm":
        surf = baselines.fdm_put(spec, resolution, resolution)
        return baselines.surface_from_fn(surf.value_at, s_grid, t_grid)
    raise ConfigError(f"unknown bench method: {method}")


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config)
    spec = cfg.spec
    s_grid = _grid(spec.s_min, spec.s_max, args.n_s)
    t_grid = _grid(0.0, spec.maturity, args.n_t)
    out_dir = Path(args.out_dir) if args.out_dir else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    anchor_S = spec.strike

    if args.method == "mc":
        if not spec.is_call:
            raise ConfigError("the Monte Carlo benchmark covers the European call")
        rows = ["n_paths,estimate,standard_error"]
        n = max(args.resolution, 1000)
        for mult in (1, 4, 16):
            est, se = baselines.mc_european_call(spec, anchor_S, n * mult, seed=args.seed)
            rows.append(f"{n * mult},{est!r},{se!r}")
        table = out_dir / "mc_convergence.csv"
        table.write_text("\n".join(rows) + "\n")
        print(f"wrote {table}")
        return 0

    surf = _bench_surface(spec, args.method, args.resolution, s_grid, t_grid)
    path = out_dir / f"{args.method}_surface.csv"
    surf.to_csv(path)
    rows = ["resolution,value_at_strike_t0"]
    for res in (args.resolution // 4, args.resolution // 2, args.resolution):
        if res < 3:
            continue
        s = _bench_surface(spec, args.method, res,
                           np.array([anchor_S]), np.array([0.0]))
        rows.append(f"{res},{s.values[0, 0]!r}")
    conv = out_dir / f"{args.method}_convergence.csv"
    conv.write_text("\n".join(rows) + "\n")
    print(f"wrote {path} and {conv}")
    return 0


def cmd_eval_market(args) -> int:
    params, _, meta = load_params(args.checkpoint)
    spec = _spec_from_checkpoint(meta)
    quotes = market.load_quotes(args.quotes)
    if args.yields:
        series = market.load_yields(args.yields)
        start = min(q.trade_date for q in quotes)
        end = max(q.expiry_date for q in quotes)
        rate = market.derive_rate(series, start, end)
        print(f"derived risk-free rate over the quote window: {rate:.6g}")
    else:
        rate = spec.rate
    bench_spec = OptionSpec(style=spec.style, strike=spec.strike, rate=rate,
                            sigma=spec.sigma, maturity=spec.maturity,
                            s_min=spec.s_min, s_max=spec.s_max)
    if args.baseline == "closed_form":
        if not spec.is_call:
            raise ConfigError("closed_form baseline applies to the European call")
        benchmark = lambda S, t: baselines.closed_form_call(bench_spec, S, t)
    elif args.baseline == "binomial":
        benchmark = baselines.binomial_put(bench_spec, args.binomial_steps)
    elif args.baseline == "fdm":
        benchmark = baselines.fdm_put(bench_spec, 400, 400)
    else:
        raise ConfigError(f"unknown baseline: {args.baseline}")

    report = market.evaluate(params, spec, quotes, benchmark)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval_report.csv").write_text(report.csv_text())
    (out_dir / "eval_report.txt").write_text(report.table_text() + "\n")
    print(report.table_text())
    if not report.corr_defined:
        print("warning: correlation undefined (constant predictions or a single quote)",
              file=sys.stderr)
    return 0


def cmd_boundary(args) -> int:
    if args.surface:
        surf = baselines.PriceSurface.from_csv(args.surface)
        if args.strike is None:
            raise ConfigError("--strike is required with --surface")
        strike = args.strike
    else:
        params, _, meta = load_params(args.checkpoint)
        spec = _spec_from_checkpoint(meta)
        strike = spec.strike
        s_hi = min(spec.s_max, 1.25 * spec.strike)
        s_grid = np.linspace(spec.s_min, s_hi, args.n_s)
        t_grid = np.linspace(0.0, spec.maturity, args.n_t)
        surf = baselines.surface_from_fn(lambda S, t: forward_values(params, S, t),
                                         s_grid, t_grid)
    boundary = baselines.extract_boundary(surf, strike, tol=args.tol)
    boundary.to_csv(args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_make_quotes(args) -> int:
    cfg = load_run_config(args.config)
    spec = cfg.spec
    if spec.is_call:
        surf = baselines.surface_from_fn(
            lambda S, t: baselines.closed_form_call(spec, S, t),
            np.linspace(spec.s_min, spec.s_max, 201),
            np.linspace(0.0, spec.maturity, 201))
    else:
        surf = baselines.binomial_put(spec, args.binomial_steps,
                                      np.linspace(spec.s_min, spec.s_max, 201),
                                      np.linspace(0.0, spec.maturity, 201))
    quotes = market.make_synthetic_quotes(
        spec, surf.value_at, args.n_quotes, args.noise_sigma, args.seed,
        s_range=(args.s_lo, args.s_hi), t_range=(args.t_lo, args.t_hi))
    market.write_quotes_csv(args.out, quotes)
    print(f"wrote {args.out} ({args.n_quotes} quotes)")
    return 0


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bspinn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("config")
    p.add_argument("--log-every", type=int, default=250)
    p.add_argument("--timings", action="store_true",
                   help="also write per-epoch wall-clock times")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("surface", help="dump the trained price surface (with greeks)")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--n-s", type=int, default=50)
    p.add_argument("--n-t", type=int, default=50)
    p.add_argument("--greeks", action="store_true")
    p.set_defaults(fn=cmd_surface)

    p = sub.add_parser("bench", help="run a reference pricer")
    p.add_argument("config")
    p.add_argument("--method", required=True,
                   choices=["closed_form", "binomial", "fdm", "mc"])
    p.add_argument("--resolution", type=int, default=2000)
    p.add_argument("--n-s", type=int, default=50)
    p.add_argument("--n-t", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("eval-market", help="score a checkpoint against quotes")
    p.add_argument("checkpoint")
    p.add_argument("--quotes", required=True)
    p.add_argument("--yields", default=None)
    p.add_argument("--baseline", default="binomial",
                   choices=["closed_form", "binomial", "fdm"])
    p.add_argument("--binomial-steps", type=int, default=2000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_eval_market)

    p = sub.add_parser("boundary", help="extract the exercise boundary")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--surface", help="price-surface CSV")
    group.add_argument("--checkpoint")
    p.add_argument("--strike", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--n-s", type=int, default=201)
    p.add_argument("--n-t", type=int, default=51)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_boundary)

    p = sub.add_parser("make-quotes", help="generate synthetic quotes from a reference pricer")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-quotes", type=int, default=200)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binomial-steps", type=int, default=2000)
    p.add_argument("--s-lo", type=float, default=25.0)
    p.add_argument("--s-hi", type=float, default=60.0)
    p.add_argument("--t-lo", type=float, default=0.05)
    p.add_argument("--t-hi", type=float, default=0.9)
    p.set_defaults(fn=cmd_make_quotes)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (MarketDataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (TrainingDiverged, FloatingPointError, ZeroDivisionError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
