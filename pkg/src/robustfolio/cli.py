"""Command-line entry points.

Subcommands::

    robustfolio synth     write a synthetic wide-CSV return panel
    robustfolio backtest  roll models through a panel; write reports + tables
    robustfolio frontier  one-window frontier as CSV
    robustfolio validate  score robust reports against their uncertainty sets

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 model/solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import tempfile

import numpy as np

from . import backtest as bt
from . import validation
from .config import ConfigError, RunConfig
from .estimation import estimate_window
from .market_data import (
    InsufficientHistoryError,
    PanelError,
    ReturnsPanel,
    SynthSpec,
    load_returns,
    partition_mixture,
    synth_panel,
    write_returns,
)
from .metrics import MetricConfig
from .models import (
    MIXTURE_MODELS,
    MODEL_IDS,
    ModelError,
    ModelInputs,
    ModelSettings,
    efficient_frontier,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVE = 4


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value: float) -> str:
    if value is None or not np.isfinite(value):
        return ""
    return f"{value:.6f}"


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


# -- argument plumbing ---------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with RunConfig fields")
    defaults = RunConfig()
    parser.add_argument("--horizon", type=int, help=f"in-sample rows (default {defaults.horizon})")
    parser.add_argument(
        "--holding", "--hold", type=int,
        help=f"out-of-sample rows per period (default {defaults.holding})",
    )
    parser.add_argument(
        "--n-points", "--points", type=int, dest="n_points", help="frontier grid size"
    )
    parser.add_argument("--seed", type=int, help="run seed (bootstrap determinism)")
    parser.add_argument("--tau", type=float, help="gain-loss threshold")
    parser.add_argument("--beta", type=float, help="model CVaR confidence level")
    parser.add_argument(
        "--betas", help="comma-separated reporting CVaR levels, e.g. 0.9,0.95,0.99"
    )
    parser.add_argument("--rf", type=float, help="risk-free rate for Sharpe")
    parser.add_argument("--allow-short", action="store_true", help="drop the long-only bound")
    parser.add_argument(
        "--long-only", dest="long_only", action="store_true", default=None,
        help="force the long-only bound (the default)",
    )
    parser.add_argument(
        "--no-long-only", dest="long_only", action="store_false", default=None,
        help="same as --allow-short",
    )
    parser.add_argument("--gamma-step", type=float, dest="gamma_step")
    parser.add_argument("--lambda-min", type=float, dest="lambda_min")
    parser.add_argument("--lambda-max", type=float, dest="lambda_max")
    parser.add_argument("--eta-min", type=float, dest="eta_min")
    parser.add_argument("--eta-max", type=float, dest="eta_max")
    parser.add_argument("--z", type=float, help="box half-width multiplier")
    parser.add_argument("--chi-level", type=float, dest="chi_level")
    parser.add_argument("--chi-df", type=int, dest="chi_df")
    parser.add_argument("--bootstrap-draws", type=int, dest="bootstrap_draws")
    parser.add_argument("--bootstrap-pct", type=float, dest="bootstrap_pct")
    parser.add_argument("--bootstrap-c", type=float, dest="bootstrap_c")
    parser.add_argument("--bootstrap-block", type=int, dest="bootstrap_block")
    parser.add_argument("--mixture-components", type=int, dest="mixture_components")
    parser.add_argument("--held-threshold", type=float, dest="held_threshold")


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_json_file(args.config) if args.config else RunConfig()
    overrides = {}
    for field in dataclasses.fields(RunConfig):
        if field.name == "long_only":
            continue
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    if getattr(args, "betas", None):
        try:
            overrides["betas"] = tuple(float(b) for b in str(args.betas).split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --betas value {args.betas!r}") from exc
    if getattr(args, "allow_short", False):
        overrides["long_only"] = False
    if getattr(args, "long_only", None) is not None:
        overrides["long_only"] = args.long_only
    return RunConfig.from_dict({**cfg.to_dict(), **overrides})


def _parse_models(text: str) -> list[str]:
    models = [m.strip() for m in text.split(",") if m.strip()]
    if not models:
        raise ConfigError("no models given")
    for m in models:
        if m not in MODEL_IDS:
            raise ConfigError(f"unknown model {m!r}; expected one of {', '.join(MODEL_IDS)}")
    return models


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustfolio",
        description="Robust portfolio backtesting and uncertainty-set validation",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic return panel")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--periods", type=int, default=756)
    p.add_argument("--assets", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean", type=float, default=4e-4)
    p.add_argument("--vol", type=float, default=0.01)
    p.add_argument("--correlation", type=float, default=0.3)

    p = sub.add_parser("backtest", help="rolling backtest, reports and tables")
    p.add_argument("--input", required=True, help="wide CSV of returns")
    p.add_argument("--models", required=True, help="comma-separated model ids")
    p.add_argument("--out-dir", "--out", default=".", help="where to write outputs")
    _add_config_flags(p)

    p = sub.add_parser("frontier", help="frontier on the trailing window")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    _add_config_flags(p)

    p = sub.add_parser("validate", help="score robust reports out of sample")
    p.add_argument("--input", required=True, help="panel the reports were computed from")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("reports", nargs="+", help="report JSON files (robust + nominal partners)")
    return parser


# -- commands --------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(mean=args.mean, vol=args.vol, correlation=args.correlation)
    panel = synth_panel(args.seed, args.periods, args.assets, spec)
    write_returns(panel, args.out)
    print(f"wrote {panel.n_periods}x{panel.n_assets} panel to {args.out}")
    return EXIT_OK


def cmd_backtest(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    models = _parse_models(args.models)
    panel = load_returns(args.input)
    os.makedirs(args.out_dir, exist_ok=True)
    mcfg = MetricConfig(tau=cfg.tau, betas=cfg.betas, rf=cfg.rf, held_threshold=cfg.held_threshold)

    reports = {}
    for model in models:
        logger.info("backtesting %s", model)
        report = bt.run_backtest(panel, model, cfg)
        reports[model] = report
        path = os.path.join(args.out_dir, f"report_{model}.json")
        _atomic_write(path, bt.report_to_json(report) + "\n")
        carried = sum(1 for p in report.periods if p.carried)
        print(
            f"{model}: {len(report.periods)} periods"
            + (f" ({carried} carried forward)" if carried else "")
        )

    rows = bt.metric_rows(mcfg)
    for side, fname in (("in_sample", "metrics_in.csv"), ("out_sample", "metrics_out.csv")):
        tables = {m: bt.aggregate_metrics(r, mcfg)[side] for m, r in reports.items()}
        body = [[row] + [_fmt(tables[m][row]) for m in models] for row in rows]
        _atomic_write(os.path.join(args.out_dir, fname), _csv_text(["metric"] + models, body))

    comp = {m: bt.composition_metrics(r, cfg.held_threshold) for m, r in reports.items()}
    body = [
        [row] + [_fmt(comp[m][row]) for m in models]
        for row in ("assets_held", "diversification", "turnover")
    ]
    _atomic_write(
        os.path.join(args.out_dir, "composition.csv"), _csv_text(["metric"] + models, body)
    )
    print(f"wrote metrics_in.csv, metrics_out.csv, composition.csv to {args.out_dir}")
    return EXIT_OK


def cmd_frontier(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if args.model not in MODEL_IDS:
        raise ConfigError(f"unknown model {args.model!r}; expected one of {', '.join(MODEL_IDS)}")
    panel = load_returns(args.input)
    if panel.n_periods < cfg.horizon:
        raise InsufficientHistoryError(
            f"frontier needs at least horizon = {cfg.horizon} rows, got {panel.n_periods}"
        )
    window = panel.window(panel.n_periods - cfg.horizon, panel.n_periods)
    estimates = estimate_window(
        window,
        z=cfg.z,
        chi_level=cfg.chi_level,
        chi_df=cfg.chi_df,
        block_len=cfg.bootstrap_block,
        draws=cfg.bootstrap_draws,
        pct=cfg.bootstrap_pct,
        c=cfg.bootstrap_c,
        seed=cfg.seed,
    )
    blocks = None
    if args.model in MIXTURE_MODELS:
        blocks = tuple(b.values for b in partition_mixture(window, cfg.mixture_components))
    settings = ModelSettings(
        tau=cfg.tau,
        beta=cfg.beta,
        gamma_step=cfg.gamma_step,
        long_only=cfg.long_only,
        lambda_min=cfg.lambda_min,
        lambda_max=cfg.lambda_max,
        eta_min=cfg.eta_min,
        eta_max=cfg.eta_max,
        rmu_c=cfg.bootstrap_c,
    )
    inputs = ModelInputs(estimates=estimates, scenarios=window.values, blocks=blocks)
    result = efficient_frontier(args.model, inputs, cfg.n_points, settings)

    header = ["param", "status", "mean", "std"] + [f"w_{a}" for a in panel.assets]
    body = []
    skip_iter = iter(result.skipped)
    for point in result.points:
        if point is None:
            param, _reason = next(skip_iter)
            body.append([_fmt(param), "infeasible", "", ""] + [""] * panel.n_assets)
        else:
            w = point.weights
            body.append(
                [
                    _fmt(point.param),
                    "ok",
                    _fmt(float(estimates.mu @ w)),
                    _fmt(float(np.sqrt(max(w @ estimates.sigma @ w, 0.0)))),
                ]
                + [_fmt(float(v)) for v in w]
            )
    _atomic_write(args.out, _csv_text(header, body))
    print(f"wrote {len(body)} frontier rows to {args.out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    panel = load_returns(args.input)
    reports = {}
    for path in args.reports:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                report = bt.report_from_json(fh.read())
        except OSError as exc:
            raise PanelError(f"cannot read report {path}: {exc}") from exc
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path} is not a backtest report: {exc}") from exc
        reports[report.model_id] = report

    robust_ids = [m for m in reports if m in validation.VALIDATED_MODELS]
    if not robust_ids:
        raise ConfigError(
            "no robust reports given; expected at least one of "
            + ", ".join(sorted(validation.VALIDATED_MODELS))
        )
    scores = {}
    for model in robust_ids:
        partner = validation.VALIDATED_MODELS[model]
        nominal = None
        if partner is not None:
            nominal = reports.get(partner)
            if nominal is None:
                raise ConfigError(f"{model} validation needs a {partner} report")
        scores[model] = validation.validate_report(reports[model], panel, nominal)

    ordered = [m for m in ("mvbu", "mveu", "rmu", "wcor", "wcvar") if m in scores]
    header = ["metric"] + ordered
    body = [
        ["kind"] + [scores[m].kind for m in ordered],
        ["simulation_output"] + [_fmt(scores[m].value) for m in ordered],
    ]
    _atomic_write(args.out, _csv_text(header, body))
    for m in ordered:
        print(f"{m}: {scores[m].kind} = {scores[m].value:.4f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "backtest":
            return cmd_backtest(args)
        if args.command == "frontier":
            return cmd_frontier(args)
        if args.command == "validate":
            return cmd_validate(args)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, validation.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PanelError, InsufficientHistoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, bt.BacktestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
