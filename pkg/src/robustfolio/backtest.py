"""Rolling-window backtests and report aggregation.

A backtest walks the window schedule, re-estimates on each in-sample block,
solves the model's frontier, and records weights plus realised daily return
series on both sides of the split.  Periods whose frontier fails entirely
carry the previous weights forward (flagged); a run where every period fails
raises :class:`BacktestError`.

Reports serialise to a single deterministic JSON document and round-trip
losslessly, so metric tables can be rebuilt without the original panel.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import metrics
from .estimation import estimate_window
from .market_data import ReturnsPanel, make_schedule, partition_mixture
from .models import (
    MIXTURE_MODELS,
    MODEL_IDS,
    ModelError,
    ModelInputs,
    ModelSettings,
    efficient_frontier,
)

logger = logging.getLogger(__name__)

__all__ = [
    "BacktestError",
    "Slot",
    "PeriodResult",
    "BacktestReport",
    "period_seed",
    "run_backtest",
    "aggregate_metrics",
    "composition_metrics",
    "report_to_json",
    "report_from_json",
]


class BacktestError(RuntimeError):
    """No period of the backtest produced a usable frontier."""


@dataclass(frozen=True)
class Slot:
    """One frontier position in one period: weights plus realised series."""

    param: float
    weights: np.ndarray
    in_series: np.ndarray
    out_series: np.ndarray


@dataclass(frozen=True)
class PeriodResult:
    index: int
    in_sample: tuple[int, int]
    out_sample: tuple[int, int]
    slots: tuple[object, ...]  # Slot | None, aligned with the frontier grid
    skipped: tuple[tuple[float, str], ...]
    carried: bool

    @property
    def held(self) -> list[Slot]:
        return [s for s in self.slots if s is not None]


@dataclass(frozen=True)
class BacktestReport:
    model_id: str
    assets: tuple[str, ...]
    horizon: int
    holding: int
    config: dict
    panel_sha256: str
    periods: tuple[PeriodResult, ...]


def period_seed(seed: int, period: int) -> int:
    """Stable per-period RNG seed derived from the run seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(period,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def panel_digest(panel: ReturnsPanel) -> str:
    h = hashlib.sha256()
    h.update(",".join(panel.assets).encode())
    h.update(",".join(d.isoformat() for d in panel.dates).encode())
    h.update(np.ascontiguousarray(panel.values).tobytes())
    return h.hexdigest()


def run_backtest(panel: ReturnsPanel, model_id: str, cfg) -> BacktestReport:
    """Roll the model through the panel per the window schedule.

    ``cfg`` is a :class:`~robustfolio.config.RunConfig` (anything with the
    same attributes works).  Estimation sees only in-sample rows; the
    out-of-sample series is recorded for reporting but never fed back.
    """
    if model_id not in MODEL_IDS:
        raise ModelError(f"unknown model {model_id!r}; expected one of {MODEL_IDS}")
    schedule = make_schedule(panel.n_periods, cfg.horizon, cfg.holding)
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
    periods: list[PeriodResult] = []
    previous: tuple[object, ...] | None = None
    for window in schedule:
        lo, hi = window.in_sample
        in_panel = panel.window(lo, hi)
        out_lo, out_hi = window.out_sample
        out_values = panel.values[out_lo:out_hi]
        estimates = estimate_window(
            in_panel,
            z=cfg.z,
            chi_level=cfg.chi_level,
            chi_df=cfg.chi_df,
            block_len=cfg.bootstrap_block,
            draws=cfg.bootstrap_draws,
            pct=cfg.bootstrap_pct,
            c=cfg.bootstrap_c,
            seed=period_seed(cfg.seed, window.index),
        )
        blocks = None
        if model_id in MIXTURE_MODELS:
            blocks = tuple(
                b.values for b in partition_mixture(in_panel, cfg.mixture_components)
            )
        inputs = ModelInputs(
            estimates=estimates, scenarios=in_panel.values, blocks=blocks
        )
        try:
            frontier = efficient_frontier(model_id, inputs, cfg.n_points, settings)
            slots = tuple(
                None
                if p is None
                else Slot(
                    param=p.param,
                    weights=p.weights,
                    in_series=in_panel.values @ p.weights,
                    out_series=out_values @ p.weights,
                )
                for p in frontier.points
            )
            periods.append(
                PeriodResult(
                    index=window.index,
                    in_sample=window.in_sample,
                    out_sample=window.out_sample,
                    slots=slots,
                    skipped=frontier.skipped,
                    carried=False,
                )
            )
            previous = slots
        except ModelError as exc:
            logger.warning("period %d failed for %s: %s", window.index, model_id, exc)
            if previous is None:
                slots = ()
            else:
                slots = tuple(
                    None
                    if s is None
                    else Slot(
                        param=s.param,
                        weights=s.weights,
                        in_series=in_panel.values @ s.weights,
                        out_series=out_values @ s.weights,
                    )
                    for s in previous
                )
            periods.append(
                PeriodResult(
                    index=window.index,
                    in_sample=window.in_sample,
                    out_sample=window.out_sample,
                    slots=slots,
                    skipped=((float("nan"), str(exc)),),
                    carried=True,
                )
            )
    if not any(p.held for p in periods):
        raise BacktestError(f"every period failed for model {model_id}")
    return BacktestReport(
        model_id=model_id,
        assets=panel.assets,
        horizon=cfg.horizon,
        holding=cfg.holding,
        config=cfg.to_dict() if hasattr(cfg, "to_dict") else dict(vars(cfg)),
        panel_sha256=panel_digest(panel),
        periods=tuple(periods),
    )


# -- aggregation -----------------------------------------------------------------


def _cell_metrics(series: np.ndarray, mcfg: metrics.MetricConfig) -> dict[str, float]:
    out: dict[str, float] = {}
    mean = float(series.mean())
    std = float(series.std(ddof=1)) if series.shape[0] > 1 else float("nan")
    out["mean_return"] = mean
    out["std_dev"] = std
    try:
        out["sharpe"] = metrics.sharpe_ratio(mean, std, mcfg.rf)
    except (metrics.MetricError, ValueError):
        out["sharpe"] = float("nan")
    if not np.isfinite(std):
        out["sharpe"] = float("nan")
    try:
        out["sortino"] = metrics.sortino_ratio(series)
    except metrics.MetricError:
        out["sortino"] = float("nan")
    try:
        out["omega"] = metrics.omega_ratio(series, mcfg.tau)
    except metrics.MetricError:
        out["omega"] = float("nan")
    for beta in mcfg.betas:
        out[cvar_label(beta)] = metrics.cvar_empirical(series, beta)
    return out


def cvar_label(beta: float) -> str:
    pct = 100.0 * beta
    text = f"{pct:.10g}".replace(".", "_")
    return f"cvar_{text}"


def metric_rows(mcfg: metrics.MetricConfig) -> list[str]:
    return ["mean_return", "std_dev", "sharpe", "sortino", "omega"] + [
        cvar_label(b) for b in mcfg.betas
    ]


def aggregate_metrics(
    report: BacktestReport, mcfg: metrics.MetricConfig | None = None
) -> dict[str, dict[str, float]]:
    """Average each performance metric across periods and frontier slots.

    Cells where a ratio is undefined (no downside, zero dispersion) are
    skipped; a metric undefined everywhere averages to NaN.  Returns
    ``{"in_sample": {...}, "out_sample": {...}}``.
    """
    mcfg = mcfg or metrics.MetricConfig()
    rows = metric_rows(mcfg)
    sides = {"in_sample": [], "out_sample": []}
    for period in report.periods:
        for slot in period.held:
            sides["in_sample"].append(_cell_metrics(slot.in_series, mcfg))
            sides["out_sample"].append(_cell_metrics(slot.out_series, mcfg))
    out: dict[str, dict[str, float]] = {}
    for side, cells in sides.items():
        table = {}
        for row in rows:
            values = np.array([c[row] for c in cells]) if cells else np.array([])
            finite = values[np.isfinite(values)]
            table[row] = float(finite.mean()) if finite.size else float("nan")
        out[side] = table
    return out


def composition_metrics(
    report: BacktestReport, threshold: float = 1e-4
) -> dict[str, float]:
    """Average holdings count, concentration, and per-rebalance turnover.

    Turnover pairs consecutive periods slot-by-slot (same frontier grid
    position) and averages ``sum |w_new - w_old|`` over all pairs.
    """
    held_counts, concentrations, turnovers = [], [], []
    for period in report.periods:
        for slot in period.held:
            held_counts.append(metrics.assets_held(slot.weights, threshold))
            concentrations.append(metrics.diversification(slot.weights))
    for prev, cur in zip(report.periods, report.periods[1:]):
        for a, b in zip(prev.slots, cur.slots):
            if a is not None and b is not None:
                turnovers.append(metrics.turnover(a.weights, b.weights))
    return {
        "assets_held": float(np.mean(held_counts)) if held_counts else float("nan"),
        "diversification": float(np.mean(concentrations)) if concentrations else float("nan"),
        "turnover": float(np.mean(turnovers)) if turnovers else float("nan"),
    }


# -- serialization ----------------------------------------------------------------


def _slot_to_obj(slot) -> object:
    if slot is None:
        return None
    return {
        "param": slot.param,
        "weights": [float(v) for v in slot.weights],
        "in_series": [float(v) for v in slot.in_series],
        "out_series": [float(v) for v in slot.out_series],
    }


def report_to_json(report: BacktestReport) -> str:
    """Deterministic single-document JSON encoding of a report."""
    doc = {
        "format": "robustfolio.backtest/1",
        "model_id": report.model_id,
        "assets": list(report.assets),
        "horizon": report.horizon,
        "holding": report.holding,
        "config": report.config,
        "panel_sha256": report.panel_sha256,
        "periods": [
            {
                "index": p.index,
                "in_sample": list(p.in_sample),
                "out_sample": list(p.out_sample),
                "carried": p.carried,
                "slots": [_slot_to_obj(s) for s in p.slots],
                "skipped": [[param, reason] for param, reason in p.skipped],
            }
            for p in report.periods
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)


def report_from_json(text: str) -> BacktestReport:
    doc = json.loads(text)
    if doc.get("format") != "robustfolio.backtest/1":
        raise ValueError(f"unrecognised report format {doc.get('format')!r}")
    periods = []
    for p in doc["periods"]:
        slots = tuple(
            None
            if s is None
            else Slot(
                param=float(s["param"]),
                weights=np.array(s["weights"], dtype=float),
                in_series=np.array(s["in_series"], dtype=float),
                out_series=np.array(s["out_series"], dtype=float),
            )
            for s in p["slots"]
        )
        periods.append(
            PeriodResult(
                index=int(p["index"]),
                in_sample=tuple(p["in_sample"]),
                out_sample=tuple(p["out_sample"]),
                slots=slots,
                skipped=tuple((float(a), str(b)) for a, b in p["skipped"]),
                carried=bool(p["carried"]),
            )
        )
    return BacktestReport(
        model_id=doc["model_id"],
        assets=tuple(doc["assets"]),
        horizon=int(doc["horizon"]),
        holding=int(doc["holding"]),
        config=doc["config"],
        panel_sha256=doc["panel_sha256"],
        periods=tuple(periods),
    )
