"""Robust portfolio selection: conic counterparts, rolling backtests, and
uncertainty-set validation."""

from .market_data import ReturnsPanel, load_returns, make_schedule, synth_panel
from .estimation import EstimateSet, estimate_window
from .conic import ConicProgram, Solution, Tolerances, solve
from .models import MODEL_IDS, Portfolio, efficient_frontier
from .backtest import BacktestReport, aggregate_metrics, run_backtest
from .validation import ValidationScore, validate_report
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "ReturnsPanel",
    "load_returns",
    "make_schedule",
    "synth_panel",
    "EstimateSet",
    "estimate_window",
    "ConicProgram",
    "Solution",
    "Tolerances",
    "solve",
    "MODEL_IDS",
    "Portfolio",
    "efficient_frontier",
    "BacktestReport",
    "aggregate_metrics",
    "run_backtest",
    "ValidationScore",
    "validate_report",
    "RunConfig",
    "__version__",
]
