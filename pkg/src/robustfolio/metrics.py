"""Performance and composition statistics for portfolio return series.

Ratio metrics raise :class:`MetricError` when their denominator degenerates
(zero downside for Sortino, no sub-threshold mass for Omega, zero volatility
for Sharpe) rather than silently returning infinities; backtest aggregation
records those cells as missing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "MetricError",
    "MetricConfig",
    "portfolio_series",
    "mean_return",
    "std_dev",
    "sharpe_ratio",
    "sortino_ratio",
    "omega_ratio",
    "cvar_empirical",
    "turnover",
    "diversification",
    "assets_held",
]


class MetricError(ValueError):
    """Metric undefined for the given series (degenerate denominator)."""


@dataclass(frozen=True)
class MetricConfig:
    """Knobs shared by the backtest tables."""

    tau: float = 0.0
    betas: tuple[float, ...] = (0.90, 0.95, 0.99)
    rf: float = 0.0
    held_threshold: float = 1e-4


def portfolio_series(returns: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Portfolio return series: ``returns @ weights`` for a matrix, or the
    series itself when already one-dimensional."""
    r = np.asarray(returns, dtype=float)
    if r.ndim == 1:
        if weights is not None:
            raise MetricError("weights given but returns is already a series")
        return r
    if r.ndim != 2:
        raise MetricError(f"returns must be 1-D or 2-D, got ndim={r.ndim}")
    if weights is None:
        raise MetricError("weights required for a returns matrix")
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != r.shape[1]:
        raise MetricError(f"{w.shape[0]} weights for {r.shape[1]} assets")
    return r @ w


def mean_return(mu: np.ndarray, weights: np.ndarray) -> float:
    """Expected portfolio return ``mu.w``."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if mu.shape != w.shape:
        raise MetricError(f"mu has length {mu.shape[0]}, weights {w.shape[0]}")
    return float(mu @ w)


def std_dev(sigma: np.ndarray, weights: np.ndarray) -> float:
    """Portfolio standard deviation ``sqrt(w' Sigma w)``."""
    s = np.asarray(sigma, dtype=float)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if s.shape != (w.shape[0], w.shape[0]):
        raise MetricError(f"sigma shape {s.shape} does not match {w.shape[0]} weights")
    variance = float(w @ s @ w)
    if variance < -1e-10:
        raise MetricError(f"negative portfolio variance {variance:.3e}")
    return float(np.sqrt(max(variance, 0.0)))


def sharpe_ratio(mean: float, std: float, rf: float = 0.0) -> float:
    """Excess mean over standard deviation, ``(mean - rf) / std``."""
    if std <= 0:
        raise MetricError(f"standard deviation must be positive, got {std}")
    return (mean - rf) / std


def sortino_ratio(returns: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Mean return over the standard deviation of the clipped-loss series.

    The denominator is the population standard deviation of
    ``max(0, -r_t)``; a series with identical clipped losses (in particular
    one with no losses at all) has no downside dispersion and raises.
    """
    series = portfolio_series(returns, weights)
    downside = np.clip(-series, 0.0, None)
    spread = float(np.std(downside))
    if spread <= 0.0:
        raise MetricError("downside deviation is zero; ratio undefined")
    return float(series.mean() / spread)


def omega_ratio(returns: np.ndarray, tau: float = 0.0, weights: np.ndarray | None = None) -> float:
    """Gain-loss ratio around ``tau``: ``(mean(r) - tau) / mean((tau - r)+) + 1``.

    Raises when no observation falls below ``tau`` (zero denominator).
    """
    series = portfolio_series(returns, weights)
    shortfall = float(np.clip(tau - series, 0.0, None).mean())
    if shortfall <= 0.0:
        raise MetricError(f"no observations below tau={tau}; ratio undefined")
    return float((series.mean() - tau) / shortfall + 1.0)


def cvar_empirical(returns: np.ndarray, beta: float, weights: np.ndarray | None = None) -> float:
    """Empirical conditional value-at-risk of the loss series ``-r`` at level
    ``beta``, reported as a positive loss number.

    Equals the optimum of the standard linear-programming definition
    ``min_a a + mean((loss - a)+) / (1 - beta)`` computed exactly from the
    sorted tail: the worst ``(1 - beta) * S`` losses are averaged, with the
    boundary observation taken fractionally.
    """
    if not 0.0 < beta < 1.0:
        raise MetricError(f"beta must lie in (0, 1), got {beta}")
    series = portfolio_series(returns, weights)
    losses = np.sort(-series)[::-1]
    s = losses.shape[0]
    if s == 0:
        raise MetricError("empty return series")
    k = (1.0 - beta) * s
    whole = int(np.floor(k))
    tail = float(losses[:whole].sum())
    if whole < s and k > whole:
        tail += (k - whole) * float(losses[whole])
    return tail / k


def turnover(previous: np.ndarray, current: np.ndarray) -> float:
    """Total absolute rebalancing ``sum |w_new - w_old|``."""
    p = np.asarray(previous, dtype=float).reshape(-1)
    c = np.asarray(current, dtype=float).reshape(-1)
    if p.shape != c.shape:
        raise MetricError(f"weight vectors differ in length: {p.shape[0]} vs {c.shape[0]}")
    return float(np.abs(c - p).sum())


def diversification(weights: np.ndarray) -> float:
    """Herfindahl concentration ``sum w_i^2`` (lower is more diversified)."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    return float((w * w).sum())


def assets_held(weights: np.ndarray, threshold: float = 1e-4) -> int:
    """Number of weights with magnitude above ``threshold``."""
    if threshold < 0:
        raise MetricError(f"threshold must be >= 0, got {threshold}")
    w = np.asarray(weights, dtype=float).reshape(-1)
    return int((np.abs(w) > threshold).sum())
