"""Out-of-sample scoring of uncertainty sets and worst-case portfolios.

Two scoring families:

* coverage checks — did the realised out-of-sample mean (and covariance)
  land inside the set the robust model insured against?  Box sets score the
  fraction of per-asset intervals that contain the realised mean; ellipsoid
  and joint-ball sets score a 0/1 indicator per period.
* worst-case gain — for the mixture models, compare the robust portfolio's
  realised statistic against the nominal model's and against the worst
  in-sample component, and combine the four outcomes into a signed score.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import metrics
from .backtest import BacktestReport, period_seed
from .estimation import bootstrap_epsilon, box_deltas, sample_moments
from .market_data import ReturnsPanel, partition_mixture

logger = logging.getLogger(__name__)

__all__ = [
    "ValidationError",
    "ValidationScore",
    "box_check",
    "ellipsoid_check",
    "joint_ball_check",
    "classify_success",
    "gain_score",
    "validate_report",
    "VALIDATED_MODELS",
]

#: robust model -> nominal partner needed for scoring (None: scored alone).
VALIDATED_MODELS = {
    "mvbu": None,
    "mveu": None,
    "rmu": None,
    "wcor": "or",
    "wcvar": "cvar",
}


class ValidationError(ValueError):
    """Scoring impossible: wrong model pairing or mismatched reports."""


@dataclass(frozen=True)
class ValidationScore:
    """Average validation outcome for one robust model."""

    model_id: str
    kind: str  # "frequency" for coverage checks, "gain" for worst-case scores
    value: float
    per_period: tuple[float, ...]


def box_check(mu_future: np.ndarray, mu_hat: np.ndarray, delta: np.ndarray) -> float:
    """Fraction of assets whose realised mean lies within ``mu_hat_i ± delta_i``.

    The comparison carries a relative floating-point guard so that a
    zero-width box still contains a realised mean that is equal up to
    summation rounding (means of the same constant series over different
    window lengths differ in the last ulps).
    """
    mu_future = np.asarray(mu_future, dtype=float).reshape(-1)
    mu_hat = np.asarray(mu_hat, dtype=float).reshape(-1)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if not mu_future.shape == mu_hat.shape == delta.shape:
        raise ValidationError("mu_future, mu_hat, delta must have equal length")
    guard = 1e-12 * np.maximum(1.0, np.abs(mu_hat))
    inside = np.abs(mu_future - mu_hat) <= delta + guard
    return float(inside.mean())


def ellipsoid_check(
    mu_future: np.ndarray,
    mu_hat: np.ndarray,
    sigma_mu: np.ndarray,
    delta: float,
) -> bool:
    """Whether the realised mean lies in the estimation-error ellipsoid
    ``(m - mu_hat)' SigmaMu^{-1} (m - mu_hat) <= delta^2``.

    A rank-deficient ``sigma_mu`` is inverted in the pseudo-inverse sense
    (distance measured on its range) with a warning.
    """
    mu_future = np.asarray(mu_future, dtype=float).reshape(-1)
    mu_hat = np.asarray(mu_hat, dtype=float).reshape(-1)
    sigma_mu = np.asarray(sigma_mu, dtype=float)
    n = mu_hat.shape[0]
    if mu_future.shape != (n,) or sigma_mu.shape != (n, n):
        raise ValidationError("dimension mismatch between means and sigma_mu")
    if delta < 0:
        raise ValidationError(f"delta must be >= 0, got {delta}")
    rank = np.linalg.matrix_rank(sigma_mu)
    if rank < n:
        logger.warning(
            "sigma_mu is rank deficient (%d < %d); using pseudo-inverse", rank, n
        )
    diff = mu_future - mu_hat
    dist = float(diff @ np.linalg.pinv(sigma_mu) @ diff)
    return dist <= delta * delta


def joint_ball_check(
    mu_future: np.ndarray,
    sigma_future: np.ndarray,
    mu_hat: np.ndarray,
    sigma_hat: np.ndarray,
    epsilon: float,
    c: float = 1.0,
) -> bool:
    """Whether realised moments lie in the joint ball
    ``||m - mu_hat|| + c * ||S - sigma_hat||_F <= epsilon``."""
    mu_future = np.asarray(mu_future, dtype=float).reshape(-1)
    mu_hat = np.asarray(mu_hat, dtype=float).reshape(-1)
    if mu_future.shape != mu_hat.shape:
        raise ValidationError("mean vectors must have equal length")
    distance = float(np.linalg.norm(mu_future - mu_hat)) + c * float(
        np.linalg.norm(
            np.asarray(sigma_future, dtype=float) - np.asarray(sigma_hat, dtype=float),
            ord="fro",
        )
    )
    return distance <= epsilon


def classify_success(
    robust_value: float,
    nominal_value: float,
    component_values,
    higher_is_better: bool = True,
) -> tuple[bool, bool, bool, bool]:
    """Four independent outcomes of a robust-vs-nominal comparison.

    With a higher-is-better statistic and ``m`` the worst (minimum) in-sample
    component value:

    * c1 — robust cleared ``m`` while nominal missed it;
    * c2 — robust beat nominal outright;
    * c3 — robust missed ``m`` while nominal cleared it;
    * c4 — robust lost to nominal outright.

    For a lower-is-better statistic (losses), ``m`` is the maximum and every
    inequality flips.
    """
    values = np.asarray(list(component_values), dtype=float)
    if values.size == 0:
        raise ValidationError("need at least one component value")
    if higher_is_better:
        m = float(values.min())
        c1 = robust_value >= m and nominal_value < m
        c2 = robust_value > nominal_value
        c3 = robust_value < m and nominal_value >= m
        c4 = robust_value < nominal_value
    else:
        m = float(values.max())
        c1 = robust_value <= m and nominal_value > m
        c2 = robust_value < nominal_value
        c3 = robust_value > m and nominal_value <= m
        c4 = robust_value > nominal_value
    return bool(c1), bool(c2), bool(c3), bool(c4)


def gain_score(c1: bool, c2: bool, c3: bool, c4: bool) -> float:
    """Signed score ``c1 + 0.5*c2 - c3 - 0.5*c4`` in ``[-1.5, 1.5]``."""
    return 1.0 * c1 + 0.5 * c2 - 1.0 * c3 - 0.5 * c4


# -- report-level scoring ---------------------------------------------------------


def _out_mu(panel: ReturnsPanel, period) -> np.ndarray:
    lo, hi = period.out_sample
    return panel.values[lo:hi].mean(axis=0)


def _check_alignment(report: BacktestReport, panel: ReturnsPanel) -> None:
    from .backtest import panel_digest

    if report.panel_sha256 != panel_digest(panel):
        raise ValidationError(
            "panel does not match the one the report was computed from"
        )


def _pair_periods(robust: BacktestReport, nominal: BacktestReport):
    if len(robust.periods) != len(nominal.periods):
        raise ValidationError(
            "robust and nominal reports cover different numbers of periods"
        )
    for a, b in zip(robust.periods, nominal.periods):
        if a.in_sample != b.in_sample or a.out_sample != b.out_sample:
            raise ValidationError("robust and nominal reports use different windows")
        yield a, b


def _omega_or_inf(series: np.ndarray, tau: float) -> float:
    try:
        return metrics.omega_ratio(series, tau)
    except metrics.MetricError:
        return float("inf")


def validate_report(
    robust: BacktestReport,
    panel: ReturnsPanel,
    nominal: BacktestReport | None = None,
) -> ValidationScore:
    """Score one robust model's uncertainty set out of sample.

    Coverage models (``mvbu``, ``mveu``, ``rmu``) need only the panel; the
    estimates are rebuilt from the report's own config so the sets match the
    ones used during the backtest.  Mixture models (``wcor``, ``wcvar``)
    additionally need the nominal partner's report over the same windows.
    Periods with no held portfolio are skipped.
    """
    model = robust.model_id
    if model not in VALIDATED_MODELS:
        raise ValidationError(
            f"model {model!r} has no validation rule; expected one of "
            f"{sorted(VALIDATED_MODELS)}"
        )
    _check_alignment(robust, panel)
    partner = VALIDATED_MODELS[model]
    if partner is not None:
        if nominal is None:
            raise ValidationError(f"{model} validation needs a {partner} report")
        if nominal.model_id != partner:
            raise ValidationError(
                f"{model} validation needs a {partner} report, got {nominal.model_id!r}"
            )
        _check_alignment(nominal, panel)
    cfg = robust.config

    scores: list[float] = []
    if model in ("mvbu", "mveu", "rmu"):
        for period in robust.periods:
            if not period.held:
                continue
            lo, hi = period.in_sample
            window = panel.values[lo:hi]
            mu_hat, sigma_hat = sample_moments(window)
            mu_f = _out_mu(panel, period)
            if model == "mvbu":
                delta = box_deltas(window, z=cfg["z"])
                scores.append(box_check(mu_f, mu_hat, delta))
            elif model == "mveu":
                from .estimation import chi_square_quantile, estimation_error_cov

                df = cfg["chi_df"] or panel.n_assets
                delta = float(np.sqrt(chi_square_quantile(cfg["chi_level"], df)))
                sigma_mu = estimation_error_cov(sigma_hat, hi - lo)
                scores.append(float(ellipsoid_check(mu_f, mu_hat, sigma_mu, delta)))
            else:  # rmu
                eps = bootstrap_epsilon(
                    window,
                    block_len=cfg["bootstrap_block"],
                    draws=cfg["bootstrap_draws"],
                    pct=cfg["bootstrap_pct"],
                    c=cfg["bootstrap_c"],
                    seed=period_seed(cfg["seed"], period.index),
                )
                out_lo, out_hi = period.out_sample
                mu_out, sigma_out = sample_moments(panel.values[out_lo:out_hi])
                scores.append(
                    float(
                        joint_ball_check(
                            mu_out, sigma_out, mu_hat, sigma_hat, eps, cfg["bootstrap_c"]
                        )
                    )
                )
        kind = "frequency"
    else:
        assert nominal is not None
        higher = model == "wcor"
        for rob_p, nom_p in _pair_periods(robust, nominal):
            if not rob_p.held or not nom_p.held:
                continue
            lo, hi = rob_p.in_sample
            blocks = [
                b.values
                for b in partition_mixture(
                    panel.window(lo, hi), cfg["mixture_components"]
                )
            ]
            if higher:
                stat = lambda series: _omega_or_inf(series, cfg["tau"])
            else:
                stat = lambda series: metrics.cvar_empirical(series, cfg["beta"])
            robust_t = float(
                np.mean([stat(slot.out_series) for slot in rob_p.held])
            )
            nominal_t = float(
                np.mean([stat(slot.out_series) for slot in nom_p.held])
            )
            component_values = [
                float(np.mean([stat(y @ slot.weights) for slot in rob_p.held]))
                for y in blocks
            ]
            outcome = classify_success(robust_t, nominal_t, component_values, higher)
            scores.append(gain_score(*outcome))
        kind = "gain"

    if not scores:
        raise ValidationError(f"no scoreable periods for {model}")
    return ValidationScore(
        model_id=model,
        kind=kind,
        value=float(np.mean(scores)),
        per_period=tuple(scores),
    )
