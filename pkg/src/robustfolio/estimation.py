"""Moment estimation and uncertainty-set sizing from an in-sample window.

Everything a model needs from data is collected in :class:`EstimateSet`:
sample moments, a Cholesky factor, per-asset box half-widths, the ellipsoid
radius, the mean-estimation-error covariance, and the bootstrap joint radius.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .market_data import ReturnsPanel

logger = logging.getLogger(__name__)

__all__ = [
    "EstimationError",
    "EstimateSet",
    "sample_moments",
    "cholesky_factor",
    "box_deltas",
    "chi_square_quantile",
    "estimation_error_cov",
    "bootstrap_epsilon",
    "estimate_window",
]


class EstimationError(ValueError):
    """Estimation impossible on the given window (too short, not PSD in strict mode)."""


@dataclass(frozen=True)
class EstimateSet:
    """Per-window estimates consumed by the portfolio models.

    Attributes
    ----------
    mu : ndarray, shape (N,)
        Sample mean vector.
    sigma : ndarray, shape (N, N)
        Sample covariance (divisor T - 1), PSD-repaired if needed.
    chol : ndarray, shape (N, N)
        Lower-triangular factor with ``chol @ chol.T == sigma``.
    box_delta : ndarray, shape (N,)
        Per-asset interval half-widths ``z * sigma_i / sqrt(T)``.
    ellipsoid_delta : float
        Radius ``sqrt(chi2_quantile)`` of the mean-ellipsoid.
    sigma_mu : ndarray, shape (N, N)
        Covariance of the mean estimate, ``sigma / T``.
    epsilon : float
        Bootstrap radius for the joint (mean, covariance) ball.
    n_obs : int
        Window length T.
    """

    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray
    box_delta: np.ndarray
    ellipsoid_delta: float
    sigma_mu: np.ndarray
    epsilon: float
    n_obs: int


def sample_moments(values: np.ndarray | ReturnsPanel) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance (divisor T - 1) of a (T x N) window."""
    y = values.values if isinstance(values, ReturnsPanel) else np.asarray(values, dtype=float)
    if y.ndim != 2:
        raise EstimationError(f"expected a 2-D window, got ndim={y.ndim}")
    t, _ = y.shape
    if t < 2:
        raise EstimationError(f"need at least 2 observations for sample moments, got {t}")
    mu = y.mean(axis=0)
    centered = y - mu
    sigma = centered.T @ centered / (t - 1)
    return mu, (sigma + sigma.T) / 2.0


def cholesky_factor(sigma: np.ndarray, repair: bool = True) -> np.ndarray:
    """Lower-triangular L with ``L @ L.T`` equal to ``sigma`` (after PSD repair).

    A symmetric matrix with slightly negative eigenvalues is repaired by
    clipping its spectrum at zero before factoring.  With ``repair=False``
    any indefiniteness raises :class:`EstimationError` instead.

    The factor satisfies ``max|L @ L.T - sigma_repaired| <= 1e-8 * scale``.
    """
    a = np.asarray(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise EstimationError(f"covariance must be square, got shape {a.shape}")
    sym = (a + a.T) / 2.0
    scale = max(1.0, float(np.abs(sym).max(initial=0.0)))
    if not np.allclose(a, a.T, atol=1e-8 * scale):
        raise EstimationError("covariance must be symmetric")
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.min() < -1e-8 * scale and not repair:
        raise EstimationError(
            f"matrix is not positive semidefinite (min eigenvalue {eigvals.min():.3e})"
        )
    clipped = np.clip(eigvals, 0.0, None)
    repaired = (eigvecs * clipped) @ eigvecs.T
    repaired = (repaired + repaired.T) / 2.0
    jitter = 0.0
    base = max(scale, 1.0)
    for attempt in range(8):
        try:
            ell = np.linalg.cholesky(repaired + jitter * np.eye(a.shape[0]))
        except np.linalg.LinAlgError:
            jitter = base * 10.0 ** (-14 + attempt)
            continue
        if np.abs(ell @ ell.T - repaired).max(initial=0.0) <= 1e-8 * base:
            return ell
        break
    # Last resort: eigen square root re-triangularised via QR.
    root = eigvecs * np.sqrt(clipped)
    q, r = np.linalg.qr(root.T)
    ell = r.T * np.sign(np.diag(r))
    if np.abs(ell @ ell.T - repaired).max(initial=0.0) > 1e-8 * base:
        raise EstimationError("could not factor covariance to tolerance")
    return ell


def box_deltas(values: np.ndarray | ReturnsPanel, z: float = 1.96) -> np.ndarray:
    """Per-asset half-widths ``z * s_i / sqrt(T)`` with s_i the sample std."""
    if z <= 0:
        raise ValueError(f"z must be positive, got {z}")
    y = values.values if isinstance(values, ReturnsPanel) else np.asarray(values, dtype=float)
    _, sigma = sample_moments(y)
    t = y.shape[0]
    return z * np.sqrt(np.diag(sigma)) / np.sqrt(t)


def chi_square_quantile(level: float, df: int) -> float:
    """Quantile of the chi-square distribution with ``df`` degrees of freedom."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    return float(stats.chi2.ppf(level, df))


def estimation_error_cov(sigma: np.ndarray, n_obs: int) -> np.ndarray:
    """Covariance of the sample mean: ``sigma / T``."""
    if n_obs < 1:
        raise ValueError(f"n_obs must be >= 1, got {n_obs}")
    return np.asarray(sigma, dtype=float) / float(n_obs)


def bootstrap_epsilon(
    values: np.ndarray | ReturnsPanel,
    block_len: int | None = None,
    draws: int = 1000,
    pct: float = 0.95,
    c: float = 1.0,
    seed: int = 0,
) -> float:
    """Percentile of the bootstrap distance ||mu_b - mu|| + c * ||Sigma_b - Sigma||_F.

    Each draw resamples ``block_len`` rows i.i.d. with replacement, recomputes
    moments, and records the combined distance; the radius is the nearest-rank
    ``pct`` percentile of the ``draws`` distances.  Deterministic in ``seed``.
    """
    y = values.values if isinstance(values, ReturnsPanel) else np.asarray(values, dtype=float)
    t = y.shape[0]
    if block_len is None:
        block_len = t
    if block_len < 2:
        raise ValueError(f"block_len must be >= 2, got {block_len}")
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    if not 0.0 < pct <= 1.0:
        raise ValueError(f"pct must lie in (0, 1], got {pct}")
    if c < 0:
        raise ValueError(f"c must be non-negative, got {c}")
    mu_hat, sigma_hat = sample_moments(y)
    streams = np.random.SeedSequence(seed).spawn(draws)
    distances = np.empty(draws)
    for b, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, t, size=block_len)
        mu_b, sigma_b = sample_moments(y[idx])
        distances[b] = np.linalg.norm(mu_b - mu_hat) + c * np.linalg.norm(
            sigma_b - sigma_hat, ord="fro"
        )
    distances.sort()
    rank = min(draws, max(1, int(np.ceil(pct * draws))))
    return float(distances[rank - 1])


def estimate_window(
    window: ReturnsPanel | np.ndarray,
    *,
    z: float = 1.96,
    chi_level: float = 0.95,
    chi_df: int | None = None,
    block_len: int | None = None,
    draws: int = 1000,
    pct: float = 0.95,
    c: float = 1.0,
    seed: int = 0,
) -> EstimateSet:
    """Assemble every estimate the models need from one in-sample window."""
    y = window.values if isinstance(window, ReturnsPanel) else np.asarray(window, dtype=float)
    mu, sigma = sample_moments(y)
    t, n = y.shape
    return EstimateSet(
        mu=mu,
        sigma=sigma,
        chol=cholesky_factor(sigma),
        box_delta=box_deltas(y, z=z),
        ellipsoid_delta=float(np.sqrt(chi_square_quantile(chi_level, chi_df or n))),
        sigma_mu=estimation_error_cov(sigma, t),
        epsilon=bootstrap_epsilon(
            y, block_len=block_len, draws=draws, pct=pct, c=c, seed=seed
        ),
        n_obs=t,
    )
