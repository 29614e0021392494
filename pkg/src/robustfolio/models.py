"""Portfolio selection programs and the efficient-frontier driver.

Every ``*_program`` function compiles model inputs into a
:class:`~robustfolio.conic.ConicProgram` whose first ``n`` variables are the
asset weights; auxiliary variables follow.  :func:`efficient_frontier` sweeps
a model's trade-off parameter over a grid, solves each point, and returns the
decoded portfolios (holes for points that failed, with reasons).

Models
------
``mv_risk_min``   minimum variance at a target mean
``mv``            mean-variance, risk-aversion form
``mvbu``          mean-variance, means in per-asset intervals (worst case)
``mveu``          mean-variance, means in an ellipsoid (worst case)
``rmu``           robust trade-off between worst-case mean and variance
                  under a joint moment ball
``or``            gain-loss (Omega) maximisation as a linear program
``cvar``          conditional value-at-risk minimisation
``wcor``          worst-case Omega over a scenario mixture, with the
                  outer gamma search
``wcvar``         worst-case CVaR over a scenario mixture
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .conic import ConicProgram, Solution, Tolerances, solve
from .estimation import EstimateSet, cholesky_factor

logger = logging.getLogger(__name__)

__all__ = [
    "ModelError",
    "MODEL_IDS",
    "MIXTURE_MODELS",
    "Portfolio",
    "ModelInputs",
    "ModelSettings",
    "FrontierResult",
    "mv_risk_min_program",
    "mv_program",
    "mv_box_program",
    "mv_ellipsoidal_program",
    "rmu_anchors",
    "rmu_program",
    "omega_program",
    "cvar_program",
    "wcor_program",
    "wcvar_program",
    "maximize_worst_omega",
    "efficient_frontier",
]

MODEL_IDS = ("mv_risk_min", "mv", "mvbu", "mveu", "rmu", "or", "cvar", "wcor", "wcvar")
#: Models estimated on a partition of the window instead of its raw rows.
MIXTURE_MODELS = ("wcor", "wcvar")


class ModelError(ValueError):
    """Bad model inputs, or no frontier point could be solved."""


@dataclass(frozen=True)
class Portfolio:
    """Decoded weights for one frontier point."""

    model_id: str
    param: float
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ModelInputs:
    """Everything a model may consume for one estimation window.

    ``scenarios`` is the raw (T x N) window; ``blocks`` the mixture partition
    (only for the worst-case mixture models); ``estimates`` the moment pack.
    """

    estimates: EstimateSet
    scenarios: np.ndarray
    blocks: tuple[np.ndarray, ...] | None = None

    @property
    def n_assets(self) -> int:
        return self.scenarios.shape[1]


@dataclass(frozen=True)
class ModelSettings:
    """Model-level knobs shared across frontier points."""

    tau: float = 0.0
    beta: float = 0.95
    gamma_step: float = 0.05
    long_only: bool = True
    lambda_min: float = 1e-3
    lambda_max: float = 1e3
    eta_min: float = 0.05
    eta_max: float = 0.95
    rmu_c: float = 1.0
    tolerances: Tolerances = field(default_factory=Tolerances)


@dataclass(frozen=True)
class FrontierResult:
    """Aligned frontier points (None where a grid point failed) plus reasons."""

    model_id: str
    points: tuple[object, ...]  # Portfolio | None, one per grid point
    skipped: tuple[tuple[float, str], ...]

    @property
    def portfolios(self) -> list[Portfolio]:
        return [p for p in self.points if p is not None]


# -- simplex helpers -----------------------------------------------------------


def _simplex(program: ConicProgram, n: int, long_only: bool = True, budget: float = 1.0) -> None:
    ones = np.zeros(program.n_vars)
    ones[:n] = 1.0
    program.add_eq(ones, budget)
    if long_only:
        for i in range(n):
            program.set_bounds(i, lower=0.0)


def _moments(mu, sigma) -> tuple[np.ndarray, np.ndarray, int]:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    sigma = np.asarray(sigma, dtype=float)
    n = mu.shape[0]
    if sigma.shape != (n, n):
        raise ModelError(f"sigma shape {sigma.shape} does not match {n} assets")
    return mu, sigma, n


# -- mean-variance family ------------------------------------------------------


def mv_risk_min_program(mu, sigma, target: float, long_only: bool = True) -> ConicProgram:
    """Minimise ``w' Sigma w`` subject to ``mu.w = target`` on the simplex."""
    mu, sigma, n = _moments(mu, sigma)
    program = ConicProgram(n, "min")
    program.set_objective(np.zeros(n), quadratic=sigma)
    program.add_eq(mu, float(target))
    _simplex(program, n, long_only)
    return program


def mv_program(mu, sigma, risk_aversion: float, long_only: bool = True) -> ConicProgram:
    """Maximise ``mu.w - risk_aversion * w' Sigma w`` on the simplex."""
    mu, sigma, n = _moments(mu, sigma)
    if risk_aversion < 0:
        raise ModelError(f"risk_aversion must be >= 0, got {risk_aversion}")
    program = ConicProgram(n, "max")
    program.set_objective(mu, quadratic=risk_aversion * sigma)
    _simplex(program, n, long_only)
    return program


def mv_box_program(mu, sigma, delta, risk_aversion: float, long_only: bool = True) -> ConicProgram:
    """Box-robust mean-variance: the worst mean in ``mu_i ± delta_i`` charges
    ``delta.|w|``, so the objective is ``mu.w - delta.|w| - lambda w'Sigma w``.

    Long-only, ``|w| = w`` and the penalty folds into the linear term.
    Otherwise weights split as ``w = wp - wm`` with both parts non-negative;
    the first ``n`` variables are ``wp`` and the next ``n`` are ``wm``
    (decode w = x[:n] - x[n:2n]).
    """
    mu, sigma, n = _moments(mu, sigma)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.shape != (n,):
        raise ModelError(f"delta must have length {n}, got {delta.shape[0]}")
    if np.any(delta < 0):
        raise ModelError("delta must be non-negative")
    if risk_aversion < 0:
        raise ModelError(f"risk_aversion must be >= 0, got {risk_aversion}")
    if long_only:
        program = ConicProgram(n, "max")
        program.set_objective(mu - delta, quadratic=risk_aversion * sigma)
        _simplex(program, n, long_only=True)
        return program
    program = ConicProgram(2 * n, "max")
    c = np.concatenate([mu - delta, -mu - delta])
    q = np.block([[sigma, -sigma], [-sigma, sigma]]) * risk_aversion
    program.set_objective(c, quadratic=q)
    signed = np.concatenate([np.ones(n), -np.ones(n)])
    program.add_eq(signed, 1.0)
    for i in range(2 * n):
        program.set_bounds(i, lower=0.0)
    return program


def mv_ellipsoidal_program(
    mu, sigma, sigma_mu, delta: float, risk_aversion: float, long_only: bool = True
) -> ConicProgram:
    """Ellipsoid-robust mean-variance as a second-order cone program.

    The worst mean over ``(m - mu)' SigmaMu^{-1} (m - mu) <= delta^2`` costs
    ``delta * ||C w||`` with ``C'C = SigmaMu``; variables are
    ``(w, z, q)`` with ``Cw = q`` and ``||q|| <= z``.
    """
    mu, sigma, n = _moments(mu, sigma)
    sigma_mu = np.asarray(sigma_mu, dtype=float)
    if sigma_mu.shape != (n, n):
        raise ModelError(f"sigma_mu shape {sigma_mu.shape} does not match {n} assets")
    if delta < 0:
        raise ModelError(f"delta must be >= 0, got {delta}")
    if risk_aversion < 0:
        raise ModelError(f"risk_aversion must be >= 0, got {risk_aversion}")
    c_factor = cholesky_factor(sigma_mu).T  # C with C'C = sigma_mu
    total = n + 1 + n  # w, z, q
    program = ConicProgram(total, "max")
    cost = np.zeros(total)
    cost[:n] = mu
    cost[n] = -delta
    quad = np.zeros((total, total))
    quad[:n, :n] = risk_aversion * sigma
    program.set_objective(cost, quadratic=quad)
    for i in range(n):  # C w - q = 0
        row = np.zeros(total)
        row[:n] = c_factor[i]
        row[n + 1 + i] = -1.0
        program.add_eq(row, 0.0)
    sel = np.zeros((n, total))
    sel[:, n + 1 :] = np.eye(n)
    g = np.zeros(total)
    g[n] = 1.0
    program.add_soc(sel, np.zeros(n), g, 0.0)  # ||q|| <= z
    _simplex(program, n, long_only)
    program.set_bounds(n, lower=0.0)
    return program


# -- joint moment-ball model ---------------------------------------------------


def rmu_anchors(
    mu, sigma, epsilon: float, c_weight: float = 1.0, tol: Tolerances | None = None
) -> tuple[float, float]:
    """Anchor values for the trade-off program: the best attainable worst-case
    variance and worst-case mean on the simplex.

    Returns ``(f1, f2)`` where ``f1 = min w'(Sigma + (eps/c) I)w`` and
    ``f2 = max mu.w - eps ||w||``.
    """
    mu, sigma, n = _moments(mu, sigma)
    _check_rmu_params(epsilon, c_weight)
    q1 = sigma + (epsilon / c_weight) * np.eye(n)
    prog1 = ConicProgram(n, "min")
    prog1.set_objective(np.zeros(n), quadratic=q1)
    _simplex(prog1, n)
    sol1 = solve(prog1, tol)
    if not sol1.ok:
        raise ModelError(f"variance anchor failed: {sol1.status}")

    prog2 = ConicProgram(n + 1, "max")  # (w, omega)
    cost = np.concatenate([mu, [-epsilon]])
    prog2.set_objective(cost)
    sel = np.hstack([np.eye(n), np.zeros((n, 1))])
    g = np.zeros(n + 1)
    g[n] = 1.0
    prog2.add_soc(sel, np.zeros(n), g, 0.0)
    _simplex(prog2, n)
    prog2.set_bounds(n, lower=0.0)
    sol2 = solve(prog2, tol)
    if not sol2.ok:
        raise ModelError(f"mean anchor failed: {sol2.status}")
    return float(sol1.objective), float(sol2.objective)


def _check_rmu_params(epsilon: float, c_weight: float) -> None:
    if epsilon < 0:
        raise ModelError(f"epsilon must be >= 0, got {epsilon}")
    if c_weight <= 0:
        raise ModelError(f"c_weight must be > 0, got {c_weight}")


def rmu_program(
    mu,
    sigma,
    epsilon: float,
    eta1: float,
    eta2: float | None = None,
    c_weight: float = 1.0,
    anchors: tuple[float, float] | None = None,
    tol: Tolerances | None = None,
) -> ConicProgram:
    """Balance worst-case variance against worst-case mean under a joint ball
    of radius ``epsilon`` around the sample moments.

    Minimises the deviation budget ``alpha`` subject to

    * ``w'(Sigma + (eps/c) I)w <= f1 + alpha/eta1``
    * ``mu.w + alpha/eta2 - eps*omega = f2`` with ``||w|| <= omega``
    * simplex, ``w, alpha, omega >= 0``.

    Variables are ``(w, alpha, omega)``; anchors default to
    :func:`rmu_anchors` on the same inputs.
    """
    mu, sigma, n = _moments(mu, sigma)
    _check_rmu_params(epsilon, c_weight)
    if not 0.0 < eta1 < 1.0:
        raise ModelError(f"eta1 must lie in (0, 1), got {eta1}")
    eta2 = 1.0 - eta1 if eta2 is None else eta2
    if not 0.0 < eta2 <= 1.0:
        raise ModelError(f"eta2 must lie in (0, 1], got {eta2}")
    if anchors is None:
        anchors = rmu_anchors(mu, sigma, epsilon, c_weight, tol)
    f1, f2 = anchors

    total = n + 2  # w, alpha, omega
    a_idx, o_idx = n, n + 1
    program = ConicProgram(total, "min")
    cost = np.zeros(total)
    cost[a_idx] = 1.0
    program.set_objective(cost)

    # Epigraph cone for w'Q1 w <= f1 + alpha/eta1.
    q1 = sigma + (epsilon / c_weight) * np.eye(n)
    f_mat = _range_factor(q1)
    k = f_mat.shape[0]
    a_top = np.zeros((k, total))
    a_top[:, :n] = 2.0 * f_mat
    a_bot = np.zeros((1, total))
    a_bot[0, a_idx] = -1.0 / eta1
    g = np.zeros(total)
    g[a_idx] = 1.0 / eta1
    program.add_soc(
        np.vstack([a_top, a_bot]),
        np.concatenate([np.zeros(k), [1.0 - f1]]),
        g,
        1.0 + f1,
    )

    # Worst-case mean pinned to its anchor up to the shared budget.
    row = np.zeros(total)
    row[:n] = mu
    row[a_idx] = 1.0 / eta2
    row[o_idx] = -epsilon
    program.add_eq(row, f2)

    sel = np.zeros((n, total))
    sel[:, :n] = np.eye(n)
    g = np.zeros(total)
    g[o_idx] = 1.0
    program.add_soc(sel, np.zeros(n), g, 0.0)  # ||w|| <= omega

    _simplex(program, n)
    program.set_bounds(a_idx, lower=0.0)
    program.set_bounds(o_idx, lower=0.0)
    return program


def _range_factor(q: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((q + q.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)).T


# -- scenario models -----------------------------------------------------------


def omega_program(scenarios, tau: float, lower: float = 0.0, upper: float = 1.0) -> ConicProgram:
    """Gain-loss ratio maximisation as a linear program.

    The fractional objective ``(mean(r_w) - tau) / mean((tau - r_w)+)`` is
    linearised with the scaling variable ``zeta``: variables are
    ``(x, v, zeta)`` with ``x = zeta * w``; at an optimum with ``zeta > 0``
    the weights are ``x / zeta`` and the optimum value equals the portfolio's
    gain-loss ratio minus one.
    """
    y = np.asarray(scenarios, dtype=float)
    if y.ndim != 2:
        raise ModelError(f"scenarios must be 2-D, got ndim={y.ndim}")
    s, n = y.shape
    if not lower <= upper:
        raise ModelError(f"lower bound {lower} exceeds upper bound {upper}")
    ybar = y.mean(axis=0)
    total = n + s + 1
    z_idx = n + s
    program = ConicProgram(total, "max")
    cost = np.zeros(total)
    cost[:n] = ybar
    cost[z_idx] = -tau
    program.set_objective(cost)
    # normalisation: expected shortfall weight fixed to one.
    row = np.zeros(total)
    row[n : n + s] = 1.0 / s
    program.add_eq(row, 1.0)
    # mean return at least tau (scaled).
    row = np.zeros(total)
    row[:n] = -ybar
    row[z_idx] = tau
    program.add_ineq(row, 0.0)
    # v_s >= tau*zeta - y_s.x
    for i in range(s):
        row = np.zeros(total)
        row[:n] = -y[i]
        row[n + i] = -1.0
        row[z_idx] = tau
        program.add_ineq(row, 0.0)
    # sum x = zeta
    row = np.zeros(total)
    row[:n] = 1.0
    row[z_idx] = -1.0
    program.add_eq(row, 0.0)
    # zeta*lower <= x_j <= zeta*upper
    for j in range(n):
        row = np.zeros(total)
        row[j] = 1.0
        row[z_idx] = -upper
        program.add_ineq(row, 0.0)
        row = np.zeros(total)
        row[j] = -1.0
        row[z_idx] = lower
        program.add_ineq(row, 0.0)
    for i in range(s):
        program.set_bounds(n + i, lower=0.0)
    program.set_bounds(z_idx, lower=0.0)
    return program


def cvar_program(
    scenarios,
    beta: float,
    floor: float | None = None,
    long_only: bool = True,
    budget: float = 1.0,
) -> ConicProgram:
    """Empirical CVaR minimisation over equiprobable scenarios.

    Variables are ``(w, xi, nu)``: ``xi`` the value-at-risk anchor and
    ``nu_s`` the scenario excess losses.  ``floor`` adds the expected-return
    constraint ``mean(y).w >= floor``.
    """
    y = np.asarray(scenarios, dtype=float)
    if y.ndim != 2:
        raise ModelError(f"scenarios must be 2-D, got ndim={y.ndim}")
    if not 0.0 < beta < 1.0:
        raise ModelError(f"beta must lie in (0, 1), got {beta}")
    s, n = y.shape
    total = n + 1 + s
    xi = n
    program = ConicProgram(total, "min")
    cost = np.zeros(total)
    cost[xi] = 1.0
    cost[xi + 1 :] = 1.0 / ((1.0 - beta) * s)
    program.set_objective(cost)
    for i in range(s):
        row = np.zeros(total)
        row[:n] = -y[i]
        row[xi] = -1.0
        row[xi + 1 + i] = -1.0
        program.add_ineq(row, 0.0)
        program.set_bounds(xi + 1 + i, lower=0.0)
    if floor is not None:
        row = np.zeros(total)
        row[:n] = -y.mean(axis=0)
        program.add_ineq(row, -float(floor))
    _simplex(program, n, long_only, budget)
    return program


def _check_blocks(blocks) -> tuple[np.ndarray, ...]:
    if not blocks:
        raise ModelError("mixture models need at least one scenario block")
    out = []
    width = None
    for i, block in enumerate(blocks):
        y = np.asarray(block, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1:
            raise ModelError(f"mixture block {i} must be a non-empty 2-D array")
        if width is None:
            width = y.shape[1]
        elif y.shape[1] != width:
            raise ModelError(
                f"mixture block {i} has {y.shape[1]} columns, expected {width}"
            )
        out.append(y)
    return tuple(out)


def wcor_program(
    blocks, tau: float, gamma: float, lower: float = 0.0, upper: float = 1.0
) -> ConicProgram:
    """Worst-case gain-loss trade-off at a fixed mixing weight ``gamma``.

    Maximises ``theta`` such that for every scenario block ``i``

        ``gamma * (mu_i.w - tau) - (1 - gamma) * mean(u_i) >= theta``

    with ``u_i >= tau - Y_i w`` elementwise, ``u_i >= 0``, weights on the
    simplex within ``[lower, upper]``.  Variables: ``(w, theta, u_1..u_l)``.
    """
    blocks = _check_blocks(blocks)
    if not 0.0 <= gamma <= 1.0:
        raise ModelError(f"gamma must lie in [0, 1], got {gamma}")
    n = blocks[0].shape[1]
    sizes = [b.shape[0] for b in blocks]
    total = n + 1 + sum(sizes)
    t_idx = n
    program = ConicProgram(total, "max")
    cost = np.zeros(total)
    cost[t_idx] = 1.0
    program.set_objective(cost)
    offset = n + 1
    for y in blocks:
        s = y.shape[0]
        mu_i = y.mean(axis=0)
        row = np.zeros(total)
        row[t_idx] = 1.0
        row[:n] = -gamma * mu_i
        row[offset : offset + s] = (1.0 - gamma) / s
        program.add_ineq(row, -gamma * tau)
        for r in range(s):
            row = np.zeros(total)
            row[:n] = -y[r]
            row[offset + r] = -1.0
            program.add_ineq(row, -tau)
            program.set_bounds(offset + r, lower=0.0)
        offset += s
    ones = np.zeros(total)
    ones[:n] = 1.0
    program.add_eq(ones, 1.0)
    for j in range(n):
        program.set_bounds(j, lower=lower, upper=upper)
    return program


def wcvar_program(
    blocks,
    beta: float,
    floor: float | None = None,
    budget: float = 1.0,
    long_only: bool = True,
) -> ConicProgram:
    """Worst-case CVaR over a scenario mixture.

    Minimises ``theta`` bounding every block's CVaR estimate:
    ``alpha + mean(u_i) / (1 - beta) <= theta`` with
    ``u_i >= -Y_i w - alpha``.  ``floor`` requires each block's expected
    return ``mean(Y_i).w >= floor``.  Variables: ``(w, alpha, theta, u_1..)``.
    """
    blocks = _check_blocks(blocks)
    if not 0.0 < beta < 1.0:
        raise ModelError(f"beta must lie in (0, 1), got {beta}")
    n = blocks[0].shape[1]
    sizes = [b.shape[0] for b in blocks]
    total = n + 2 + sum(sizes)
    a_idx, t_idx = n, n + 1
    program = ConicProgram(total, "min")
    cost = np.zeros(total)
    cost[t_idx] = 1.0
    program.set_objective(cost)
    offset = n + 2
    for y in blocks:
        s = y.shape[0]
        row = np.zeros(total)
        row[a_idx] = 1.0
        row[t_idx] = -1.0
        row[offset : offset + s] = 1.0 / ((1.0 - beta) * s)
        program.add_ineq(row, 0.0)
        for r in range(s):
            row = np.zeros(total)
            row[:n] = -y[r]
            row[a_idx] = -1.0
            row[offset + r] = -1.0
            program.add_ineq(row, 0.0)
            program.set_bounds(offset + r, lower=0.0)
        if floor is not None:
            row = np.zeros(total)
            row[:n] = -y.mean(axis=0)
            program.add_ineq(row, -float(floor))
        offset += s
    _simplex(program, n, long_only, budget)
    return program


# -- drivers --------------------------------------------------------------------


def _decode(model_id: str, param: float, x: np.ndarray, n: int) -> Portfolio:
    return Portfolio(model_id=model_id, param=float(param), weights=x[:n].copy())


def _omega_or_inf(series: np.ndarray, tau: float) -> float:
    try:
        return metrics.omega_ratio(series, tau)
    except metrics.MetricError:
        return float("inf")


def _omega_or_nan(series: np.ndarray, tau: float) -> float:
    try:
        return metrics.omega_ratio(series, tau)
    except metrics.MetricError:
        return float("nan")


def maximize_worst_omega(
    blocks,
    tau: float,
    step: float = 0.05,
    lower: float = 0.0,
    upper: float = 1.0,
    tol: Tolerances | None = None,
) -> tuple[Portfolio, float]:
    """Sweep the mixing weight over ``0..1`` and keep the candidate whose
    worst per-block empirical gain-loss ratio is largest.

    Each grid value of gamma yields one trade-off solution; candidates are
    ranked by ``min_i Omega_i(w)`` computed on the blocks (a block with no
    sub-threshold scenario counts as unbounded favourable).  Returns the best
    portfolio (its ``param`` is the winning gamma) and its worst-block ratio.
    """
    blocks = _check_blocks(blocks)
    if not 0.0 < step <= 1.0:
        raise ModelError(f"step must lie in (0, 1], got {step}")
    n = blocks[0].shape[1]
    gammas = [round(k * step, 12) for k in range(int(math.floor(1.0 / step)) + 1)]
    if gammas[-1] < 1.0:
        gammas.append(1.0)

    best: tuple[float, Portfolio] | None = None
    failures: list[str] = []

    def try_gamma(gamma: float) -> Portfolio | None:
        nonlocal best
        program = wcor_program(blocks, tau, gamma, lower, upper)
        sol = solve(program, tol)
        if not sol.ok:
            failures.append(f"gamma={gamma:g}: {sol.status}")
            return None
        candidate = _decode("wcor", gamma, sol.x, n)
        score = min(_omega_or_inf(y @ candidate.weights, tau) for y in blocks)
        if best is None or score > best[0]:
            best = (score, candidate)
        return candidate

    for gamma in gammas:
        try_gamma(gamma)
    if best is None:
        raise ModelError("no mixing weight produced a solution: " + "; ".join(failures))

    # Polish the winner by iterating gamma toward the fixed point of the
    # gain-loss ratio: a candidate with worst-block ratio q is re-solved at
    # gamma = 1 / (1 + q), which for a single block converges to the exact
    # fractional optimum.  Only improvements are kept, so the sweep's
    # guarantee is preserved.
    gamma = best[1].param
    for _ in range(16):
        q = best[0] - 1.0
        if not np.isfinite(q):
            break
        gamma_next = 1.0 / (1.0 + q) if q > 0.0 else 1.0
        gamma_next = min(max(gamma_next, 0.0), 1.0)
        if abs(gamma_next - gamma) <= 1e-12:
            break
        gamma = gamma_next
        try_gamma(gamma)
    return best[1], best[0]


def _solve_point(program: ConicProgram, tol: Tolerances) -> Solution:
    return solve(program, tol)


def _lambda_grid(settings: ModelSettings, n_points: int) -> np.ndarray:
    if n_points == 1:
        return np.array([math.sqrt(settings.lambda_min * settings.lambda_max)])
    return np.geomspace(settings.lambda_min, settings.lambda_max, n_points)


def efficient_frontier(
    model_id: str,
    inputs: ModelInputs,
    n_points: int = 20,
    settings: ModelSettings | None = None,
) -> FrontierResult:
    """Solve a model across its trade-off grid.

    Grid by model: target mean (``mv_risk_min``), risk aversion (``mv``,
    ``mvbu``, ``mveu``), mean/variance balance (``rmu``), return floor
    (``cvar``, ``wcvar``).  ``or`` and ``wcor`` produce a single portfolio
    (their search is internal), regardless of ``n_points``.  Failed grid
    points leave a hole and a (param, reason) record; if every point fails,
    :class:`ModelError` is raised.
    """
    if model_id not in MODEL_IDS:
        raise ModelError(f"unknown model {model_id!r}; expected one of {MODEL_IDS}")
    if n_points < 1:
        raise ModelError(f"n_points must be >= 1, got {n_points}")
    settings = settings or ModelSettings()
    tol = settings.tolerances
    est = inputs.estimates
    n = inputs.n_assets
    points: list[Portfolio | None] = []
    skipped: list[tuple[float, str]] = []

    def attempt(param: float, program: ConicProgram, decoder=None) -> None:
        sol = _solve_point(program, tol)
        if sol.ok:
            w = sol.x[:n] if decoder is None else decoder(sol.x)
            points.append(Portfolio(model_id, float(param), w))
        else:
            points.append(None)
            skipped.append((float(param), f"{sol.status}: {sol.message}"))

    if model_id == "mv_risk_min":
        lo, hi = float(est.mu.min()), float(est.mu.max())
        for target in np.linspace(lo, hi, n_points):
            attempt(target, mv_risk_min_program(est.mu, est.sigma, target, settings.long_only))
    elif model_id == "mv":
        for lam in _lambda_grid(settings, n_points):
            attempt(lam, mv_program(est.mu, est.sigma, lam, settings.long_only))
    elif model_id == "mvbu":
        split = None if settings.long_only else (lambda x: x[:n] - x[n : 2 * n])
        for lam in _lambda_grid(settings, n_points):
            attempt(
                lam,
                mv_box_program(est.mu, est.sigma, est.box_delta, lam, settings.long_only),
                decoder=split,
            )
    elif model_id == "mveu":
        for lam in _lambda_grid(settings, n_points):
            attempt(
                lam,
                mv_ellipsoidal_program(
                    est.mu, est.sigma, est.sigma_mu, est.ellipsoid_delta, lam, settings.long_only
                ),
            )
    elif model_id == "rmu":
        anchors = rmu_anchors(est.mu, est.sigma, est.epsilon, settings.rmu_c, tol)
        if n_points == 1:
            etas = np.array([(settings.eta_min + settings.eta_max) / 2.0])
        else:
            etas = np.linspace(settings.eta_min, settings.eta_max, n_points)
        for eta1 in etas:
            attempt(
                eta1,
                rmu_program(
                    est.mu,
                    est.sigma,
                    est.epsilon,
                    eta1,
                    c_weight=settings.rmu_c,
                    anchors=anchors,
                    tol=tol,
                ),
            )
    elif model_id == "or":
        program = omega_program(inputs.scenarios, settings.tau)
        sol = _solve_point(program, tol)
        if sol.ok:
            # The linearisation is only faithful when the scaling variable
            # stays away from zero; when no portfolio clears tau the optimum
            # collapses (zeta -> 0) and x/zeta is an arbitrary direction, so
            # verify the decoded weights actually attain the LP value.
            zeta = float(sol.x[-1])
            w = sol.x[:n] / zeta if zeta > 1e-9 else None
            ratio = None if w is None else _omega_or_nan(inputs.scenarios @ w, settings.tau)
            if ratio is None or not np.isfinite(ratio) or abs(
                ratio - 1.0 - sol.objective
            ) > 1e-4 * max(1.0, abs(sol.objective)):
                points.append(None)
                skipped.append(
                    (settings.tau, "degenerate scaling: no portfolio clears tau")
                )
            else:
                points.append(Portfolio("or", settings.tau, w))
        else:
            points.append(None)
            skipped.append((settings.tau, f"{sol.status}: {sol.message}"))
    elif model_id == "cvar":
        ybar = inputs.scenarios.mean(axis=0)
        for floor in _floor_grid(float(ybar.min()), float(ybar.max()), n_points):
            attempt(
                floor,
                cvar_program(inputs.scenarios, settings.beta, floor, settings.long_only),
            )
    elif model_id == "wcor":
        blocks = _require_blocks(inputs)
        try:
            portfolio, _ = maximize_worst_omega(
                blocks, settings.tau, settings.gamma_step, tol=tol
            )
            points.append(portfolio)
        except ModelError as exc:
            points.append(None)
            skipped.append((float("nan"), str(exc)))
    elif model_id == "wcvar":
        blocks = _require_blocks(inputs)
        means = [b.mean(axis=0) for b in blocks]
        lo = min(float(m.min()) for m in means)
        hi = min(float(m.max()) for m in means)
        for floor in _floor_grid(lo, hi, n_points):
            attempt(floor, wcvar_program(blocks, settings.beta, floor, long_only=settings.long_only))

    if not any(p is not None for p in points):
        detail = "; ".join(reason for _, reason in skipped[:3])
        raise ModelError(f"every frontier point failed for {model_id}: {detail}")
    return FrontierResult(model_id=model_id, points=tuple(points), skipped=tuple(skipped))


def _floor_grid(lo: float, hi: float, n_points: int) -> np.ndarray:
    if n_points == 1:
        return np.array([lo])
    if hi <= lo:
        return np.full(n_points, lo)
    return np.linspace(lo, hi, n_points)


def _require_blocks(inputs: ModelInputs) -> tuple[np.ndarray, ...]:
    if inputs.blocks is None:
        raise ModelError("mixture model needs partitioned scenario blocks")
    return _check_blocks(inputs.blocks)
