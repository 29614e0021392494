"""Robust counterparts of linear programs with row-wise uncertain coefficients.

An :class:`UncertainLP` wraps a pure LP (:class:`~robustfolio.conic.ConicProgram`
with no quadratic and no cones) and tags inequality rows with one uncertainty
set each.  The transformations rewrite every tagged row into its tractable
counterpart, leaving untouched rows, equalities, bounds, and the objective
as they are.  Original variables keep indices ``0..n-1`` in the output;
auxiliary dual variables are appended after them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram

logger = logging.getLogger(__name__)

__all__ = [
    "CounterpartError",
    "EllipsoidalSet",
    "PolyhedralSet",
    "CardinalitySet",
    "NormBallSet",
    "UncertainLP",
    "dual_norm",
    "ellipsoidal_rc",
    "polyhedral_rc",
    "cardinality_rc",
    "norm_rc",
    "robust_counterpart",
]


class CounterpartError(ValueError):
    """Invalid uncertainty description or non-LP base program."""


@dataclass(frozen=True)
class EllipsoidalSet:
    """Row coefficients ``a = nominal + radius * spread' u`` with ``||u|| <= 1``.

    ``spread`` has one row per ellipsoid axis and one column per variable.
    """

    nominal: np.ndarray
    spread: np.ndarray
    radius: float


@dataclass(frozen=True)
class PolyhedralSet:
    """Row coefficients range over the polytope ``{a : lhs a <= rhs}``."""

    lhs: np.ndarray
    rhs: np.ndarray


@dataclass(frozen=True)
class CardinalitySet:
    """Interval deviations ``|a_j - nominal_j| <= deviation_j`` of which at
    most ``budget`` act at full strength simultaneously."""

    nominal: np.ndarray
    deviation: np.ndarray
    budget: float


@dataclass(frozen=True)
class NormBallSet:
    """Row coefficients ``a`` with ``||scaling (a - nominal)||_p <= radius``."""

    nominal: np.ndarray
    scaling: np.ndarray
    radius: float
    p: float


@dataclass(frozen=True)
class UncertainLP:
    """A pure LP plus per-inequality-row uncertainty sets (keyed by row index)."""

    base: ConicProgram
    rows: dict[int, object]

    def __post_init__(self) -> None:
        base = self.base
        if base.Q is not None and np.any(base.Q):
            raise CounterpartError("base program must be a pure LP (no quadratic)")
        if base.socs:
            raise CounterpartError("base program must be a pure LP (no cones)")
        m = len(base.ineq_a)
        for idx in self.rows:
            if not 0 <= idx < m:
                raise CounterpartError(
                    f"uncertain row index {idx} out of range (program has {m} inequality rows)"
                )


def dual_norm(v: np.ndarray, p: float) -> float:
    """Dual of the p-norm evaluated at ``v``: p=1 -> max-norm, p=2 -> 2-norm,
    p=inf -> 1-norm."""
    v = np.asarray(v, dtype=float)
    if p == 1:
        return float(np.abs(v).max(initial=0.0))
    if p == 2:
        return float(np.linalg.norm(v))
    if np.isinf(p):
        return float(np.abs(v).sum())
    raise CounterpartError(f"p must be 1, 2, or inf, got {p}")


def _pad(a: np.ndarray, total: int) -> np.ndarray:
    out = np.zeros(total)
    out[: a.shape[0]] = a
    return out


def _check_len(vec: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise CounterpartError(f"{what} must have length {n}, got {v.shape[0]}")
    return v


def robust_counterpart(u: UncertainLP) -> ConicProgram:
    """Rewrite every tagged inequality row into its deterministic counterpart.

    Handles mixed families in one pass.  Each ellipsoidal row becomes one
    second-order cone; each polyhedral row adds its dual multipliers; all
    cardinality rows share one magnitude-envelope block ``|x| <= rho`` plus a
    per-row budget multiplier and deviation duals; norm-ball rows become a
    cone (p = 2) or linear envelopes on ``(M')^{-1} x`` (p = 1, inf).
    """
    base = u.base
    n = base.n_vars

    card_rows = {i: s for i, s in u.rows.items() if isinstance(s, CardinalitySet)}
    extra = n_extra = 0
    offsets: dict[int, int] = {}
    rho_offset = None
    if card_rows:
        rho_offset = n
        n_extra += n
    for i in sorted(u.rows):
        s = u.rows[i]
        if isinstance(s, PolyhedralSet):
            offsets[i] = n + n_extra
            n_extra += np.atleast_2d(np.asarray(s.lhs, dtype=float)).shape[0]
        elif isinstance(s, CardinalitySet):
            offsets[i] = n + n_extra
            n_extra += 1 + n  # budget dual + per-coordinate deviation duals
        elif isinstance(s, NormBallSet):
            if s.p == 1:
                offsets[i] = n + n_extra
                n_extra += 1
            elif np.isinf(s.p):
                offsets[i] = n + n_extra
                n_extra += n
            elif s.p == 2:
                offsets[i] = n + n_extra
            else:
                raise CounterpartError(f"row {i}: p must be 1, 2, or inf, got {s.p}")
        elif isinstance(s, EllipsoidalSet):
            offsets[i] = n + n_extra
        else:
            raise CounterpartError(f"row {i}: unsupported uncertainty {type(s).__name__}")

    total = n + n_extra
    out = ConicProgram(total, base.sense)
    out.set_objective(_pad(base.c, total), constant=base.constant)
    out.lower[:n] = base.lower
    out.upper[:n] = base.upper
    for a, b in zip(base.eq_a, base.eq_b):
        out.add_eq(_pad(a, total), b)

    if card_rows:
        # Shared magnitude envelope x_j <= rho_j, -x_j <= rho_j, rho >= 0.
        for j in range(n):
            row = np.zeros(total)
            row[j] = 1.0
            row[rho_offset + j] = -1.0
            out.add_ineq(row, 0.0)
            row = np.zeros(total)
            row[j] = -1.0
            row[rho_offset + j] = -1.0
            out.add_ineq(row, 0.0)
            out.set_bounds(rho_offset + j, lower=0.0)

    for i, (a, b) in enumerate(zip(base.ineq_a, base.ineq_b)):
        spec = u.rows.get(i)
        if spec is None:
            out.add_ineq(_pad(a, total), b)
        elif isinstance(spec, EllipsoidalSet):
            _emit_ellipsoidal(out, spec, b, n, total)
        elif isinstance(spec, PolyhedralSet):
            _emit_polyhedral(out, spec, b, n, total, offsets[i])
        elif isinstance(spec, CardinalitySet):
            _emit_cardinality(out, spec, b, n, total, offsets[i], rho_offset)
        elif isinstance(spec, NormBallSet):
            _emit_norm(out, spec, b, n, total, offsets.get(i))
    return out


def _emit_ellipsoidal(out, spec: EllipsoidalSet, b: float, n: int, total: int) -> None:
    nominal = _check_len(spec.nominal, n, "ellipsoidal nominal")
    spread = np.atleast_2d(np.asarray(spec.spread, dtype=float))
    if spread.shape[1] != n:
        raise CounterpartError(
            f"ellipsoidal spread needs {n} columns, got {spread.shape[1]}"
        )
    if spec.radius < 0:
        raise CounterpartError(f"ellipsoidal radius must be >= 0, got {spec.radius}")
    # ||rho * spread x|| <= b - nominal.x
    a_mat = np.hstack([spec.radius * spread, np.zeros((spread.shape[0], total - n))])
    out.add_soc(a_mat, np.zeros(spread.shape[0]), -_pad(nominal, total), b)


def _emit_polyhedral(out, spec: PolyhedralSet, b: float, n: int, total: int, off: int) -> None:
    lhs = np.atleast_2d(np.asarray(spec.lhs, dtype=float))
    rhs = np.asarray(spec.rhs, dtype=float).reshape(-1)
    m = lhs.shape[0]
    if lhs.shape[1] != n:
        raise CounterpartError(f"polytope lhs needs {n} columns, got {lhs.shape[1]}")
    if rhs.shape[0] != m:
        raise CounterpartError(
            f"polytope rhs has length {rhs.shape[0]}, lhs has {m} rows"
        )
    # LP duality of max{a.x : lhs a <= rhs}: exists p >= 0 with
    # rhs.p <= b and lhs' p = x.
    row = np.zeros(total)
    row[off : off + m] = rhs
    out.add_ineq(row, b)
    for j in range(n):
        eq = np.zeros(total)
        eq[off : off + m] = lhs[:, j]
        eq[j] = -1.0
        out.add_eq(eq, 0.0)
    for k in range(m):
        out.set_bounds(off + k, lower=0.0)


def _emit_cardinality(
    out, spec: CardinalitySet, b: float, n: int, total: int, off: int, rho_offset: int
) -> None:
    nominal = _check_len(spec.nominal, n, "cardinality nominal")
    deviation = _check_len(spec.deviation, n, "cardinality deviation")
    if np.any(deviation < 0):
        raise CounterpartError("cardinality deviations must be >= 0")
    if spec.budget < 0:
        raise CounterpartError(f"cardinality budget must be >= 0, got {spec.budget}")
    ups, dual0 = off, off + 1  # budget dual, then n deviation duals
    # nominal.x + budget*ups + sum_j dual_j <= b
    row = _pad(nominal, total)
    row[ups] = spec.budget
    row[dual0 : dual0 + n] = 1.0
    out.add_ineq(row, b)
    # ups + dual_j >= deviation_j * rho_j
    for j in range(n):
        row = np.zeros(total)
        row[ups] = -1.0
        row[dual0 + j] = -1.0
        row[rho_offset + j] = deviation[j]
        out.add_ineq(row, 0.0)
    out.set_bounds(ups, lower=0.0)
    for j in range(n):
        out.set_bounds(dual0 + j, lower=0.0)


def _emit_norm(out, spec: NormBallSet, b: float, n: int, total: int, off: int | None) -> None:
    nominal = _check_len(spec.nominal, n, "norm-ball nominal")
    scaling = np.asarray(spec.scaling, dtype=float)
    if scaling.shape != (n, n):
        raise CounterpartError(f"scaling must be {n}x{n}, got {scaling.shape}")
    if spec.radius < 0:
        raise CounterpartError(f"norm radius must be >= 0, got {spec.radius}")
    try:
        w_mat = np.linalg.inv(scaling.T)
    except np.linalg.LinAlgError as exc:
        raise CounterpartError("norm-ball scaling matrix must be invertible") from exc
    # Counterpart: nominal.x + radius * dualnorm((M')^{-1} x) <= b.
    if spec.p == 2:
        a_mat = np.hstack([spec.radius * w_mat, np.zeros((n, total - n))])
        out.add_soc(a_mat, np.zeros(n), -_pad(nominal, total), b)
        return
    if spec.p == 1:
        # dual is the max norm: t >= |(Wx)_j| for all j.
        t = off
        for j in range(n):
            row = np.zeros(total)
            row[:n] = w_mat[j]
            row[t] = -1.0
            out.add_ineq(row, 0.0)
            row = np.zeros(total)
            row[:n] = -w_mat[j]
            row[t] = -1.0
            out.add_ineq(row, 0.0)
        head = _pad(nominal, total)
        head[t] = spec.radius
        out.add_ineq(head, b)
        out.set_bounds(t, lower=0.0)
        return
    # p = inf: dual is the 1-norm: s_j >= |(Wx)_j|, charge radius * sum s.
    for j in range(n):
        row = np.zeros(total)
        row[:n] = w_mat[j]
        row[off + j] = -1.0
        out.add_ineq(row, 0.0)
        row = np.zeros(total)
        row[:n] = -w_mat[j]
        row[off + j] = -1.0
        out.add_ineq(row, 0.0)
        out.set_bounds(off + j, lower=0.0)
    head = _pad(nominal, total)
    head[off : off + n] = spec.radius
    out.add_ineq(head, b)


def _only(u: UncertainLP, kind: type, name: str) -> UncertainLP:
    for i, s in u.rows.items():
        if not isinstance(s, kind):
            raise CounterpartError(
                f"{name} expects {kind.__name__} rows, row {i} has {type(s).__name__}"
            )
    return u


def ellipsoidal_rc(u: UncertainLP) -> ConicProgram:
    """Counterpart with every tagged row ellipsoidal: each becomes the cone
    ``||radius * spread x|| <= b - nominal.x``."""
    return robust_counterpart(_only(u, EllipsoidalSet, "ellipsoidal_rc"))


def polyhedral_rc(u: UncertainLP) -> ConicProgram:
    """Counterpart with every tagged row polyhedral, via LP duality of the
    inner maximisation over the coefficient polytope."""
    return robust_counterpart(_only(u, PolyhedralSet, "polyhedral_rc"))


def cardinality_rc(u: UncertainLP) -> ConicProgram:
    """Counterpart with every tagged row budget-of-deviations type: the
    protection term is the LP dual of picking the worst ``budget``-limited
    subset of interval deviations."""
    return robust_counterpart(_only(u, CardinalitySet, "cardinality_rc"))


def norm_rc(u: UncertainLP) -> ConicProgram:
    """Counterpart with every tagged row a scaled p-norm ball: the protection
    term is ``radius * dualnorm((scaling')^{-1} x)``."""
    return robust_counterpart(_only(u, NormBallSet, "norm_rc"))
