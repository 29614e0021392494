"""Conic-program container, QP-to-SOCP rewriting, and a cvxopt solver adapter.

A :class:`ConicProgram` holds a linear(-plus-convex-quadratic) objective,
linear equalities and inequalities, second-order-cone constraints, and
per-variable bounds.  :func:`solve` hands the assembled cone form to
cvxopt's interior-point solvers and maps the result back to one of four
statuses: ``optimal``, ``infeasible``, ``unbounded``, ``numerical_failure``.

Sign conventions
----------------
* ``sense="min"`` objective value is ``c.x + constant + x'Qx``;
* ``sense="max"`` objective value is ``c.x + constant - x'Qx``;

so the quadratic form (PSD ``Q``) always acts as a convex penalty and the
program stays convex in either sense.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np
from cvxopt import matrix, solvers

logger = logging.getLogger(__name__)

__all__ = [
    "ProgramError",
    "Tolerances",
    "SecondOrderCone",
    "ConicProgram",
    "Solution",
    "FeasibilityReport",
    "solve",
    "qp_to_socp",
    "check_feasibility",
    "format_program",
]

_SOLVER_LOCK = threading.Lock()

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"


class ProgramError(ValueError):
    """Structurally invalid program (dimension mismatch, indefinite Q, bad sense)."""


@dataclass(frozen=True)
class Tolerances:
    """Solver stopping criteria and feasibility tolerance."""

    feasibility: float = 1e-6
    gap: float = 1e-6
    max_iterations: int = 200


@dataclass(frozen=True)
class SecondOrderCone:
    """Constraint ``||A x + b||_2 <= g.x + h``."""

    A: np.ndarray
    b: np.ndarray
    g: np.ndarray
    h: float


class ConicProgram:
    """Mutable builder for a convex program over ``n_vars`` variables."""

    def __init__(self, n_vars: int, sense: str = "min"):
        if n_vars < 1:
            raise ProgramError(f"n_vars must be >= 1, got {n_vars}")
        if sense not in ("min", "max"):
            raise ProgramError(f"sense must be 'min' or 'max', got {sense!r}")
        self.n_vars = int(n_vars)
        self.sense = sense
        self.c = np.zeros(n_vars)
        self.constant = 0.0
        self.Q: np.ndarray | None = None
        self.eq_a: list[np.ndarray] = []
        self.eq_b: list[float] = []
        self.ineq_a: list[np.ndarray] = []
        self.ineq_b: list[float] = []
        self.socs: list[SecondOrderCone] = []
        self.lower = np.full(n_vars, -np.inf)
        self.upper = np.full(n_vars, np.inf)

    # -- construction -----------------------------------------------------

    def _vec(self, a, name: str) -> np.ndarray:
        v = np.asarray(a, dtype=float).reshape(-1)
        if v.shape != (self.n_vars,):
            raise ProgramError(f"{name} must have length {self.n_vars}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ProgramError(f"{name} contains non-finite entries")
        return v

    def set_objective(self, c, constant: float = 0.0, quadratic=None) -> "ConicProgram":
        self.c = self._vec(c, "objective c")
        self.constant = float(constant)
        if quadratic is None:
            self.Q = None
        else:
            q = np.asarray(quadratic, dtype=float)
            if q.shape != (self.n_vars, self.n_vars):
                raise ProgramError(
                    f"Q must be {self.n_vars}x{self.n_vars}, got {q.shape}"
                )
            self.Q = (q + q.T) / 2.0
        return self

    def add_eq(self, a, b: float) -> "ConicProgram":
        self.eq_a.append(self._vec(a, "equality row"))
        self.eq_b.append(float(b))
        return self

    def add_ineq(self, a, b: float) -> "ConicProgram":
        self.ineq_a.append(self._vec(a, "inequality row"))
        self.ineq_b.append(float(b))
        return self

    def add_soc(self, A, b, g, h: float) -> "ConicProgram":
        a_mat = np.atleast_2d(np.asarray(A, dtype=float))
        if a_mat.shape[1] != self.n_vars:
            raise ProgramError(
                f"cone matrix needs {self.n_vars} columns, got {a_mat.shape[1]}"
            )
        b_vec = np.asarray(b, dtype=float).reshape(-1)
        if b_vec.shape[0] != a_mat.shape[0]:
            raise ProgramError(
                f"cone offset has length {b_vec.shape[0]}, matrix has {a_mat.shape[0]} rows"
            )
        self.socs.append(
            SecondOrderCone(A=a_mat, b=b_vec, g=self._vec(g, "cone g"), h=float(h))
        )
        return self

    def set_bounds(self, index: int, lower: float = -np.inf, upper: float = np.inf) -> "ConicProgram":
        if not 0 <= index < self.n_vars:
            raise ProgramError(f"variable index {index} out of range")
        if lower > upper:
            raise ProgramError(f"lower bound {lower} exceeds upper bound {upper}")
        self.lower[index] = float(lower)
        self.upper[index] = float(upper)
        return self

    def set_box(self, lower, upper) -> "ConicProgram":
        lo = np.asarray(lower, dtype=float).reshape(-1)
        up = np.asarray(upper, dtype=float).reshape(-1)
        if lo.shape != (self.n_vars,) or up.shape != (self.n_vars,):
            raise ProgramError("bound vectors must match n_vars")
        if np.any(lo > up):
            raise ProgramError("lower bound exceeds upper bound")
        self.lower = lo.copy()
        self.upper = up.copy()
        return self

    # -- inspection ---------------------------------------------------------

    def validate(self) -> None:
        """Check structural invariants; raises :class:`ProgramError`."""
        if self.Q is not None:
            scale = max(1.0, float(np.abs(self.Q).max(initial=0.0)))
            w = np.linalg.eigvalsh(self.Q)
            if w.min(initial=0.0) < -1e-8 * scale:
                raise ProgramError(
                    f"Q must be PSD within 1e-8 (min eigenvalue {w.min():.3e})"
                )
        if np.any(self.lower > self.upper):
            raise ProgramError("lower bound exceeds upper bound")

    def objective_value(self, x: np.ndarray) -> float:
        """Objective in the program's own sense evaluated at ``x``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        value = float(self.c @ x) + self.constant
        if self.Q is not None:
            quad = float(x @ self.Q @ x)
            value += quad if self.sense == "min" else -quad
        return value

    def copy(self) -> "ConicProgram":
        dup = ConicProgram(self.n_vars, self.sense)
        dup.c = self.c.copy()
        dup.constant = self.constant
        dup.Q = None if self.Q is None else self.Q.copy()
        dup.eq_a = [a.copy() for a in self.eq_a]
        dup.eq_b = list(self.eq_b)
        dup.ineq_a = [a.copy() for a in self.ineq_a]
        dup.ineq_b = list(self.ineq_b)
        dup.socs = [
            SecondOrderCone(s.A.copy(), s.b.copy(), s.g.copy(), s.h) for s in self.socs
        ]
        dup.lower = self.lower.copy()
        dup.upper = self.upper.copy()
        return dup


@dataclass(frozen=True)
class Solution:
    """Solver outcome.  ``objective`` is evaluated at ``x`` in the program's
    sense and is NaN unless the status is ``optimal``."""

    status: str
    x: np.ndarray | None
    objective: float
    message: str = ""
    iterations: int | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class FeasibilityReport:
    """Per-class worst violations of a candidate point."""

    eq: float
    ineq: float
    soc: float
    bounds: float
    violations: tuple[tuple[str, int, float], ...]

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def max_violation(self) -> float:
        return max(self.eq, self.ineq, self.soc, self.bounds)


# -- assembly ---------------------------------------------------------------


def _bound_rows(program: ConicProgram) -> tuple[list[np.ndarray], list[float]]:
    rows, rhs = [], []
    for i in range(program.n_vars):
        if np.isfinite(program.upper[i]):
            row = np.zeros(program.n_vars)
            row[i] = 1.0
            rows.append(row)
            rhs.append(float(program.upper[i]))
        if np.isfinite(program.lower[i]):
            row = np.zeros(program.n_vars)
            row[i] = -1.0
            rows.append(row)
            rhs.append(float(-program.lower[i]))
    return rows, rhs


def _cone_form(program: ConicProgram):
    """Stack linear rows and SOC blocks into cvxopt's (G, h, dims)."""
    n = program.n_vars
    lin_rows, lin_rhs = [], []
    for a, b in zip(program.ineq_a, program.ineq_b):
        lin_rows.append(a)
        lin_rhs.append(b)
    b_rows, b_rhs = _bound_rows(program)
    lin_rows.extend(b_rows)
    lin_rhs.extend(b_rhs)

    blocks = [np.array(lin_rows).reshape(len(lin_rows), n)] if lin_rows else []
    rhs = [np.array(lin_rhs)] if lin_rhs else []
    q_sizes = []
    for cone in program.socs:
        top = -cone.g.reshape(1, n)
        block = np.vstack([top, -cone.A])
        blocks.append(block)
        rhs.append(np.concatenate([[cone.h], cone.b]))
        q_sizes.append(cone.A.shape[0] + 1)
    if blocks:
        g_mat = np.vstack(blocks)
        h_vec = np.concatenate(rhs)
    else:
        g_mat = np.zeros((0, n))
        h_vec = np.zeros(0)
    dims = {"l": len(lin_rhs), "q": q_sizes, "s": []}
    return g_mat, h_vec, dims


def _eq_form(program: ConicProgram):
    if not program.eq_a:
        return None, None
    return np.array(program.eq_a), np.array(program.eq_b)


def _run_cvxopt(kind: str, tol: Tolerances, *args):
    """Call a cvxopt cone solver with our options, serialised because the
    options dict is module-global."""
    opts = {
        "show_progress": False,
        "maxiters": tol.max_iterations,
        "abstol": tol.gap,
        "reltol": tol.gap,
        "feastol": tol.feasibility,
    }
    with _SOLVER_LOCK:
        saved = dict(solvers.options)
        solvers.options.update(opts)
        try:
            if kind == "lp":
                return solvers.conelp(*args)
            return solvers.coneqp(*args)
        finally:
            solvers.options.clear()
            solvers.options.update(saved)


def _psd_factor(q: np.ndarray) -> np.ndarray:
    """Matrix F with F'F = q for PSD q (rows spanning the range of q)."""
    w, v = np.linalg.eigh((q + q.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)).T


def qp_to_socp(program: ConicProgram) -> ConicProgram:
    """Rewrite a quadratic objective as an epigraph second-order cone.

    Adds one variable ``s`` with ``x'Qx <= s`` encoded as
    ``||(2Fx, 1 - s)|| <= 1 + s`` where ``F'F = Q``, and charges ``s`` in the
    objective (+s when minimising, -s when maximising).  A program without a
    quadratic term (or with Q = 0) is returned as a copy with no extra
    variable.  Optimal objective values agree with the original program.
    """
    program.validate()
    if program.Q is None or not np.any(program.Q):
        dup = program.copy()
        dup.Q = None
        return dup
    n = program.n_vars
    out = ConicProgram(n + 1, program.sense)
    c = np.concatenate([program.c, [1.0 if program.sense == "min" else -1.0]])
    out.set_objective(c, constant=program.constant)
    for a, b in zip(program.eq_a, program.eq_b):
        out.add_eq(np.concatenate([a, [0.0]]), b)
    for a, b in zip(program.ineq_a, program.ineq_b):
        out.add_ineq(np.concatenate([a, [0.0]]), b)
    for cone in program.socs:
        out.add_soc(
            np.hstack([cone.A, np.zeros((cone.A.shape[0], 1))]),
            cone.b,
            np.concatenate([cone.g, [0.0]]),
            cone.h,
        )
    f = _psd_factor(program.Q)
    k = f.shape[0]
    a_top = np.hstack([2.0 * f, np.zeros((k, 1))])
    a_bot = np.zeros((1, n + 1))
    a_bot[0, n] = -1.0
    g = np.zeros(n + 1)
    g[n] = 1.0
    out.add_soc(np.vstack([a_top, a_bot]), np.concatenate([np.zeros(k), [1.0]]), g, 1.0)
    out.lower[:n] = program.lower
    out.upper[:n] = program.upper
    return out


def check_feasibility(
    program: ConicProgram, x: np.ndarray, tol: float = 1e-6
) -> FeasibilityReport:
    """Worst violation per constraint class at ``x``; empty list iff feasible."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (program.n_vars,):
        raise ProgramError(f"x must have length {program.n_vars}, got {x.shape}")
    violations: list[tuple[str, int, float]] = []

    eq_worst = 0.0
    for i, (a, b) in enumerate(zip(program.eq_a, program.eq_b)):
        v = abs(float(a @ x) - b)
        eq_worst = max(eq_worst, v)
        if v > tol:
            violations.append(("eq", i, v))
    ineq_worst = 0.0
    for i, (a, b) in enumerate(zip(program.ineq_a, program.ineq_b)):
        v = max(0.0, float(a @ x) - b)
        ineq_worst = max(ineq_worst, v)
        if v > tol:
            violations.append(("ineq", i, v))
    soc_worst = 0.0
    for i, cone in enumerate(program.socs):
        v = max(
            0.0,
            float(np.linalg.norm(cone.A @ x + cone.b) - (cone.g @ x + cone.h)),
        )
        soc_worst = max(soc_worst, v)
        if v > tol:
            violations.append(("soc", i, v))
    bound_worst = 0.0
    for i in range(program.n_vars):
        v = max(0.0, program.lower[i] - x[i], x[i] - program.upper[i])
        bound_worst = max(bound_worst, v)
        if v > tol:
            violations.append(("bounds", i, v))
    return FeasibilityReport(
        eq=eq_worst,
        ineq=ineq_worst,
        soc=soc_worst,
        bounds=bound_worst,
        violations=tuple(violations),
    )


# -- solving ------------------------------------------------------------------


def _phase_one(program: ConicProgram, tol: Tolerances) -> str:
    """Classify a failed solve by minimising a shared slack on every constraint.

    Returns ``infeasible`` when even the relaxed program needs positive slack,
    else ``numerical_failure`` (the program is feasible; the main solve broke
    down for numerical reasons).
    """
    n = program.n_vars
    aux = ConicProgram(n + 1, "min")
    cost = np.zeros(n + 1)
    cost[n] = 1.0
    aux.set_objective(cost)
    for a, b in zip(program.ineq_a, program.ineq_b):
        aux.add_ineq(np.concatenate([a, [-1.0]]), b)
    for a, b in zip(program.eq_a, program.eq_b):
        aux.add_ineq(np.concatenate([a, [-1.0]]), b)
        aux.add_ineq(np.concatenate([-a, [-1.0]]), -b)
    for cone in program.socs:
        aux.add_soc(
            np.hstack([cone.A, np.zeros((cone.A.shape[0], 1))]),
            cone.b,
            np.concatenate([cone.g, [1.0]]),
            cone.h,
        )
    for i in range(n):
        if np.isfinite(program.lower[i]):
            row = np.zeros(n + 1)
            row[i] = -1.0
            row[n] = -1.0
            aux.add_ineq(row, -program.lower[i])
        if np.isfinite(program.upper[i]):
            row = np.zeros(n + 1)
            row[i] = 1.0
            row[n] = -1.0
            aux.add_ineq(row, program.upper[i])
    aux.set_bounds(n, lower=0.0)
    result = _solve_linear(aux, tol, allow_phase_one=False)
    if result.status == OPTIMAL and result.x is not None:
        slack = float(result.x[n])
        if slack > max(tol.feasibility * 10.0, 1e-8):
            return INFEASIBLE
        return NUMERICAL_FAILURE
    return NUMERICAL_FAILURE


def _unconstrained(program: ConicProgram, q_int: np.ndarray | None, c_int: np.ndarray) -> Solution:
    """Closed-form handling when the program has no constraints at all."""
    n = program.n_vars
    if q_int is None or not np.any(q_int):
        if np.allclose(c_int, 0.0):
            x = np.zeros(n)
            return Solution(OPTIMAL, x, program.objective_value(x), "unconstrained")
        return Solution(UNBOUNDED, None, float("nan"), "unconstrained linear objective")
    x, _, _, _ = np.linalg.lstsq(2.0 * q_int, -c_int, rcond=None)
    if np.allclose(2.0 * q_int @ x + c_int, 0.0, atol=1e-9):
        return Solution(OPTIMAL, x, program.objective_value(x), "unconstrained quadratic")
    return Solution(UNBOUNDED, None, float("nan"), "quadratic unbounded direction")


def _solve_linear(program: ConicProgram, tol: Tolerances, allow_phase_one: bool = True) -> Solution:
    """conelp path: linear objective over the cone constraints."""
    c_int = program.c if program.sense == "min" else -program.c
    g_mat, h_vec, dims = _cone_form(program)
    a_mat, b_vec = _eq_form(program)
    if g_mat.shape[0] == 0 and a_mat is None:
        return _unconstrained(program, None, c_int)
    args = [matrix(c_int), matrix(g_mat), matrix(h_vec), dims]
    if a_mat is not None:
        args += [matrix(a_mat), matrix(b_vec)]
    try:
        sol = _run_cvxopt("lp", tol, *args)
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        logger.debug("conelp raised %s", exc)
        if allow_phase_one:
            status = _phase_one(program, tol)
            return Solution(status, None, float("nan"), f"conelp error: {exc}")
        return Solution(NUMERICAL_FAILURE, None, float("nan"), f"conelp error: {exc}")
    return _interpret(program, sol, tol, allow_phase_one)


def _interpret(program: ConicProgram, sol: dict, tol: Tolerances, allow_phase_one: bool) -> Solution:
    status = sol.get("status", "unknown")
    iters = sol.get("iterations")
    if status == "optimal":
        x = np.asarray(sol["x"]).reshape(-1)[: program.n_vars]
        return Solution(OPTIMAL, x, program.objective_value(x), "optimal", iters)
    if status == "primal infeasible":
        return Solution(INFEASIBLE, None, float("nan"), "certified primal infeasible", iters)
    if status == "dual infeasible":
        return Solution(UNBOUNDED, None, float("nan"), "certified dual infeasible", iters)
    # 'unknown': accept a returned iterate when it is numerically sound,
    # otherwise fall back to classification.
    if sol.get("x") is not None:
        x = np.asarray(sol["x"]).reshape(-1)[: program.n_vars]
        report = check_feasibility(program, x, max(tol.feasibility * 10.0, 1e-8))
        gap = sol.get("relative gap")
        if report.feasible and gap is not None and gap < max(tol.gap * 100.0, 1e-5):
            return Solution(OPTIMAL, x, program.objective_value(x), "near-optimal iterate", iters)
    if allow_phase_one:
        status = _phase_one(program, tol)
        return Solution(status, None, float("nan"), "solver stalled", iters)
    return Solution(NUMERICAL_FAILURE, None, float("nan"), "solver stalled", iters)


def solve(program: ConicProgram, tol: Tolerances | None = None) -> Solution:
    """Solve the program with cvxopt's interior-point cone solvers.

    Quadratic objectives go to ``coneqp``; on failure they are retried as an
    epigraph SOCP through ``conelp``.  Solves that end without a certificate
    are classified with a phase-1 slack-minimisation LP so that ``infeasible``
    is only reported when the constraints really are inconsistent.
    """
    tol = tol or Tolerances()
    program.validate()
    if program.Q is None or not np.any(program.Q):
        return _solve_linear(program, tol)

    c_int = program.c if program.sense == "min" else -program.c
    g_mat, h_vec, dims = _cone_form(program)
    a_mat, b_vec = _eq_form(program)
    if g_mat.shape[0] == 0 and a_mat is None:
        return _unconstrained(program, program.Q, c_int)
    args = [matrix(2.0 * program.Q), matrix(c_int), matrix(g_mat), matrix(h_vec), dims]
    if a_mat is not None:
        args += [matrix(a_mat), matrix(b_vec)]
    try:
        sol = _run_cvxopt("qp", tol, *args)
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        logger.debug("coneqp raised %s; retrying as SOCP", exc)
        return _retry_as_socp(program, tol, f"coneqp error: {exc}")
    status = sol.get("status", "unknown")
    if status == "optimal":
        x = np.asarray(sol["x"]).reshape(-1)[: program.n_vars]
        return Solution(OPTIMAL, x, program.objective_value(x), "optimal", sol.get("iterations"))
    return _retry_as_socp(program, tol, f"coneqp status {status!r}")


def _retry_as_socp(program: ConicProgram, tol: Tolerances, reason: str) -> Solution:
    epi = qp_to_socp(program)
    result = _solve_linear(epi, tol)
    if result.status == OPTIMAL and result.x is not None:
        x = result.x[: program.n_vars]
        return Solution(
            OPTIMAL, x, program.objective_value(x), f"{reason}; solved as SOCP", result.iterations
        )
    return Solution(result.status, None, float("nan"), f"{reason}; {result.message}", result.iterations)


def format_program(program: ConicProgram) -> str:
    """Human-readable dump for debugging (not a stable interchange format)."""
    lines = [f"{program.sense} {_affine_str(program.c, program.constant)}"]
    if program.Q is not None and np.any(program.Q):
        sign = "+" if program.sense == "min" else "-"
        lines[0] += f" {sign} x'Qx"
    lines.append("subject to")
    for a, b in zip(program.eq_a, program.eq_b):
        lines.append(f"  {_affine_str(a, 0.0)} == {b:g}")
    for a, b in zip(program.ineq_a, program.ineq_b):
        lines.append(f"  {_affine_str(a, 0.0)} <= {b:g}")
    for cone in program.socs:
        lines.append(
            f"  ||A x + b||_2 <= {_affine_str(cone.g, cone.h)}   (A {cone.A.shape[0]}x{cone.A.shape[1]})"
        )
    for i in range(program.n_vars):
        lo, up = program.lower[i], program.upper[i]
        if np.isfinite(lo) or np.isfinite(up):
            lines.append(f"  {lo:g} <= x{i} <= {up:g}")
    return "\n".join(lines)


def _affine_str(coeffs: np.ndarray, constant: float) -> str:
    terms = [f"{v:+g}*x{i}" for i, v in enumerate(coeffs) if v != 0.0]
    if constant:
        terms.append(f"{constant:+g}")
    return " ".join(terms) if terms else "0"
