"""Semidefinite feasibility problems with an independent numeric recheck.

Constraints are stored as backend-agnostic builders: the same closure
produces a cvxpy expression when handed cvxpy variables and a plain numpy
matrix when handed a numeric assignment.  Strict inequalities are encoded
as non-strict ones with an epsilon margin, and any assignment reported
feasible by a solver is re-verified by eigenvalue computation before it is
accepted, so a solver can never silently convert numerical trouble into a
stability verdict.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

NEGATIVE = "negative_definite"
POSITIVE = "positive_definite"

SOLVER_CHAIN = ("CLARABEL", "SCS", "CVXOPT")


class _NumpyOps:
    """Matrix algebra on plain arrays."""

    @staticmethod
    def bmat(blocks):
        return np.block([[np.asarray(b, dtype=float) for b in row] for row in blocks])

    @staticmethod
    def kron(const, expr):
        return np.kron(np.asarray(const, dtype=float), expr)

    @staticmethod
    def zeros(r, c):
        return np.zeros((r, c))


class _CvxpyOps:
    """Matrix algebra on cvxpy expressions; constants stay numpy."""

    @staticmethod
    def bmat(blocks):
        import cvxpy as cp

        return cp.bmat(blocks)

    @staticmethod
    def kron(const, expr):
        # expand manually so affine expressions are accepted on either side
        import cvxpy as cp

        const = np.asarray(const, dtype=float)
        rows = []
        for i in range(const.shape[0]):
            rows.append([const[i, j] * expr for j in range(const.shape[1])])
        return cp.bmat(rows)

    @staticmethod
    def zeros(r, c):
        return np.zeros((r, c))


@dataclass(frozen=True)
class LmiConstraint:
    """One affine matrix inequality.

    ``build(assignment, ops)`` must return a symmetric ``dim x dim`` matrix
    expression affine in the variables.  ``sense`` is NEGATIVE for
    "definitely negative" (enforced as <= -eps I) or POSITIVE for
    "definitely positive" (>= +eps I).
    """

    name: str
    dim: int
    sense: str
    build: Callable


@dataclass
class SdpProblem:
    """Feasibility problem over symmetric (or square) matrix variables."""

    variables: dict[str, tuple[int, bool]] = field(default_factory=dict)
    constraints: list[LmiConstraint] = field(default_factory=list)

    def add_variable(self, name: str, dim: int, symmetric: bool = True):
        if name in self.variables:
            raise ValueError(f"duplicate variable {name}")
        self.variables[name] = (dim, symmetric)

    def add_constraint(self, name: str, dim: int, sense: str, build: Callable):
        if sense not in (NEGATIVE, POSITIVE):
            raise ValueError(f"unknown sense {sense}")
        self.constraints.append(LmiConstraint(name=name, dim=dim, sense=sense, build=build))

    def shape_signature(self) -> tuple:
        """Dimensions of variables and constraints, for scale-independence checks."""
        return (
            tuple(sorted((n, d, s) for n, (d, s) in self.variables.items())),
            tuple((c.name, c.dim, c.sense) for c in self.constraints),
        )


@dataclass(frozen=True)
class SdpOutcome:
    status: str  # "feasible" | "infeasible" | "unknown"
    assignment: dict[str, np.ndarray] | None = None
    reason: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"

    @property
    def infeasible(self) -> bool:
        return self.status == "infeasible"


def evaluate_constraint(c: LmiConstraint, assignment: dict[str, np.ndarray]) -> np.ndarray:
    """Numeric constraint matrix at an assignment, symmetrized after an asymmetry check."""
    g = c.build(assignment, _NumpyOps)
    g = np.atleast_2d(np.asarray(g, dtype=float))
    scale = max(1.0, np.abs(g).max())
    asym = np.abs(g - g.T).max()
    if asym > 1e-8 * scale:
        raise ValueError(f"constraint {c.name} is not symmetric (asymmetry {asym:.2e})")
    return 0.5 * (g + g.T)


def constraint_margins(
    problem: SdpProblem, assignment: dict[str, np.ndarray]
) -> dict[str, float]:
    """Definiteness margin of every constraint at an assignment.

    For NEGATIVE constraints the margin is -lambda_max, for POSITIVE it is
    lambda_min; either way a larger value means more strictly satisfied.
    """
    margins = {}
    for c in problem.constraints:
        eig = np.linalg.eigvalsh(evaluate_constraint(c, assignment))
        margins[c.name] = float(-eig[-1]) if c.sense == NEGATIVE else float(eig[0])
    return margins


def default_margin(ad: np.ndarray, ac: np.ndarray) -> float:
    """Scale-aware strictness margin for dynamics-derived LMIs."""
    s = 1.0 + np.linalg.norm(np.atleast_2d(ad), 2) + np.linalg.norm(np.atleast_2d(ac), 2)
    return 1e-7 * s * s


def _solve_once(problem: SdpProblem, eps: float, solver: str):
    import cvxpy as cp

    variables = {}
    for name, (dim, symmetric) in problem.variables.items():
        if dim == 1:
            # keep 2-d shape so builders can treat all variables uniformly
            variables[name] = cp.Variable((1, 1), name=name, symmetric=symmetric)
        else:
            variables[name] = cp.Variable((dim, dim), name=name, symmetric=symmetric)

    cons = []
    for c in problem.constraints:
        expr = c.build(variables, _CvxpyOps)
        eye = np.eye(c.dim)
        if c.sense == NEGATIVE:
            cons.append(expr << -eps * eye)
        else:
            cons.append(expr >> eps * eye)
    prob = cp.Problem(cp.Minimize(0), cons)

    kwargs = {}
    if solver == "CLARABEL":
        kwargs = {"tol_feas": 1e-9, "tol_gap_abs": 1e-9, "tol_gap_rel": 1e-9}
    elif solver == "SCS":
        kwargs = {"eps": 1e-9, "max_iters": 200_000}
    prob.solve(solver=solver, verbose=False, **kwargs)
    values = {
        name: np.atleast_2d(np.asarray(var.value, dtype=float))
        for name, var in variables.items()
        if var.value is not None
    }
    return prob.status, values


def solve_feasibility(
    problem: SdpProblem,
    eps: float,
    solvers: tuple[str, ...] = SOLVER_CHAIN,
) -> SdpOutcome:
    """Run the solver chain and post-verify any claimed solution.

    Feasible is returned only if the extracted assignment satisfies every
    constraint with margin at least eps/2 under the independent eigenvalue
    recheck.  A clean solver infeasibility status is trusted; everything
    else falls through to the next solver and finally to Unknown.
    """
    import cvxpy as cp

    last_reason = "no solver attempted"
    for solver in solvers:
        if solver not in cp.installed_solvers():
            continue
        start = time.perf_counter()
        try:
            status, values = _solve_once(problem, eps, solver)
        except Exception as exc:  # solver backends raise assorted types
            last_reason = f"{solver}: {exc}"
            log.debug("solver %s raised: %s", solver, exc)
            continue
        elapsed = time.perf_counter() - start
        log.debug("solver %s status=%s in %.3fs", solver, status, elapsed)

        if status == cp.INFEASIBLE:
            return SdpOutcome(
                status="infeasible",
                diagnostics={"solver": solver, "solver_status": status, "time": elapsed},
            )
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            if len(values) != len(problem.variables):
                last_reason = f"{solver}: missing variable values"
                continue
            assignment = {
                name: 0.5 * (v + v.T) if problem.variables[name][1] else v
                for name, v in values.items()
            }
            margins = constraint_margins(problem, assignment)
            worst = min(margins.values()) if margins else float("inf")
            if worst >= eps / 2.0:
                return SdpOutcome(
                    status="feasible",
                    assignment=assignment,
                    diagnostics={
                        "solver": solver,
                        "solver_status": status,
                        "time": elapsed,
                        "margins": margins,
                    },
                )
            last_reason = f"{solver}: recheck margin {worst:.3e} below {eps / 2.0:.3e}"
            continue
        last_reason = f"{solver}: status {status}"
    return SdpOutcome(status="unknown", reason=last_reason)
