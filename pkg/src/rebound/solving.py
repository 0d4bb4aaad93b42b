"""Orchestration of constraint solving: Horn layer first, then resources.

A SolveSession owns the SMT session, the validity checker, the qualifier
space, and (for incremental use) the carried coefficient solution and
example set of the resource CEGIS loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .checker import BoolC, ConstraintSet, ResC
from .horn import GREATEST, QualifierSpace, horn_clauses, solve_horn
from .lang import Refinement, TypingContext
from .logic import ValidityChecker
from .resources import (
    CegisStats, ResourceClause, ResourceUnknownOutcome, ResourceUnsat,
    counterexample, normalize, solve, zero_solution,
)
from .smtlib import SmtSession, SolverError


@dataclass
class Rejection:
    reason: str
    detail: object = None


@dataclass
class Solution:
    horn: dict[int, Refinement]
    coefficients: dict[str, int]
    examples: list[dict[str, int]]
    clauses: list[ResourceClause]


class SolveSession:
    """Shared solver state for a run (one goal or one synthesis search)."""

    def __init__(
        self,
        qualifiers: Optional[QualifierSpace] = None,
        solver_argv: Optional[list[str]] = None,
        horn_mode: str = GREATEST,
        cegis_rounds: int = 100,
        timeout: float = 10.0,
    ):
        self.session = SmtSession(solver_argv, timeout=timeout)
        self.checker = ValidityChecker(self.session)
        self.qualifiers = qualifiers or QualifierSpace()
        self.horn_mode = horn_mode
        self.cegis_rounds = cegis_rounds
        self.stats = CegisStats()

    def close(self) -> None:
        self.session.close()

    def solve_all(
        self,
        cs: ConstraintSet,
        carried: Optional[Solution] = None,
    ) -> Solution | Rejection:
        """Solve a full constraint set; carried solutions make it incremental."""
        clauses = horn_clauses(cs.bools)
        horn_sol = solve_horn(clauses, self.qualifiers, self.checker, self.horn_mode)
        if horn_sol is None:
            return Rejection("logical obligations are unsatisfiable")
        res_clauses = normalize(cs.resources, horn_sol)
        base = zero_solution(res_clauses)
        examples: list[dict[str, int]] = []
        if carried is not None:
            base.update(carried.coefficients)
            examples = list(carried.examples)
        try:
            coeffs, examples = solve(
                res_clauses,
                base,
                examples,
                self.session,
                max_rounds=self.cegis_rounds,
                stats=self.stats,
            )
        except ResourceUnsat as exc:
            return Rejection("potential obligations are unsatisfiable", exc.clause)
        except ResourceUnknownOutcome as exc:
            return Rejection(f"resource solving gave no verdict: {exc}")
        return Solution(horn_sol, coeffs, examples, res_clauses)

    def verify(self, sol: Solution) -> bool:
        """Re-run the counterexample query on a final solution."""
        return counterexample(sol.clauses, sol.coefficients, self.session) is None
