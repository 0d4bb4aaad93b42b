"""Horn constraint solving by fixpoint iteration over a finite qualifier space.

Boolean unknowns are assigned conjunctions of atomic qualifiers.  The
greatest mode returns a weakest valid assignment (iterative weakening with a
maximality pass, exhaustive on small spaces); the least mode runs the
standard strengthen-from-bottom predicate-abstraction iteration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .lang import (
    BOOL_SORT, BOT, NU, TOP, ZERO, Add, And, Eq, Le, Not, Num, Refinement,
    RVar, TypingContext, Unknown, conj, r_ge, r_implies, r_lt, ref_free_vars,
    ref_unknowns, subst_ref, subst_unknowns,
)
from .logic import (
    ValidityChecker, ValidityQuery, context_assumptions, reflect, scalar_vars,
    sort_of, SortError, is_numeric_sort,
)


@dataclass(frozen=True)
class HornClause:
    ctx: TypingContext
    body: tuple[Refinement, ...]
    head: Refinement

    def unknowns(self) -> set[Unknown]:
        out: set[Unknown] = set()
        for part in self.body + (self.head,):
            out |= ref_unknowns(part)
        return out


GREATEST = "greatest"
LEAST = "least"


def flatten_and(r: Refinement) -> list[Refinement]:
    if isinstance(r, And):
        return flatten_and(r.left) + flatten_and(r.right)
    if r == TOP:
        return []
    return [r]


def horn_clauses(bool_constraints) -> list[HornClause]:
    """Normalize boolean validity constraints into Horn clauses."""
    clauses: list[HornClause] = []
    for bc in bool_constraints:
        assumptions = context_assumptions(bc.ctx)
        if assumptions is None:
            continue  # restricted denotation: trivially valid
        body = [a for part in assumptions for a in flatten_and(part)]
        goal = bc.goal
        # r_implies(a, b) is encoded as not(and(a, not b)).
        if (
            isinstance(goal, Not)
            and isinstance(goal.arg, And)
            and isinstance(goal.arg.right, Not)
        ):
            body = body + flatten_and(goal.arg.left)
            heads = flatten_and(goal.arg.right.arg)
        else:
            heads = flatten_and(goal)
        if not heads:
            continue
        for head in heads:
            clauses.append(HornClause(bc.ctx, tuple(body), head))
    return clauses


class QualifierSpace:
    """Candidate atomic predicates for each unknown, built lazily from
    module-level seeds plus comparison templates over scope variables."""

    def __init__(self, seeds: Optional[list[Refinement]] = None):
        self.seeds = seeds or []
        self._cache: dict[tuple, list[Refinement]] = {}

    def for_unknown(self, u: Unknown) -> list[Refinement]:
        key = (u.uid,)
        if key in self._cache:
            return self._cache[key]
        ctx = u.ctx
        out: list[Refinement] = []
        seen: set[Refinement] = set()

        def add(q: Refinement) -> None:
            if q in seen:
                return
            try:
                s = sort_of(ctx, q)
            except Exception:
                return
            if s == BOOL_SORT:
                seen.add(q)
                out.append(q)

        for seed in self.seeds:
            add(seed)
        numeric = [
            name
            for name, s in scalar_vars(ctx).items()
            if is_numeric_sort(s) and name != NU
        ]
        nu = RVar(NU)
        for x in numeric:
            add(Eq(nu, RVar(x)))
            add(Le(nu, RVar(x)))
            add(r_lt(nu, RVar(x)))
            add(r_ge(nu, RVar(x)))
            add(r_lt(RVar(x), nu))
        for k in (0, 1):
            add(Eq(nu, Num(k)))
            add(Le(nu, Num(k)))
            add(r_ge(nu, Num(k)))
        self._cache[key] = out
        return out


def harvest_qualifiers(module) -> QualifierSpace:
    """Extract atomic predicates from every refinement in a module."""
    from .lang import Annot, Arrow, Forall, ListB, Subset

    seeds: list[Refinement] = []
    seen: set[Refinement] = set()

    def add_atoms(psi: Refinement) -> None:
        for atom in _atomic_predicates(psi):
            if atom not in seen and atom != TOP:
                seen.add(atom)
                seeds.append(atom)

    def walk(t) -> None:
        if isinstance(t, Forall):
            walk(t.body)
            return
        if isinstance(t, Annot):
            walk(t.inner)
            return
        if isinstance(t, Subset):
            add_atoms(t.refinement)
            walk(t.base)
            return
        if isinstance(t, Arrow):
            walk(t.arg)
            walk(t.result)
            return
        if isinstance(t, ListB):
            walk(t.elem)
            return

    for decl in module.decls():
        walk(decl.schema)
    return QualifierSpace(seeds)


def _atomic_predicates(psi: Refinement) -> list[Refinement]:
    if isinstance(psi, And):
        return _atomic_predicates(psi.left) + _atomic_predicates(psi.right)
    if isinstance(psi, Not):
        inner = _atomic_predicates(psi.arg)
        if len(inner) == 1:
            return [Not(inner[0])] if psi.arg == inner[0] else inner
        return inner
    if isinstance(psi, (Eq, Le)):
        return [psi]
    return []


class HornUnsat(Exception):
    def __init__(self, clause: HornClause):
        self.clause = clause
        super().__init__(f"no qualifier assignment validates {clause}")


Assignment = dict[int, Optional[tuple[Refinement, ...]]]


def _assignment_formula(quals: Optional[tuple[Refinement, ...]]) -> Refinement:
    if quals is None:
        return BOT
    return conj(list(quals))


def assignment_refinements(assignment: Assignment) -> dict[int, Refinement]:
    return {uid: _assignment_formula(q) for uid, q in assignment.items()}


def _clause_valid(
    clause: HornClause, assignment: Assignment, checker: ValidityChecker
) -> bool:
    sol = assignment_refinements(assignment)
    body = [subst_unknowns(b, sol) for b in clause.body]
    head = subst_unknowns(clause.head, sol)
    goal = r_implies(conj(body), head)
    # Strip unknowns that are still unsolved (treated as top).
    remaining = ref_unknowns(goal)
    if remaining:
        goal = subst_unknowns(goal, {u.uid: TOP for u in remaining})
    return checker.valid(clause.ctx, goal)


def solve_horn(
    clauses: list[HornClause],
    space: QualifierSpace,
    checker: ValidityChecker,
    mode: str = GREATEST,
) -> Optional[dict[int, Refinement]]:
    """Solve for every boolean unknown; None when no assignment validates."""
    concrete = [c for c in clauses if not c.unknowns()]
    symbolic = [c for c in clauses if c.unknowns()]
    for clause in concrete:
        if not _clause_valid(clause, {}, checker):
            return None
    unknowns: dict[int, Unknown] = {}
    for c in symbolic:
        for u in c.unknowns():
            unknowns.setdefault(u.uid, Unknown(u.uid, u.ctx, u.sort))
    if mode == GREATEST:
        assignment = _solve_greatest(symbolic, space, checker, unknowns)
    elif mode == LEAST:
        assignment = _solve_least(symbolic, space, checker, unknowns)
    else:
        raise ValueError(f"unknown horn mode {mode}")
    if assignment is None:
        return None
    return assignment_refinements(assignment)


def _solve_greatest(clauses, space, checker, unknowns) -> Optional[Assignment]:
    assignment: Assignment = {
        uid: tuple(space.for_unknown(u)) for uid, u in unknowns.items()
    }
    # Weakening loop: drop head qualifiers not implied by the clause body.
    changed = True
    while changed:
        changed = False
        for clause in clauses:
            if not isinstance(clause.head, Unknown):
                continue
            if _clause_valid(clause, assignment, checker):
                continue
            uid = clause.head.uid
            sol = assignment_refinements(assignment)
            body = conj([subst_unknowns(b, sol) for b in clause.body])
            kept = []
            for q in assignment[uid] or ():
                target = q
                for group in clause.head.pending:
                    target = subst_ref(target, dict(group))
                if checker.valid(clause.ctx, r_implies(body, target)):
                    kept.append(q)
            if tuple(kept) != assignment[uid]:
                assignment[uid] = tuple(kept)
                changed = True
    for clause in clauses:
        if not _clause_valid(clause, assignment, checker):
            if isinstance(clause.head, Unknown):
                return None
            return None
    # Maximality: remove qualifiers while everything stays valid.
    if _space_size(assignment) <= 64 and len(clauses) <= 16:
        exact = _exhaustive_weakest(clauses, assignment, checker)
        if exact is not None:
            return exact
    for uid in sorted(assignment):
        quals = list(assignment[uid] or ())
        order = _strength_order(quals, unknowns[uid], checker)
        for q in order:
            candidate = tuple(x for x in assignment[uid] or () if x != q)
            trial = dict(assignment)
            trial[uid] = candidate
            if all(_clause_valid(c, trial, checker) for c in clauses):
                assignment[uid] = candidate
    return assignment


def _space_size(assignment: Assignment) -> int:
    size = 1
    for quals in assignment.values():
        size *= 2 ** len(quals or ())
        if size > 1 << 20:
            break
    return size


def _strength_order(quals, unknown, checker) -> list[Refinement]:
    """Sort stronger qualifiers first so weaker ones survive removal."""
    nu_ctx = unknown.ctx

    def strength(q: Refinement) -> int:
        return sum(
            1
            for other in quals
            if other != q and checker.valid(nu_ctx, r_implies(q, other))
        )

    return sorted(quals, key=strength, reverse=True)


def _exhaustive_weakest(clauses, assignment, checker) -> Optional[Assignment]:
    """Enumerate all subset assignments; return a pointwise-weakest valid one."""
    uids = sorted(assignment)
    spaces = [list(assignment[uid] or ()) for uid in uids]
    valid: list[Assignment] = []
    for choice in itertools.product(
        *[list(_subsets(s)) for s in spaces]
    ):
        trial = {uid: tuple(quals) for uid, quals in zip(uids, choice)}
        if all(_clause_valid(c, trial, checker) for c in clauses):
            valid.append(trial)
    if not valid:
        return None

    def weaker_eq(a: Assignment, b: Assignment) -> bool:
        # b implies a pointwise (a is weaker or equal).
        for uid in uids:
            fa = _assignment_formula(a[uid])
            fb = _assignment_formula(b[uid])
            u = None
            for c in clauses:
                for cand in c.unknowns():
                    if cand.uid == uid:
                        u = cand
                        break
                if u:
                    break
            ctx = u.ctx if u else TypingContext()
            if not checker.valid(ctx, r_implies(fb, fa)):
                return False
        return True

    best = valid[0]
    for cand in valid[1:]:
        if cand != best and weaker_eq(cand, best) and not weaker_eq(best, cand):
            best = cand
    return best


def _subsets(items: list):
    n = len(items)
    for size in range(n + 1):
        for combo in itertools.combinations(range(n), size):
            yield tuple(items[i] for i in combo)


def _solve_least(clauses, space, checker, unknowns) -> Optional[Assignment]:
    assignment: Assignment = {uid: None for uid in unknowns}
    changed = True
    while changed:
        changed = False
        for clause in clauses:
            if not isinstance(clause.head, Unknown):
                continue
            uid = clause.head.uid
            sol = assignment_refinements(assignment)
            body_parts = [subst_unknowns(b, sol) for b in clause.body]
            if any(b == BOT for b in body_parts):
                continue
            body = conj(body_parts)
            implied = []
            for q in space.for_unknown(unknowns[uid]):
                target = q
                for group in clause.head.pending:
                    target = subst_ref(target, dict(group))
                if checker.valid(clause.ctx, r_implies(body, target)):
                    implied.append(q)
            current = assignment[uid]
            if current is None:
                new = tuple(implied)
            else:
                new = tuple(q for q in current if q in implied)
            if new != current:
                assignment[uid] = new
                changed = True
    for clause in clauses:
        if not _clause_valid(clause, assignment, checker):
            return None
    return assignment
