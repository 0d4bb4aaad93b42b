"""Resource constraints: linear templates and incremental CEGIS.

After the Horn side is solved, every remaining obligation has the form
  guard(xs) ==> phi >= 0
where phi is linear in numeric unknowns.  Each unknown is replaced by a
linear template over the numeric variables of its context; conditional
potentials are decomposed by moving their guards into the clause guard, so
clauses become
  guard(xs) ==> sum_i f_i(Cs)*x_i + g(Cs) >= 0
with every f affine in the coefficient variables.  The solver alternates a
counterexample query with a synthesis query over the accumulated examples,
re-solving only clauses the newest counterexample violates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .lang import (
    INT_SORT, NAT_SORT, NU, TOP, ZERO, Add, And, BoolSort, Eq, Ite, Le,
    MulConst, NatSort, Not, Num, Refinement, RVar, Sub, TypingContext,
    Unknown, conj, r_implies, ref_free_vars, ref_unknowns, subst_ref,
    subst_unknowns,
)
from .logic import (
    ValidityChecker, context_assumptions, encode_ref, eval_ref,
    is_numeric_sort, scalar_vars, smt_sort_decl,
)
from .smtlib import SmtSession, SolverError
from .smtserver import quote, render_int


class NonLinear(Exception):
    pass


class ResourceUnknownOutcome(Exception):
    """The CEGIS round cap was exhausted without a verdict."""


# ---------------------------------------------------------------------------
# Affine forms over coefficient variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Affine:
    """sum of coeffs[c]*c over coefficient names, plus a constant."""

    coeffs: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @staticmethod
    def constant(k: int) -> "Affine":
        return Affine((), k)

    @staticmethod
    def var(name: str, scale: int = 1) -> "Affine":
        return Affine(((name, scale),), 0)

    def is_constant(self) -> bool:
        return not self.coeffs

    def scale(self, k: int) -> "Affine":
        if k == 0:
            return Affine.constant(0)
        return Affine(tuple((c, k * v) for c, v in self.coeffs), k * self.const)

    def plus(self, other: "Affine") -> "Affine":
        acc = dict(self.coeffs)
        for c, v in other.coeffs:
            acc[c] = acc.get(c, 0) + v
            if acc[c] == 0:
                del acc[c]
        return Affine(tuple(sorted(acc.items())), self.const + other.const)

    def value(self, solution: dict[str, int]) -> int:
        return self.const + sum(v * solution.get(c, 0) for c, v in self.coeffs)

    def names(self) -> set[str]:
        return {c for c, _ in self.coeffs}


@dataclass(frozen=True)
class ResourceClause:
    """guard(xs) ==> sum linear[x]*x + constant >= 0."""

    guard: Refinement
    linear: tuple[tuple[str, Affine], ...]
    constant: Affine
    nat_vars: tuple[str, ...] = ()  # universals ranging over naturals
    int_vars: tuple[str, ...] = ()  # universals ranging over all integers
    bool_vars: tuple[str, ...] = ()  # boolean guard variables

    def universals(self) -> tuple[str, ...]:
        return self.nat_vars + self.int_vars + self.bool_vars

    def coefficient_names(self) -> set[str]:
        out = set(self.constant.names())
        for _, a in self.linear:
            out |= a.names()
        return out

    def lhs_value(self, solution: dict[str, int], example: dict[str, int]) -> int:
        total = self.constant.value(solution)
        for x, a in self.linear:
            total += a.value(solution) * example.get(x, 0)
        return total

    def holds(self, solution: dict[str, int], example: dict[str, int]) -> bool:
        try:
            if not eval_ref(self.guard, _guard_env(self, example)):
                return True
        except KeyError:
            return True  # guard mentions a variable the example leaves free
        return self.lhs_value(solution, example) >= 0


def _guard_env(clause: ResourceClause, example: dict[str, int]) -> dict:
    env: dict = {x: 0 for x in clause.nat_vars + clause.int_vars}
    for b in clause.bool_vars:
        env[b] = False
    for k, v in example.items():
        env[k] = bool(v) if k in clause.bool_vars else v
    for name in ref_free_vars(clause.guard):
        env.setdefault(name, 0)
    return env


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


def template_vars(ctx: TypingContext) -> list[str]:
    """Numeric variables of a context (lists reflect at Nat), nu included."""
    return [
        name for name, sort in scalar_vars(ctx).items() if is_numeric_sort(sort)
    ]


def coeff_name(uid: int, var: Optional[str]) -> str:
    return f"C{uid}_{var}" if var is not None else f"C{uid}_0"


def templatize(u: Unknown) -> tuple[list[tuple[str, str]], str]:
    """The linear template of a numeric unknown: [(var, coeff name)], const name."""
    return (
        [(x, coeff_name(u.uid, x)) for x in template_vars(u.ctx)],
        coeff_name(u.uid, None),
    )


def template_refinement(u: Unknown) -> Refinement:
    """The template as a refinement (for reporting/tests)."""
    pairs, const = templatize(u)
    out: Refinement = RVar(const)
    for x, c in pairs:
        out = Add(out, MulConst(1, RVar(c)))  # placeholder, display only
    return out


# ---------------------------------------------------------------------------
# Normalization: ResC records -> guard-normal linear clauses
# ---------------------------------------------------------------------------


LinTerm = tuple[dict[str, Affine], Affine]  # per-universal affine + constant


def _lin_add(a: LinTerm, b: LinTerm) -> LinTerm:
    coeffs = dict(a[0])
    for x, aff in b[0].items():
        coeffs[x] = coeffs.get(x, Affine.constant(0)).plus(aff)
    return coeffs, a[1].plus(b[1])


def _lin_scale(k: int, a: LinTerm) -> LinTerm:
    return {x: aff.scale(k) for x, aff in a[0].items()}, a[1].scale(k)


def _linearize(term: Refinement, sign: int, out: list[tuple[list[Refinement], LinTerm]],
               guards: list[Refinement]) -> None:
    """Accumulate (extra-guards, linear-part) pieces for `sign * term`."""
    if isinstance(term, Num):
        out.append((list(guards), ({}, Affine.constant(sign * term.value))))
        return
    if isinstance(term, RVar):
        out.append((list(guards), ({term.name: Affine.constant(sign)}, Affine.constant(0))))
        return
    if isinstance(term, Add):
        _linearize(term.left, sign, out, guards)
        _linearize(term.right, sign, out, guards)
        return
    if isinstance(term, Sub):
        _linearize(term.left, sign, out, guards)
        _linearize(term.right, -sign, out, guards)
        return
    if isinstance(term, MulConst):
        _linearize(term.term, sign * term.const, out, guards)
        return
    if isinstance(term, Ite):
        _linearize(term.then, sign, out, guards + [term.cond])
        _linearize(term.other, sign, out, guards + [Not(term.cond)])
        return
    if isinstance(term, Unknown):
        pairs, const = templatize(term)
        out.append((list(guards), ({}, Affine.var(const, sign))))
        for x, cname in pairs:
            replaced: Refinement = RVar(x)
            for group in term.pending:
                replaced = subst_ref(replaced, dict(group))
            pieces: list[tuple[list[Refinement], LinTerm]] = []
            _linearize(replaced, sign, pieces, guards)
            for extra_guards, (coeffs, k) in pieces:
                if any(not aff.is_constant() for aff in coeffs.values()) or not k.is_constant():
                    raise NonLinear("unknown substituted by a non-concrete term")
                scaled_coeffs = {
                    v: Affine.var(cname, aff.const)
                    for v, aff in coeffs.items()
                    if aff.const
                }
                scaled_const = (
                    Affine.var(cname, k.const) if k.const else Affine.constant(0)
                )
                out.append((extra_guards, (scaled_coeffs, scaled_const)))
        return
    raise NonLinear(f"non-linear or non-numeric term {term!r}")


def _split_ite_products(pieces: list[tuple[list[Refinement], LinTerm]]) -> list[tuple[Refinement, LinTerm]]:
    """Combine piece guards: every piece contributes under its own guards.

    Pieces with incompatible guards belong to different decomposed clauses;
    we build the full case split over the set of distinct guard atoms.
    """
    atoms: list[Refinement] = []
    for gs, _ in pieces:
        for g in gs:
            base = g.arg if isinstance(g, Not) else g
            if base not in atoms:
                atoms.append(base)
    if not atoms:
        total = ({}, Affine.constant(0))
        for _, lin in pieces:
            total = _lin_add(total, lin)
        return [(TOP, total)]
    if len(atoms) > 6:
        raise NonLinear("too many conditional guards in one clause")
    out: list[tuple[Refinement, LinTerm]] = []
    for mask in range(1 << len(atoms)):
        valuation = {atoms[i]: bool(mask >> i & 1) for i in range(len(atoms))}
        guard_parts = [a if v else Not(a) for a, v in valuation.items()]
        total: LinTerm = ({}, Affine.constant(0))
        for gs, lin in pieces:
            ok = True
            for g in gs:
                base = g.arg if isinstance(g, Not) else g
                want = not isinstance(g, Not)
                if valuation[base] != want:
                    ok = False
                    break
            if ok:
                total = _lin_add(total, lin)
        out.append((conj(guard_parts), total))
    return out


def normalize(
    resource_constraints, horn_solution: dict[int, Refinement]
) -> list[ResourceClause]:
    """Plug the boolean solution in and produce guard-normal linear clauses."""
    clauses: list[ResourceClause] = []
    seen: set = set()
    for index, rc in enumerate(resource_constraints):
        assumptions = context_assumptions(rc.ctx)
        if assumptions is None:
            continue
        assumptions = [subst_unknowns(a, horn_solution) for a in assumptions]
        if any(ref_unknowns(a) for a in assumptions):
            # Unsolved boolean unknowns in guards degrade to top.
            assumptions = [
                subst_unknowns(a, {u.uid: TOP for u in ref_unknowns(a)})
                for a in assumptions
            ]
        guard = conj(assumptions)
        term = subst_unknowns(rc.term, horn_solution)
        sorts = scalar_vars(rc.ctx)
        # The value variable is local to each obligation: give it a private
        # name so clauses can be merged into one query without sort clashes.
        if NU in sorts:
            nu_name = f"_v#{index}"
            guard = subst_ref(guard, {NU: RVar(nu_name)})
            term = subst_ref(term, {NU: RVar(nu_name)})
            sorts[nu_name] = sorts.pop(NU)
        pieces: list[tuple[list[Refinement], LinTerm]] = []
        _linearize(term, 1, pieces, [])
        for extra_guard, (coeffs, const) in _split_ite_products(pieces):
            full_guard = conj([guard, extra_guard])
            guard_vars = ref_free_vars(full_guard)
            bool_vars = tuple(
                sorted(
                    n
                    for n in guard_vars
                    if isinstance(sorts.get(n), BoolSort)
                )
            )
            names = set(coeffs)
            names |= {
                n
                for n in guard_vars
                if n not in bool_vars
            }
            nat_vars = tuple(
                sorted(n for n in names if isinstance(sorts.get(n, NAT_SORT), NatSort))
            )
            int_vars = tuple(sorted(n for n in names if n not in nat_vars))
            clause = ResourceClause(
                guard=full_guard,
                linear=tuple(sorted(coeffs.items())),
                constant=const,
                nat_vars=nat_vars,
                int_vars=int_vars,
                bool_vars=bool_vars,
            )
            key = (clause.guard, clause.linear, clause.constant)
            if key not in seen:
                seen.add(key)
                clauses.append(clause)
    return clauses


# ---------------------------------------------------------------------------
# CEGIS (incremental)
# ---------------------------------------------------------------------------


@dataclass
class CegisStats:
    rounds: int = 0
    counterexample_queries: int = 0
    synthesis_queries: int = 0


class ResourceUnsat(Exception):
    def __init__(self, clause: Optional[ResourceClause] = None):
        self.clause = clause
        super().__init__("resource constraints are unsatisfiable")


def _clause_is_trivially_valid(clause: ResourceClause, solution: dict[str, int]) -> bool:
    """Closed clauses (no universals) evaluate directly."""
    if clause.universals():
        return False
    if clause.guard != TOP:
        try:
            if not eval_ref(clause.guard, {}):
                return True
        except Exception:
            return False
    return clause.lhs_value(solution, {}) >= 0


def counterexample(
    clauses: list[ResourceClause],
    solution: dict[str, int],
    session: SmtSession,
    stats: Optional[CegisStats] = None,
) -> Optional[dict[str, int]]:
    """A natural assignment falsifying some clause under `solution`, or None."""
    active: list[ResourceClause] = []
    for clause in clauses:
        if not clause.universals():
            ok = _clause_is_trivially_valid(clause, solution)
            if not ok:
                return {}
            continue
        # Under the current solution the clause may be constant: skip it when
        # it holds for every assignment regardless of the guard.
        values = [aff.value(solution) for _, aff in clause.linear]
        if all(v == 0 for v in values) and clause.constant.value(solution) >= 0:
            continue
        active.append(clause)
    if not active:
        return None
    lines = ["(set-logic QF_LIA)"]
    declared: set[str] = set()
    bool_names: set[str] = set()
    for clause in active:
        for v in clause.nat_vars:
            if v not in declared:
                declared.add(v)
                lines.append(f"(declare-const {quote(v)} Int)")
                lines.append(f"(assert (>= {quote(v)} 0))")
        for v in clause.int_vars:
            if v not in declared:
                declared.add(v)
                lines.append(f"(declare-const {quote(v)} Int)")
        for v in clause.bool_vars:
            if v not in declared:
                declared.add(v)
                bool_names.add(v)
                lines.append(f"(declare-const {quote(v)} Bool)")
        for v in ref_free_vars(clause.guard):
            if v not in declared:
                declared.add(v)
                lines.append(f"(declare-const {quote(v)} Int)")
    disjuncts: list[str] = []
    seen_disjuncts: set[str] = set()
    for clause in active:
        lhs_parts = [render_int(clause.constant.value(solution))]
        for x, aff in clause.linear:
            v = aff.value(solution)
            if v != 0:
                lhs_parts.append(f"(* {render_int(v)} {quote(x)})")
        lhs = lhs_parts[0]
        for p in lhs_parts[1:]:
            lhs = f"(+ {lhs} {p})"
        violated = f"(< {lhs} 0)"
        if clause.guard != TOP:
            violated = f"(and {encode_ref(clause.guard)} {violated})"
        if violated not in seen_disjuncts:
            seen_disjuncts.add(violated)
            disjuncts.append(violated)
    body = disjuncts[0]
    for d in disjuncts[1:]:
        body = f"(or {body} {d})"
    lines.append(f"(assert {body})")
    lines.append("(check-sat)")
    if stats:
        stats.counterexample_queries += 1
    status, model = session.check("\n".join(lines), sorted(declared))
    if status == "unsat":
        return None
    out: dict[str, int] = {}
    for k, v in model.items():
        out[k] = int(v)
    return out


def _synthesize(
    clauses: list[ResourceClause],
    examples: list[dict[str, int]],
    session: SmtSession,
    stats: Optional[CegisStats] = None,
) -> Optional[dict[str, int]]:
    """Solve exists-Cs such that every clause holds on every example."""
    coeffs: set[str] = set()
    constraints: list[str] = []
    for clause in clauses:
        coeffs |= clause.coefficient_names()
        for e in examples:
            env = _guard_env(clause, e)
            try:
                if clause.guard != TOP and not eval_ref(clause.guard, env):
                    continue
            except Exception:
                continue
            parts = [_affine_smt(clause.constant)]
            for x, aff in clause.linear:
                xv = e.get(x, 0)
                if xv:
                    parts.append(_affine_smt(aff.scale(xv)))
            lhs = parts[0]
            for p in parts[1:]:
                lhs = f"(+ {lhs} {p})"
            constraints.append(f"(assert (>= {lhs} 0))")
    if not constraints:
        return {}
    lines = ["(set-logic QF_LIA)"]
    for c in sorted(coeffs):
        lines.append(f"(declare-const {quote(c)} Int)")
    lines.extend(constraints)
    lines.append("(check-sat)")
    if stats:
        stats.synthesis_queries += 1
    status, model = session.check("\n".join(lines), sorted(coeffs))
    if status == "unsat":
        return None
    return {k: int(v) for k, v in model.items()}


def _affine_smt(aff: Affine) -> str:
    parts = [render_int(aff.const)]
    for c, v in aff.coeffs:
        parts.append(f"(* {render_int(v)} {quote(c)})")
    out = parts[0]
    for p in parts[1:]:
        out = f"(+ {out} {p})"
    return out


def zero_solution(clauses: list[ResourceClause]) -> dict[str, int]:
    out: dict[str, int] = {}
    for clause in clauses:
        for name in clause.coefficient_names():
            out.setdefault(name, 0)
    return out


def solve(
    clauses: list[ResourceClause],
    solution: dict[str, int],
    examples: list[dict[str, int]],
    session: SmtSession,
    max_rounds: int = 100,
    stats: Optional[CegisStats] = None,
    incremental: bool = True,
) -> tuple[dict[str, int], list[dict[str, int]]]:
    """CEGIS loop: returns (solution, examples) or raises ResourceUnsat.

    New coefficients must enter mapped to zero; `zero_solution` provides the
    base map.  In incremental mode the synthesis query covers the clauses a
    counterexample has ever violated (clauses sharing coefficients would
    otherwise be re-broken in alternation); trivially-valid clauses never
    enter it.  Non-incremental mode re-synthesizes over every clause.
    Raises ResourceUnknownOutcome when max_rounds is exhausted.
    """
    stats = stats if stats is not None else CegisStats()
    current = dict(zero_solution(clauses))
    current.update(solution)
    examples = list(examples)
    active: list[ResourceClause] = []
    active_keys: set[int] = set()
    for _ in range(max_rounds):
        stats.rounds += 1
        e = counterexample(clauses, current, session, stats)
        if e is None:
            return current, examples
        if e not in examples:
            examples.append(e)
        violated = [c for c in clauses if not c.holds(current, e)]
        if not violated:
            # The counterexample must falsify something; numeric mismatch
            # between solver and evaluation would be a bug.
            raise SolverError("counterexample does not violate any clause")
        if incremental:
            for c in violated:
                if id(c) not in active_keys:
                    active_keys.add(id(c))
                    active.append(c)
            target = active
        else:
            target = clauses
        delta = _synthesize(target, examples, session, stats)
        if delta is None:
            raise ResourceUnsat(violated[0] if violated else None)
        current.update(delta)
    raise ResourceUnknownOutcome(f"no verdict after {max_rounds} CEGIS rounds")
