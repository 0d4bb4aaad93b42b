"""Sorting, well-formedness, and validity checking of refinements.

Validity has two independent implementations: an SMT backend (naturals are
encoded as non-negative integers, type-variable sorts as integers) and a
bounded-enumeration oracle that walks every environment up to a bound,
following the set-based denotational semantics.  The oracle is the testing
ground truth: a "false" from it is proof, a "true" is evidence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .lang import (
    BOOL_SORT, INT_SORT, NAT_SORT, BOT, INF, NU, TOP, ZERO,
    Add, And, Annot, Arrow, BoolB, BoolSort, Eq, Forall, FreePot, IntB, IntSort,
    Ite, Le, ListB, MulConst, NatSort, Not, Num, PathCond, Refinement, RType,
    RVar, Sort, Sub, Subset, Top, TVarB, TVarEntry, TVarSort, TypingContext, Unknown,
    VarBind, as_annot, base_sort, conj, is_numeric_sort, join_numeric,
    r_ge, ref_free_vars, ref_unknowns, subst_nu,
)
from .smtlib import SmtSession, SolverError


class SortError(Exception):
    def __init__(self, subterm, expected, found):
        self.subterm, self.expected, self.found = subterm, expected, found
        super().__init__(f"{subterm!r}: expected {expected}, found {found}")


class ScopeError(Exception):
    pass


class PolyPotentialError(Exception):
    """A quantified type body cannot share with itself."""


class UnsupportedTerm(Exception):
    pass


# ---------------------------------------------------------------------------
# Sorting
# ---------------------------------------------------------------------------


def reflect(schema: RType) -> Optional[Sort]:
    """The partial map from types to sorts (bool -> B, list -> N, tvar -> delta)."""
    from .lang import UnknownT

    if isinstance(schema, (Forall, UnknownT)):
        return None
    t = as_annot(schema)
    if not isinstance(t.inner, Subset):
        return None
    if isinstance(t.inner.base, UnknownT):
        return None
    return base_sort(t.inner.base)


def var_sort(ctx: TypingContext, name: str) -> Sort:
    s = reflect(ctx.lookup(name))
    if s is None:
        raise SortError(RVar(name), "a scalar-typed variable", "arrow/schema")
    return s


def sort_of(ctx: TypingContext, r: Refinement) -> Sort:
    """Sort of a refinement under a context; raises SortError when ill-sorted."""
    if isinstance(r, RVar):
        return var_sort(ctx, r.name)
    if isinstance(r, Top):
        return BOOL_SORT
    if isinstance(r, Num):
        return NAT_SORT if r.value >= 0 else INT_SORT
    if isinstance(r, Not):
        s = sort_of(ctx, r.arg)
        if not isinstance(s, BoolSort):
            raise SortError(r.arg, BOOL_SORT, s)
        return BOOL_SORT
    if isinstance(r, And):
        for part in (r.left, r.right):
            s = sort_of(ctx, part)
            if not isinstance(s, BoolSort):
                raise SortError(part, BOOL_SORT, s)
        return BOOL_SORT
    if isinstance(r, Le):
        for part in (r.left, r.right):
            s = sort_of(ctx, part)
            if not is_numeric_sort(s):
                raise SortError(part, "numeric", s)
        return BOOL_SORT
    if isinstance(r, (Add, Sub)):
        sl = sort_of(ctx, r.left)
        sr = sort_of(ctx, r.right)
        for part, s in ((r.left, sl), (r.right, sr)):
            if not is_numeric_sort(s):
                raise SortError(part, "numeric", s)
        if isinstance(r, Sub):
            return INT_SORT
        return join_numeric(sl, sr)
    if isinstance(r, MulConst):
        s = sort_of(ctx, r.term)
        if not is_numeric_sort(s):
            raise SortError(r.term, "numeric", s)
        return INT_SORT if r.const < 0 else s
    if isinstance(r, Eq):
        sl = sort_of(ctx, r.left)
        sr = sort_of(ctx, r.right)
        if is_numeric_sort(sl) and is_numeric_sort(sr):
            return BOOL_SORT
        if sl != sr:
            raise SortError(r, sl, sr)
        return BOOL_SORT
    if isinstance(r, Ite):
        sc = sort_of(ctx, r.cond)
        if not isinstance(sc, BoolSort):
            raise SortError(r.cond, BOOL_SORT, sc)
        st = sort_of(ctx, r.then)
        se = sort_of(ctx, r.other)
        if is_numeric_sort(st) and is_numeric_sort(se):
            return join_numeric(st, se)
        if st != se:
            raise SortError(r, st, se)
        return st
    if isinstance(r, Unknown):
        return r.sort
    raise UnsupportedTerm(repr(r))


# ---------------------------------------------------------------------------
# Well-formedness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WfObligation:
    """A non-negativity obligation ctx |= phi >= 0 (with nu bound in ctx)."""

    ctx: TypingContext
    potential: Refinement


def _is_literal_nat(phi: Refinement) -> bool:
    return isinstance(phi, Num) and phi.value >= 0


def _self_share_ok(t: RType) -> bool:
    """Would S (share) S | S succeed, i.e. can the type sit under a quantifier?

    Arrows stop the recursion (they share by multiplicity only); potentials
    must be syntactically zero and finite multiplicities zero.
    """
    if isinstance(t, Forall):
        return _self_share_ok(t.body)
    t = as_annot(t)
    if t.potential != ZERO:
        return False
    inner = t.inner
    if isinstance(inner, Arrow):
        return inner.mult is INF or inner.mult == ZERO
    assert isinstance(inner, Subset)
    b = inner.base
    if isinstance(b, (BoolB, IntB)):
        return True
    if isinstance(b, ListB):
        return _self_share_ok(b.elem)
    if isinstance(b, TVarB):
        return b.mult is INF or b.mult == ZERO
    return False


def wf_type(ctx: TypingContext, schema: RType) -> list[WfObligation]:
    """Check scoping/sorting of a schema; return potential >= 0 obligations.

    Raises ScopeError, SortError, or PolyPotentialError.  Obligations are
    returned for every potential (and finite multiplicity) term that is not
    a syntactic natural literal; the caller discharges them.
    """
    obligations: list[WfObligation] = []

    def check_mult(ctx: TypingContext, m) -> None:
        if m is INF:
            return
        s = sort_of(ctx, m)
        if not is_numeric_sort(s):
            raise SortError(m, "numeric", s)
        if not _is_literal_nat(m):
            obligations.append(WfObligation(ctx, m))

    def go_base(ctx: TypingContext, b: RType) -> None:
        if isinstance(b, (BoolB, IntB)):
            return
        if isinstance(b, ListB):
            go_annot(ctx, as_annot(b.elem))
            return
        if isinstance(b, TVarB):
            if not ctx.has_tvar(b.alpha):
                raise ScopeError(f"type variable {b.alpha} not in scope")
            check_mult(ctx, b.mult)
            return
        raise ScopeError(f"not a base type: {b!r}")

    def go_annot(ctx: TypingContext, t: RType) -> None:
        t = as_annot(t)
        inner = t.inner
        if isinstance(inner, Subset):
            go_base(ctx, inner.base)
            ctx_nu = ctx.bind(NU, Annot(Subset(inner.base, TOP), ZERO))
            s = sort_of(ctx_nu, inner.refinement)
            if not isinstance(s, BoolSort):
                raise SortError(inner.refinement, BOOL_SORT, s)
            pot_ctx = ctx.bind(NU, Annot(inner, ZERO))
        else:
            assert isinstance(inner, Arrow)
            go_annot(ctx, inner.arg)
            go_annot(ctx.bind(inner.binder, as_annot(inner.arg)), inner.result)
            check_mult(ctx, inner.mult)
            pot_ctx = ctx
        sp = sort_of(pot_ctx, t.potential)
        if not is_numeric_sort(sp):
            raise SortError(t.potential, "numeric", sp)
        if not _is_literal_nat(t.potential):
            obligations.append(WfObligation(pot_ctx, t.potential))

    def go_schema(ctx: TypingContext, s: RType) -> None:
        if isinstance(s, Forall):
            if not _self_share_ok(s.body):
                raise PolyPotentialError(
                    f"quantified type carries potential or finite multiplicity: {s!r}"
                )
            go_schema(ctx.push(TVarEntry(s.alpha)), s.body)
            return
        go_annot(ctx, s)

    go_schema(ctx, schema)
    return obligations


def wf_context(ctx: TypingContext) -> None:
    """Every entry must be well-formed under its prefix."""
    prefix = TypingContext()
    for entry in ctx:
        if isinstance(entry, VarBind):
            wf_type(prefix, entry.schema)
        elif isinstance(entry, PathCond):
            s = sort_of(prefix, entry.cond)
            if not isinstance(s, BoolSort):
                raise SortError(entry.cond, BOOL_SORT, s)
        elif isinstance(entry, FreePot):
            s = sort_of(prefix, entry.potential)
            if not is_numeric_sort(s):
                raise SortError(entry.potential, "numeric", s)
        prefix = prefix.push(entry)


# ---------------------------------------------------------------------------
# Context constraint extraction (the B(Gamma) of the denotational semantics)
# ---------------------------------------------------------------------------


def context_assumptions(ctx: TypingContext, restriction: Optional[set[str]] = None) -> Optional[list[Refinement]]:
    """Collect [x/nu]psi for scalar bindings plus path conditions.

    With a restriction set: a binding of unknown type whose name is in the
    set makes the whole assumption set equivalent to bottom; we signal that
    by returning None (the caller treats the query as trivially valid).
    """
    out: list[Refinement] = []
    for entry in ctx:
        if isinstance(entry, VarBind):
            t = entry.schema
            if isinstance(t, Forall):
                continue
            if isinstance(t, Annot) and isinstance(t.inner, Subset):
                out.append(subst_nu(t.inner.refinement, RVar(entry.name)))
            elif _is_unknown_type(t):
                if restriction and entry.name in restriction:
                    return None
        elif isinstance(entry, PathCond):
            out.append(entry.cond)
    return out


def _is_unknown_type(t: RType) -> bool:
    from .lang import UnknownT

    if isinstance(t, UnknownT):
        return True
    if isinstance(t, Annot):
        return _is_unknown_type(t.inner)
    return False


def scalar_vars(ctx: TypingContext) -> dict[str, Sort]:
    """All variables of the context that reflect into a sort."""
    out: dict[str, Sort] = {}
    for entry in ctx:
        if isinstance(entry, VarBind):
            s = reflect(entry.schema)
            if s is not None:
                out[entry.name] = s
    return out


# ---------------------------------------------------------------------------
# Validity queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidityQuery:
    ctx: TypingContext
    goal: Refinement
    restriction: Optional[frozenset[str]] = None


def smt_sort_decl(sort: Sort) -> tuple[str, bool]:
    """(smt sort name, needs-nonnegativity assert)."""
    if isinstance(sort, BoolSort):
        return "Bool", False
    if isinstance(sort, NatSort):
        return "Int", True
    if isinstance(sort, IntSort):
        return "Int", False
    if isinstance(sort, TVarSort):
        return "Int", False
    raise UnsupportedTerm(repr(sort))


def encode_ref(r: Refinement) -> str:
    """Render a refinement as an SMT-LIB2 term."""
    from .smtserver import quote, render_int

    if isinstance(r, RVar):
        return quote(r.name)
    if isinstance(r, Top):
        return "true"
    if isinstance(r, Num):
        return render_int(r.value)
    if isinstance(r, Not):
        return f"(not {encode_ref(r.arg)})"
    if isinstance(r, And):
        return f"(and {encode_ref(r.left)} {encode_ref(r.right)})"
    if isinstance(r, Le):
        return f"(<= {encode_ref(r.left)} {encode_ref(r.right)})"
    if isinstance(r, Add):
        return f"(+ {encode_ref(r.left)} {encode_ref(r.right)})"
    if isinstance(r, Sub):
        return f"(- {encode_ref(r.left)} {encode_ref(r.right)})"
    if isinstance(r, MulConst):
        return f"(* {render_int(r.const)} {encode_ref(r.term)})"
    if isinstance(r, Eq):
        return f"(= {encode_ref(r.left)} {encode_ref(r.right)})"
    if isinstance(r, Ite):
        return (
            f"(ite {encode_ref(r.cond)} {encode_ref(r.then)} {encode_ref(r.other)})"
        )
    if isinstance(r, Unknown):
        raise UnsupportedTerm(f"unknown {r!r} reached the solver")
    raise UnsupportedTerm(repr(r))


def to_smt(q: ValidityQuery) -> str:
    """SMT-LIB2 script asserting the negation; unsat means valid."""
    assumptions = context_assumptions(q.ctx, set(q.restriction or ()))
    if assumptions is None:
        # Bottom context under the restricted denotation: trivially valid;
        # encode as an explicitly unsatisfiable script.
        return "(assert false)\n(check-sat)\n"
    lines = ["(set-logic QF_LIA)"]
    declared: set[str] = set()
    free = set(ref_free_vars(q.goal))
    for a in assumptions:
        free |= ref_free_vars(a)
    for name, sort in scalar_vars(q.ctx).items():
        if name not in free or name in declared:
            continue
        declared.add(name)
        smt_sort, nonneg = smt_sort_decl(sort)
        from .smtserver import quote

        lines.append(f"(declare-const {quote(name)} {smt_sort})")
        if nonneg:
            lines.append(f"(assert (>= {quote(name)} 0))")
    missing = free - declared
    if missing:
        raise ScopeError(f"free variables {sorted(missing)} not bound in context")
    for a in assumptions:
        lines.append(f"(assert {encode_ref(a)})")
    lines.append(f"(assert (not {encode_ref(q.goal)}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


class ValidityChecker:
    """Validity via the SMT backend, with a per-session result cache."""

    def __init__(self, session: Optional[SmtSession] = None):
        self.session = session or SmtSession()
        self._cache: dict[str, bool] = {}

    def validity(self, q: ValidityQuery) -> bool:
        for u in ref_unknowns(q.goal):
            raise UnsupportedTerm(f"validity goal contains unknown {u!r}")
        script = to_smt(q)
        hit = self._cache.get(script)
        if hit is not None:
            return hit
        if script == "(assert false)\n(check-sat)\n":
            self._cache[script] = True
            return True
        status, _ = self.session.check(script)
        result = status == "unsat"
        self._cache[script] = result
        return result

    def valid(self, ctx: TypingContext, goal: Refinement) -> bool:
        return self.validity(ValidityQuery(ctx, goal))

    def close(self) -> None:
        self.session.close()


# ---------------------------------------------------------------------------
# Bounded-enumeration oracle
# ---------------------------------------------------------------------------


Value = Union[bool, int]


def eval_ref(r: Refinement, env: dict[str, Value]) -> Value:
    """Evaluate a closed refinement under an environment."""
    if isinstance(r, RVar):
        return env[r.name]
    if isinstance(r, Top):
        return True
    if isinstance(r, Num):
        return r.value
    if isinstance(r, Not):
        return not eval_ref(r.arg, env)
    if isinstance(r, And):
        return bool(eval_ref(r.left, env)) and bool(eval_ref(r.right, env))
    if isinstance(r, Le):
        return eval_ref(r.left, env) <= eval_ref(r.right, env)
    if isinstance(r, Add):
        return eval_ref(r.left, env) + eval_ref(r.right, env)
    if isinstance(r, Sub):
        return eval_ref(r.left, env) - eval_ref(r.right, env)
    if isinstance(r, MulConst):
        return r.const * eval_ref(r.term, env)
    if isinstance(r, Eq):
        return eval_ref(r.left, env) == eval_ref(r.right, env)
    if isinstance(r, Ite):
        if eval_ref(r.cond, env):
            return eval_ref(r.then, env)
        return eval_ref(r.other, env)
    raise UnsupportedTerm(repr(r))


def enum_validity(q: ValidityQuery, bound: int) -> bool:
    """Exhaustive validity over environments with numerics in [0, bound]
    (integers in [-bound, bound]); false on any counterexample."""
    assumptions_tmpl = context_assumptions(q.ctx, set(q.restriction or ()))
    if assumptions_tmpl is None:
        return True
    free = set(ref_free_vars(q.goal))
    for a in assumptions_tmpl:
        free |= ref_free_vars(a)
    var_sorts = {n: s for n, s in scalar_vars(q.ctx).items() if n in free}
    tvars = sorted({s.alpha for s in var_sorts.values() if isinstance(s, TVarSort)})

    nat_range = range(0, bound + 1)
    int_range = range(-bound, bound + 1)
    bool_range = (True, False)

    for inst in itertools.product((BOOL_SORT, NAT_SORT), repeat=len(tvars)):
        delta = dict(zip(tvars, inst))
        names = sorted(var_sorts)
        domains = []
        for n in names:
            s = var_sorts[n]
            if isinstance(s, TVarSort):
                s = delta[s.alpha]
            if isinstance(s, BoolSort):
                domains.append(bool_range)
            elif isinstance(s, NatSort):
                domains.append(nat_range)
            else:
                domains.append(int_range)
        for values in itertools.product(*domains):
            env = dict(zip(names, values))
            try:
                if not all(eval_ref(a, env) for a in assumptions_tmpl):
                    continue
                if not eval_ref(q.goal, env):
                    return False
            except TypeError:
                # Mixed-sort comparison under an ill-matched instantiation of
                # a type-variable sort; such environments don't witness
                # anything, skip them.
                continue
    return True
