"""Core term and type grammars shared by every other module.

Terms are in a-normal form: all non-tail positions hold atoms (variables or
values).  Types pair logical refinements with potential annotations drawn from
the same refinement language; contexts are ordered sequences of bindings,
type variables, path conditions, and free-potential terms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Union


class LangError(Exception):
    """Base class for errors raised by the core language layer."""


class HoleInFold(LangError):
    pass


class NotInterpretable(LangError):
    pass


class NotSubsetType(LangError):
    pass


class NonLinearTerm(LangError):
    """A multiplication of two symbolic quantities arose."""


class UnboundVariable(LangError):
    pass


# The reserved name of the value variable (written `_v` in source files).
NU = "_v"

_fresh_counter = itertools.count()


def fresh_name(base: str = "t") -> str:
    """Return a globally fresh name derived from `base`."""
    return f"{base}%{next(_fresh_counter)}"


def reset_fresh_names() -> None:
    """Restart the fresh-name counter (tests only; keeps runs reproducible)."""
    global _fresh_counter
    _fresh_counter = itertools.count()


# ---------------------------------------------------------------------------
# Sorts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoolSort:
    def __repr__(self) -> str:
        return "Bool"


@dataclass(frozen=True)
class NatSort:
    def __repr__(self) -> str:
        return "Nat"


@dataclass(frozen=True)
class IntSort:
    # Integer-sorted refinement variables; not part of the two base sorts
    # but required once integers enter the term language.
    def __repr__(self) -> str:
        return "Int"


@dataclass(frozen=True)
class TVarSort:
    alpha: str

    def __repr__(self) -> str:
        return f"@{self.alpha}"


Sort = Union[BoolSort, NatSort, IntSort, TVarSort]

BOOL_SORT = BoolSort()
NAT_SORT = NatSort()
INT_SORT = IntSort()


def is_numeric_sort(s: Sort) -> bool:
    return isinstance(s, (NatSort, IntSort))


def join_numeric(a: Sort, b: Sort) -> Sort:
    return NAT_SORT if isinstance(a, NatSort) and isinstance(b, NatSort) else INT_SORT


# ---------------------------------------------------------------------------
# Refinements (used both for logical refinements and potential terms)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RVar:
    name: str


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Not:
    arg: "Refinement"


@dataclass(frozen=True)
class And:
    left: "Refinement"
    right: "Refinement"


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Le:
    left: "Refinement"
    right: "Refinement"


@dataclass(frozen=True)
class Add:
    left: "Refinement"
    right: "Refinement"


@dataclass(frozen=True)
class Sub:
    left: "Refinement"
    right: "Refinement"


@dataclass(frozen=True)
class MulConst:
    const: int
    term: "Refinement"


@dataclass(frozen=True)
class Eq:
    left: "Refinement"
    right: "Refinement"


@dataclass(frozen=True)
class Ite:
    cond: "Refinement"
    then: "Refinement"
    other: "Refinement"


@dataclass(frozen=True)
class Unknown:
    """A refinement unknown, carrying the context it must be solved under.

    `pending` records substitutions applied at use sites; they are replayed
    onto the solved predicate (which is expressed over the snapshot context
    plus the value variable).
    """

    uid: int
    ctx: "TypingContext"
    sort: Sort
    # Sequence of simultaneous substitution groups, innermost first.
    pending: tuple[tuple[tuple[str, "Refinement"], ...], ...] = ()

    def __repr__(self) -> str:
        if self.pending:
            subst = ";".join(
                ",".join(f"{n}:={v!r}" for n, v in group) for group in self.pending
            )
            return f"?u{self.uid}[{subst}]"
        return f"?u{self.uid}"


Refinement = Union[RVar, Top, Not, And, Num, Le, Add, Sub, MulConst, Eq, Ite, Unknown]

TOP = Top()
BOT = Not(Top())
ZERO = Num(0)

_unknown_counter = itertools.count()


def fresh_unknown(ctx: "TypingContext", sort: Sort) -> Unknown:
    return Unknown(next(_unknown_counter), ctx, sort)


def conj(parts: list[Refinement]) -> Refinement:
    parts = [p for p in parts if p != TOP]
    if not parts:
        return TOP
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def r_or(a: Refinement, b: Refinement) -> Refinement:
    return Not(And(Not(a), Not(b)))


def r_implies(a: Refinement, b: Refinement) -> Refinement:
    return Not(And(a, Not(b)))


def r_add(a: Refinement, b: Refinement) -> Refinement:
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Add(a, b)


def r_sum(parts: list[Refinement]) -> Refinement:
    out: Refinement = ZERO
    for p in parts:
        out = r_add(out, p)
    return out


def r_ge(a: Refinement, b: Refinement) -> Refinement:
    return Le(b, a)


def r_lt(a: Refinement, b: Refinement) -> Refinement:
    return Not(Le(b, a))


def r_mul_const(c: int, t: Refinement) -> Refinement:
    if c == 0:
        return ZERO
    if c == 1:
        return t
    if isinstance(t, Num):
        return Num(c * t.value)
    return MulConst(c, t)


def ref_children(r: Refinement) -> tuple[Refinement, ...]:
    if isinstance(r, (RVar, Top, Num, Unknown)):
        return ()
    if isinstance(r, Not):
        return (r.arg,)
    if isinstance(r, MulConst):
        return (r.term,)
    if isinstance(r, (And, Le, Add, Sub, Eq)):
        return (r.left, r.right)
    if isinstance(r, Ite):
        return (r.cond, r.then, r.other)
    raise LangError(f"unhandled refinement node {r!r}")


def ref_free_vars(r: Refinement) -> set[str]:
    if isinstance(r, RVar):
        return {r.name}
    out: set[str] = set()
    for c in ref_children(r):
        out |= ref_free_vars(c)
    return out


def ref_unknowns(r: Refinement) -> set[Unknown]:
    if isinstance(r, Unknown):
        return {r}
    out: set[Unknown] = set()
    for c in ref_children(r):
        out |= ref_unknowns(c)
    return out


def subst_ref(r: Refinement, env: dict[str, Refinement]) -> Refinement:
    """Simultaneous substitution of refinement variables."""
    if isinstance(r, RVar):
        return env.get(r.name, r)
    if isinstance(r, Unknown):
        group = tuple(sorted(env.items(), key=lambda kv: kv[0]))
        return Unknown(r.uid, r.ctx, r.sort, r.pending + (group,))
    if isinstance(r, (Top, Num)):
        return r
    if isinstance(r, Not):
        return Not(subst_ref(r.arg, env))
    if isinstance(r, And):
        return And(subst_ref(r.left, env), subst_ref(r.right, env))
    if isinstance(r, Le):
        return Le(subst_ref(r.left, env), subst_ref(r.right, env))
    if isinstance(r, Add):
        return Add(subst_ref(r.left, env), subst_ref(r.right, env))
    if isinstance(r, Sub):
        return Sub(subst_ref(r.left, env), subst_ref(r.right, env))
    if isinstance(r, MulConst):
        return MulConst(r.const, subst_ref(r.term, env))
    if isinstance(r, Eq):
        return Eq(subst_ref(r.left, env), subst_ref(r.right, env))
    if isinstance(r, Ite):
        return Ite(subst_ref(r.cond, env), subst_ref(r.then, env), subst_ref(r.other, env))
    raise LangError(f"unhandled refinement node {r!r}")


def subst_nu(r: Refinement, replacement: Refinement) -> Refinement:
    return subst_ref(r, {NU: replacement})


def subst_unknowns(r: Refinement, sol: dict[int, Refinement]) -> Refinement:
    if isinstance(r, Unknown):
        if r.uid not in sol:
            return r
        solved = sol[r.uid]
        for group in r.pending:
            solved = subst_ref(solved, dict(group))
        return solved
    if isinstance(r, (RVar, Top, Num)):
        return r
    if isinstance(r, Not):
        return Not(subst_unknowns(r.arg, sol))
    if isinstance(r, And):
        return And(subst_unknowns(r.left, sol), subst_unknowns(r.right, sol))
    if isinstance(r, Le):
        return Le(subst_unknowns(r.left, sol), subst_unknowns(r.right, sol))
    if isinstance(r, Add):
        return Add(subst_unknowns(r.left, sol), subst_unknowns(r.right, sol))
    if isinstance(r, Sub):
        return Sub(subst_unknowns(r.left, sol), subst_unknowns(r.right, sol))
    if isinstance(r, MulConst):
        return MulConst(r.const, subst_unknowns(r.term, sol))
    if isinstance(r, Eq):
        return Eq(subst_unknowns(r.left, sol), subst_unknowns(r.right, sol))
    if isinstance(r, Ite):
        return Ite(
            subst_unknowns(r.cond, sol),
            subst_unknowns(r.then, sol),
            subst_unknowns(r.other, sol),
        )
    raise LangError(f"unhandled refinement node {r!r}")


# ---------------------------------------------------------------------------
# Multiplicities
# ---------------------------------------------------------------------------


class _Inf:
    _instance: Optional["_Inf"] = None

    def __new__(cls) -> "_Inf":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "inf"


INF = _Inf()

# A multiplicity is either the absorbing `INF` or a Nat-sorted refinement
# term; plain ints are accepted at construction sites and normalized.
Mult = Union[_Inf, Refinement]


def as_mult(m: Union[int, Mult]) -> Mult:
    if isinstance(m, int):
        return Num(m)
    return m


def mult_is_lit(m: Mult, value: int) -> bool:
    return isinstance(m, Num) and m.value == value


def mult_add(a: Mult, b: Mult) -> Mult:
    if a is INF or b is INF:
        return INF
    return r_add(a, b)


def mult_mul(a: Mult, b: Mult) -> Mult:
    # INF absorbs on either side (including 0, by our ledgered convention).
    if a is INF or b is INF:
        return INF
    if isinstance(a, Num):
        return r_mul_const(a.value, b)
    if isinstance(b, Num):
        return r_mul_const(b.value, a)
    raise NonLinearTerm(f"product of symbolic multiplicities {a!r} * {b!r}")


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class TrueE:
    pass


@dataclass(frozen=True)
class FalseE:
    pass


@dataclass(frozen=True)
class NilE:
    pass


@dataclass(frozen=True)
class ConsE:
    head: "Expr"
    tail: "Expr"


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Cond:
    guard: "Expr"
    then_branch: "Expr"
    else_branch: "Expr"


@dataclass(frozen=True)
class MatchList:
    scrutinee: "Expr"
    nil_branch: "Expr"
    head_binder: str
    tail_binder: str
    cons_branch: "Expr"


@dataclass(frozen=True)
class App:
    fn: "Expr"
    arg: "Expr"


@dataclass(frozen=True)
class Let:
    bound: "Expr"
    binder: str
    body: "Expr"


@dataclass(frozen=True)
class Abs:
    binder: str
    body: "Expr"


@dataclass(frozen=True)
class Fix:
    fun_binder: str
    arg_binder: str
    body: "Expr"


@dataclass(frozen=True)
class Tick:
    cost: int
    body: "Expr"


@dataclass(frozen=True)
class Impossible:
    pass


@dataclass(frozen=True)
class Hole:
    pass


@dataclass(frozen=True)
class FlatLet:
    bindings: tuple[tuple[str, "Expr"], ...]
    body: "Expr"


Expr = Union[
    Var, TrueE, FalseE, NilE, ConsE, IntLit,
    Cond, MatchList, App, Let, Abs, Fix, Tick, Impossible, Hole, FlatLet,
]

TRUE = TrueE()
FALSE = FalseE()
NIL = NilE()


def is_simple_atom(e: Expr) -> bool:
    """Atoms interpretable in the refinement logic (SimpAtom)."""
    if isinstance(e, (Var, TrueE, FalseE, NilE, IntLit)):
        return True
    if isinstance(e, ConsE):
        return is_atom(e.head) and is_simple_atom(e.tail)
    return False


def is_atom(e: Expr) -> bool:
    return is_simple_atom(e) or isinstance(e, (Abs, Fix))


def is_value(e: Expr) -> bool:
    if isinstance(e, (TrueE, FalseE, NilE, IntLit, Abs, Fix)):
        return True
    if isinstance(e, ConsE):
        return is_value(e.head) and is_value(e.tail)
    return False


def anf_check(e: Expr) -> bool:
    """True iff every atom-restricted position holds an atom and no hole occurs."""
    if isinstance(e, (Hole, FlatLet)):
        return False
    if isinstance(e, (Var, TrueE, FalseE, NilE, IntLit, Impossible)):
        return True
    if isinstance(e, ConsE):
        return is_atom(e.head) and is_simple_atom(e.tail)
    if isinstance(e, Cond):
        return (
            is_simple_atom(e.guard)
            and anf_check(e.then_branch)
            and anf_check(e.else_branch)
        )
    if isinstance(e, MatchList):
        return (
            is_simple_atom(e.scrutinee)
            and anf_check(e.nil_branch)
            and anf_check(e.cons_branch)
        )
    if isinstance(e, App):
        return is_atom(e.fn) and is_atom(e.arg)
    if isinstance(e, Let):
        return anf_check(e.bound) and anf_check(e.body)
    if isinstance(e, (Abs,)):
        return anf_check(e.body)
    if isinstance(e, Fix):
        return anf_check(e.body)
    if isinstance(e, Tick):
        return isinstance(e.cost, int) and anf_check(e.body)
    raise LangError(f"unhandled expression node {e!r}")


def contains_hole(e: Expr) -> bool:
    if isinstance(e, Hole):
        return True
    if isinstance(e, FlatLet):
        return any(contains_hole(d) for _, d in e.bindings) or contains_hole(e.body)
    if isinstance(e, ConsE):
        return contains_hole(e.head) or contains_hole(e.tail)
    if isinstance(e, Cond):
        return any(contains_hole(x) for x in (e.guard, e.then_branch, e.else_branch))
    if isinstance(e, MatchList):
        return any(contains_hole(x) for x in (e.scrutinee, e.nil_branch, e.cons_branch))
    if isinstance(e, App):
        return contains_hole(e.fn) or contains_hole(e.arg)
    if isinstance(e, Let):
        return contains_hole(e.bound) or contains_hole(e.body)
    if isinstance(e, (Abs, Fix, Tick)):
        return contains_hole(e.body)
    return False


def fold_let(bindings: list[tuple[str, Expr]], body: Expr) -> Expr:
    """Convert a flat binding sequence back to a right-nested let chain."""
    for name, d in bindings:
        if contains_hole(d):
            raise HoleInFold(f"binding {name} contains a hole")
    if contains_hole(body):
        raise HoleInFold("body contains a hole")
    out = body
    for name, d in reversed(bindings):
        out = Let(d, name, out)
    return out


def unfold_let(e: Expr) -> tuple[list[tuple[str, Expr]], Expr]:
    """Inverse of fold_let: peel a let chain into bindings plus body."""
    bindings: list[tuple[str, Expr]] = []
    while isinstance(e, Let):
        bindings.append((e.binder, e.bound))
        e = e.body
    return bindings, e


def interpret_atom(a: Expr) -> Refinement:
    """The refinement-level interpretation of interpretable atoms."""
    if isinstance(a, Var):
        return RVar(a.name)
    if isinstance(a, TrueE):
        return TOP
    if isinstance(a, FalseE):
        return BOT
    if isinstance(a, NilE):
        return ZERO
    if isinstance(a, ConsE):
        return r_add(interpret_atom(a.tail), Num(1))
    if isinstance(a, IntLit):
        return Num(a.value)
    raise NotInterpretable(f"{a!r} is not a simple atom")


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (TrueE, FalseE, NilE, IntLit, Impossible, Hole)):
        return set()
    if isinstance(e, ConsE):
        return free_vars(e.head) | free_vars(e.tail)
    if isinstance(e, Cond):
        return free_vars(e.guard) | free_vars(e.then_branch) | free_vars(e.else_branch)
    if isinstance(e, MatchList):
        cons_fv = free_vars(e.cons_branch) - {e.head_binder, e.tail_binder}
        return free_vars(e.scrutinee) | free_vars(e.nil_branch) | cons_fv
    if isinstance(e, App):
        return free_vars(e.fn) | free_vars(e.arg)
    if isinstance(e, Let):
        return free_vars(e.bound) | (free_vars(e.body) - {e.binder})
    if isinstance(e, Abs):
        return free_vars(e.body) - {e.binder}
    if isinstance(e, Fix):
        return free_vars(e.body) - {e.fun_binder, e.arg_binder}
    if isinstance(e, Tick):
        return free_vars(e.body)
    if isinstance(e, FlatLet):
        out = free_vars(e.body)
        for name, d in reversed(e.bindings):
            out.discard(name)
            out |= free_vars(d)
        return out
    raise LangError(f"unhandled expression node {e!r}")


def subst_expr(e: Expr, x: str, v: Expr) -> Expr:
    """Capture-avoiding substitution [v/x]e; bound names are renamed on clash."""
    fv = free_vars(v)

    def go(e: Expr, x: str) -> Expr:
        if isinstance(e, Var):
            return v if e.name == x else e
        if isinstance(e, (TrueE, FalseE, NilE, IntLit, Impossible, Hole)):
            return e
        if isinstance(e, ConsE):
            return ConsE(go(e.head, x), go(e.tail, x))
        if isinstance(e, Cond):
            return Cond(go(e.guard, x), go(e.then_branch, x), go(e.else_branch, x))
        if isinstance(e, MatchList):
            scrut = go(e.scrutinee, x)
            nil_b = go(e.nil_branch, x)
            hb, tb, cons_b = e.head_binder, e.tail_binder, e.cons_branch
            if x in (hb, tb):
                return MatchList(scrut, nil_b, hb, tb, cons_b)
            if hb in fv:
                hb2 = fresh_name(hb)
                cons_b = subst_expr(cons_b, hb, Var(hb2))
                hb = hb2
            if tb in fv:
                tb2 = fresh_name(tb)
                cons_b = subst_expr(cons_b, tb, Var(tb2))
                tb = tb2
            return MatchList(scrut, nil_b, hb, tb, go(cons_b, x))
        if isinstance(e, App):
            return App(go(e.fn, x), go(e.arg, x))
        if isinstance(e, Let):
            bound = go(e.bound, x)
            if e.binder == x:
                return Let(bound, e.binder, e.body)
            binder, body = e.binder, e.body
            if binder in fv:
                b2 = fresh_name(binder)
                body = subst_expr(body, binder, Var(b2))
                binder = b2
            return Let(bound, binder, go(body, x))
        if isinstance(e, Abs):
            if e.binder == x:
                return e
            binder, body = e.binder, e.body
            if binder in fv:
                b2 = fresh_name(binder)
                body = subst_expr(body, binder, Var(b2))
                binder = b2
            return Abs(binder, go(body, x))
        if isinstance(e, Fix):
            if x in (e.fun_binder, e.arg_binder):
                return e
            fb, ab, body = e.fun_binder, e.arg_binder, e.body
            if fb in fv:
                fb2 = fresh_name(fb)
                body = subst_expr(body, fb, Var(fb2))
                fb = fb2
            if ab in fv:
                ab2 = fresh_name(ab)
                body = subst_expr(body, ab, Var(ab2))
                ab = ab2
            return Fix(fb, ab, go(body, x))
        if isinstance(e, Tick):
            return Tick(e.cost, go(e.body, x))
        raise LangError(f"cannot substitute under {e!r}")

    return go(e, x)


def alpha_equal(e1: Expr, e2: Expr) -> bool:
    """Structural equality modulo consistent renaming of bound names."""

    def go(a: Expr, b: Expr, env: dict[str, str]) -> bool:
        if isinstance(a, Var) and isinstance(b, Var):
            return env.get(a.name, a.name) == b.name
        if type(a) is not type(b):
            return False
        if isinstance(a, (TrueE, FalseE, NilE, Impossible, Hole)):
            return True
        if isinstance(a, IntLit):
            return a.value == b.value
        if isinstance(a, ConsE):
            return go(a.head, b.head, env) and go(a.tail, b.tail, env)
        if isinstance(a, Cond):
            return (
                go(a.guard, b.guard, env)
                and go(a.then_branch, b.then_branch, env)
                and go(a.else_branch, b.else_branch, env)
            )
        if isinstance(a, MatchList):
            env2 = dict(env)
            env2[a.head_binder] = b.head_binder
            env2[a.tail_binder] = b.tail_binder
            return (
                go(a.scrutinee, b.scrutinee, env)
                and go(a.nil_branch, b.nil_branch, env)
                and go(a.cons_branch, b.cons_branch, env2)
            )
        if isinstance(a, App):
            return go(a.fn, b.fn, env) and go(a.arg, b.arg, env)
        if isinstance(a, Let):
            env2 = dict(env)
            env2[a.binder] = b.binder
            return go(a.bound, b.bound, env) and go(a.body, b.body, env2)
        if isinstance(a, Abs):
            env2 = dict(env)
            env2[a.binder] = b.binder
            return go(a.body, b.body, env2)
        if isinstance(a, Fix):
            env2 = dict(env)
            env2[a.fun_binder] = b.fun_binder
            env2[a.arg_binder] = b.arg_binder
            return go(a.body, b.body, env2)
        if isinstance(a, Tick):
            return a.cost == b.cost and go(a.body, b.body, env)
        if isinstance(a, FlatLet):
            if len(a.bindings) != len(b.bindings):
                return False
            env2 = dict(env)
            for (na, da), (nb, db) in zip(a.bindings, b.bindings):
                if not go(da, db, env2):
                    return False
                env2[na] = nb
            return go(a.body, b.body, env2)
        raise LangError(f"unhandled expression node {a!r}")

    return go(e1, e2, {})


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoolB:
    pass


@dataclass(frozen=True)
class IntB:
    pass


@dataclass(frozen=True)
class ListB:
    elem: "RType"  # annotated element type


@dataclass(frozen=True)
class TVarB:
    mult: Mult
    alpha: str


@dataclass(frozen=True)
class Subset:
    base: "RType"
    refinement: Refinement


@dataclass(frozen=True)
class Arrow:
    binder: str
    arg: "RType"
    result: "RType"
    mult: Mult = INF
    cost: int = 0


@dataclass(frozen=True)
class Annot:
    inner: "RType"  # Subset or Arrow
    potential: Refinement


@dataclass(frozen=True)
class Forall:
    alpha: str
    body: "RType"


@dataclass(frozen=True)
class UnknownT:
    pass


RType = Union[BoolB, IntB, ListB, TVarB, Subset, Arrow, Annot, Forall, UnknownT]

BOOL = BoolB()
INT = IntB()
UNKNOWN_T = UnknownT()


def scalar(base: RType, psi: Refinement = TOP, phi: Refinement = ZERO) -> Annot:
    """Build the annotated subset type {base | psi}^phi."""
    return Annot(Subset(base, psi), phi)


def tlist(elem: RType) -> ListB:
    return ListB(elem)


def tvar(alpha: str, mult: Union[int, Mult] = 1) -> TVarB:
    return TVarB(as_mult(mult), alpha)


def arrow(
    binder: str,
    arg: RType,
    result: RType,
    mult: Union[int, Mult] = INF,
    cost: int = 0,
    potential: Refinement = ZERO,
) -> Annot:
    return Annot(Arrow(binder, arg, result, as_mult(mult), cost), potential)


def is_scalar(t: RType) -> bool:
    return isinstance(t, Annot) and isinstance(t.inner, Subset)


def is_arrow_type(t: RType) -> bool:
    return isinstance(t, Annot) and isinstance(t.inner, Arrow)


def as_annot(t: RType) -> Annot:
    """Normalize bare bases / subsets / arrows into annotated types."""
    if isinstance(t, Annot):
        return t
    if isinstance(t, Subset):
        return Annot(t, ZERO)
    if isinstance(t, Arrow):
        return Annot(t, ZERO)
    if isinstance(t, (BoolB, IntB, ListB, TVarB)):
        return Annot(Subset(t, TOP), ZERO)
    raise LangError(f"cannot annotate {t!r}")


def base_sort(b: RType) -> Sort:
    """The reflection of a base type into a sort."""
    if isinstance(b, BoolB):
        return BOOL_SORT
    if isinstance(b, IntB):
        return INT_SORT
    if isinstance(b, ListB):
        return NAT_SORT
    if isinstance(b, TVarB):
        return TVarSort(b.alpha)
    raise LangError(f"{b!r} is not a base type")


def scalar_sort(t: RType) -> Optional[Sort]:
    """Sort of a scalar type's inhabitants, None for arrows/schemas."""
    t = as_annot(t) if not isinstance(t, Forall) else t
    if isinstance(t, Annot) and isinstance(t.inner, Subset):
        return base_sort(t.inner.base)
    return None


def type_free_vars(t: RType) -> set[str]:
    if isinstance(t, (BoolB, IntB, UnknownT)):
        return set()
    if isinstance(t, ListB):
        return type_free_vars(t.elem)
    if isinstance(t, TVarB):
        return set() if t.mult is INF else ref_free_vars(t.mult)
    if isinstance(t, Subset):
        return type_free_vars(t.base) | (ref_free_vars(t.refinement) - {NU})
    if isinstance(t, Arrow):
        inner = type_free_vars(t.result) - {t.binder}
        m = set() if t.mult is INF else ref_free_vars(t.mult)
        return type_free_vars(t.arg) | inner | m
    if isinstance(t, Annot):
        return type_free_vars(t.inner) | (ref_free_vars(t.potential) - {NU})
    if isinstance(t, Forall):
        return type_free_vars(t.body)
    raise LangError(f"unhandled type node {t!r}")


def type_unknowns(t: RType) -> set[Unknown]:
    if isinstance(t, (BoolB, IntB, UnknownT)):
        return set()
    if isinstance(t, ListB):
        return type_unknowns(t.elem)
    if isinstance(t, TVarB):
        return set() if t.mult is INF else ref_unknowns(t.mult)
    if isinstance(t, Subset):
        return type_unknowns(t.base) | ref_unknowns(t.refinement)
    if isinstance(t, Arrow):
        m = set() if t.mult is INF else ref_unknowns(t.mult)
        return type_unknowns(t.arg) | type_unknowns(t.result) | m
    if isinstance(t, Annot):
        return type_unknowns(t.inner) | ref_unknowns(t.potential)
    if isinstance(t, Forall):
        return type_unknowns(t.body)
    raise LangError(f"unhandled type node {t!r}")


def subst_type_vars(t: RType, env: dict[str, Refinement]) -> RType:
    """Substitute program variables inside a type's refinements/potentials."""
    if isinstance(t, (BoolB, IntB, UnknownT)):
        return t
    if isinstance(t, ListB):
        return ListB(subst_type_vars(t.elem, env))
    if isinstance(t, TVarB):
        if t.mult is INF:
            return t
        return TVarB(subst_ref(t.mult, env), t.alpha)
    if isinstance(t, Subset):
        env2 = {k: v for k, v in env.items() if k != NU}
        return Subset(subst_type_vars(t.base, env), subst_ref(t.refinement, env2))
    if isinstance(t, Arrow):
        env2 = {k: v for k, v in env.items() if k != t.binder}
        m = t.mult if t.mult is INF else subst_ref(t.mult, env)
        return Arrow(
            t.binder,
            subst_type_vars(t.arg, env),
            subst_type_vars(t.result, env2),
            m,
            t.cost,
        )
    if isinstance(t, Annot):
        env2 = {k: v for k, v in env.items() if k != NU}
        return Annot(subst_type_vars(t.inner, env), subst_ref(t.potential, env2))
    if isinstance(t, Forall):
        return Forall(t.alpha, subst_type_vars(t.body, env))
    raise LangError(f"unhandled type node {t!r}")


def subst_type_unknowns(t: RType, sol: dict[int, Refinement]) -> RType:
    if isinstance(t, (BoolB, IntB, UnknownT)):
        return t
    if isinstance(t, ListB):
        return ListB(subst_type_unknowns(t.elem, sol))
    if isinstance(t, TVarB):
        if t.mult is INF:
            return t
        return TVarB(subst_unknowns(t.mult, sol), t.alpha)
    if isinstance(t, Subset):
        return Subset(subst_type_unknowns(t.base, sol), subst_unknowns(t.refinement, sol))
    if isinstance(t, Arrow):
        m = t.mult if t.mult is INF else subst_unknowns(t.mult, sol)
        return Arrow(
            t.binder,
            subst_type_unknowns(t.arg, sol),
            subst_type_unknowns(t.result, sol),
            m,
            t.cost,
        )
    if isinstance(t, Annot):
        return Annot(subst_type_unknowns(t.inner, sol), subst_unknowns(t.potential, sol))
    if isinstance(t, Forall):
        return Forall(t.alpha, subst_type_unknowns(t.body, sol))
    raise LangError(f"unhandled type node {t!r}")


def type_multiply(m: Union[int, Mult], b: RType) -> RType:
    """Multiply a base type by a multiplicity."""
    m = as_mult(m)
    if isinstance(b, (BoolB, IntB)):
        return b
    if isinstance(b, ListB):
        return ListB(annot_multiply(m, as_annot(b.elem)))
    if isinstance(b, TVarB):
        return TVarB(mult_mul(m, b.mult), b.alpha)
    raise LangError(f"type multiplication undefined on {b!r}")


def annot_multiply(m: Mult, t: Annot) -> Annot:
    """Pointwise multiplication of an annotated subset type."""
    if not isinstance(t.inner, Subset):
        raise LangError(f"cannot multiply non-subset type {t!r}")
    if m is INF:
        raise NonLinearTerm("cannot scale a potential by inf")
    scaled = mult_mul(m, t.potential)
    assert scaled is not INF
    return Annot(
        Subset(type_multiply(m, t.inner.base), t.inner.refinement),
        scaled,
    )


def subst_type(s: RType, alpha: str, t: RType) -> RType:
    """Type substitution [t/alpha]s, restricted to annotated subset types."""
    t = as_annot(t)
    if not isinstance(t.inner, Subset):
        raise NotSubsetType(f"cannot instantiate {alpha} with non-subset type {t!r}")
    u_base, u_psi, u_phi = t.inner.base, t.inner.refinement, t.potential

    def on_base(b: RType) -> RType:
        # Returns either a base (no alpha) or an Annot when alpha was hit.
        if isinstance(b, (BoolB, IntB)):
            return b
        if isinstance(b, ListB):
            return ListB(on_annot(as_annot(b.elem)))
        if isinstance(b, TVarB):
            if b.alpha != alpha:
                return b
            return Annot(
                Subset(type_multiply(b.mult, u_base), u_psi),
                mult_scale_potential(b.mult, u_phi),
            )
        raise LangError(f"unhandled base {b!r}")

    def mult_scale_potential(m: Mult, phi: Refinement) -> Refinement:
        scaled = mult_mul(m, phi)
        if scaled is INF:
            raise NonLinearTerm("infinite potential")
        return scaled

    def on_annot(s: RType) -> Annot:
        s = as_annot(s)
        if isinstance(s.inner, Subset):
            hit = on_base(s.inner.base)
            if isinstance(hit, Annot):
                # [U/alpha]{B|psi}: merge refinements conjunctively, lift potential.
                inner_sub = hit.inner
                assert isinstance(inner_sub, Subset)
                merged = Subset(
                    inner_sub.base,
                    conj([inner_sub.refinement, s.inner.refinement]),
                )
                return Annot(merged, r_add(s.potential, hit.potential))
            return Annot(Subset(hit, s.inner.refinement), s.potential)
        if isinstance(s.inner, Arrow):
            a = s.inner
            return Annot(
                Arrow(a.binder, on_annot(a.arg), on_annot(a.result), a.mult, a.cost),
                s.potential,
            )
        raise LangError(f"unhandled type node {s!r}")

    if isinstance(s, Forall):
        if s.alpha == alpha:
            return s
        return Forall(s.alpha, subst_type(s.body, alpha, t))
    return on_annot(s)


# ---------------------------------------------------------------------------
# Typing contexts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarBind:
    name: str
    schema: RType


@dataclass(frozen=True)
class TVarEntry:
    alpha: str


@dataclass(frozen=True)
class PathCond:
    cond: Refinement


@dataclass(frozen=True)
class FreePot:
    potential: Refinement


ContextEntry = Union[VarBind, TVarEntry, PathCond, FreePot]


@dataclass(frozen=True)
class TypingContext:
    entries: tuple[ContextEntry, ...] = ()

    def push(self, *new: ContextEntry) -> "TypingContext":
        return TypingContext(self.entries + tuple(new))

    def bind(self, name: str, schema: RType) -> "TypingContext":
        return self.push(VarBind(name, schema))

    def with_fact(self, psi: Refinement) -> "TypingContext":
        return self.push(PathCond(psi))

    def lookup(self, name: str) -> RType:
        for entry in reversed(self.entries):
            if isinstance(entry, VarBind) and entry.name == name:
                return entry.schema
        raise UnboundVariable(name)

    def has_var(self, name: str) -> bool:
        return any(
            isinstance(e, VarBind) and e.name == name for e in self.entries
        )

    def has_tvar(self, alpha: str) -> bool:
        return any(
            isinstance(e, TVarEntry) and e.alpha == alpha for e in self.entries
        )

    def var_binds(self) -> Iterator[VarBind]:
        for entry in self.entries:
            if isinstance(entry, VarBind):
                yield entry

    def path_conds(self) -> Iterator[Refinement]:
        for entry in self.entries:
            if isinstance(entry, PathCond):
                yield entry.cond

    def names(self) -> list[str]:
        return [e.name for e in self.entries if isinstance(e, VarBind)]

    def __iter__(self) -> Iterator[ContextEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


EMPTY_CONTEXT = TypingContext()


def context_potential(ctx: TypingContext) -> Refinement:
    """Total free potential of a context: free-potential entries plus the
    outermost annotation of each variable binding."""
    parts: list[Refinement] = []
    for entry in ctx:
        if isinstance(entry, FreePot):
            parts.append(entry.potential)
        elif isinstance(entry, VarBind):
            t = entry.schema
            if isinstance(t, (Forall, UnknownT)):
                continue
            t = as_annot(t)
            if isinstance(t.inner, Subset):
                parts.append(subst_nu(t.potential, RVar(entry.name)))
            else:
                parts.append(t.potential)
    return r_sum(parts)
