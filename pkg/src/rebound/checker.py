"""Algorithmic type checking: constraint generation.

Checking a program against a schema produces a ConstraintSet holding the
subtyping / sharing / transfer / well-formedness records plus their normal
forms: boolean validity obligations (the Horn side) and potential
inequalities over numeric unknowns (the resource side).

Structural rules are folded into the syntax-directed traversal.  Free
potential is handled as a single symbolic pool: at every leaf the total
outstanding potential of the current context slice must cover the
expected type's outer potential (exactly, in constant-resource mode), and
ticks carve their cost out of a dedicated slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .lang import (
    INF, NU, TOP, ZERO, Abs, Add, And, Annot, App, Arrow, BoolB, Cond, ConsE,
    Eq, Expr, FalseE, Fix, Forall, FreePot, Hole, Impossible, IntB, IntLit,
    Ite, Le, Let, ListB, MatchList, Mult, NilE, Not, Num, PathCond,
    Refinement, RType, RVar, Sub, Subset, TrueE, TVarB, TVarEntry, Tick,
    TypingContext, UnboundVariable, Unknown, UnknownT, Var, VarBind,
    anf_check, as_annot, base_sort, conj, context_potential, fresh_unknown,
    interpret_atom, is_simple_atom, mult_is_lit, r_add, r_ge, r_implies,
    r_mul_const, r_sum, scalar, subst_nu, subst_ref, subst_type,
    subst_type_vars, type_free_vars,
)
from .logic import WfObligation, wf_type
from .lang import NAT_SORT, BOOL_SORT


class ShapeMismatch(Exception):
    pass


class NotAtomic(Exception):
    pass


class SkeletonMismatch(Exception):
    pass


class UnresolvedTypeVar(Exception):
    pass


class CheckUnsupported(Exception):
    pass


UPPER = "upperBound"
CONSTANT = "constantResource"


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubtypeC:
    ctx: TypingContext
    left: RType
    right: RType


@dataclass(frozen=True)
class ShareC:
    ctx: TypingContext
    whole: RType
    left: RType
    right: RType


@dataclass(frozen=True)
class TransferC:
    ctx: TypingContext
    before: Refinement
    after: Refinement


@dataclass(frozen=True)
class WfC:
    ctx: TypingContext
    potential: Refinement


TypingConstraint = Union[SubtypeC, ShareC, TransferC, WfC]


@dataclass(frozen=True)
class BoolC:
    """ctx |= goal (the boolean/Horn side)."""

    ctx: TypingContext
    goal: Refinement


@dataclass(frozen=True)
class ResC:
    """ctx |= term >= 0 (the resource side; term may contain Nat unknowns)."""

    ctx: TypingContext
    term: Refinement


@dataclass
class ConstraintSet:
    typing: list[TypingConstraint] = field(default_factory=list)
    bools: list[BoolC] = field(default_factory=list)
    resources: list[ResC] = field(default_factory=list)

    def extend(self, other: "ConstraintSet") -> None:
        self.typing.extend(other.typing)
        self.bools.extend(other.bools)
        self.resources.extend(other.resources)

    def add_bool(self, ctx: TypingContext, goal: Refinement) -> None:
        self.bools.append(BoolC(ctx, goal))

    def add_res(self, ctx: TypingContext, term: Refinement) -> None:
        if isinstance(term, Num) and term.value >= 0:
            return  # trivially valid
        self.resources.append(ResC(ctx, term))

    def __len__(self) -> int:
        return len(self.bools) + len(self.resources)


def _sub(a: Refinement, b: Refinement) -> Refinement:
    if b == ZERO:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Sub(a, b)


# ---------------------------------------------------------------------------
# Checker
# ---------------------------------------------------------------------------


class Checker:
    def __init__(self, mode: str = UPPER):
        assert mode in (UPPER, CONSTANT)
        self.mode = mode
        self.cs = ConstraintSet()

    # -- potential / multiplicity splitting ---------------------------------

    def split_potential(
        self, ctx: TypingContext, phi: Refinement
    ) -> tuple[Refinement, Refinement]:
        """Produce phi1, phi2 with phi = phi1 + phi2 (constraints emitted).

        Literal zero splits trivially; conditionals split structurally so the
        pieces stay expressible by linear templates under each guard.
        """
        if phi == ZERO:
            return ZERO, ZERO
        if isinstance(phi, Ite):
            t1, t2 = self.split_potential(ctx, phi.then)
            e1, e2 = self.split_potential(ctx, phi.other)
            return Ite(phi.cond, t1, e1), Ite(phi.cond, t2, e2)
        u1 = fresh_unknown(ctx, NAT_SORT)
        u2 = fresh_unknown(ctx, NAT_SORT)
        self.cs.add_res(ctx, u1)
        self.cs.add_res(ctx, u2)
        self.cs.add_res(ctx, _sub(phi, Add(u1, u2)))
        self.cs.add_res(ctx, _sub(Add(u1, u2), phi))
        return u1, u2

    def split_mult(self, ctx: TypingContext, m: Mult) -> tuple[Mult, Mult]:
        if m is INF:
            return INF, INF
        if m == ZERO:
            return ZERO, ZERO
        u1 = fresh_unknown(ctx, NAT_SORT)
        u2 = fresh_unknown(ctx, NAT_SORT)
        self.cs.add_res(ctx, u1)
        self.cs.add_res(ctx, u2)
        self.cs.add_res(ctx, _sub(m, Add(u1, u2)))
        self.cs.add_res(ctx, _sub(Add(u1, u2), m))
        return u1, u2

    def share_type(self, ctx: TypingContext, s: RType) -> tuple[RType, RType]:
        """Apportion a schema into two parts (fresh unknowns where needed)."""
        if isinstance(s, Forall):
            return s, s  # wf guarantees self-sharing
        t = as_annot(s)
        inner = t.inner
        if isinstance(inner, Arrow):
            m1, m2 = self.split_mult(ctx, inner.mult)
            p1, p2 = self.split_potential(ctx, t.potential)
            a1 = Arrow(inner.binder, inner.arg, inner.result, m1, inner.cost)
            a2 = Arrow(inner.binder, inner.arg, inner.result, m2, inner.cost)
            return Annot(a1, p1), Annot(a2, p2)
        assert isinstance(inner, Subset)
        b1, b2 = self.share_base(ctx, inner.base)
        nu_ctx = ctx.bind(NU, Annot(inner, ZERO))
        p1, p2 = self.split_potential(nu_ctx, t.potential)
        return (
            Annot(Subset(b1, inner.refinement), p1),
            Annot(Subset(b2, inner.refinement), p2),
        )

    def share_base(self, ctx: TypingContext, b: RType) -> tuple[RType, RType]:
        if isinstance(b, (BoolB, IntB)):
            return b, b
        if isinstance(b, ListB):
            e1, e2 = self.share_type(ctx, b.elem)
            return ListB(as_annot(e1)), ListB(as_annot(e2))
        if isinstance(b, TVarB):
            m1, m2 = self.split_mult(ctx, b.mult)
            return TVarB(m1, b.alpha), TVarB(m2, b.alpha)
        raise ShapeMismatch(f"cannot share base {b!r}")

    def share(self, ctx: TypingContext, s: RType) -> tuple[RType, RType, ConstraintSet]:
        """Spec-level sharing entry point: returns parts plus the constraints."""
        before = len(self.cs.resources)
        s1, s2 = self.share_type(ctx, s)
        emitted = ConstraintSet(resources=self.cs.resources[before:])
        self.cs.typing.append(ShareC(ctx, s, s1, s2))
        return s1, s2, emitted

    def share_context(
        self, ctx: TypingContext
    ) -> tuple[TypingContext, TypingContext]:
        """Split every binding's potential; conditions/tvars are copied."""
        left: list = []
        right: list = []
        prefix = TypingContext()
        for entry in ctx:
            if isinstance(entry, VarBind):
                s1, s2 = self.share_type(prefix, entry.schema)
                left.append(VarBind(entry.name, s1))
                right.append(VarBind(entry.name, s2))
            elif isinstance(entry, FreePot):
                p1, p2 = self.split_potential(prefix, entry.potential)
                left.append(FreePot(p1))
                right.append(FreePot(p2))
            else:
                left.append(entry)
                right.append(entry)
            prefix = prefix.push(entry)
        return TypingContext(tuple(left)), TypingContext(tuple(right))

    def share_binding(
        self, ctx: TypingContext, name: str
    ) -> tuple[RType, TypingContext]:
        """Share a single binding: returns the carved-off part and the
        context with the remainder in place (used by match).

        Only the base structure (element potentials) is split; the outer
        annotation stays with the remainder so no potential can silently
        vanish into the scrutinee judgment.
        """
        entries = []
        carved: Optional[RType] = None
        prefix = TypingContext()
        for entry in ctx:
            if isinstance(entry, VarBind) and entry.name == name and carved is None:
                t = as_annot(entry.schema)
                if not isinstance(t.inner, Subset):
                    raise ShapeMismatch(f"{name} is not scalar")
                b1, b2 = self.share_base(prefix, t.inner.base)
                carved = Annot(Subset(b1, t.inner.refinement), ZERO)
                entries.append(VarBind(name, Annot(Subset(b2, t.inner.refinement), t.potential)))
            else:
                entries.append(entry)
            prefix = prefix.push(entry)
        if carved is None:
            raise UnboundVariable(name)
        return carved, TypingContext(tuple(entries))

    def self_share(self, ctx: TypingContext) -> None:
        """Emit the constraints of ctx (share) ctx | ctx (for T-Abs/T-Fix)."""

        def zero_potential(nu_ctx: TypingContext, phi: Refinement) -> None:
            if phi == ZERO:
                return
            self.cs.add_res(nu_ctx, _sub(ZERO, phi))

        def zero_mult(c: TypingContext, m: Mult) -> None:
            if m is INF or m == ZERO:
                return
            self.cs.add_res(c, _sub(ZERO, m))

        def go_type(c: TypingContext, s: RType) -> None:
            if isinstance(s, Forall):
                return
            t = as_annot(s)
            if isinstance(t.inner, Arrow):
                zero_mult(c, t.inner.mult)
                zero_potential(c, t.potential)
                return
            assert isinstance(t.inner, Subset)
            nu_ctx = c.bind(NU, Annot(t.inner, ZERO))
            zero_potential(nu_ctx, t.potential)
            b = t.inner.base
            if isinstance(b, ListB):
                go_type(c, b.elem)
            elif isinstance(b, TVarB):
                zero_mult(c, b.mult)

        for entry in ctx:
            if isinstance(entry, VarBind):
                go_type(ctx, entry.schema)
            elif isinstance(entry, FreePot):
                zero_potential(ctx, entry.potential)

    def divide_context(self, ctx: TypingContext, m: Mult) -> TypingContext:
        """Context division for finite-multiplicity lambdas: find ctx' with
        m * ctx' = ctx."""
        if mult_is_lit(m, 1):
            return ctx
        if not isinstance(m, Num):
            raise CheckUnsupported("context division by a symbolic multiplicity")

        def divide_potential(c: TypingContext, phi: Refinement) -> Refinement:
            if phi == ZERO:
                return ZERO
            u = fresh_unknown(c, NAT_SORT)
            self.cs.add_res(c, u)
            scaled = r_mul_const(m.value, u)
            self.cs.add_res(c, _sub(phi, scaled))
            self.cs.add_res(c, _sub(scaled, phi))
            return u

        def divide_type(c: TypingContext, s: RType) -> RType:
            if isinstance(s, Forall):
                return s
            t = as_annot(s)
            if isinstance(t.inner, Arrow):
                inner = t.inner
                new_m = inner.mult if inner.mult is INF else divide_potential(c, inner.mult)
                return Annot(
                    Arrow(inner.binder, inner.arg, inner.result, new_m, inner.cost),
                    divide_potential(c, t.potential),
                )
            assert isinstance(t.inner, Subset)
            b = t.inner.base
            if isinstance(b, ListB):
                b = ListB(as_annot(divide_type(c, b.elem)))
            elif isinstance(b, TVarB):
                new_m = b.mult if b.mult is INF else divide_potential(c, b.mult)
                b = TVarB(new_m, b.alpha)
            nu_ctx = c.bind(NU, Annot(Subset(b, t.inner.refinement), ZERO))
            return Annot(
                Subset(b, t.inner.refinement), divide_potential(nu_ctx, t.potential)
            )

        entries = []
        for entry in ctx:
            if isinstance(entry, VarBind):
                entries.append(VarBind(entry.name, divide_type(ctx, entry.schema)))
            elif isinstance(entry, FreePot):
                entries.append(FreePot(divide_potential(ctx, entry.potential)))
            else:
                entries.append(entry)
        return TypingContext(tuple(entries))

    # -- subtyping ------------------------------------------------------------

    def subtype(self, ctx: TypingContext, t1: RType, t2: RType) -> ConstraintSet:
        before_b = len(self.cs.bools)
        before_r = len(self.cs.resources)
        self._subtype(ctx, t1, t2)
        emitted = ConstraintSet(
            bools=self.cs.bools[before_b:], resources=self.cs.resources[before_r:]
        )
        self.cs.typing.append(SubtypeC(ctx, t1, t2))
        return emitted

    def _ge_obligation(self, ctx: TypingContext, big: Refinement, small: Refinement) -> None:
        self.cs.add_res(ctx, _sub(big, small))
        if self.mode == CONSTANT:
            self.cs.add_res(ctx, _sub(small, big))

    def _mult_ge(self, ctx: TypingContext, big: Mult, small: Mult) -> None:
        if big is INF:
            # The unrestricted multiplicity dominates in both modes: it
            # carries no potential, so constant-resource mode is unaffected.
            return
        if small is INF:
            # finite >= inf is unsatisfiable
            self.cs.add_bool(ctx, Not(TOP))
            return
        self._ge_obligation(ctx, big, small)

    def _subtype(self, ctx: TypingContext, t1: RType, t2: RType) -> None:
        if isinstance(t1, UnknownT) or isinstance(t2, UnknownT):
            return  # Sub-TBot; the unknown type is below/above everything here
        if isinstance(t1, Forall) or isinstance(t2, Forall):
            raise CheckUnsupported("subtyping between schemas")
        t1 = as_annot(t1)
        t2 = as_annot(t2)
        i1, i2 = t1.inner, t2.inner
        if isinstance(i1, Subset) and isinstance(i2, Subset):
            self._subtype_base(ctx, i1.base, i2.base)
            nu_ctx = ctx.bind(NU, Annot(Subset(i1.base, TOP), ZERO))
            if i2.refinement != TOP:
                self.cs.add_bool(nu_ctx, r_implies(i1.refinement, i2.refinement))
            nu_ctx_r = ctx.bind(NU, Annot(i1, ZERO))
            self._ge_obligation(nu_ctx_r, t1.potential, t2.potential)
            return
        if isinstance(i1, Arrow) and isinstance(i2, Arrow):
            self._subtype(ctx, i2.arg, i1.arg)
            inner_ctx = ctx.bind(i2.binder, as_annot(i2.arg))
            result1 = i1.result
            if i1.binder != i2.binder:
                result1 = subst_type_vars(as_annot(result1), {i1.binder: RVar(i2.binder)})
            self._subtype(inner_ctx, result1, i2.result)
            self._mult_ge(ctx, i1.mult, i2.mult)
            self._ge_obligation(ctx, t1.potential, t2.potential)
            return
        raise ShapeMismatch(f"{t1!r} vs {t2!r}")

    def _subtype_base(self, ctx: TypingContext, b1: RType, b2: RType) -> None:
        if isinstance(b1, UnknownT) or isinstance(b2, UnknownT):
            return
        if isinstance(b1, BoolB) and isinstance(b2, BoolB):
            return
        if isinstance(b1, IntB) and isinstance(b2, IntB):
            return
        if isinstance(b1, ListB) and isinstance(b2, ListB):
            self._subtype(ctx, b1.elem, b2.elem)
            return
        if isinstance(b1, TVarB) and isinstance(b2, TVarB) and b1.alpha == b2.alpha:
            self._mult_ge(ctx, b1.mult, b2.mult)
            return
        raise ShapeMismatch(f"{b1!r} vs {b2!r}")

    # -- transfer ---------------------------------------------------------------

    def transfer(self, ctx: TypingContext, ctx2: TypingContext) -> TransferC:
        """Assert total-potential equality between two context shapes."""
        names1 = [e.name for e in ctx if isinstance(e, VarBind)]
        names2 = [e.name for e in ctx2 if isinstance(e, VarBind)]
        if names1 != names2:
            raise SkeletonMismatch(f"{names1} vs {names2}")
        before = context_potential(ctx)
        after = context_potential(ctx2)
        c = TransferC(ctx, before, after)
        self.cs.typing.append(c)
        self.cs.add_res(ctx, _sub(before, after))
        self.cs.add_res(ctx, _sub(after, before))
        return c

    # -- atoms ------------------------------------------------------------------

    def infer_atom(self, ctx: TypingContext, a: Expr) -> RType:
        """Base type of an interpretable atom (SimpAtom-* rules)."""
        if isinstance(a, Var):
            s = ctx.lookup(a.name)
            if isinstance(s, Forall):
                raise NotAtomic(f"{a.name} has a polymorphic type")
            t = as_annot(s)
            if not isinstance(t.inner, Subset):
                raise NotAtomic(f"{a.name} is function-typed")
            return t.inner.base
        if isinstance(a, TrueE) or isinstance(a, FalseE):
            return BoolB()
        if isinstance(a, IntLit):
            return IntB()
        if isinstance(a, NilE):
            return ListB(scalar(BoolB()))
        if isinstance(a, ConsE):
            tail_base = self.infer_atom(ctx, a.tail)
            if isinstance(tail_base, ListB) and not isinstance(a.tail, NilE):
                return tail_base
            head_base = self.infer_atom(ctx, a.head)
            return ListB(scalar(head_base))
        raise NotAtomic(repr(a))

    def check_atom(self, ctx: TypingContext, a: Expr, expected: RType) -> None:
        """Check an atom against an expected type, consuming the slice."""
        if isinstance(a, (Abs, Fix)):
            self.check_expr(ctx, a, expected)
            return
        if isinstance(a, Var):
            s = ctx.lookup(a.name)
            if isinstance(s, Forall):
                inst, _ = self.instantiate(ctx, s, expected=expected)
                t = as_annot(inst)
            else:
                t = as_annot(s)
            if isinstance(t.inner, Arrow):
                if isinstance(expected, UnknownT):
                    return
                exp_t = as_annot(expected)
                if not isinstance(exp_t.inner, Arrow):
                    raise ShapeMismatch(f"{a.name} is function-typed")
                pooled = Annot(t.inner, context_potential(ctx))
                self._subtype(ctx, pooled, exp_t)
                self.cs.typing.append(SubtypeC(ctx, pooled, expected))
                return
        if not is_simple_atom(a):
            raise NotAtomic(repr(a))
        if isinstance(expected, UnknownT):
            raise ShapeMismatch("cannot check an atom against the unknown type")
        exp = as_annot(expected)
        if isinstance(exp.inner, Arrow):
            raise ShapeMismatch(f"atom {a!r} against {expected!r}")
        assert isinstance(exp.inner, Subset)
        self._check_simple_atom(ctx, a, exp)

    def _check_simple_atom(self, ctx: TypingContext, a: Expr, exp: Annot) -> None:
        exp_inner = exp.inner
        assert isinstance(exp_inner, Subset)
        if isinstance(a, ConsE):
            if not isinstance(exp_inner.base, ListB):
                raise ShapeMismatch(f"cons against {exp_inner.base!r}")
            elem_t = as_annot(exp_inner.base.elem)
            c_head, rest = self.share_context(ctx)
            c_tail, c_out = self.share_context(rest)
            self.check_atom(c_head, a.head, elem_t)
            tail_exp = Annot(Subset(ListB(elem_t), TOP), ZERO)
            self.check_atom(c_tail, a.tail, tail_exp)
            self._finish_atom(c_out, a, exp_inner.base, exp)
            return
        if isinstance(a, Var):
            base = self.infer_atom(ctx, a)
            pooled = Annot(
                Subset(base, Eq(RVar(NU), interpret_atom(a))), context_potential(ctx)
            )
            self._subtype(ctx, pooled, exp)
            self.cs.typing.append(SubtypeC(ctx, pooled, exp))
            if self.mode == CONSTANT:
                # Reading a variable must not silently discard its stored
                # potential: the pooled equality handles totals, and element
                # potentials are matched by the subtype equalities above.
                pass
            return
        # true/false/nil/int literals: structureless bases.
        base = self.infer_atom(ctx, a)
        if isinstance(a, NilE):
            base = exp_inner.base  # nil inhabits every list type
        self._finish_atom(ctx, a, base, exp)

    def _finish_atom(self, ctx: TypingContext, a: Expr, base: RType, exp: Annot) -> None:
        exp_inner = exp.inner
        assert isinstance(exp_inner, Subset)
        if type(base) is not type(exp_inner.base):
            raise ShapeMismatch(f"{base!r} vs {exp_inner.base!r}")
        nu_ctx = ctx.bind(NU, Annot(Subset(base, TOP), ZERO))
        if exp_inner.refinement != TOP:
            self.cs.add_bool(
                nu_ctx, r_implies(Eq(RVar(NU), interpret_atom(a)), exp_inner.refinement)
            )
        pool = context_potential(ctx)
        pot_ctx = nu_ctx.with_fact(Eq(RVar(NU), interpret_atom(a)))
        self._ge_obligation(pot_ctx, pool, exp.potential)

    # -- instantiation -----------------------------------------------------------

    def instantiate(
        self,
        ctx: TypingContext,
        schema: RType,
        arg_base: Optional[RType] = None,
        expected: Optional[RType] = None,
    ) -> tuple[RType, dict[str, RType]]:
        """Strip quantifiers, unifying each variable's base shape against
        the argument and/or the expected type, then substituting annotated
        subset types with fresh refinement/potential unknowns."""
        alphas: list[str] = []
        body = schema
        while isinstance(body, Forall):
            alphas.append(body.alpha)
            body = body.body
        if not alphas:
            return schema, {}
        t = as_annot(body)
        if not isinstance(t.inner, Arrow):
            raise CheckUnsupported("polymorphic non-arrow binding")
        assignment: dict[str, RType] = {}
        alpha_set = set(alphas)
        if arg_base is not None:
            decl_arg = as_annot(t.inner.arg)
            if isinstance(decl_arg.inner, Subset):
                self._unify_base(decl_arg.inner.base, arg_base, alpha_set, assignment)
        if expected is not None:
            self._unify_shape(body, expected, alpha_set, assignment)
        out: RType = body
        for alpha in alphas:
            if alpha not in assignment:
                raise UnresolvedTypeVar(alpha)
            base = assignment[alpha]
            nu_ctx = ctx.bind(NU, Annot(Subset(base, TOP), ZERO))
            psi = fresh_unknown(nu_ctx, BOOL_SORT)
            phi = fresh_unknown(nu_ctx, NAT_SORT)
            self.cs.add_res(nu_ctx, phi)
            replacement = Annot(Subset(base, psi), phi)
            out = subst_type(out, alpha, replacement)
        return out, assignment

    def _unify_shape(
        self,
        declared: RType,
        expected: RType,
        alphas: set[str],
        assignment: dict[str, RType],
    ) -> None:
        """Unify type-variable base shapes against an expected type, ignoring
        unknown (?) positions."""
        if isinstance(declared, UnknownT) or isinstance(expected, UnknownT):
            return
        if isinstance(declared, Forall) or isinstance(expected, Forall):
            return
        d = as_annot(declared)
        x = as_annot(expected)
        if isinstance(d.inner, Subset) and isinstance(x.inner, Subset):
            self._unify_base(d.inner.base, x.inner.base, alphas, assignment)
            return
        if isinstance(d.inner, Arrow) and isinstance(x.inner, Arrow):
            self._unify_shape(d.inner.arg, x.inner.arg, alphas, assignment)
            self._unify_shape(d.inner.result, x.inner.result, alphas, assignment)

    def _unify_base(
        self,
        declared: RType,
        actual: RType,
        alphas: set[str],
        assignment: dict[str, RType],
    ) -> None:
        if isinstance(declared, UnknownT) or isinstance(actual, UnknownT):
            return
        if isinstance(declared, TVarB) and declared.alpha in alphas:
            prev = assignment.get(declared.alpha)
            if prev is not None and type(prev) is not type(actual):
                raise ShapeMismatch(f"{prev!r} vs {actual!r}")
            if prev is None:
                assignment[declared.alpha] = actual
            return
        if isinstance(declared, ListB) and isinstance(actual, ListB):
            d_elem = as_annot(declared.elem)
            a_elem = as_annot(actual.elem)
            if isinstance(d_elem.inner, Subset) and isinstance(a_elem.inner, Subset):
                self._unify_base(d_elem.inner.base, a_elem.inner.base, alphas, assignment)
            return
        # Other shapes carry no instantiation information.

    # -- expression synthesis (for let-bound terms) ------------------------------

    def synth_expr(self, ctx: TypingContext, e: Expr) -> RType:
        if isinstance(e, Tick):
            if e.cost >= 0:
                c_pay, c_rest = self.share_context(ctx)
                pay_pool = context_potential(c_pay)
                self._ge_obligation(ctx, pay_pool, Num(e.cost))
                return self.synth_expr(c_rest, e.body)
            return self.synth_expr(ctx.push(FreePot(Num(-e.cost))), e.body)
        if isinstance(e, App):
            return self.synth_app(ctx, e)
        if isinstance(e, Var):
            s = ctx.lookup(e.name)
            if isinstance(s, Forall) or (
                isinstance(s, Annot) and isinstance(s.inner, Arrow)
            ):
                return s
            # Scalar variable: most precise refinement, pooled potential.
            base = self.infer_atom(ctx, e)
            pool = context_potential(ctx)
            return Annot(Subset(base, Eq(RVar(NU), interpret_atom(e))), pool)
        if is_simple_atom(e):
            if isinstance(e, ConsE):
                raise CheckUnsupported("cons in synthesis position")
            base = self.infer_atom(ctx, e)
            pool = context_potential(ctx)
            return Annot(Subset(base, Eq(RVar(NU), interpret_atom(e))), pool)
        if isinstance(e, Let):
            if isinstance(e.body, Var) and e.body.name == e.binder:
                # let x = e1 in x: the chain's type is e1's, and nothing may
                # leak the local binder into the enclosing scope.
                return self.synth_expr(ctx, e.bound)
            c1, c2 = self.share_context(ctx)
            t1 = self.synth_expr(c1, e.bound)
            result = self.synth_expr(c2.bind(e.binder, t1), e.body)
            leaked = type_free_vars(result) & {e.binder}
            if leaked:
                raise CheckUnsupported(
                    f"let-bound result type leaks local binder {e.binder}"
                )
            return result
        raise CheckUnsupported(
            f"cannot synthesize a type for let-bound {type(e).__name__}"
        )

    def synth_app(self, ctx: TypingContext, e: App) -> RType:
        fn, args = e, []
        while isinstance(fn, App):
            args.append(fn.arg)
            fn = fn.fn
        args.reverse()
        if len(args) != 1:
            raise CheckUnsupported("applications must be in a-normal form")
        arg = args[0]
        if not isinstance(fn, Var):
            raise CheckUnsupported("application head must be a variable in ANF")

        c_fn, c_arg = self.share_context(ctx)
        schema = c_fn.lookup(fn.name)
        if isinstance(schema, Forall):
            arg_base: Optional[RType] = None
            try:
                arg_base = self.infer_atom(c_arg, arg)
            except NotAtomic:
                pass
            inst, _ = self.instantiate(c_fn, schema, arg_base)
            t = as_annot(inst)
        else:
            t = as_annot(schema)
        if not isinstance(t.inner, Arrow):
            raise ShapeMismatch(f"{fn.name} is not a function")
        arrow_t = t.inner
        # One application consumes one use of the function.
        self._mult_ge(c_fn, arrow_t.mult, Num(1))
        arg_type = as_annot(arrow_t.arg)
        if isinstance(arg_type.inner, Subset):
            # First-order: substitute the interpretation into the result.
            self.check_atom(c_arg, arg, arg_type)
            result = as_annot(arrow_t.result)
            interp = interpret_atom(arg) if is_simple_atom(arg) else None
            if interp is None:
                raise NotAtomic(f"scalar argument {arg!r} is not interpretable")
            return subst_type_vars(result, {arrow_t.binder: interp})
        # Higher-order argument.
        self.check_atom(c_arg, arg, arg_type)
        return as_annot(arrow_t.result)

    # -- main checking ------------------------------------------------------------

    def check_expr(self, ctx: TypingContext, e: Expr, expected: RType) -> None:
        if isinstance(e, Impossible):
            self.cs.add_bool(ctx, Not(TOP))
            return
        if isinstance(e, Tick):
            if e.cost >= 0:
                c_pay, c_rest = self.share_context(ctx)
                pay_pool = context_potential(c_pay)
                self._ge_obligation(ctx, pay_pool, Num(e.cost))
                self.check_expr(c_rest, e.body, expected)
            else:
                self.check_expr(ctx.push(FreePot(Num(-e.cost))), e.body, expected)
            return
        if isinstance(e, Abs):
            exp = as_annot(expected)
            if not isinstance(exp.inner, Arrow):
                raise ShapeMismatch(f"lambda against {expected!r}")
            arrow_t = exp.inner
            if arrow_t.mult is INF:
                self.self_share(ctx)
                if exp.potential != ZERO:
                    self.cs.add_res(ctx, _sub(ZERO, exp.potential))
            else:
                ctx = self.divide_context(ctx, arrow_t.mult)
                if exp.potential != ZERO:
                    self.cs.add_res(ctx, _sub(ZERO, exp.potential))
            arg_t = as_annot(arrow_t.arg)
            result_t = as_annot(arrow_t.result)
            if arrow_t.binder != e.binder:
                result_t = subst_type_vars(result_t, {arrow_t.binder: RVar(e.binder)})
                arg_t = as_annot(arg_t)
            inner = ctx.bind(e.binder, arg_t)
            self.check_expr(inner, e.body, result_t)
            return
        if isinstance(e, Fix):
            exp = as_annot(expected)
            if not isinstance(exp.inner, Arrow):
                raise ShapeMismatch(f"fix against {expected!r}")
            arrow_t = exp.inner
            self.self_share(ctx)
            if exp.potential != ZERO:
                self.cs.add_res(ctx, _sub(ZERO, exp.potential))
            rec_type = Annot(
                Arrow(arrow_t.binder, arrow_t.arg, arrow_t.result, INF, arrow_t.cost),
                ZERO,
            )
            arg_t = as_annot(arrow_t.arg)
            result_t = as_annot(arrow_t.result)
            if arrow_t.binder != e.arg_binder:
                result_t = subst_type_vars(
                    result_t, {arrow_t.binder: RVar(e.arg_binder)}
                )
            inner = ctx.bind(e.fun_binder, rec_type).bind(e.arg_binder, arg_t)
            self.check_expr(inner, e.body, result_t)
            return
        if isinstance(e, Cond):
            guard_base = self.infer_atom(ctx, e.guard)
            if not isinstance(guard_base, BoolB):
                raise ShapeMismatch("conditional guard must be boolean")
            fact = interpret_atom(e.guard)
            self.check_expr(ctx.with_fact(fact), e.then_branch, expected)
            self.check_expr(ctx.with_fact(Not(fact)), e.else_branch, expected)
            return
        if isinstance(e, MatchList):
            scrut = e.scrutinee
            if isinstance(scrut, Var):
                carved, ctx2 = self.share_binding(ctx, scrut.name)
                carved_t = as_annot(carved)
                if not (
                    isinstance(carved_t.inner, Subset)
                    and isinstance(carved_t.inner.base, ListB)
                ):
                    raise ShapeMismatch("match scrutinee must be a list")
                elem_t = as_annot(carved_t.inner.base.elem)
            elif isinstance(scrut, NilE):
                ctx2 = ctx
                elem_t = scalar(BoolB())
            else:
                raise ShapeMismatch("match scrutinee must be a variable or nil")
            fact_nil = Eq(interpret_atom(scrut), ZERO)
            self.check_expr(ctx2.with_fact(fact_nil), e.nil_branch, expected)
            tail_t = Annot(Subset(ListB(elem_t), TOP), ZERO)
            cons_ctx = (
                ctx2.bind(e.head_binder, elem_t)
                .bind(e.tail_binder, tail_t)
                .with_fact(Eq(interpret_atom(scrut), Add(RVar(e.tail_binder), Num(1))))
            )
            self.check_expr(cons_ctx, e.cons_branch, expected)
            return
        if isinstance(e, Let):
            c1, c2 = self.share_context(ctx)
            t1 = self.synth_expr(c1, e.bound)
            self.check_expr(c2.bind(e.binder, t1), e.body, expected)
            return
        if isinstance(e, App):
            t = self.synth_app(ctx, e)
            # The synthesized result must flow into the expected type.
            self._subtype(ctx, t, as_annot(expected))
            self.cs.typing.append(SubtypeC(ctx, t, expected))
            return
        # Atoms.
        self.check_atom(ctx, e, expected)

    def check_schema(self, ctx: TypingContext, e: Expr, schema: RType) -> None:
        while isinstance(schema, Forall):
            ctx = ctx.push(TVarEntry(schema.alpha))
            schema = schema.body
        self.check_expr(ctx, e, schema)


def check(
    ctx: TypingContext, e: Expr, schema: RType, mode: str = UPPER
) -> ConstraintSet:
    """Generate the constraint set for e against schema under ctx."""
    if not anf_check(e):
        raise NotAtomic("expression is not in a-normal form")
    checker = Checker(mode)
    checker.check_schema(ctx, e, schema)
    return checker.cs


# ---------------------------------------------------------------------------
# Value potential (the denotational side, used by tests and the CLI)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueConsistencyReport:
    satisfied: bool
    required_potential: Refinement
    stored_potential: Refinement


def value_potential(
    v: Expr, schema: RType, instantiation: Optional[dict[str, RType]] = None
) -> Refinement:
    """The potential stored in a closed value with respect to its type."""
    instantiation = instantiation or {}
    if isinstance(schema, Forall):
        return ZERO
    t = as_annot(schema)
    if isinstance(t.inner, Arrow):
        return t.potential
    assert isinstance(t.inner, Subset)
    base = t.inner.base
    if isinstance(base, TVarB):
        if base.alpha not in instantiation:
            raise ShapeMismatch(f"uninstantiated type variable {base.alpha}")
        inst = subst_type(
            Annot(Subset(base, TOP), t.potential), base.alpha, instantiation[base.alpha]
        )
        return value_potential(v, inst, instantiation)
    if isinstance(base, (BoolB, IntB)):
        if isinstance(base, BoolB) and not isinstance(v, (TrueE, FalseE)):
            raise ShapeMismatch(f"{v!r} is not a boolean value")
        if isinstance(base, IntB) and not isinstance(v, IntLit):
            raise ShapeMismatch(f"{v!r} is not an integer value")
        return subst_nu(t.potential, interpret_atom(v))
    if isinstance(base, ListB):
        items = []
        cursor = v
        while isinstance(cursor, ConsE):
            items.append(cursor.head)
            cursor = cursor.tail
        if not isinstance(cursor, NilE):
            raise ShapeMismatch(f"{v!r} is not a list value")
        parts = [subst_nu(t.potential, Num(len(items)))]
        for item in items:
            parts.append(value_potential(item, as_annot(base.elem), instantiation))
        return r_sum(parts)
    raise ShapeMismatch(f"cannot compute potential against {schema!r}")


def value_conditions(
    v: Expr, schema: RType, instantiation: Optional[dict[str, RType]] = None
) -> Refinement:
    """The logical conditions a value must satisfy for its type."""
    instantiation = instantiation or {}
    if isinstance(schema, Forall):
        return TOP
    t = as_annot(schema)
    if isinstance(t.inner, Arrow):
        return TOP
    assert isinstance(t.inner, Subset)
    base = t.inner.base
    if isinstance(base, TVarB):
        if base.alpha not in instantiation:
            return TOP
        inst = subst_type(
            Annot(Subset(base, t.inner.refinement), ZERO),
            base.alpha,
            instantiation[base.alpha],
        )
        return value_conditions(v, inst, instantiation)
    if isinstance(base, (BoolB, IntB)):
        return subst_nu(t.inner.refinement, interpret_atom(v))
    if isinstance(base, ListB):
        items = []
        cursor = v
        while isinstance(cursor, ConsE):
            items.append(cursor.head)
            cursor = cursor.tail
        parts = [subst_nu(t.inner.refinement, Num(len(items)))]
        for item in items:
            parts.append(value_conditions(item, as_annot(base.elem), instantiation))
        return conj(parts)
    return TOP


def consistency_report(
    v: Expr,
    schema: RType,
    available: int,
    instantiation: Optional[dict[str, RType]] = None,
) -> ValueConsistencyReport:
    """Check a closed value against its judgment: conditions hold and the
    available budget covers the stored potential."""
    from .logic import eval_ref

    required = value_potential(v, schema, instantiation)
    conditions = value_conditions(v, schema, instantiation)
    try:
        ok = bool(eval_ref(conditions, {})) and eval_ref(required, {}) <= available
    except Exception:
        ok = False
    return ValueConsistencyReport(ok, required, Num(available))
