"""Small-step cost-semantics interpreter.

A machine state is a closed expression plus a nonnegative resource counter;
tick expressions consume (or release) resources and every other rule leaves
the counter unchanged.  The interpreter doubles as the runtime oracle for
soundness tests: `high_water` measures the minimal budget under which an
evaluation never goes negative.

Bodyless components whose names appear in PRIMITIVES evaluate through a
delta rule (applications of primitive symbols reduce to values at no cost);
everything else follows the core rules exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

from .lang import (
    Abs, App, Cond, ConsE, Expr, FALSE, FalseE, Fix, Impossible, IntLit, Let,
    MatchList, NIL, NilE, TRUE, Tick, TrueE, Var, is_value, subst_expr,
)


class Stuck(Exception):
    def __init__(self, reason: str, state: "MachineState"):
        super().__init__(reason)
        self.reason = reason
        self.state = state


class OutOfFuel(Exception):
    pass


class Diverged(Exception):
    pass


OUT_OF_RESOURCE = "OutOfResource"
NO_RULE = "NoRule"


@dataclass(frozen=True)
class PrimVal:
    """A partially applied primitive component."""

    name: str
    args: tuple[Expr, ...] = ()


def _bool(b: bool) -> Expr:
    return TRUE if b else FALSE


def _as_int(v: Expr) -> int:
    if isinstance(v, IntLit):
        return v.value
    raise ValueError(f"expected an integer value, got {v!r}")


def _as_bool(v: Expr) -> bool:
    if isinstance(v, TrueE):
        return True
    if isinstance(v, FalseE):
        return False
    raise ValueError(f"expected a boolean value, got {v!r}")


# name -> (arity, function on values)
PRIMITIVES: dict[str, tuple[int, Callable[..., Expr]]] = {
    "inc": (1, lambda a: IntLit(_as_int(a) + 1)),
    "dec": (1, lambda a: IntLit(_as_int(a) - 1)),
    "neg": (1, lambda a: IntLit(-_as_int(a))),
    "not": (1, lambda a: _bool(not _as_bool(a))),
    "plus": (2, lambda a, b: IntLit(_as_int(a) + _as_int(b))),
    "minus": (2, lambda a, b: IntLit(_as_int(a) - _as_int(b))),
    "eq": (2, lambda a, b: _bool(_as_int(a) == _as_int(b))),
    "neq": (2, lambda a, b: _bool(_as_int(a) != _as_int(b))),
    "leq": (2, lambda a, b: _bool(_as_int(a) <= _as_int(b))),
    "lt": (2, lambda a, b: _bool(_as_int(a) < _as_int(b))),
    "geq": (2, lambda a, b: _bool(_as_int(a) >= _as_int(b))),
    "gt": (2, lambda a, b: _bool(_as_int(a) > _as_int(b))),
    "and": (2, lambda a, b: _bool(_as_bool(a) and _as_bool(b))),
    "or": (2, lambda a, b: _bool(_as_bool(a) or _as_bool(b))),
    "beq": (2, lambda a, b: _bool(_as_bool(a) == _as_bool(b))),
}

PRIM_CONSTANTS: dict[str, Expr] = {
    "zero": IntLit(0),
    "one": IntLit(1),
}


@dataclass(frozen=True)
class MachineState:
    expr: Expr
    resources: int


def _is_runtime_value(e: Expr) -> bool:
    if isinstance(e, Var):
        return e.name in PRIMITIVES  # primitive symbol awaiting arguments
    return is_value(e)


def _subst_prims(e: Expr) -> Expr:
    return e


def step(s: MachineState) -> MachineState:
    """One step of the cost semantics; raises Stuck when no rule applies."""
    e, q = s.expr, s.resources
    if isinstance(e, Tick):
        if e.cost > q:
            raise Stuck(OUT_OF_RESOURCE, s)
        return MachineState(e.body, q - e.cost)
    if isinstance(e, Cond):
        if isinstance(e.guard, TrueE):
            return MachineState(e.then_branch, q)
        if isinstance(e.guard, FalseE):
            return MachineState(e.else_branch, q)
        raise Stuck(NO_RULE, s)
    if isinstance(e, MatchList):
        scrut = e.scrutinee
        if isinstance(scrut, NilE):
            return MachineState(e.nil_branch, q)
        if isinstance(scrut, ConsE):
            body = subst_expr(e.cons_branch, e.head_binder, scrut.head)
            body = subst_expr(body, e.tail_binder, scrut.tail)
            return MachineState(body, q)
        raise Stuck(NO_RULE, s)
    if isinstance(e, Let):
        if _is_runtime_value(e.bound):
            return MachineState(subst_expr(e.body, e.binder, e.bound), q)
        inner = step(MachineState(e.bound, q))
        return MachineState(Let(inner.expr, e.binder, e.body), inner.resources)
    if isinstance(e, App):
        fn = e.fn
        if isinstance(fn, Abs):
            return MachineState(subst_expr(fn.body, fn.binder, e.arg), q)
        if isinstance(fn, Fix):
            body = subst_expr(fn.body, fn.fun_binder, fn)
            body = subst_expr(body, fn.arg_binder, e.arg)
            return MachineState(body, q)
        prim = _prim_of(fn)
        if prim is not None and _is_runtime_value(e.arg):
            name, args = prim
            arity, func = PRIMITIVES[name]
            args = args + (e.arg,)
            if len(args) == arity:
                try:
                    return MachineState(func(*args), q)
                except ValueError:
                    raise Stuck(NO_RULE, s) from None
            return MachineState(_prim_expr(name, args), q)
        raise Stuck(NO_RULE, s)
    raise Stuck(NO_RULE, s)


def _prim_of(e: Expr) -> Optional[tuple[str, tuple[Expr, ...]]]:
    """Recognize a (partially applied) primitive symbol."""
    if isinstance(e, Var) and e.name in PRIMITIVES:
        return e.name, ()
    if isinstance(e, App):
        inner = _prim_of(e.fn)
        if inner is not None and _is_runtime_value(e.arg):
            return inner[0], inner[1] + (e.arg,)
    return None


def _prim_expr(name: str, args: tuple[Expr, ...]) -> Expr:
    out: Expr = Var(name)
    for a in args:
        out = App(out, a)
    return out


def _done(e: Expr) -> bool:
    if _is_runtime_value(e):
        return True
    # A partially applied primitive is a value-like normal form.
    return _prim_of(e) is not None


def eval(e: Expr, budget: int, fuel: int = 10**6) -> tuple[Expr, int]:
    """Run to a value within `fuel` steps; returns (value, leftover budget).

    Raises Stuck (with reason OutOfResource or NoRule) or OutOfFuel.
    """
    state = MachineState(e, budget)
    for _ in range(fuel):
        if _done(state.expr):
            return state.expr, state.resources
        state = step(state)
    raise OutOfFuel()


_SLACK = 10**9


def high_water(e: Expr, fuel: int = 10**6) -> int:
    """Minimal budget under which evaluation of e never goes negative.

    Computed in one pass: run with a budget large enough never to get stuck
    on a tick and report the maximum prefix deficit (the drop below the
    starting level).  Raises Diverged when fuel runs out.
    """
    state = MachineState(e, _SLACK)
    lowest = _SLACK
    for _ in range(fuel):
        if _done(state.expr):
            return _SLACK - lowest
        state = step(state)
        lowest = min(lowest, state.resources)
    raise Diverged()


def eval_with_stats(e: Expr, budget: int, fuel: int = 10**6) -> tuple[Expr, int, int]:
    """eval plus the number of steps taken (for reporting)."""
    state = MachineState(e, budget)
    steps = 0
    while steps < fuel:
        if _done(state.expr):
            return state.expr, state.resources, steps
        state = step(state)
        steps += 1
    raise OutOfFuel()


def list_value(items: list[Expr]) -> Expr:
    out: Expr = NIL
    for item in reversed(items):
        out = ConsE(item, out)
    return out


def value_to_python(v: Expr) -> Union[bool, int, list, str]:
    """Convert a runtime value into plain Python data for reports."""
    if isinstance(v, TrueE):
        return True
    if isinstance(v, FalseE):
        return False
    if isinstance(v, IntLit):
        return v.value
    if isinstance(v, NilE):
        return []
    if isinstance(v, ConsE):
        rest = value_to_python(v.tail)
        assert isinstance(rest, list)
        return [value_to_python(v.head)] + rest
    if isinstance(v, (Abs, Fix)):
        return "<function>"
    return f"<{v!r}>"
