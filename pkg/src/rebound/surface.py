"""Surface syntax: parsing, printing, and desugaring to core ANF.

The concrete grammar is documented in docs/grammar.md.  Programs declare
components and goals with annotated type signatures; bodies are written in
a small functional notation and desugared to a-normal form with a tick
inserted around every application (cost taken from the applied arrow).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .lang import (
    BOOL, INF, INT, NU, TOP, ZERO, Abs, Add, And, Annot, App, Arrow, BoolB,
    Cond, ConsE, Eq, Expr, FALSE, FalseE, Fix, Forall, Hole, Impossible, IntB,
    IntLit, Ite, Le, Let, ListB, MatchList, MulConst, Mult, NIL, NilE, Not,
    Num, Refinement, RType, RVar, Sub, Subset, TRUE, Tick, Top, TrueE, TVarB,
    TypingContext, UnboundVariable, Unknown, UnknownT, Var, as_annot, as_mult,
    conj, is_atom, r_ge, scalar, tvar,
)


class SourceSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class DuplicateName(Exception):
    pass


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

KEYWORDS = {
    "metric", "component", "goal", "free", "if", "then", "else", "match",
    "with", "nil", "cons", "let", "in", "tick", "impossible", "fix", "len",
    "ite", "True", "False", "Nil", "Cons", "Bool", "Int", "Nat", "List",
    "costs", "appcount",
}

SYMBOLS = [
    "::", "->", "||", "&&", "==", "!=", "<=", ">=",
    "(", ")", "{", "}", "[", "]", "^", "*", "+", "-", "<", ">", "=",
    ":", ".", ",", ";", "|", "\\", "!",
]


@dataclass
class Token:
    kind: str  # "name" | "int" | "sym" | "kw" | "eof"
    text: str
    line: int
    col: int


def lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "name"
            tokens.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token("sym", sym, line, col))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise SourceSyntaxError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Module structure
# ---------------------------------------------------------------------------


@dataclass
class Decl:
    name: str
    schema: RType
    body: Optional[Expr]  # surface body after parse; core ANF after desugar
    is_goal: bool


@dataclass
class SourceModule:
    components: list[Decl] = field(default_factory=list)
    goals: list[Decl] = field(default_factory=list)
    metric: str = "appcount"
    free_potentials: list[Refinement] = field(default_factory=list)

    def decls(self) -> list[Decl]:
        return self.components + self.goals

    def lookup(self, name: str) -> Optional[Decl]:
        for d in self.decls():
            if d.name == name:
                return d
        return None


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class Parser:
    def __init__(self, tokens: list[Token], metric: str = "appcount"):
        self.tokens = tokens
        self.pos = 0
        self.metric = metric

    # -- token plumbing ------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.text == text and tok.kind in ("sym", "kw")

    def eat(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not self.at(text):
            raise SourceSyntaxError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return self.next()

    def expect_name(self) -> str:
        tok = self.peek()
        if tok.kind != "name":
            raise SourceSyntaxError(f"expected a name, found {tok.text!r}", tok.line, tok.col)
        self.next()
        return tok.text

    def expect_int(self) -> int:
        neg = self.eat("-")
        tok = self.peek()
        if tok.kind != "int":
            raise SourceSyntaxError(f"expected an integer, found {tok.text!r}", tok.line, tok.col)
        self.next()
        return -int(tok.text) if neg else int(tok.text)

    def fail(self, message: str):
        tok = self.peek()
        raise SourceSyntaxError(message, tok.line, tok.col)

    # -- types ---------------------------------------------------------------

    def parse_type(self, depth: int = 0) -> RType:
        # Arrow chain with optional named binders; inner arrows implicitly
        # carry multiplicity 1, only the outermost is unrestricted.
        if self.peek().kind == "name" and self.peek(1).text == ":":
            binder = self.expect_name()
            self.expect(":")
            arg = self.parse_atom_type()
            return self.parse_arrow_tail(binder, arg, depth)
        arg = self.parse_atom_type()
        if self.at("->"):
            return self.parse_arrow_tail("_arg", arg, depth)
        return arg

    def parse_arrow_tail(self, binder: str, arg: RType, depth: int) -> RType:
        self.expect("->")
        mult: Optional[Mult] = None
        cost: Optional[int] = None
        if self.eat("["):
            if self.eat("costs"):
                cost = self.expect_int()
            else:
                mult = self.parse_mult()
                if self.eat(","):
                    self.expect("costs")
                    cost = self.expect_int()
            self.expect("]")
        result = self.parse_type(depth + 1)
        if mult is None:
            mult = INF if depth == 0 else Num(1)
        a = Arrow(
            binder,
            as_annot(arg),
            as_annot(result),
            mult,
            cost if cost is not None else (1 if self.metric == "appcount" else 0),
        )
        return Annot(a, ZERO)

    def parse_mult(self) -> Mult:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return Num(int(tok.text))
        if tok.text == "inf":
            self.next()
            return INF
        if tok.kind == "name":
            self.next()
            return RVar(tok.text)
        self.fail("expected a multiplicity")

    def parse_atom_type(self) -> RType:
        t = self.parse_simple_type()
        while self.eat("^"):
            pot = self.parse_potential_atom()
            t = Annot(as_annot(t).inner, pot) if as_annot(t).potential == ZERO else Annot(
                as_annot(t).inner, Add(as_annot(t).potential, pot)
            )
        return t

    def parse_simple_type(self) -> RType:
        tok = self.peek()
        if self.eat("Bool"):
            return scalar(BOOL)
        if self.eat("Int"):
            return scalar(INT)
        if self.eat("Nat"):
            return scalar(INT, psi=r_ge(RVar(NU), Num(0)))
        if self.eat("List"):
            elem = self.parse_atom_type()
            return scalar(ListB(as_annot(elem)))
        if self.eat("{"):
            base = self.parse_type()
            self.expect("|")
            psi = self.parse_refinement()
            self.expect("}")
            inner = as_annot(base)
            if not isinstance(inner.inner, Subset):
                self.fail("refinements apply to scalar types only")
            merged = conj([inner.inner.refinement, psi])
            return Annot(Subset(inner.inner.base, merged), inner.potential)
        if self.eat("("):
            t = self.parse_type()
            self.expect(")")
            return t
        if tok.kind == "int":
            # multiplicity on a type variable: m * a
            m = Num(int(self.next().text))
            self.expect("*")
            alpha = self.expect_name()
            return scalar(TVarB(m, alpha))
        if tok.kind == "name":
            name = self.next().text
            if self.eat("*"):
                alpha = self.expect_name()
                return scalar(TVarB(RVar(name), alpha))
            return scalar(tvar(name, 1))
        self.fail("expected a type")

    def parse_potential_atom(self) -> Refinement:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return Num(int(tok.text))
        if self.at("ite"):
            return self.parse_ref_atom()
        if tok.kind == "name":
            self.next()
            return RVar(tok.text)
        if self.eat("("):
            r = self.parse_refinement()
            self.expect(")")
            return r
        self.fail("expected a potential annotation")

    # -- refinements -----------------------------------------------------------

    def parse_refinement(self) -> Refinement:
        return self.parse_ref_or()

    def parse_ref_or(self) -> Refinement:
        left = self.parse_ref_and()
        while self.eat("||"):
            right = self.parse_ref_and()
            left = Not(And(Not(left), Not(right)))
        return left

    def parse_ref_and(self) -> Refinement:
        left = self.parse_ref_cmp()
        while self.eat("&&"):
            right = self.parse_ref_cmp()
            left = And(left, right)
        return left

    def parse_ref_cmp(self) -> Refinement:
        left = self.parse_ref_sum()
        if self.eat("=="):
            return Eq(left, self.parse_ref_sum())
        if self.eat("!="):
            return Not(Eq(left, self.parse_ref_sum()))
        if self.eat("<="):
            return Le(left, self.parse_ref_sum())
        if self.eat(">="):
            return Le(self.parse_ref_sum(), left)
        if self.eat("<"):
            return Not(Le(self.parse_ref_sum(), left))
        if self.eat(">"):
            return Not(Le(left, self.parse_ref_sum()))
        return left

    def parse_ref_sum(self) -> Refinement:
        left = self.parse_ref_factor()
        while True:
            if self.eat("+"):
                left = Add(left, self.parse_ref_factor())
            elif self.eat("-"):
                left = Sub(left, self.parse_ref_factor())
            else:
                return left

    def parse_ref_factor(self) -> Refinement:
        tok = self.peek()
        if tok.kind == "int" and self.peek(1).text == "*":
            self.next()
            self.next()
            return MulConst(int(tok.text), self.parse_ref_factor())
        return self.parse_ref_atom()

    def parse_ref_atom(self) -> Refinement:
        tok = self.peek()
        if self.eat("!"):
            return Not(self.parse_ref_atom())
        if tok.kind == "int":
            self.next()
            return Num(int(tok.text))
        if self.eat("True"):
            return TOP
        if self.eat("False"):
            return Not(TOP)
        if self.eat("len"):
            name = self.expect_name()
            return RVar(name)
        if self.eat("ite"):
            self.expect("(")
            c = self.parse_refinement()
            self.expect(",")
            t = self.parse_refinement()
            self.expect(",")
            e = self.parse_refinement()
            self.expect(")")
            return Ite(c, t, e)
        if self.eat("("):
            r = self.parse_refinement()
            self.expect(")")
            return r
        if tok.kind == "name":
            self.next()
            return RVar(tok.text)
        self.fail("expected a refinement")

    # -- terms -----------------------------------------------------------------

    def parse_expr(self) -> Expr:
        if self.eat("\\"):
            binders = [self.expect_name()]
            while self.peek().kind == "name":
                binders.append(self.expect_name())
            self.expect(".")
            body = self.parse_expr()
            for b in reversed(binders):
                body = Abs(b, body)
            return body
        if self.eat("fix"):
            fun = self.expect_name()
            arg = self.expect_name()
            self.expect(".")
            return Fix(fun, arg, self.parse_expr())
        if self.eat("if"):
            guard = self.parse_expr()
            self.expect("then")
            thn = self.parse_expr()
            self.expect("else")
            return Cond(guard, thn, self.parse_expr())
        if self.eat("match"):
            scrut = self.parse_expr()
            self.expect("with")
            self.eat("|")
            self.expect("nil")
            self.expect("->")
            nil_b = self.parse_expr()
            self.expect("|")
            self.expect("cons")
            hb = self.expect_name()
            tb = self.expect_name()
            self.expect("->")
            cons_b = self.parse_expr()
            return MatchList(scrut, nil_b, hb, tb, cons_b)
        if self.eat("let"):
            name = self.expect_name()
            self.expect("=")
            bound = self.parse_expr()
            self.expect("in")
            return Let(bound, name, self.parse_expr())
        if self.eat("tick"):
            cost = self.expect_int()
            return Tick(cost, self.parse_app_atom())
        return self.parse_app()

    def parse_app(self) -> Expr:
        head = self.parse_app_atom()
        args: list[Expr] = []
        while self.peek().kind in ("name", "int") or self.peek().text in (
            "(", "True", "False", "Nil", "Cons", "impossible",
        ):
            args.append(self.parse_app_atom())
        if isinstance(head, Var) and head.name == "__cons__":
            if len(args) != 2:
                self.fail("Cons expects exactly two arguments")
            return ConsE(args[0], args[1])
        for a in args:
            head = App(head, a)
        return head

    def parse_app_atom(self) -> Expr:
        tok = self.peek()
        if self.eat("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if self.eat("True"):
            return TRUE
        if self.eat("False"):
            return FALSE
        if self.eat("Nil"):
            return NIL
        if self.eat("Cons"):
            return Var("__cons__")
        if self.eat("impossible"):
            return Impossible()
        if tok.kind == "int":
            self.next()
            return IntLit(int(tok.text))
        if self.eat("-"):
            t2 = self.peek()
            if t2.kind == "int":
                self.next()
                return IntLit(-int(t2.text))
            self.fail("expected an integer literal after '-'")
        if tok.kind == "name":
            self.next()
            return Var(tok.text)
        self.fail("expected an expression")


def quantify_free_tvars(t: RType) -> RType:
    """Wrap unbound type-variable names in outermost quantifiers."""
    order: list[str] = []

    def walk(t: RType) -> None:
        if isinstance(t, Annot):
            walk(t.inner)
        elif isinstance(t, Subset):
            walk(t.base)
        elif isinstance(t, ListB):
            walk(t.elem)
        elif isinstance(t, TVarB):
            if t.alpha not in order:
                order.append(t.alpha)
        elif isinstance(t, Arrow):
            walk(t.arg)
            walk(t.result)
        elif isinstance(t, Forall):
            walk(t.body)

    walk(t)
    bound: set[str] = set()
    s = t
    while isinstance(s, Forall):
        bound.add(s.alpha)
        s = s.body
    out = t
    for alpha in reversed([a for a in order if a not in bound]):
        out = Forall(alpha, out)
    return out


def parse_module(text: str) -> SourceModule:
    """Parse a source module; schemas are built, bodies stay in surface form."""
    tokens = lex(text)
    module = SourceModule()
    parser = Parser(tokens)
    seen: set[str] = set()
    while parser.peek().kind != "eof":
        if parser.eat(";"):
            continue
        if parser.eat("metric"):
            tok = parser.next()
            if tok.text not in ("appcount", "free"):
                raise SourceSyntaxError(f"unknown metric {tok.text!r}", tok.line, tok.col)
            module.metric = tok.text
            parser.metric = tok.text
            continue
        if parser.eat("free"):
            module.free_potentials.append(parser.parse_refinement())
            continue
        is_goal = False
        if parser.eat("goal"):
            is_goal = True
        elif parser.eat("component"):
            is_goal = False
        else:
            parser.fail("expected a declaration")
        name = parser.expect_name()
        if name in seen:
            raise DuplicateName(name)
        seen.add(name)
        parser.expect("::")
        schema = quantify_free_tvars(parser.parse_type())
        body: Optional[Expr] = None
        if parser.eat("="):
            body = parser.parse_expr()
        decl = Decl(name, schema, body, is_goal)
        (module.goals if is_goal else module.components).append(decl)
    return module


def parse_expr_text(text: str) -> Expr:
    """Parse a bare expression (used by the CLI and tests)."""
    parser = Parser(lex(text))
    e = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "eof":
        raise SourceSyntaxError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return e


# ---------------------------------------------------------------------------
# Desugaring to core ANF
# ---------------------------------------------------------------------------


def arrow_costs(schema: RType) -> list[int]:
    """The cost spine of a schema: cost of each arrow in the curried chain."""
    out: list[int] = []
    t = schema
    while isinstance(t, Forall):
        t = t.body
    while isinstance(t, Annot) and isinstance(t.inner, Arrow):
        out.append(t.inner.cost)
        t = t.inner.result
    return out


class Desugarer:
    """Convert surface bodies to ANF, inserting ticks per the cost metric."""

    def __init__(self, module: SourceModule, default_cost: int):
        self.module = module
        self.default_cost = default_cost
        self.counter = 0
        self.used: set[str] = set()

    def fresh(self, base: str = "t") -> str:
        while True:
            name = f"{base}{self.counter}"
            self.counter += 1
            if name not in self.used:
                self.used.add(name)
                return name

    def spine_of(self, e: Expr, spines: dict[str, list[int]]) -> list[int]:
        if isinstance(e, Var):
            if e.name in spines:
                return spines[e.name]
            decl = self.module.lookup(e.name)
            if decl is not None:
                return arrow_costs(decl.schema)
            return []
        if isinstance(e, App):
            return self.spine_of(e.fn, spines)[1:]
        if isinstance(e, Tick):
            return self.spine_of(e.body, spines)
        return []

    def desugar_decl(self, decl: Decl) -> Optional[Expr]:
        if decl.body is None:
            return None
        self.counter = 0
        self.used = set(free_names(decl.body)) | {decl.name}
        body = decl.body
        # Self-reference makes the outermost lambda a fixpoint.
        if decl.name in free_names_strict(body):
            if not isinstance(body, (Abs, Fix)):
                raise UnboundVariable(
                    f"recursive declaration {decl.name} must start with a lambda"
                )
            if isinstance(body, Abs):
                body = Fix(decl.name, body.binder, body.body)
        scope = {d.name for d in self.module.decls()}
        spines = {decl.name: arrow_costs(decl.schema)}
        return self.to_anf(body, scope, spines)

    def to_anf(self, e: Expr, scope: set[str], spines: dict[str, list[int]]) -> Expr:
        """Tail-position conversion."""
        if isinstance(e, Var):
            if e.name not in scope:
                raise UnboundVariable(e.name)
            return e
        if isinstance(e, (TrueE, FalseE, NilE, IntLit, Impossible)):
            return e
        if isinstance(e, ConsE):
            bindings: list[tuple[str, Expr]] = []
            h = self.atomize(e.head, scope, spines, bindings)
            t = self.atomize(e.tail, scope, spines, bindings)
            return wrap_lets(bindings, ConsE(h, t))
        if isinstance(e, Abs):
            return Abs(e.binder, self.to_anf(e.body, scope | {e.binder}, spines))
        if isinstance(e, Fix):
            inner = scope | {e.fun_binder, e.arg_binder}
            return Fix(e.fun_binder, e.arg_binder, self.to_anf(e.body, inner, spines))
        if isinstance(e, Cond):
            bindings = []
            guard = self.atomize(e.guard, scope, spines, bindings)
            out = Cond(
                guard,
                self.to_anf(e.then_branch, scope, spines),
                self.to_anf(e.else_branch, scope, spines),
            )
            return wrap_lets(bindings, out)
        if isinstance(e, MatchList):
            bindings = []
            scrut = self.atomize(e.scrutinee, scope, spines, bindings)
            inner = scope | {e.head_binder, e.tail_binder}
            out = MatchList(
                scrut,
                self.to_anf(e.nil_branch, scope, spines),
                e.head_binder,
                e.tail_binder,
                self.to_anf(e.cons_branch, inner, spines),
            )
            return wrap_lets(bindings, out)
        if isinstance(e, Let):
            bound = self.to_anf(e.bound, scope, spines)
            spines2 = dict(spines)
            spine = self.spine_of(e.bound, spines)
            if spine:
                spines2[e.binder] = spine
            return Let(bound, e.binder, self.to_anf(e.body, scope | {e.binder}, spines2))
        if isinstance(e, Tick):
            return Tick(e.cost, self.to_anf(e.body, scope, spines))
        if isinstance(e, App):
            bindings = []
            atom = self.atomize(e, scope, spines, bindings)
            return wrap_lets(bindings, atom)
        raise UnboundVariable(f"cannot desugar {e!r}")

    def atomize(
        self,
        e: Expr,
        scope: set[str],
        spines: dict[str, list[int]],
        bindings: list[tuple[str, Expr]],
    ) -> Expr:
        """Return an atom for e, emitting let bindings for compound parts."""
        if isinstance(e, Var):
            if e.name not in scope:
                raise UnboundVariable(e.name)
            return e
        if isinstance(e, (TrueE, FalseE, NilE, IntLit)):
            return e
        if isinstance(e, ConsE):
            h = self.atomize(e.head, scope, spines, bindings)
            t = self.atomize(e.tail, scope, spines, bindings)
            return ConsE(h, t)
        if isinstance(e, (Abs, Fix)):
            return self.to_anf(e, scope, spines)
        if isinstance(e, App):
            spine = self.spine_of(e.fn, spines)
            cost = spine[0] if spine else self.default_cost
            fn = self.atomize(e.fn, scope, spines, bindings)
            arg = self.atomize(e.arg, scope, spines, bindings)
            name = self.fresh()
            bindings.append((name, Tick(cost, App(fn, arg))))
            return Var(name)
        if isinstance(e, Tick):
            # Explicit tick around an expression in atom position.
            inner_bindings: list[tuple[str, Expr]] = []
            atom = self.atomize(e.body, scope, spines, inner_bindings)
            if inner_bindings and isinstance(atom, Var) and inner_bindings[-1][0] == atom.name:
                last_name, last_expr = inner_bindings[-1]
                merged = merge_tick(e.cost, last_expr)
                bindings.extend(inner_bindings[:-1])
                bindings.append((last_name, merged))
                return atom
            bindings.extend(inner_bindings)
            name = self.fresh()
            bindings.append((name, Tick(e.cost, atom)))
            return Var(name)
        # General compound expression in atom position.
        name = self.fresh()
        bindings.append((name, self.to_anf(e, scope, spines)))
        return Var(name)


def merge_tick(cost: int, e: Expr) -> Expr:
    if isinstance(e, Tick):
        return Tick(cost + e.cost, e.body)
    return Tick(cost, e)


def wrap_lets(bindings: list[tuple[str, Expr]], body: Expr) -> Expr:
    out = body
    for name, bound in reversed(bindings):
        out = Let(bound, name, out)
    return out


def free_names(e: Expr) -> set[str]:
    from .lang import free_vars

    return free_vars(e)


def free_names_strict(e: Expr) -> set[str]:
    return free_names(e)


def desugar(module: SourceModule) -> SourceModule:
    """Desugar every declaration body to core ANF with ticks inserted."""
    default_cost = 1 if module.metric == "appcount" else 0
    out = SourceModule(metric=module.metric, free_potentials=list(module.free_potentials))
    worker = Desugarer(module, default_cost)
    for decl in module.components:
        out.components.append(
            Decl(decl.name, decl.schema, worker.desugar_decl(decl), decl.is_goal)
        )
    for decl in module.goals:
        out.goals.append(
            Decl(decl.name, decl.schema, worker.desugar_decl(decl), decl.is_goal)
        )
    return out


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def print_expr(e: Expr) -> str:
    """Render a core expression in surface syntax."""
    return _pe(e, False)


def _atom_str(e: Expr) -> str:
    return _pe(e, True)


def _pe(e: Expr, atom_pos: bool) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, TrueE):
        return "True"
    if isinstance(e, FalseE):
        return "False"
    if isinstance(e, NilE):
        return "Nil"
    if isinstance(e, IntLit):
        if e.value < 0 and atom_pos:
            return f"({e.value})"
        return str(e.value)
    if isinstance(e, ConsE):
        s = f"Cons {_atom_str(e.head)} {_atom_str(e.tail)}"
        return f"({s})" if atom_pos else s
    if isinstance(e, Impossible):
        return "impossible"
    if isinstance(e, Hole):
        return "??"
    if isinstance(e, App):
        parts = []
        f: Expr = e
        while isinstance(f, App):
            parts.append(f.arg)
            f = f.fn
        parts.append(f)
        parts.reverse()
        s = " ".join(_atom_str(p) for p in parts)
        return f"({s})" if atom_pos else s
    if isinstance(e, Tick):
        s = f"tick {e.cost} {_atom_str(e.body)}" if e.cost >= 0 else f"tick -{-e.cost} {_atom_str(e.body)}"
        return f"({s})" if atom_pos else s
    if isinstance(e, Cond):
        s = f"if {_atom_str(e.guard)} then {_atom_str(e.then_branch)} else {_atom_str(e.else_branch)}"
        return f"({s})" if atom_pos else s
    if isinstance(e, MatchList):
        s = (
            f"match {_atom_str(e.scrutinee)} with nil -> {_atom_str(e.nil_branch)}"
            f" | cons {e.head_binder} {e.tail_binder} -> {_atom_str(e.cons_branch)}"
        )
        return f"({s})" if atom_pos else s
    if isinstance(e, Let):
        s = f"let {e.binder} = {_atom_str(e.bound)} in {_pe(e.body, False)}"
        return f"({s})" if atom_pos else s
    if isinstance(e, Abs):
        s = f"\\{e.binder} . {_pe(e.body, False)}"
        return f"({s})" if atom_pos else s
    if isinstance(e, Fix):
        s = f"fix {e.fun_binder} {e.arg_binder} . {_pe(e.body, False)}"
        return f"({s})" if atom_pos else s
    if isinstance(e, FlatLet):
        inner = "; ".join(f"{n} <- {_pe(d, False)}" for n, d in e.bindings)
        return f"lets [{inner}] in {_pe(e.body, False)}"
    raise ValueError(f"cannot print {e!r}")


def print_type(t: RType) -> str:
    if isinstance(t, UnknownT):
        return "?"
    if isinstance(t, Forall):
        return print_type(t.body)
    t = as_annot(t)
    inner = t.inner
    if isinstance(inner, Subset):
        base = inner.base
        if isinstance(base, BoolB):
            s = "Bool"
        elif isinstance(base, IntB):
            s = "Int"
        elif isinstance(base, ListB):
            s = f"List ({print_type(base.elem)})"
        elif isinstance(base, TVarB):
            m = base.mult
            if m is INF:
                s = f"inf*{base.alpha}"
            elif isinstance(m, Num) and m.value == 1:
                s = base.alpha
            else:
                s = f"{print_ref(m)}*{base.alpha}"
        else:
            s = repr(base)
        if inner.refinement != TOP:
            s = f"{{{s} | {print_ref(inner.refinement)}}}"
        if t.potential != ZERO:
            s = f"{s}^({print_ref(t.potential)})"
        return s
    if isinstance(inner, Arrow):
        ann = ""
        if inner.mult is not INF or inner.cost != 0:
            parts = []
            if inner.mult is not INF:
                parts.append(print_ref(inner.mult))
            if inner.cost != 0:
                parts.append(f"costs {inner.cost}")
            ann = f"[{', '.join(parts)}]"
        s = f"{inner.binder}:{print_type(inner.arg)} ->{ann} {print_type(inner.result)}"
        if t.potential != ZERO:
            s = f"({s})^({print_ref(t.potential)})"
        return s
    return repr(t)


def print_ref(r: Refinement) -> str:
    if isinstance(r, RVar):
        return r.name
    if isinstance(r, Top):
        return "True"
    if isinstance(r, Num):
        return str(r.value)
    if isinstance(r, Not):
        if isinstance(r.arg, Top):
            return "False"
        if isinstance(r.arg, Le):
            return f"({print_ref(r.arg.right)} < {print_ref(r.arg.left)})"
        if isinstance(r.arg, Eq):
            return f"({print_ref(r.arg.left)} != {print_ref(r.arg.right)})"
        return f"!({print_ref(r.arg)})"
    if isinstance(r, And):
        return f"({print_ref(r.left)} && {print_ref(r.right)})"
    if isinstance(r, Le):
        return f"({print_ref(r.left)} <= {print_ref(r.right)})"
    if isinstance(r, Add):
        return f"({print_ref(r.left)} + {print_ref(r.right)})"
    if isinstance(r, Sub):
        return f"({print_ref(r.left)} - {print_ref(r.right)})"
    if isinstance(r, MulConst):
        return f"{r.const}*{print_ref(r.term)}"
    if isinstance(r, Eq):
        return f"({print_ref(r.left)} == {print_ref(r.right)})"
    if isinstance(r, Ite):
        return f"ite({print_ref(r.cond)}, {print_ref(r.then)}, {print_ref(r.other)})"
    if isinstance(r, Unknown):
        return f"?u{r.uid}"
    return repr(r)
