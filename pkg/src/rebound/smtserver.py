"""A small QF_LIA solver speaking SMT-LIB2 over stdin/stdout.

Installed as the `rebound-smt` executable and used as the default backend
when no external solver is configured.  Supports the fragment the rest of
the system emits: boolean structure (and/or/not/=>/ite), linear integer
atoms (<=/</>=/>/=), integer and boolean constants, declare-const,
push/pop/reset, check-sat, get-value, and get-model.

Solving is a DPLL loop over the boolean skeleton; conjunctions of integer
literals are decided by a MILP call (scipy/HiGHS) whose models are verified
in exact arithmetic, with an exact rational Fourier-Motzkin pass certifying
unsatisfiable answers and a bounded exact search as tiebreak.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp


# ---------------------------------------------------------------------------
# S-expression reading/printing
# ---------------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append(c)
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            tokens.append(text[i : j + 1])
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            tokens.append(text[i : j + 1])
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();|\"":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


Sexp = Union[str, list]


def parse_sexps(tokens: list[str]) -> list[Sexp]:
    out: list[Sexp] = []
    stack: list[list] = []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out.append(done)
        else:
            if stack:
                stack[-1].append(tok)
            else:
                out.append(tok)
    if stack:
        raise ValueError("unbalanced parentheses")
    return out


def unquote(sym: str) -> str:
    if sym.startswith("|") and sym.endswith("|"):
        return sym[1:-1]
    return sym


def quote(name: str) -> str:
    if all(c.isalnum() or c in "_-.~!@$^&*+=<>?/" for c in name):
        return name
    return f"|{name}|"


def render_int(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


# ---------------------------------------------------------------------------
# Terms: parsed assertions over declared variables
# ---------------------------------------------------------------------------

# Linear integer expression: mapping var -> coeff, plus constant.
Linear = tuple[dict[str, int], int]


def lin_const(k: int) -> Linear:
    return ({}, k)


def lin_var(x: str) -> Linear:
    return ({x: 1}, 0)


def lin_add(a: Linear, b: Linear) -> Linear:
    coeffs = dict(a[0])
    for x, c in b[0].items():
        coeffs[x] = coeffs.get(x, 0) + c
        if coeffs[x] == 0:
            del coeffs[x]
    return coeffs, a[1] + b[1]


def lin_scale(c: int, a: Linear) -> Linear:
    if c == 0:
        return lin_const(0)
    return {x: c * v for x, v in a[0].items()}, c * a[1]


def lin_sub(a: Linear, b: Linear) -> Linear:
    return lin_add(a, lin_scale(-1, b))


# Formulas (boolean structure over atoms):
#   ("true",) / ("false",)
#   ("var", name)                      boolean variable
#   ("le", Linear)                     Linear <= 0
#   ("eq", Linear)                     Linear = 0
#   ("not", f) ("and", fs) ("or", fs) ("ite", c, t, e)
Formula = tuple


class SmtError(Exception):
    pass


@dataclass
class Frame:
    decls: dict[str, str]
    assertions: list[Formula]


class Solver:
    def __init__(self) -> None:
        self.stack: list[Frame] = [Frame({}, [])]
        self.last_model: Optional[dict[str, Union[int, bool]]] = None

    # -- declarations ------------------------------------------------------

    def declare(self, name: str, sort: str) -> None:
        if sort not in ("Int", "Bool"):
            raise SmtError(f"unsupported sort {sort}")
        self.stack[-1].decls[name] = sort

    def all_decls(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for fr in self.stack:
            out.update(fr.decls)
        return out

    def all_assertions(self) -> list[Formula]:
        out: list[Formula] = []
        for fr in self.stack:
            out.extend(fr.assertions)
        return out

    # -- term translation --------------------------------------------------

    def to_linear(self, e: Sexp, decls: dict[str, str]) -> Linear:
        if isinstance(e, str):
            if e.lstrip("-").isdigit():
                return lin_const(int(e))
            name = unquote(e)
            if decls.get(name) == "Int":
                return lin_var(name)
            raise SmtError(f"not an integer term: {e}")
        op = e[0]
        if op == "+":
            out = lin_const(0)
            for arg in e[1:]:
                out = lin_add(out, self.to_linear(arg, decls))
            return out
        if op == "-":
            if len(e) == 2:
                return lin_scale(-1, self.to_linear(e[1], decls))
            out = self.to_linear(e[1], decls)
            for arg in e[2:]:
                out = lin_sub(out, self.to_linear(arg, decls))
            return out
        if op == "*":
            parts = [self.to_linear(arg, decls) for arg in e[1:]]
            consts = [p for p in parts if not p[0]]
            syms = [p for p in parts if p[0]]
            if len(syms) > 1:
                raise SmtError("nonlinear product")
            k = 1
            for p in consts:
                k *= p[1]
            return lin_scale(k, syms[0]) if syms else lin_const(k)
        raise SmtError(f"unsupported integer operator {op}")

    def is_int_term(self, e: Sexp, decls: dict[str, str]) -> bool:
        if isinstance(e, str):
            if e.lstrip("-").isdigit():
                return True
            return decls.get(unquote(e)) == "Int"
        return e[0] in ("+", "-", "*", "ite") and (
            e[0] != "ite" or self.is_int_term(e[2], decls)
        )

    def lift_ite(self, e: Sexp) -> Sexp:
        """Pull integer-valued ite nodes out of comparison atoms."""
        if isinstance(e, str):
            return e
        e = [e[0]] + [self.lift_ite(a) for a in e[1:]]
        if e[0] in ("<=", "<", ">=", ">", "=", "+", "-", "*"):
            for i, arg in enumerate(e[1:], start=1):
                if isinstance(arg, list) and arg[0] == "ite":
                    cond, thn, els = arg[1], arg[2], arg[3]
                    left = self.lift_ite(e[:i] + [thn] + e[i + 1 :])
                    right = self.lift_ite(e[:i] + [els] + e[i + 1 :])
                    return ["ite", cond, left, right]
        return e

    def to_formula(self, e: Sexp, decls: dict[str, str]) -> Formula:
        e = self.lift_ite(e)

        def go(e: Sexp) -> Formula:
            if isinstance(e, str):
                if e == "true":
                    return ("true",)
                if e == "false":
                    return ("false",)
                name = unquote(e)
                if decls.get(name) == "Bool":
                    return ("var", name)
                raise SmtError(f"not a boolean term: {e}")
            op = e[0]
            if op == "not":
                return ("not", go(e[1]))
            if op == "and":
                return ("and", tuple(go(a) for a in e[1:]))
            if op == "or":
                return ("or", tuple(go(a) for a in e[1:]))
            if op == "=>":
                out = go(e[-1])
                for a in reversed(e[1:-1]):
                    out = ("or", (("not", go(a)), out))
                return out
            if op == "ite":
                c, t, f = go(e[1]), go(e[2]), go(e[3])
                return ("or", (("and", (c, t)), ("and", (("not", c), f))))
            if op in ("<=", "<", ">=", ">"):
                a = self.to_linear(e[1], decls)
                b = self.to_linear(e[2], decls)
                if op == "<=":
                    return ("le", lin_sub(a, b))
                if op == "<":
                    return ("le", lin_add(lin_sub(a, b), lin_const(1)))
                if op == ">=":
                    return ("le", lin_sub(b, a))
                return ("le", lin_add(lin_sub(b, a), lin_const(1)))
            if op == "=":
                first = e[1]
                if self.is_int_term(first, decls):
                    a = self.to_linear(e[1], decls)
                    b = self.to_linear(e[2], decls)
                    return ("eq", lin_sub(a, b))
                fa, fb = go(e[1]), go(e[2])
                return (
                    "or",
                    (("and", (fa, fb)), ("and", (("not", fa), ("not", fb)))),
                )
            raise SmtError(f"unsupported operator {op}")

        return go(e)

    # -- DPLL over the boolean skeleton -------------------------------------

    def check_sat(self) -> str:
        decls = self.all_decls()
        formulas = self.all_assertions()
        root: Formula = ("and", tuple(formulas)) if formulas else ("true",)

        def atom_key(f: Formula):
            if f[0] == "var":
                return ("var", f[1])
            coeffs, k = f[1]
            return (f[0], tuple(sorted(coeffs.items())), k)

        def simplify(f: Formula, asn: dict) -> Formula:
            kind = f[0]
            if kind in ("true", "false"):
                return f
            if kind in ("var", "le", "eq"):
                val = asn.get(atom_key(f))
                if val is None:
                    return f
                return ("true",) if val else ("false",)
            if kind == "not":
                s = simplify(f[1], asn)
                if s[0] == "true":
                    return ("false",)
                if s[0] == "false":
                    return ("true",)
                return ("not", s)
            if kind == "and":
                parts = []
                for g in f[1]:
                    s = simplify(g, asn)
                    if s[0] == "false":
                        return ("false",)
                    if s[0] != "true":
                        parts.append(s)
                return ("and", tuple(parts)) if parts else ("true",)
            if kind == "or":
                parts = []
                for g in f[1]:
                    s = simplify(g, asn)
                    if s[0] == "true":
                        return ("true",)
                    if s[0] != "false":
                        parts.append(s)
                return ("or", tuple(parts)) if parts else ("false",)
            raise SmtError(f"unhandled formula {f[0]}")

        def first_atom(f: Formula) -> Optional[Formula]:
            if f[0] in ("var", "le", "eq"):
                return f
            if f[0] == "not":
                return first_atom(f[1])
            if f[0] in ("and", "or"):
                for g in f[1]:
                    a = first_atom(g)
                    if a is not None:
                        return a
            return None

        def theory_model(asn: dict) -> Optional[dict]:
            eqs: list[Linear] = []
            ineqs: list[Linear] = []
            diseqs: list[Linear] = []
            for key, val in asn.items():
                kind = key[0]
                if kind == "var":
                    continue
                lin = (dict(key[1]), key[2])
                if kind == "le":
                    if val:
                        ineqs.append(lin)
                    else:
                        # not(t <= 0)  ==>  -t + 1 <= 0
                        ineqs.append(lin_add(lin_scale(-1, lin), lin_const(1)))
                else:
                    if val:
                        eqs.append(lin)
                    else:
                        diseqs.append(lin)
            return solve_int_system(eqs, ineqs, diseqs)

        def dpll(asn: dict) -> Optional[dict]:
            f = simplify(root, asn)
            if f[0] == "false":
                return None
            if f[0] == "true":
                return theory_model(asn)
            atom = first_atom(f)
            assert atom is not None
            key = atom_key(atom)
            for choice in (True, False):
                asn[key] = choice
                result = dpll(asn)
                if result is not None:
                    return result
                del asn[key]
            return None

        assignment: dict = {}
        ints = dpll(assignment)
        if ints is None:
            self.last_model = None
            return "unsat"
        model: dict[str, Union[int, bool]] = {}
        for name, sort in decls.items():
            if sort == "Bool":
                model[name] = bool(assignment.get(("var", name), False))
            else:
                model[name] = ints.get(name, 0)
        self.last_model = model
        return "sat"

    # -- command loop --------------------------------------------------------

    def run_command(self, cmd: Sexp) -> Optional[str]:
        if not isinstance(cmd, list) or not cmd:
            raise SmtError("malformed command")
        head = cmd[0]
        if head in ("set-logic", "set-option", "set-info"):
            return None
        if head == "declare-const":
            self.declare(unquote(cmd[1]), cmd[2])
            return None
        if head == "declare-fun":
            if cmd[2] != []:
                raise SmtError("only 0-ary declare-fun supported")
            self.declare(unquote(cmd[1]), cmd[3])
            return None
        if head == "assert":
            decls = self.all_decls()
            self.stack[-1].assertions.append(self.to_formula(cmd[1], decls))
            return None
        if head == "check-sat":
            return self.check_sat()
        if head == "push":
            n = int(cmd[1]) if len(cmd) > 1 else 1
            for _ in range(n):
                self.stack.append(Frame({}, []))
            return None
        if head == "pop":
            n = int(cmd[1]) if len(cmd) > 1 else 1
            for _ in range(n):
                if len(self.stack) > 1:
                    self.stack.pop()
            return None
        if head in ("reset", "reset-assertions"):
            self.stack = [Frame({}, [])]
            self.last_model = None
            return None
        if head == "get-value":
            if self.last_model is None:
                return '(error "no model available")'
            parts = []
            for sym in cmd[1]:
                name = unquote(sym)
                val = self.last_model.get(name, 0)
                parts.append(f"({quote(name)} {render_value(val)})")
            return f"({' '.join(parts)})"
        if head == "get-model":
            if self.last_model is None:
                return '(error "no model available")'
            lines = []
            for name, val in self.last_model.items():
                sort = "Bool" if isinstance(val, bool) else "Int"
                lines.append(
                    f"(define-fun {quote(name)} () {sort} {render_value(val)})"
                )
            return f"({' '.join(lines)})"
        if head == "echo":
            return cmd[1].strip('"')
        if head == "exit":
            raise SystemExit(0)
        raise SmtError(f"unsupported command {head}")


def render_value(v: Union[int, bool]) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return render_int(v)


# ---------------------------------------------------------------------------
# Integer feasibility of conjunctions
# ---------------------------------------------------------------------------


def eval_linear(lin: Linear, model: dict[str, int]) -> int:
    coeffs, k = lin
    return sum(c * model.get(x, 0) for x, c in coeffs.items()) + k


def verify(
    eqs: list[Linear], ineqs: list[Linear], diseqs: list[Linear], model: dict[str, int]
) -> bool:
    return (
        all(eval_linear(l, model) == 0 for l in eqs)
        and all(eval_linear(l, model) <= 0 for l in ineqs)
        and all(eval_linear(l, model) != 0 for l in diseqs)
    )


def solve_int_system(
    eqs: list[Linear], ineqs: list[Linear], diseqs: list[Linear]
) -> Optional[dict[str, int]]:
    """Find an integer model of eqs=0, ineqs<=0, diseqs!=0, or None."""
    if diseqs:
        # Case split: t != 0 becomes t <= -1 or t >= 1.
        first, rest = diseqs[0], diseqs[1:]
        for extra in (lin_add(first, lin_const(1)), lin_add(lin_scale(-1, first), lin_const(1))):
            got = solve_int_system(eqs, ineqs + [extra], rest)
            if got is not None:
                return got
        return None

    variables = sorted(
        {x for lin in eqs + ineqs for x in lin[0]}
    )
    if not variables:
        ok = all(k == 0 for c, k in eqs) and all(k <= 0 for c, k in ineqs)
        return {} if ok else None

    model = _milp_feasible(eqs, ineqs, variables)
    if model is not None and verify(eqs, ineqs, [], model):
        return model
    if model is not None:
        # Float round-off: fall through to the exact search path.
        found = _exact_search(eqs, ineqs, variables)
        return found
    # MILP says infeasible; certify with exact rational reasoning.
    if not _rationally_feasible(eqs, ineqs, variables):
        return None
    return _exact_search(eqs, ineqs, variables)


_BOUND = 10**7


def _milp_feasible(
    eqs: list[Linear], ineqs: list[Linear], variables: list[str]
) -> Optional[dict[str, int]]:
    idx = {x: i for i, x in enumerate(variables)}
    rows, lbs, ubs = [], [], []
    for coeffs, k in eqs:
        row = [0.0] * len(variables)
        for x, c in coeffs.items():
            row[idx[x]] = float(c)
        rows.append(row)
        lbs.append(float(-k))
        ubs.append(float(-k))
    for coeffs, k in ineqs:
        row = [0.0] * len(variables)
        for x, c in coeffs.items():
            row[idx[x]] = float(c)
        rows.append(row)
        lbs.append(-np.inf)
        ubs.append(float(-k))
    if not rows:
        return {x: 0 for x in variables}
    res = milp(
        c=np.zeros(len(variables)),
        constraints=LinearConstraint(np.array(rows), np.array(lbs), np.array(ubs)),
        integrality=np.ones(len(variables)),
        bounds=Bounds(-_BOUND, _BOUND),
    )
    if not res.success or res.x is None:
        return None
    model = {x: int(round(res.x[idx[x]])) for x in variables}

    # Second pass: minimize the sum of absolute values so counterexamples and
    # coefficient solutions come out small and reproducible.
    n = len(variables)
    pad = [[0.0] * n for _ in rows]
    rows2 = [r + p for r, p in zip(rows, pad)]
    for i in range(n):
        # t_i - x_i >= 0 and t_i + x_i >= 0
        row = [0.0] * (2 * n)
        row[i] = -1.0
        row[n + i] = 1.0
        rows2.append(row)
        lbs.append(0.0)
        ubs.append(np.inf)
        row = [0.0] * (2 * n)
        row[i] = 1.0
        row[n + i] = 1.0
        rows2.append(row)
        lbs.append(0.0)
        ubs.append(np.inf)
    obj = np.concatenate([np.zeros(n), np.ones(n)])
    res2 = milp(
        c=obj,
        constraints=LinearConstraint(np.array(rows2), np.array(lbs), np.array(ubs)),
        integrality=np.ones(2 * n),
        bounds=Bounds(-_BOUND, _BOUND),
    )
    if res2.success and res2.x is not None:
        model = {x: int(round(res2.x[idx[x]])) for x in variables}
    return model


def _rationally_feasible(
    eqs: list[Linear], ineqs: list[Linear], variables: list[str]
) -> bool:
    """Exact Fourier-Motzkin feasibility over the rationals."""
    rows: list[tuple[dict[str, Fraction], Fraction]] = []
    for coeffs, k in eqs:
        rows.append(({x: Fraction(c) for x, c in coeffs.items()}, Fraction(k)))
        rows.append(({x: Fraction(-c) for x, c in coeffs.items()}, Fraction(-k)))
    for coeffs, k in ineqs:
        rows.append(({x: Fraction(c) for x, c in coeffs.items()}, Fraction(k)))

    work = list(variables)
    while work:
        x = work.pop()
        lowers, uppers, rest = [], [], []
        for coeffs, k in rows:
            c = coeffs.get(x, Fraction(0))
            if c > 0:
                uppers.append((coeffs, k, c))
            elif c < 0:
                lowers.append((coeffs, k, c))
            else:
                rest.append((coeffs, k))
        rows = rest
        for uc, uk, cu in uppers:
            for lc, lk, cl in lowers:
                coeffs: dict[str, Fraction] = {}
                for y in set(uc) | set(lc):
                    if y == x:
                        continue
                    val = uc.get(y, Fraction(0)) / cu - lc.get(y, Fraction(0)) / cl
                    if val != 0:
                        coeffs[y] = val
                k = uk / cu - lk / cl
                rows.append((coeffs, k))
        if len(rows) > 4000:
            return True  # give up the certificate conservatively
    return all(k <= 0 for _, k in rows)


def _exact_search(
    eqs: list[Linear], ineqs: list[Linear], variables: list[str]
) -> Optional[dict[str, int]]:
    """Bounded exhaustive search with constraint propagation."""
    budget = [200000]

    def recurse(
        eqs: list[Linear], ineqs: list[Linear], rest: list[str], box: int,
        partial: dict[str, int],
    ) -> Optional[dict[str, int]]:
        if budget[0] <= 0:
            return None
        budget[0] -= 1
        if not rest:
            if all(k == 0 for c, k in eqs if not c) and all(
                k <= 0 for c, k in ineqs if not c
            ):
                return dict(partial)
            return None
        x = rest[0]
        lo, hi = -box, box
        for coeffs, k in ineqs:
            if list(coeffs) == [x]:
                c = coeffs[x]
                if c > 0:
                    hi = min(hi, -k // c)
                else:
                    lo = max(lo, -((-k) // (-c)))
        if lo > hi:
            return None
        for v in range(lo, hi + 1):
            sub_eqs = [
                (
                    {y: c for y, c in coeffs.items() if y != x},
                    k + coeffs.get(x, 0) * v,
                )
                for coeffs, k in eqs
            ]
            sub_ineqs = [
                (
                    {y: c for y, c in coeffs.items() if y != x},
                    k + coeffs.get(x, 0) * v,
                )
                for coeffs, k in ineqs
            ]
            if any(not c and k != 0 for c, k in sub_eqs):
                continue
            if any(not c and k > 0 for c, k in sub_ineqs):
                continue
            partial[x] = v
            got = recurse(sub_eqs, sub_ineqs, rest[1:], box, partial)
            if got is not None:
                return got
            del partial[x]
        return None

    for box in (2, 8, 32):
        got = recurse(eqs, ineqs, variables, box, {})
        if got is not None:
            return got
    return None


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------


def main() -> None:
    sys.setrecursionlimit(100000)
    solver = Solver()
    buffer = ""
    depth = 0
    for line in iter(sys.stdin.readline, ""):
        buffer += line
        depth = buffer.count("(") - buffer.count(")")
        if depth > 0:
            continue
        try:
            cmds = parse_sexps(tokenize(buffer))
        except ValueError:
            continue
        buffer = ""
        for cmd in cmds:
            try:
                reply = solver.run_command(cmd)
            except SystemExit:
                return
            except Exception as exc:  # keep serving; report and continue
                reply = f'(error "{type(exc).__name__}: {exc}")'
            if reply is not None:
                sys.stdout.write(reply + "\n")
                sys.stdout.flush()


if __name__ == "__main__":
    main()
