"""Small arithmetic expression language for coefficient fields.

Config files define drift, diffusion and reward fields as strings in the
variables ``t`` (time), ``x`` (state) and ``T`` (horizon).  Grammar, from
loosest to tightest binding::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative exponent
    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x^2`` reads as ``-(x^2)``;
exponents are parsed at the unary level, so ``x^-2`` needs no parentheses.
Integer-looking exponents are not special-cased.

Evaluation is plain IEEE-754 double arithmetic.  Division by zero, logs and
roots of out-of-domain arguments raise :class:`ExprDomainError` carrying the
``(t, x)`` point instead of silently producing NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VARIABLES = ("t", "x", "T")

# function name -> arity
FUNCTIONS = {
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "abs": 1,
    "max": 2,
    "min": 2,
    "pow": 2,
}


class ExprError(Exception):
    """Base class for expression language errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"syntax error at offset {pos}: {message}")
        self.pos = pos


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, pos: int):
        super().__init__(f"unknown identifier {name!r} at offset {pos}")
        self.name = name
        self.pos = pos


class ExprDomainError(ExprError):
    def __init__(self, message: str, t: float, x: float):
        super().__init__(f"{message} at (t={t!r}, x={x!r})")
        self.t = t
        self.x = x


@dataclass(frozen=True)
class Expr:
    """Base AST node.  Positions are kept for diagnostics but ignored by ==."""


@dataclass(frozen=True)
class Num(Expr):
    value: float
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Var(Expr):
    name: str
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]
    pos: int = field(default=-1, compare=False)


# ---------------------------------------------------------------------------
# tokenizer / parser


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(("num", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        if c in "+-*/^(),":
            kind = {"(": "lparen", ")": "rparen", ",": "comma"}.get(c, "op")
            tokens.append((kind, c, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str):
        tok = self.peek()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {what}", tok[2])
        return self.advance()

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            _, op, pos = self.advance()
            node = BinOp(op, node, self.parse_term(), pos=pos)
        return node

    def parse_term(self) -> Expr:
        node = self.parse_unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            _, op, pos = self.advance()
            node = BinOp(op, node, self.parse_unary(), pos=pos)
        return node

    def parse_unary(self) -> Expr:
        tok = self.peek()
        if tok[:2] == ("op", "-"):
            self.advance()
            return Neg(self.parse_unary(), pos=tok[2])
        return self.parse_power()

    def parse_power(self) -> Expr:
        node = self.parse_atom()
        tok = self.peek()
        if tok[:2] == ("op", "^"):
            self.advance()
            # exponent re-enters at the unary level: right-associative,
            # and "x^-2" parses without parentheses
            node = BinOp("^", node, self.parse_unary(), pos=tok[2])
        return node

    def parse_atom(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text), pos=pos)
        if kind == "ident":
            self.advance()
            if self.peek()[0] == "lparen":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, pos)
                self.advance()
                args = [self.parse_expr()]
                while self.peek()[0] == "comma":
                    self.advance()
                    args.append(self.parse_expr())
                self.expect("rparen", "')'")
                if len(args) != FUNCTIONS[text]:
                    raise ExprSyntaxError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}",
                        pos,
                    )
                return Call(text, tuple(args), pos=pos)
            if text not in VARIABLES:
                raise UnknownIdentifierError(text, pos)
            return Var(text, pos=pos)
        if kind == "lparen":
            self.advance()
            node = self.parse_expr()
            self.expect("rparen", "')'")
            return node
        raise ExprSyntaxError("expected a number, variable or '('", pos)


def parse(text: str) -> Expr:
    """Parse an expression string into an AST."""
    parser = _Parser(_tokenize(text))
    node = parser.parse_expr()
    tok = parser.peek()
    if tok[0] != "end":
        raise ExprSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
    return node


# ---------------------------------------------------------------------------
# evaluation


def _checked_pow(base: float, expo: float, t: float, x: float) -> float:
    if base == 0.0 and expo < 0.0:
        raise ExprDomainError("zero raised to a negative power", t, x)
    if base < 0.0 and expo != math.floor(expo):
        raise ExprDomainError("negative base with non-integer exponent", t, x)
    try:
        return base**expo
    except OverflowError:
        raise ExprDomainError("overflow in power", t, x) from None


def eval_expr(e: Expr, t: float, x: float, T: float) -> float:
    """Evaluate at a scalar point with domain checking."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return {"t": t, "x": x, "T": T}[e.name]
    if isinstance(e, Neg):
        return -eval_expr(e.operand, t, x, T)
    if isinstance(e, BinOp):
        a = eval_expr(e.left, t, x, T)
        b = eval_expr(e.right, t, x, T)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise ExprDomainError("division by zero", t, x)
            return a / b
        return _checked_pow(a, b, t, x)
    if isinstance(e, Call):
        args = [eval_expr(a, t, x, T) for a in e.args]
        if e.func == "exp":
            try:
                return math.exp(args[0])
            except OverflowError:
                raise ExprDomainError("overflow in exp", t, x) from None
        if e.func == "log":
            if args[0] <= 0.0:
                raise ExprDomainError("log of a non-positive value", t, x)
            return math.log(args[0])
        if e.func == "sqrt":
            if args[0] < 0.0:
                raise ExprDomainError("sqrt of a negative value", t, x)
            return math.sqrt(args[0])
        if e.func == "abs":
            return abs(args[0])
        if e.func == "max":
            return max(args)
        if e.func == "min":
            return min(args)
        return _checked_pow(args[0], args[1], t, x)
    raise TypeError(f"not an expression node: {e!r}")


def compile_numpy(e: Expr):
    """Compile to a closure ``f(t, x, T)`` over numpy ufuncs.

    The compiled form is allocation-light and broadcasts over array inputs;
    it does no domain checking (NaN/inf propagate and are caught by callers
    that care, e.g. the solver's coefficient scan).
    """
    if isinstance(e, Num):
        v = e.value
        return lambda t, x, T: v
    if isinstance(e, Var):
        if e.name == "t":
            return lambda t, x, T: t
        if e.name == "x":
            return lambda t, x, T: x
        return lambda t, x, T: T
    if isinstance(e, Neg):
        f = compile_numpy(e.operand)
        return lambda t, x, T: -f(t, x, T)
    if isinstance(e, BinOp):
        fl = compile_numpy(e.left)
        fr = compile_numpy(e.right)
        op = e.op
        if op == "+":
            return lambda t, x, T: fl(t, x, T) + fr(t, x, T)
        if op == "-":
            return lambda t, x, T: fl(t, x, T) - fr(t, x, T)
        if op == "*":
            return lambda t, x, T: fl(t, x, T) * fr(t, x, T)
        if op == "/":
            return lambda t, x, T: fl(t, x, T) / fr(t, x, T)
        return lambda t, x, T: fl(t, x, T) ** fr(t, x, T)
    if isinstance(e, Call):
        fns = [compile_numpy(a) for a in e.args]
        if e.func in ("exp", "log", "sqrt", "abs"):
            uf = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs}[e.func]
            f0 = fns[0]
            return lambda t, x, T: uf(f0(t, x, T))
        f0, f1 = fns
        if e.func == "max":
            return lambda t, x, T: np.maximum(f0(t, x, T), f1(t, x, T))
        if e.func == "min":
            return lambda t, x, T: np.minimum(f0(t, x, T), f1(t, x, T))
        return lambda t, x, T: f0(t, x, T) ** f1(t, x, T)
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e: Expr) -> set[str]:
    """Exact set of variables appearing in the expression."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        out: set[str] = set()
        for a in e.args:
            out |= free_variables(a)
        return out
    return set()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_PREC_UNARY = 3
_PREC_ATOM = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC_UNARY
    return _PREC_ATOM


def to_string(e: Expr) -> str:
    """Print with minimal parentheses; parse(to_string(e)) == e structurally."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_string(e.operand)
        if _prec(e.operand) < _PREC_UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        ls = to_string(e.left)
        rs = to_string(e.right)
        if e.op == "^":
            # left-associated powers need parens; exponent slot is unary-level
            if _prec(e.left) <= p:
                ls = f"({ls})"
            if _prec(e.right) < _PREC_UNARY:
                rs = f"({rs})"
        else:
            if _prec(e.left) < p:
                ls = f"({ls})"
            if _prec(e.right) <= p:
                rs = f"({rs})"
        return f"{ls} {e.op} {rs}" if e.op in "+-" else f"{ls}{e.op}{rs}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_string(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")
