"""Symbolic scalar expressions over real chart coordinates x1, x2, ...

Small immutable trees with structural equality.  Construction goes through
smart constructors that do light cleanup only (0/1 identities, constant
folding, double negation); nothing rewrites the algebraic structure.
Expressions evaluate pointwise with domain checking, differentiate
symbolically, substitute, render to text, and reparse to the same tree.
compile_columns() turns a batch of expressions into one vectorized numpy
function for the numeric pipeline.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np


class ExprError(Exception):
    """Base error for scalar expressions."""


class ExprSyntaxError(ExprError):
    def __init__(self, message, text, pos):
        super().__init__(f"{message} at position {pos} in {text!r}")
        self.text = text
        self.pos = pos


class EvaluationError(ExprError):
    def __init__(self, message, subexpr):
        super().__init__(f"{message} in subexpression {subexpr.render()!r}")
        self.subexpr = subexpr


class ScalarExpr:
    """Base class; all nodes are immutable and compare structurally."""

    __slots__ = ()

    # -- operator sugar, routed through the smart constructors --

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, k):
        return pow_(self, k)

    def __neg__(self):
        return neg(self)

    # -- interface implemented by each node --

    def evaluate(self, x):
        raise NotImplementedError

    def diff(self, i):
        """Partial derivative with respect to x_i (1-based)."""
        raise NotImplementedError

    def substitute(self, mapping):
        """Replace Var(i) by mapping[i] where present."""
        raise NotImplementedError

    def variables(self):
        raise NotImplementedError

    def render(self):
        return self._render(0)

    def _render(self, context_rank):
        raise NotImplementedError

    def __str__(self):
        return self.render()

    def __repr__(self):
        return f"{type(self).__name__}({self.render()!r})"

    def is_const(self, value=None):
        return isinstance(self, Const) and (value is None or self.value == value)


def _coerce(v):
    if isinstance(v, ScalarExpr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    return NotImplemented


def _maybe_paren(text, rank, context_rank):
    return f"({text})" if rank < context_rank else text


@dataclass(frozen=True, slots=True)
class Const(ScalarExpr):
    value: float

    def evaluate(self, x):
        return self.value

    def diff(self, i):
        return Const(0.0)

    def substitute(self, mapping):
        return self

    def variables(self):
        return set()

    def _render(self, context_rank):
        if self.value < 0 or (self.value == 0 and math.copysign(1.0, self.value) < 0):
            return _maybe_paren(repr(self.value), 3, context_rank)
        return repr(self.value)


@dataclass(frozen=True, slots=True)
class Var(ScalarExpr):
    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or self.index < 1:
            raise ExprError(f"variable index must be a positive integer, got {self.index}")

    def evaluate(self, x):
        if self.index > len(x):
            raise EvaluationError(f"point has {len(x)} coordinates", self)
        return float(x[self.index - 1])

    def diff(self, i):
        return Const(1.0 if i == self.index else 0.0)

    def substitute(self, mapping):
        return mapping.get(self.index, self)

    def variables(self):
        return {self.index}

    def _render(self, context_rank):
        return f"x{self.index}"


@dataclass(frozen=True, slots=True)
class Add(ScalarExpr):
    a: ScalarExpr
    b: ScalarExpr

    def evaluate(self, x):
        return self.a.evaluate(x) + self.b.evaluate(x)

    def diff(self, i):
        return add(self.a.diff(i), self.b.diff(i))

    def substitute(self, mapping):
        return add(self.a.substitute(mapping), self.b.substitute(mapping))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def _render(self, context_rank):
        text = f"{self.a._render(1)} + {self.b._render(2)}"
        return _maybe_paren(text, 1, context_rank)


@dataclass(frozen=True, slots=True)
class Sub(ScalarExpr):
    a: ScalarExpr
    b: ScalarExpr

    def evaluate(self, x):
        return self.a.evaluate(x) - self.b.evaluate(x)

    def diff(self, i):
        return sub(self.a.diff(i), self.b.diff(i))

    def substitute(self, mapping):
        return sub(self.a.substitute(mapping), self.b.substitute(mapping))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def _render(self, context_rank):
        text = f"{self.a._render(1)} - {self.b._render(2)}"
        return _maybe_paren(text, 1, context_rank)


@dataclass(frozen=True, slots=True)
class Mul(ScalarExpr):
    a: ScalarExpr
    b: ScalarExpr

    def evaluate(self, x):
        return self.a.evaluate(x) * self.b.evaluate(x)

    def diff(self, i):
        return add(mul(self.a.diff(i), self.b), mul(self.a, self.b.diff(i)))

    def substitute(self, mapping):
        return mul(self.a.substitute(mapping), self.b.substitute(mapping))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def _render(self, context_rank):
        text = f"{self.a._render(2)} * {self.b._render(3)}"
        return _maybe_paren(text, 2, context_rank)


@dataclass(frozen=True, slots=True)
class Div(ScalarExpr):
    a: ScalarExpr
    b: ScalarExpr

    def evaluate(self, x):
        denom = self.b.evaluate(x)
        if denom == 0.0:
            raise EvaluationError("division by zero", self)
        return self.a.evaluate(x) / denom

    def diff(self, i):
        num = sub(mul(self.a.diff(i), self.b), mul(self.a, self.b.diff(i)))
        return div(num, mul(self.b, self.b))

    def substitute(self, mapping):
        return div(self.a.substitute(mapping), self.b.substitute(mapping))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def _render(self, context_rank):
        text = f"{self.a._render(2)} / {self.b._render(3)}"
        return _maybe_paren(text, 2, context_rank)


@dataclass(frozen=True, slots=True)
class Neg(ScalarExpr):
    a: ScalarExpr

    def evaluate(self, x):
        return -self.a.evaluate(x)

    def diff(self, i):
        return neg(self.a.diff(i))

    def substitute(self, mapping):
        return neg(self.a.substitute(mapping))

    def variables(self):
        return self.a.variables()

    def _render(self, context_rank):
        return _maybe_paren(f"-{self.a._render(4)}", 3, context_rank)


@dataclass(frozen=True, slots=True)
class Pow(ScalarExpr):
    base: ScalarExpr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int):
            raise ExprError(f"exponent must be an integer, got {self.exponent!r}")

    def evaluate(self, x):
        base = self.base.evaluate(x)
        if base == 0.0 and self.exponent < 0:
            raise EvaluationError("zero raised to a negative power", self)
        return base**self.exponent

    def diff(self, i):
        if self.exponent == 0:
            return Const(0.0)
        return mul(
            mul(Const(float(self.exponent)), pow_(self.base, self.exponent - 1)),
            self.base.diff(i),
        )

    def substitute(self, mapping):
        return pow_(self.base.substitute(mapping), self.exponent)

    def variables(self):
        return self.base.variables()

    def _render(self, context_rank):
        return _maybe_paren(f"{self.base._render(5)}^{self.exponent}", 4, context_rank)


_FUNC_EVAL = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}

FUNCTION_NAMES = tuple(sorted(_FUNC_EVAL))


@dataclass(frozen=True, slots=True)
class Call(ScalarExpr):
    name: str
    arg: ScalarExpr

    def __post_init__(self):
        if self.name not in _FUNC_EVAL:
            raise ExprError(f"unknown function {self.name!r}")

    def evaluate(self, x):
        v = self.arg.evaluate(x)
        if self.name == "log" and v <= 0.0:
            raise EvaluationError(f"log of non-positive value {v}", self)
        if self.name == "sqrt" and v < 0.0:
            raise EvaluationError(f"sqrt of negative value {v}", self)
        try:
            return _FUNC_EVAL[self.name](v)
        except (ValueError, OverflowError) as exc:
            raise EvaluationError(str(exc), self) from None

    def diff(self, i):
        u = self.arg
        du = u.diff(i)
        if self.name == "sin":
            outer = Call("cos", u)
        elif self.name == "cos":
            outer = neg(Call("sin", u))
        elif self.name == "exp":
            outer = self
        elif self.name == "log":
            return div(du, u)
        else:  # sqrt
            return div(du, mul(Const(2.0), self))
        return mul(outer, du)

    def substitute(self, mapping):
        return Call(self.name, self.arg.substitute(mapping))

    def variables(self):
        return self.arg.variables()

    def _render(self, context_rank):
        return f"{self.name}({self.arg._render(0)})"


# ---- smart constructors ----------------------------------------------------


def add(a, b):
    if a.is_const() and b.is_const():
        return Const(a.value + b.value)
    if a.is_const(0.0):
        return b
    if b.is_const(0.0):
        return a
    if isinstance(b, Neg) and b.a == a:
        return Const(0.0)
    if isinstance(a, Neg) and a.a == b:
        return Const(0.0)
    return Add(a, b)


def sub(a, b):
    if a.is_const() and b.is_const():
        return Const(a.value - b.value)
    if b.is_const(0.0):
        return a
    if a.is_const(0.0):
        return neg(b)
    if a == b:
        return Const(0.0)
    return Sub(a, b)


def mul(a, b):
    if a.is_const() and b.is_const():
        return Const(a.value * b.value)
    if a.is_const(0.0) or b.is_const(0.0):
        return Const(0.0)
    if a.is_const(1.0):
        return b
    if b.is_const(1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if b.is_const(0.0):
        raise ExprError("division by the constant zero")
    if a.is_const() and b.is_const():
        return Const(a.value / b.value)
    if a.is_const(0.0):
        return Const(0.0)
    if b.is_const(1.0):
        return a
    return Div(a, b)


def neg(a):
    if a.is_const():
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def pow_(base, k):
    k = int(k)
    if k == 0:
        return Const(1.0)
    if k == 1:
        return base
    if base.is_const():
        if base.value == 0.0 and k < 0:
            raise ExprError("zero raised to a negative power")
        return Const(base.value**k)
    return Pow(base, k)


# ---- parsing ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_VAR_RE = re.compile(r"^x([1-9][0-9]*)$")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent for: expr := term (('+'|'-') term)*;
    term := factor (('*'|'/') factor)*; factor := '-' factor | atom ['^' int];
    atom := number | var | func '(' expr ')' | '(' expr ')'.

    Exponentiation binds above unary minus, so -x1^2 is -(x1^2); an
    exponent is an integer literal with optional sign.
    """

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", self.text, pos)
        self.take()

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected trailing {val!r}", self.text, pos)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                e = add(e, rhs) if val == "+" else sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.factor()
                try:
                    e = mul(e, rhs) if val == "*" else div(e, rhs)
                except ExprError as exc:
                    raise ExprSyntaxError(str(exc), self.text, self.peek()[2]) from None
            else:
                return e

    def factor(self):
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return neg(self.factor())
        e = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            e = self._apply_exponent(e, pos)
        return e

    def _apply_exponent(self, base, caret_pos):
        sign = 1
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            sign = -1
            kind, val, pos = self.peek()
        if kind != "num" or any(c in val for c in ".eE"):
            raise ExprSyntaxError("exponent must be an integer literal", self.text, pos)
        self.take()
        try:
            return pow_(base, sign * int(val))
        except ExprError as exc:
            raise ExprSyntaxError(str(exc), self.text, caret_pos) from None

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            m = _VAR_RE.match(val)
            if m:
                return Var(int(m.group(1)))
            if val in _FUNC_EVAL:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            raise ExprSyntaxError(f"unknown identifier {val!r}", self.text, pos)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"expected a value, got {val!r}" if val else "unexpected end of input", self.text, pos)


def parse(text, n_vars=None):
    """Parse text into a ScalarExpr.  If n_vars is given, reject variables
    beyond x{n_vars}."""
    e = _Parser(text).parse()
    if n_vars is not None:
        bad = sorted(v for v in e.variables() if v > n_vars)
        if bad:
            raise ExprError(f"variable x{bad[0]} exceeds the declared {n_vars} coordinates in {text!r}")
    return e


def render(e):
    return e.render()


# ---- vectorized compilation --------------------------------------------------


def _pycode(e, temps, lines):
    """Emit numpy code for e, naming every compound node once (CSE by
    rendered form)."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"X[:, {e.index - 1}]"
    key = e.render()
    hit = temps.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Add):
        code = f"{_pycode(e.a, temps, lines)} + {_pycode(e.b, temps, lines)}"
    elif isinstance(e, Sub):
        code = f"{_pycode(e.a, temps, lines)} - {_pycode(e.b, temps, lines)}"
    elif isinstance(e, Mul):
        code = f"{_pycode(e.a, temps, lines)} * {_pycode(e.b, temps, lines)}"
    elif isinstance(e, Div):
        code = f"{_pycode(e.a, temps, lines)} / {_pycode(e.b, temps, lines)}"
    elif isinstance(e, Neg):
        code = f"-({_pycode(e.a, temps, lines)})"
    elif isinstance(e, Pow):
        code = f"({_pycode(e.base, temps, lines)}) ** {e.exponent}"
    elif isinstance(e, Call):
        code = f"np.{e.name}({_pycode(e.arg, temps, lines)})"
    else:
        raise ExprError(f"cannot compile node {e!r}")
    name = f"t{len(temps)}"
    lines.append(f"    {name} = {code}")
    temps[key] = name
    return name


def compile_columns(exprs):
    """Compile expressions into one function mapping X (B, n) to (B, len(exprs)).

    Shared subtrees are computed once.  Unlike ScalarExpr.evaluate, the
    compiled function does not raise on domain violations; out-of-domain
    inputs produce nan/inf for the caller to detect.
    """
    exprs = list(exprs)
    temps = {}
    lines = []
    cols = [_pycode(e, temps, lines) for e in exprs]
    src_lines = ["def _compiled(X, np, out=None):"]
    src_lines.append(f"    B = X.shape[0]")
    src_lines.append(f"    if out is None: out = np.empty((B, {len(exprs)}))")
    src_lines.extend(lines)
    for t, c in enumerate(cols):
        src_lines.append(f"    out[:, {t}] = {c}")
    src_lines.append("    return out")
    src = "\n".join(src_lines)
    ns = {}
    exec(src, ns)  # codegen over a fixed grammar, no user code reaches here
    fn = ns["_compiled"]

    def runner(X, out=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return fn(X, np, out)

    return runner
