"""Superfunctions on a split chart.

A chart has n even coordinates x1..xn and q odd generators e1..eq.  A
superfunction is stored sparsely as {odd multi-index -> ScalarExpr in the
x's}; the empty index carries the underlying function, indices of length one
the fiber-linear part.  The module also provides the projection onto degrees
<= 1 and its identification with affine functions on the total space of the
bundle, where a point is (x, c) with real fiber coordinates c1..cq.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from ._kernel import merge_sign
from .grassmann import MAX_GENERATORS, GrassmannValue, _index_from_mask, _mask_from_index


class SuperfieldError(Exception):
    """Chart mismatch, bad index, or an operation outside its domain."""


@dataclass(frozen=True)
class ChartSpec:
    """Dimensions of a split chart: n even coordinates, q odd generators."""

    n: int
    q: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise SuperfieldError(f"need at least one even coordinate, got n={self.n}")
        if not isinstance(self.q, int) or not 1 <= self.q <= MAX_GENERATORS:
            raise SuperfieldError(f"odd dimension must be in 1..{MAX_GENERATORS}, got q={self.q}")

    @property
    def total_dim(self):
        return self.n + self.q

    def parity_vector(self):
        """Parity per coordinate slot: slots 0..n-1 are the x's (even),
        slots n..n+q-1 the odd directions."""
        return np.array([0] * self.n + [1] * self.q, dtype=np.int64)

    def slot_parity(self, slot):
        return 0 if slot < self.n else 1

    def label(self, slot):
        if 0 <= slot < self.n:
            return f"x{slot + 1}"
        if self.n <= slot < self.total_dim:
            return f"e{slot - self.n + 1}"
        raise SuperfieldError(f"slot {slot} out of range for chart (n={self.n}, q={self.q})")

    def slot(self, label):
        label = label.strip()
        kind, digits = label[:1], label[1:]
        if not digits.isdigit() or digits.startswith("0"):
            raise SuperfieldError(f"bad coordinate label {label!r}")
        k = int(digits)
        if kind == "x" and 1 <= k <= self.n:
            return k - 1
        if kind == "e" and 1 <= k <= self.q:
            return self.n + k - 1
        raise SuperfieldError(f"coordinate label {label!r} out of range for chart (n={self.n}, q={self.q})")

    def require_same(self, other):
        if (self.n, self.q) != (other.n, other.q):
            raise SuperfieldError(f"chart mismatch: (n={self.n}, q={self.q}) vs (n={other.n}, q={other.q})")


_ZERO = ex.Const(0.0)


class SuperFunction:
    """Sparse superfunction: {generator bitmask -> ScalarExpr coefficient}."""

    __slots__ = ("chart", "_comps")

    def __init__(self, chart, comps=None):
        self.chart = chart
        self._comps = {m: e for m, e in (comps or {}).items() if not e.is_const(0.0)}

    # ---- constructors ------------------------------------------------

    @classmethod
    def zero(cls, chart):
        return cls(chart)

    @classmethod
    def constant(cls, chart, c):
        return cls(chart, {0: ex.Const(float(c))})

    @classmethod
    def from_scalar(cls, chart, e):
        return cls(chart, {0: _as_expr(e, chart)})

    @classmethod
    def generator(cls, chart, alpha):
        if not 1 <= alpha <= chart.q:
            raise SuperfieldError(f"odd generator index {alpha} out of range 1..{chart.q}")
        return cls(chart, {1 << (alpha - 1): ex.Const(1.0)})

    @classmethod
    def coordinate(cls, chart, slot):
        """The coordinate superfunction for a slot (even -> x, odd -> generator)."""
        if slot < chart.n:
            return cls.from_scalar(chart, ex.Var(slot + 1))
        return cls.generator(chart, slot - chart.n + 1)

    @classmethod
    def from_components(cls, chart, components):
        comps = {}
        for index, coeff in components.items():
            mask = _mask_from_index(tuple(index), chart.q)
            if mask in comps:
                raise SuperfieldError(f"duplicate odd multi-index {tuple(index)}")
            comps[mask] = _as_expr(coeff, chart)
        return cls(chart, comps)

    # ---- structure -----------------------------------------------------

    @property
    def components(self):
        return {_index_from_mask(m): e for m, e in sorted(self._comps.items())}

    def component(self, index):
        return self._comps.get(_mask_from_index(tuple(index), self.chart.q), _ZERO)

    def is_zero(self):
        return not self._comps

    def max_degree(self):
        return max((m.bit_count() for m in self._comps), default=0)

    def parity(self):
        degrees = {m.bit_count() & 1 for m in self._comps}
        if degrees <= {0}:
            return "even"
        if degrees == {1}:
            return "odd"
        return "mixed"

    # ---- algebra ---------------------------------------------------------

    def _binary(self, other):
        if isinstance(other, SuperFunction):
            self.chart.require_same(other.chart)
            return other
        if isinstance(other, (int, float, np.floating, np.integer, ex.ScalarExpr)):
            return SuperFunction.from_scalar(self.chart, _as_expr(other, self.chart))
        return None

    def __add__(self, other):
        rhs = self._binary(other)
        if rhs is None:
            return NotImplemented
        comps = dict(self._comps)
        for m, e in rhs._comps.items():
            comps[m] = ex.add(comps[m], e) if m in comps else e
        return SuperFunction(self.chart, comps)

    __radd__ = __add__

    def __neg__(self):
        return SuperFunction(self.chart, {m: ex.neg(e) for m, e in self._comps.items()})

    def __sub__(self, other):
        rhs = self._binary(other)
        if rhs is None:
            return NotImplemented
        return self + (-rhs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        rhs = self._binary(other)
        if rhs is None:
            return NotImplemented
        comps = {}
        for ma, ea in self._comps.items():
            for mb, eb in rhs._comps.items():
                if ma & mb:
                    continue
                m = ma | mb
                prod = ex.mul(ea, eb)
                if merge_sign(ma, mb) < 0:
                    prod = ex.neg(prod)
                comps[m] = ex.add(comps[m], prod) if m in comps else prod
        return SuperFunction(self.chart, comps)

    def __rmul__(self, other):
        # scalars are even, so they commute with everything
        rhs = self._binary(other)
        if rhs is None:
            return NotImplemented
        return rhs * self

    def scaled(self, factor):
        factor = _as_expr(factor, self.chart)
        return SuperFunction(self.chart, {m: ex.mul(factor, e) for m, e in self._comps.items()})

    def __eq__(self, other):
        if not isinstance(other, SuperFunction):
            return NotImplemented
        return (self.chart.n, self.chart.q) == (other.chart.n, other.chart.q) and self._comps == other._comps

    def __hash__(self):
        return hash(((self.chart.n, self.chart.q), tuple(sorted(self._comps.items(), key=lambda kv: kv[0]))))

    # ---- derivations -------------------------------------------------------

    def dhat_base(self, i):
        """Derivative along x_i (1-based), applied to every coefficient."""
        if not 1 <= i <= self.chart.n:
            raise SuperfieldError(f"base index {i} out of range 1..{self.chart.n}")
        return SuperFunction(self.chart, {m: e.diff(i) for m, e in self._comps.items()})

    def dhat_odd(self, alpha):
        """Left derivative along e_alpha (1-based)."""
        if not 1 <= alpha <= self.chart.q:
            raise SuperfieldError(f"odd index {alpha} out of range 1..{self.chart.q}")
        bit = 1 << (alpha - 1)
        below = bit - 1
        comps = {}
        for m, e in self._comps.items():
            if not m & bit:
                continue
            if (m & below).bit_count() & 1:
                e = ex.neg(e)
            comps[m ^ bit] = e
        return SuperFunction(self.chart, comps)

    def dhat(self, slot):
        """Derivation along a coordinate slot (0-based over x's then e's)."""
        if slot < self.chart.n:
            return self.dhat_base(slot + 1)
        return self.dhat_odd(slot - self.chart.n + 1)

    # ---- reduction and the affine picture ------------------------------------

    def reduce(self):
        """Underlying function on the base: the empty-index coefficient."""
        return self._comps.get(0, _ZERO)

    def project_affine(self):
        """Degree <= 1 part."""
        return SuperFunction(self.chart, {m: e for m, e in self._comps.items() if m.bit_count() <= 1})

    def to_fiber_affine(self):
        """Identify a degree <= 1 superfunction with an affine function on the
        bundle total space.  Raises if higher-degree terms are present."""
        if self.max_degree() > 1:
            raise SuperfieldError("superfunction has degree >= 2 terms; project first")
        linear = tuple(self._comps.get(1 << b, _ZERO) for b in range(self.chart.q))
        return FiberAffineFunction(self.chart, self._comps.get(0, _ZERO), linear)

    # ---- evaluation -----------------------------------------------------------

    def evaluate(self, x):
        """Evaluate the coefficients at a base point, yielding a Grassmann value."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.chart.n,):
            raise SuperfieldError(f"expected {self.chart.n} base coordinates, got shape {x.shape}")
        return GrassmannValue.from_terms(
            self.chart.q, {_index_from_mask(m): e.evaluate(x) for m, e in self._comps.items()}
        )

    # ---- generator substitution ------------------------------------------------

    def substitute_generators(self, images):
        """Algebra endomorphism fixing the base: e_alpha -> images[alpha]
        (identity where missing).  Coefficients are scalars, so they pass
        through unchanged."""
        chart = self.chart
        out = SuperFunction.zero(chart)
        cache = {}
        for m, e in self._comps.items():
            if m not in cache:
                prod = SuperFunction.constant(chart, 1.0)
                for b in range(chart.q):
                    if m >> b & 1:
                        alpha = b + 1
                        img = images.get(alpha)
                        if img is None:
                            img = SuperFunction.generator(chart, alpha)
                        else:
                            chart.require_same(img.chart)
                        prod = prod * img
                cache[m] = prod
            out = out + cache[m].scaled(e)
        return out

    # ---- text --------------------------------------------------------------------

    def render(self):
        if not self._comps:
            return "0.0"
        parts = []
        for m in sorted(self._comps, key=lambda m: (m.bit_count(), m)):
            e = self._comps[m]
            if m == 0:
                parts.append(e._render(2) if isinstance(e, (ex.Add, ex.Sub)) else e.render())
                continue
            index = _index_from_mask(m)
            etext = "e[" + ",".join(str(a) for a in index) + "]"
            if e.is_const(1.0):
                parts.append(etext)
            elif isinstance(e, (ex.Add, ex.Sub, ex.Neg)):
                parts.append(f"({e.render()})*{etext}")
            else:
                parts.append(f"{e.render()}*{etext}")
        return " + ".join(parts)

    __str__ = render

    def __repr__(self):
        return f"SuperFunction(n={self.chart.n}, q={self.chart.q}, {self.render()!r})"


def _as_expr(v, chart):
    if isinstance(v, ex.ScalarExpr):
        e = v
    elif isinstance(v, str):
        e = ex.parse(v)
    elif isinstance(v, (int, float, np.floating, np.integer)):
        e = ex.Const(float(v))
    else:
        raise SuperfieldError(f"cannot use {v!r} as a scalar coefficient")
    bad = sorted(i for i in e.variables() if i > chart.n)
    if bad:
        raise SuperfieldError(f"coefficient uses x{bad[0]} but the chart has n={chart.n}")
    return e


@dataclass(frozen=True)
class FiberAffineFunction:
    """Affine function on the bundle total space: base(x) + sum_b c_b * linear[b](x)."""

    chart: ChartSpec
    base: ex.ScalarExpr
    linear: tuple = field(default=())

    def __post_init__(self):
        if len(self.linear) != self.chart.q:
            raise SuperfieldError(f"need {self.chart.q} linear coefficients, got {len(self.linear)}")

    def evaluate(self, y):
        """Evaluate at a total-space point y = (x1..xn, c1..cq)."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.chart.total_dim,):
            raise SuperfieldError(f"expected {self.chart.total_dim} coordinates, got shape {y.shape}")
        x = y[: self.chart.n]
        out = self.base.evaluate(x)
        for b in range(self.chart.q):
            out += y[self.chart.n + b] * self.linear[b].evaluate(x)
        return out

    def to_total_expr(self):
        """One scalar expression over n+q variables (fiber slots are
        x_{n+1}..x_{n+q})."""
        out = self.base
        for b in range(self.chart.q):
            out = ex.add(out, ex.mul(ex.Var(self.chart.n + b + 1), self.linear[b]))
        return out

    def to_superfunction(self):
        comps = {0: self.base}
        for b in range(self.chart.q):
            comps[1 << b] = self.linear[b]
        return SuperFunction(self.chart, comps)

    def is_zero(self):
        return self.base.is_const(0.0) and all(l.is_const(0.0) for l in self.linear)


def psi(f):
    """Projection onto degrees <= 1 followed by the affine identification."""
    return f.project_affine().to_fiber_affine()


def psi_inverse(a):
    return a.to_superfunction()


# ---- parsing ---------------------------------------------------------------------

_SUPER_TOKEN = None


class _SuperParser:
    """Same grammar as scalar expressions plus the atom e[i,j,...]; values are
    SuperFunctions.  Division and the named functions require a purely scalar
    operand."""

    def __init__(self, text, chart):
        import re

        self.text = text
        self.chart = chart
        global _SUPER_TOKEN
        if _SUPER_TOKEN is None:
            _SUPER_TOKEN = re.compile(
                r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
                r"|(?P<op>[-+*/^()\[\],]))"
            )
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _SUPER_TOKEN.match(text, pos)
            if not m:
                if text[pos:].strip() == "":
                    break
                raise ex.ExprSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
            for kind in ("num", "name", "op"):
                if m.group(kind) is not None:
                    self.tokens.append((kind, m.group(kind), m.start(kind)))
                    break
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ex.ExprSyntaxError(f"expected {op!r}", self.text, pos)
        self.take()

    def parse(self):
        f = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ex.ExprSyntaxError(f"unexpected trailing {val!r}", self.text, pos)
        return f

    def expr(self):
        f = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                f = f + rhs if val == "+" else f - rhs
            else:
                return f

    def term(self):
        f = self.factor()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.factor()
                if val == "*":
                    f = f * rhs
                else:
                    f = self._divide(f, rhs, pos)
            else:
                return f

    def _divide(self, f, g, pos):
        if g.max_degree() > 0 or g.is_zero():
            raise ex.ExprSyntaxError("division requires a nonzero scalar divisor", self.text, pos)
        denom = g.reduce()
        try:
            return SuperFunction(
                self.chart, {m: ex.div(e, denom) for m, e in f._comps.items()}
            )
        except ex.ExprError as exc:
            raise ex.ExprSyntaxError(str(exc), self.text, pos) from None

    def factor(self):
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return -self.factor()
        f = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            f = self._power(f, pos)
        return f

    def _power(self, f, caret_pos):
        sign = 1
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            sign = -1
            kind, val, pos = self.peek()
        if kind != "num" or any(c in val for c in ".eE"):
            raise ex.ExprSyntaxError("exponent must be an integer literal", self.text, pos)
        self.take()
        k = sign * int(val)
        if f.max_degree() == 0:
            try:
                return SuperFunction(self.chart, {0: ex.pow_(f.reduce(), k)})
            except ex.ExprError as exc:
                raise ex.ExprSyntaxError(str(exc), self.text, caret_pos) from None
        if k < 0:
            raise ex.ExprSyntaxError("negative power of a non-scalar superfunction", self.text, caret_pos)
        out = SuperFunction.constant(self.chart, 1.0)
        for _ in range(k):
            out = out * f
        return out

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return SuperFunction.constant(self.chart, float(val))
        if kind == "name":
            if val in ("e", "E") and self.peek()[1] == "[":
                self.take()
                index = self._index_list()
                try:
                    mask = _mask_from_index(index, self.chart.q)
                except Exception as exc:
                    raise ex.ExprSyntaxError(str(exc), self.text, pos) from None
                return SuperFunction(self.chart, {mask: ex.Const(1.0)})
            m = ex._VAR_RE.match(val)
            if m:
                idx = int(m.group(1))
                if idx > self.chart.n:
                    raise ex.ExprSyntaxError(
                        f"variable x{idx} exceeds the chart's {self.chart.n} base coordinates",
                        self.text,
                        pos,
                    )
                return SuperFunction.from_scalar(self.chart, ex.Var(idx))
            if val in ex._FUNC_EVAL:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                if arg.max_degree() > 0:
                    raise ex.ExprSyntaxError(f"{val}() requires a scalar argument", self.text, pos)
                return SuperFunction(self.chart, {0: ex.Call(val, arg.reduce())})
            raise ex.ExprSyntaxError(f"unknown identifier {val!r}", self.text, pos)
        if kind == "op" and val == "(":
            f = self.expr()
            self.expect(")")
            return f
        raise ex.ExprSyntaxError(
            f"expected a value, got {val!r}" if val else "unexpected end of input", self.text, pos
        )

    def _index_list(self):
        index = []
        while True:
            kind, val, pos = self.take()
            if kind != "num" or any(c in val for c in ".eE"):
                raise ex.ExprSyntaxError("multi-index entries must be integers", self.text, pos)
            index.append(int(val))
            kind, val, pos = self.take()
            if kind == "op" and val == ",":
                continue
            if kind == "op" and val == "]":
                return tuple(index)
            raise ex.ExprSyntaxError("expected ',' or ']' in multi-index", self.text, pos)


def parse_superfunction(text, chart):
    """Parse text like 'x1^2 + (x1)*e[1] + 3*e[1,2]' into a SuperFunction."""
    return _SuperParser(text, chart).parse()
