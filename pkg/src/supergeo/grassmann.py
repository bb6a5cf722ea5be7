"""Exact arithmetic in the real Grassmann algebra on q anticommuting generators.

Elements are stored sparsely: a strictly increasing multi-index (kept
internally as a bitmask over the generators) maps to a nonzero float
coefficient.  The empty index is the scalar part (the body); everything of
degree >= 1 is the soul.  Inversion and linear solves use that the soul is
nilpotent, so a finite Neumann series around the body is exact.
"""

from __future__ import annotations

import numpy as np

from ._kernel import add_terms, lderiv_terms, merge_sign, mul_terms, scale_terms

MAX_GENERATORS = 16

_EMPTY_K = np.empty(0, dtype=np.uint32)
_EMPTY_V = np.empty(0, dtype=np.float64)


class GrassmannError(Exception):
    """Base error for Grassmann arithmetic."""


class DimensionMismatch(GrassmannError):
    """Operands live over different numbers of generators."""


class NotInvertible(GrassmannError):
    """Body is zero (or a body matrix is singular), so no inverse exists."""


class IndexError_(GrassmannError):
    """Multi-index out of range or not strictly increasing."""


def _check_q(q):
    if not isinstance(q, int) or q < 1 or q > MAX_GENERATORS:
        raise IndexError_(f"number of generators must be in 1..{MAX_GENERATORS}, got {q}")


def _mask_from_index(index, q):
    mask = 0
    prev = 0
    for a in index:
        if not isinstance(a, (int, np.integer)) or a < 1 or a > q:
            raise IndexError_(f"generator index {a} out of range 1..{q}")
        if a <= prev:
            raise IndexError_(f"multi-index {tuple(index)} is not strictly increasing")
        mask |= 1 << (a - 1)
        prev = a
    return mask


def _index_from_mask(mask):
    out = []
    a = 1
    while mask:
        if mask & 1:
            out.append(a)
        mask >>= 1
        a += 1
    return tuple(out)


class GrassmannValue:
    """One element of the Grassmann algebra on ``q`` generators."""

    __slots__ = ("q", "_keys", "_vals")

    def __init__(self, q, keys=None, vals=None):
        _check_q(q)
        self.q = q
        self._keys = _EMPTY_K if keys is None else keys
        self._vals = _EMPTY_V if vals is None else vals

    # ---- constructors -------------------------------------------------

    @classmethod
    def zero(cls, q):
        return cls(q)

    @classmethod
    def scalar(cls, q, c):
        c = float(c)
        if c == 0.0:
            return cls(q)
        return cls(q, np.array([0], dtype=np.uint32), np.array([c]))

    @classmethod
    def generator(cls, q, alpha):
        return cls.monomial(q, (alpha,), 1.0)

    @classmethod
    def monomial(cls, q, index, c=1.0):
        _check_q(q)
        mask = _mask_from_index(index, q)
        c = float(c)
        if c == 0.0:
            return cls(q)
        return cls(q, np.array([mask], dtype=np.uint32), np.array([c]))

    @classmethod
    def from_terms(cls, q, terms):
        """Build from {multi-index tuple: coefficient}."""
        _check_q(q)
        acc = {}
        for index, c in terms.items():
            mask = _mask_from_index(tuple(index), q)
            if mask in acc:
                raise IndexError_(f"duplicate multi-index {tuple(index)}")
            c = float(c)
            if c != 0.0:
                acc[mask] = c
        items = sorted(acc.items())
        if not items:
            return cls(q)
        keys = np.fromiter((k for k, _ in items), dtype=np.uint32, count=len(items))
        vals = np.fromiter((v for _, v in items), dtype=np.float64, count=len(items))
        return cls(q, keys, vals)

    # ---- structure ----------------------------------------------------

    @property
    def terms(self):
        """{multi-index tuple: coefficient} with no zeros."""
        return {_index_from_mask(int(k)): float(v) for k, v in zip(self._keys, self._vals)}

    def coefficient(self, index):
        mask = _mask_from_index(tuple(index), self.q)
        pos = np.searchsorted(self._keys, mask)
        if pos < len(self._keys) and self._keys[pos] == mask:
            return float(self._vals[pos])
        return 0.0

    @property
    def body(self):
        if len(self._keys) and self._keys[0] == 0:
            return float(self._vals[0])
        return 0.0

    def soul(self):
        if len(self._keys) and self._keys[0] == 0:
            return GrassmannValue(self.q, self._keys[1:], self._vals[1:])
        return GrassmannValue(self.q, self._keys, self._vals)

    def degree_project(self, k):
        """Keep only terms whose multi-index has length exactly k."""
        if len(self._keys) == 0:
            return GrassmannValue(self.q)
        lengths = np.array([int(m).bit_count() for m in self._keys])
        sel = lengths == k
        return GrassmannValue(self.q, self._keys[sel], self._vals[sel])

    def parity(self):
        """'even', 'odd', or 'mixed' ('even' for zero)."""
        if len(self._keys) == 0:
            return "even"
        lengths = {int(m).bit_count() & 1 for m in self._keys}
        if lengths == {0}:
            return "even"
        if lengths == {1}:
            return "odd"
        return "mixed"

    def is_zero(self):
        return len(self._keys) == 0

    def max_abs(self):
        return float(np.max(np.abs(self._vals))) if len(self._vals) else 0.0

    # ---- arithmetic ---------------------------------------------------

    def _check_compat(self, other):
        if self.q != other.q:
            raise DimensionMismatch(f"mixed generator counts {self.q} and {other.q}")

    def __add__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = GrassmannValue.scalar(self.q, other)
        if not isinstance(other, GrassmannValue):
            return NotImplemented
        self._check_compat(other)
        k, v = add_terms(self._keys, self._vals, other._keys, other._vals)
        return GrassmannValue(self.q, k, v)

    __radd__ = __add__

    def __neg__(self):
        return GrassmannValue(self.q, self._keys.copy(), -self._vals)

    def __sub__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = GrassmannValue.scalar(self.q, other)
        if not isinstance(other, GrassmannValue):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            k, v = scale_terms(self._keys, self._vals, float(other))
            return GrassmannValue(self.q, k, v)
        if not isinstance(other, GrassmannValue):
            return NotImplemented
        self._check_compat(other)
        k, v = mul_terms(self._keys, self._vals, other._keys, other._vals)
        return GrassmannValue(self.q, k, v)

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self * other
        return NotImplemented

    def __eq__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = GrassmannValue.scalar(self.q, other)
        if not isinstance(other, GrassmannValue):
            return NotImplemented
        return (
            self.q == other.q
            and np.array_equal(self._keys, other._keys)
            and np.array_equal(self._vals, other._vals)
        )

    def __hash__(self):
        return hash((self.q, self._keys.tobytes(), self._vals.tobytes()))

    def allclose(self, other, tol=1e-12):
        return (self - other).max_abs() <= tol

    def left_derivative(self, alpha):
        if not 1 <= alpha <= self.q:
            raise IndexError_(f"generator index {alpha} out of range 1..{self.q}")
        k, v = lderiv_terms(self._keys, self._vals, alpha)
        return GrassmannValue(self.q, k, v)

    def invert(self):
        """Exact inverse; the finite series around the body terminates
        because the soul is nilpotent."""
        b = self.body
        if b == 0.0:
            raise NotInvertible("zero body")
        u = self.soul() * (1.0 / b)
        acc = GrassmannValue.scalar(self.q, 1.0)
        power = GrassmannValue.scalar(self.q, 1.0)
        sign = 1.0
        for _ in range(self.q):
            power = power * u
            if power.is_zero():
                break
            sign = -sign
            acc = acc + power * sign
        return acc * (1.0 / b)

    # ---- dense coefficient view ----------------------------------------

    def to_dense(self):
        """Length 2**q coefficient vector indexed by bitmask."""
        out = np.zeros(1 << self.q)
        out[self._keys.astype(np.intp)] = self._vals
        return out

    @classmethod
    def from_dense(cls, q, coeffs, prune_tol=0.0):
        _check_q(q)
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (1 << q,):
            raise DimensionMismatch(f"expected {1 << q} coefficients, got {coeffs.shape}")
        keep = np.abs(coeffs) > prune_tol
        keys = np.nonzero(keep)[0].astype(np.uint32)
        return cls(q, keys, coeffs[keep].copy())

    # ---- text ----------------------------------------------------------

    def render(self):
        if len(self._keys) == 0:
            return "0"
        items = sorted(
            ((int(k).bit_count(), _index_from_mask(int(k)), float(v)) for k, v in zip(self._keys, self._vals))
        )
        parts = []
        for _, index, c in items:
            if index == ():
                frag = repr(c)
            elif c == 1.0:
                frag = _e_text(index)
            elif c == -1.0:
                frag = "-" + _e_text(index)
            else:
                frag = f"{c!r}*{_e_text(index)}"
            if not parts:
                parts.append(frag)
            elif frag.startswith("-"):
                parts.append("- " + frag[1:])
            else:
                parts.append("+ " + frag)
        return " ".join(parts)

    __str__ = render

    def __repr__(self):
        return f"GrassmannValue(q={self.q}, {self.render()})"


def _e_text(index):
    return "e[" + ",".join(str(a) for a in index) + "]"


# ---- module-level operation aliases -------------------------------------

def multiply(a, b):
    return a * b


def add(a, b):
    return a + b


def body(a):
    return a.body


def soul(a):
    return a.soul()


def degree_project(a, k):
    return a.degree_project(k)


def parity(a):
    return a.parity()


def left_derivative(alpha, a):
    return a.left_derivative(alpha)


def invert(a):
    return a.invert()


def solve(A, rhs):
    """Solve A x = rhs where A is a square array of GrassmannValue and rhs a
    vector of GrassmannValue (all over the same q).

    Splits A into its real body matrix plus nilpotent soul and iterates
    x <- body^{-1} (rhs - soul x); each pass raises the error's minimum
    degree, so at most q+1 passes reach the exact solution.
    """
    A = [list(row) for row in A]
    rhs = list(rhs)
    m = len(A)
    if m == 0 or any(len(row) != m for row in A) or len(rhs) != m:
        raise DimensionMismatch("solve needs a square matrix and matching vector")
    q = rhs[0].q
    for row in A:
        for a in row:
            if a.q != q:
                raise DimensionMismatch("mixed generator counts in solve")
    bodyA = np.array([[a.body for a in row] for row in A])
    det = np.linalg.det(bodyA)
    if not np.isfinite(det) or det == 0.0:
        raise NotInvertible("body matrix is singular")
    inv = np.linalg.inv(bodyA)
    soulA = [[a.soul() for a in row] for row in A]

    def body_apply(vec):
        out = []
        for i in range(m):
            acc = GrassmannValue.zero(q)
            for j in range(m):
                if inv[i, j] != 0.0:
                    acc = acc + vec[j] * inv[i, j]
            out.append(acc)
        return out

    x = body_apply(rhs)
    for _ in range(q + 1):
        resid = [
            rhs[i] - _sum_q(q, [A[i][j] * x[j] for j in range(m)])
            for i in range(m)
        ]
        if max(r.max_abs() for r in resid) == 0.0:
            break
        x = body_apply(
            [rhs[i] - _sum_q(q, [soulA[i][j] * x[j] for j in range(m)]) for i in range(m)]
        )
    return x


def _sum_q(q, values):
    acc = GrassmannValue.zero(q)
    for v in values:
        acc = acc + v
    return acc


# ---- parsing -------------------------------------------------------------

def parse(text, q):
    """Parse 'c0 + c1*e[1] + c12*e[1,2]' style text into a GrassmannValue."""
    _check_q(q)
    s = text.strip()
    if not s:
        raise GrassmannError("empty Grassmann literal")
    pos = 0
    n = len(s)
    acc = GrassmannValue.zero(q)

    def skip_ws(p):
        while p < n and s[p].isspace():
            p += 1
        return p

    first = True
    while True:
        pos = skip_ws(pos)
        if pos >= n:
            if first:
                raise GrassmannError("empty Grassmann literal")
            break
        sign = 1.0
        if s[pos] in "+-":
            if s[pos] == "-":
                sign = -1.0
            pos += 1
        elif not first:
            raise GrassmannError(f"expected '+' or '-' at position {pos} in {text!r}")
        pos = skip_ws(pos)
        coeff = 1.0
        have_coeff = False
        mstart = pos
        while pos < n and (s[pos].isdigit() or s[pos] in ".eE+-"):
            # stop a number before a sign that is not part of an exponent
            if s[pos] in "+-" and not (pos > mstart and s[pos - 1] in "eE"):
                break
            if s[pos] in "eE" and pos + 1 < n and s[pos + 1] == "[":
                break
            pos += 1
        if pos > mstart:
            try:
                coeff = float(s[mstart:pos])
            except ValueError:
                raise GrassmannError(f"bad number {s[mstart:pos]!r} in {text!r}") from None
            have_coeff = True
        pos = skip_ws(pos)
        if pos < n and s[pos] == "*":
            pos += 1
            pos = skip_ws(pos)
        index = None
        if pos < n and s[pos] in "eE" and pos + 1 < n and s[pos + 1] == "[":
            close = s.find("]", pos + 2)
            if close < 0:
                raise GrassmannError(f"unclosed multi-index in {text!r}")
            inner = s[pos + 2 : close]
            try:
                index = tuple(int(part) for part in inner.split(","))
            except ValueError:
                raise GrassmannError(f"bad multi-index e[{inner}] in {text!r}") from None
            pos = close + 1
        if index is None and not have_coeff:
            raise GrassmannError(f"expected a term at position {mstart} in {text!r}")
        if index is None:
            term = GrassmannValue.scalar(q, sign * coeff)
        else:
            term = GrassmannValue.monomial(q, index, sign * coeff)
        acc = acc + term
        first = False
    return acc
