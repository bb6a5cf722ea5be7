"""Reduction of graded metrics and connections to the bundle total space.

Points on the total space E are y = (x1..xn, c1..cq).  The reduced
Christoffel table keeps exactly four blocks (writing ~f for the underlying
function, i.e. the empty-index coefficient):

    (i, j; k)   base:   ~Gamma^k_ij
    (i, j; a)   linear: sum_b c_b * (e_b-coefficient of Gamma^a_ij)
    (i, a; c)   base:   ~Gamma^c_ia
    (a, i; c)   base:   ~Gamma^c_ai

with every block mixing a base upper index with odd lower indices, or two odd
lower indices, identically zero.  The reduced bilinear form keeps only
g^TE_ij = ~g_ij for an even metric, and for an odd metric

    g^TE_ij = sum_b c_b * (e_b-coefficient of g_ij),
    g^TE_ia = -~g_ia,   g^TE_ai = -~g_ai,   g^TE_ab = 0.

The same masks applied to a pointwise connection provider use the dense
coefficient view of the Christoffel values.
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .geometry import DegenerateMetric, SuperConnection, SupergeometryError
from .superfield import ChartSpec, FiberAffineFunction, SuperFunction

_ZERO = ex.Const(0.0)


class ReductionError(Exception):
    pass


def _zero_faf(chart):
    return FiberAffineFunction(chart, _ZERO, tuple([_ZERO] * chart.q))


def _faf_base(chart, base):
    return FiberAffineFunction(chart, base, tuple([_ZERO] * chart.q))


class ReducedConnection:
    """Christoffel data of the reduced connection on E.

    Either symbolic (entries are FiberAffineFunctions for the four surviving
    index blocks) or backed by a pointwise super-connection provider, in which
    case the same masks are applied to dense coefficient batches.
    """

    def __init__(self, chart, entries=None, source=None):
        if (entries is None) == (source is None):
            raise ReductionError("need exactly one of an entry table or a source connection")
        self.chart = chart
        self.entries = entries
        self.source = source
        self._compiled = None

    @property
    def is_symbolic(self):
        return self.entries is not None

    def component(self, s, u, r):
        if not self.is_symbolic:
            raise ReductionError("reduced connection is pointwise only")
        return self.entries.get((s, u, r), _zero_faf(self.chart))

    def _compile(self):
        n, q = self.chart.n, self.chart.q
        cols = []
        put = []
        for (s, u, r), faf in self.entries.items():
            if s < n and u < n and r < n:
                if not faf.base.is_const(0.0):
                    cols.append(faf.base)
                    put.append(("A0", (s, u, r)))
            elif s < n and u < n and r >= n:
                for b in range(q):
                    if not faf.linear[b].is_const(0.0):
                        cols.append(faf.linear[b])
                        put.append(("A1", (s, u, r - n, b)))
            elif s < n and u >= n and r >= n:
                if not faf.base.is_const(0.0):
                    cols.append(faf.base)
                    put.append(("M1", (s, u - n, r - n)))
            elif s >= n and u < n and r >= n:
                if not faf.base.is_const(0.0):
                    cols.append(faf.base)
                    put.append(("M2", (s - n, u, r - n)))
        runner = ex.compile_columns(cols) if cols else None
        self._compiled = (runner, put)

    def tables_at(self, X):
        """Masked blocks at base points X (B, n): A0[b,i,j,k], A1[b,i,j,a,b'],
        M1[b,i,a,c], M2[b,a,i,c]."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n, q = self.chart.n, self.chart.q
        B = X.shape[0]
        A0 = np.zeros((B, n, n, n))
        A1 = np.zeros((B, n, n, q, q))
        M1 = np.zeros((B, n, q, q))
        M2 = np.zeros((B, q, n, q))
        if self.is_symbolic:
            if self._compiled is None:
                self._compile()
            runner, put = self._compiled
            if runner is not None:
                vals = runner(X)
                arrays = {"A0": A0, "A1": A1, "M1": M1, "M2": M2}
                for c, (name, idx) in enumerate(put):
                    arrays[name][(slice(None),) + idx] = vals[:, c]
            return A0, A1, M1, M2
        D = self.source.at_batch(X)
        for i in range(n):
            for j in range(n):
                A0[:, i, j, :] = D[:, i, j, :n, 0]
                for a in range(q):
                    for b in range(q):
                        A1[:, i, j, a, b] = D[:, i, j, n + a, 1 << b]
            for a in range(q):
                M1[:, i, a, :] = D[:, i, n + a, n:, 0]
                M2[:, a, i, :] = D[:, n + a, i, n:, 0]
        return A0, A1, M1, M2

    def christoffels_at(self, Y):
        """Full classical table Gamma[b, s, u, r] at total-space points."""
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        n, q = self.chart.n, self.chart.q
        T = n + q
        X = Y[:, :n]
        C = Y[:, n:]
        A0, A1, M1, M2 = self.tables_at(X)
        B = Y.shape[0]
        out = np.zeros((B, T, T, T))
        out[:, :n, :n, :n] = A0
        out[:, :n, :n, n:] = np.einsum("bijxy,by->bijx", A1, C)
        out[:, :n, n:, n:] = M1
        out[:, n:, :n, n:] = M2
        return out


def reduce_connection(conn):
    """Apply the reduction masks to a super connection."""
    chart = conn.chart
    n, q = chart.n, chart.q
    if conn.is_symbolic:
        entries = {}
        for (s, u, r), f in conn.table.items():
            if s < n and u < n and r < n:
                base = f.reduce()
                if not base.is_const(0.0):
                    entries[(s, u, r)] = _faf_base(chart, base)
            elif s < n and u < n and r >= n:
                linear = tuple(f.component((b + 1,)) for b in range(q))
                if any(not e.is_const(0.0) for e in linear):
                    entries[(s, u, r)] = FiberAffineFunction(chart, _ZERO, linear)
            elif s < n and u >= n and r >= n:
                base = f.reduce()
                if not base.is_const(0.0):
                    entries[(s, u, r)] = _faf_base(chart, base)
            elif s >= n and u < n and r >= n:
                base = f.reduce()
                if not base.is_const(0.0):
                    entries[(s, u, r)] = _faf_base(chart, base)
            # every other block reduces to zero
        return ReducedConnection(chart, entries=entries)
    return ReducedConnection(chart, source=conn)


class ReducedMetric:
    """The reduced bilinear form on E, always symbolic."""

    def __init__(self, chart, parity_origin, entries):
        self.chart = chart
        self.parity_origin = parity_origin
        self.entries = entries  # {(a, b): FiberAffineFunction}
        self._matrix_exprs = None
        self._matrix_runner = None

    def component(self, a, b):
        return self.entries.get((a, b), _zero_faf(self.chart))

    def matrix_exprs(self):
        """Total-space expressions (over n+q variables) for every entry."""
        if self._matrix_exprs is None:
            T = self.chart.total_dim
            rows = []
            for a in range(T):
                rows.append([self.component(a, b).to_total_expr() for b in range(T)])
            self._matrix_exprs = rows
        return self._matrix_exprs

    def matrix_at(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        T = self.chart.total_dim
        if self._matrix_runner is None:
            exprs = self.matrix_exprs()
            cols = [exprs[a][b] for a in range(T) for b in range(T)]
            self._matrix_runner = ex.compile_columns(cols)
        vals = self._matrix_runner(Y)
        return vals.reshape(Y.shape[0], T, T)

    def symmetry_defect(self, Y):
        G = self.matrix_at(Y)
        return float(np.max(np.abs(G - np.swapaxes(G, 1, 2))))


def reduce_metric(metric):
    """Apply the reduction masks to a super metric."""
    chart = metric.chart
    n, q = chart.n, chart.q
    entries = {}
    if metric.parity == 0:
        for i in range(n):
            for j in range(n):
                base = metric.component(i, j).reduce()
                if not base.is_const(0.0):
                    entries[(i, j)] = _faf_base(chart, base)
    else:
        for i in range(n):
            for j in range(n):
                f = metric.component(i, j)
                linear = tuple(f.component((b + 1,)) for b in range(q))
                if any(not e.is_const(0.0) for e in linear):
                    entries[(i, j)] = FiberAffineFunction(chart, _ZERO, linear)
            for a in range(q):
                base = metric.component(i, n + a).reduce()
                if not base.is_const(0.0):
                    entries[(i, n + a)] = _faf_base(chart, ex.neg(base))
                base = metric.component(n + a, i).reduce()
                if not base.is_const(0.0):
                    entries[(n + a, i)] = _faf_base(chart, ex.neg(base))
    return ReducedMetric(chart, metric.parity, entries)


class ClassicalLeviCivita:
    """Pointwise Christoffel symbols of a symmetric nondegenerate bilinear
    form on E, from the classical Koszul formula."""

    def __init__(self, rmetric):
        if rmetric.parity_origin == 0:
            raise DegenerateMetric(
                "the reduced form of an even metric is degenerate along the fiber; "
                "only odd metrics induce a classical Levi-Civita connection on E"
            )
        self.rmetric = rmetric
        self.chart = rmetric.chart
        T = self.chart.total_dim
        exprs = rmetric.matrix_exprs()
        cols = []
        for a in range(T):
            for b in range(T):
                cols.append(exprs[a][b])
        for c in range(T):
            for a in range(T):
                for b in range(T):
                    cols.append(exprs[a][b].diff(c + 1))
        self._runner = ex.compile_columns(cols)
        self._T = T

    def christoffels_at(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        B = Y.shape[0]
        T = self._T
        vals = self._runner(Y)
        G = vals[:, : T * T].reshape(B, T, T)
        dG = vals[:, T * T :].reshape(B, T, T, T)  # dG[b, c, a, b'] = d_c g_{ab'}
        det = np.linalg.det(G)
        if np.any(np.abs(det) < 1e-12) or not np.all(np.isfinite(det)):
            raise DegenerateMetric(
                f"reduced form is singular at a sample point (|det| min {np.min(np.abs(det)):.3e})"
            )
        # K[b, s, u, l] = (d_s g_ul + d_u g_sl - d_l g_su) / 2
        K = 0.5 * (dG + np.einsum("busl->bsul", dG) - np.einsum("blsu->bsul", dG))
        rhs = K.reshape(B, T * T, T)  # (b, (s,u), l)
        sol = np.linalg.solve(G[:, None, :, :], rhs[..., None])
        return sol[..., 0].reshape(B, T, T, T)


def classical_torsion_at(provider, Y):
    Gm = provider.christoffels_at(Y)
    return Gm - np.einsum("busr->bsur", Gm)


def classical_compatibility_defect(provider, rmetric, Y):
    """max |d_s g_ur - sum_t Gamma^t_su g_tr - sum_t Gamma^t_sr g_ut| over Y."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    T = rmetric.chart.total_dim
    exprs = rmetric.matrix_exprs()
    cols = []
    for a in range(T):
        for b in range(T):
            cols.append(exprs[a][b])
    for c in range(T):
        for a in range(T):
            for b in range(T):
                cols.append(exprs[a][b].diff(c + 1))
    vals = ex.compile_columns(cols)(Y)
    B = Y.shape[0]
    G = vals[:, : T * T].reshape(B, T, T)
    dG = vals[:, T * T :].reshape(B, T, T, T)
    Gm = provider.christoffels_at(Y)
    defect = dG - np.einsum("bsut,btr->bsur", Gm, G) - np.einsum("bsrt,but->bsur", Gm, G)
    return float(np.max(np.abs(defect)))


# ---- auxiliary bundle data ---------------------------------------------------------


class BundleReduction:
    """Zero-section data: base form ~g_ij, the fiber pairing (two-form for an
    even metric, fiber/base pairing for an odd one), and the bundle
    connection coefficients ~Gamma^c_ia."""

    def __init__(self, chart, parity, base_form, fiber_form, connection_entries, connection_source):
        self.chart = chart
        self.parity = parity
        self.base_form = base_form  # (n, n) exprs over x
        self.fiber_form = fiber_form  # (q, q) exprs if parity 0 else (q, n)
        self.connection_entries = connection_entries  # {(i, a, c): expr} or None
        self._connection_source = connection_source

    def base_form_at(self, X):
        return _eval_expr_matrix(self.base_form, X)

    def fiber_form_at(self, X):
        return _eval_expr_matrix(self.fiber_form, X)

    def connection_at(self, X):
        """W[b, i, a, c] with nabla_{d_i} s_a = sum_c W[i,a,c] s_c."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n, q = self.chart.n, self.chart.q
        out = np.zeros((X.shape[0], n, q, q))
        if self.connection_entries is not None:
            cols = []
            keys = []
            for (i, a, c), e in self.connection_entries.items():
                cols.append(e)
                keys.append((i, a, c))
            if cols:
                vals = ex.compile_columns(cols)(X)
                for col, (i, a, c) in enumerate(keys):
                    out[:, i, a, c] = vals[:, col]
            return out
        D = self._connection_source.at_batch(X)
        for i in range(n):
            out[:, i, :, :] = D[:, i, n:, n:, 0]
        return out


def _eval_expr_matrix(rows, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    h = len(rows)
    w = len(rows[0]) if h else 0
    cols = [rows[a][b] for a in range(h) for b in range(w)]
    vals = ex.compile_columns(cols)(X)
    return vals.reshape(X.shape[0], h, w)


def bundle_reduce(metric, conn):
    """Zero-section reduction keeping exactly the underlying coefficients of g
    together with the induced connection on the bundle."""
    chart = metric.chart
    n, q = chart.n, chart.q
    base_form = [[metric.component(i, j).reduce() for j in range(n)] for i in range(n)]
    if metric.parity == 0:
        fiber_form = [
            [metric.component(n + a, n + b).reduce() for b in range(q)] for a in range(q)
        ]
    else:
        fiber_form = [[metric.component(n + a, i).reduce() for i in range(n)] for a in range(q)]
    if conn.is_symbolic:
        entries = {}
        for i in range(n):
            for a in range(q):
                for c in range(q):
                    e = conn.symbol(i, n + a, n + c).reduce()
                    if not e.is_const(0.0):
                        entries[(i, a, c)] = e
        return BundleReduction(chart, metric.parity, base_form, fiber_form, entries, None)
    return BundleReduction(chart, metric.parity, base_form, fiber_form, None, conn)


def zero_section_pullback(rconn):
    """Base Christoffel data Gamma^TM: the underlying parts of the reduced
    (i, j; k) block.  Restricting the reduced connection to the zero section
    and reducing the base block directly give the same table."""
    chart = rconn.chart
    n = chart.n
    if rconn.is_symbolic:
        table = [
            [[rconn.component(i, j, k).base for k in range(n)] for j in range(n)]
            for i in range(n)
        ]
        return table
    source = rconn.source

    class _Pointwise:
        def __call__(self, X):
            D = source.at_batch(np.atleast_2d(np.asarray(X, dtype=np.float64)))
            return D[:, :n, :n, :n, 0]

    return _Pointwise()


# ---- pushforward under fiberwise frame changes ---------------------------------------


def frame_change_images(chart, G):
    """Images e_a -> sum_b G[a][b](x) e_b as superfunctions; G entries are
    ScalarExprs over the base coordinates."""
    images = {}
    for a in range(chart.q):
        comps = {}
        for b in range(chart.q):
            e = G[a][b]
            if not e.is_const(0.0):
                comps[1 << b] = e
        images[a + 1] = SuperFunction(chart, comps)
    return images


def pushforward_connection(conn, G, Ginv):
    """Transport a symbolic super connection along the algebra automorphism
    with e_a -> sum_b G[a][b] e_b (base coordinates fixed).

    With R[a][s] = phi(dhat_s(phi_inv(q_a))) and S[c][w] =
    phi_inv(dhat_w(phi(q_c))), the transported symbols are

        Gamma'^c_su = sum_w phi_inv(C^w_su) * S[c][w],
        C^w_su = sum_a R[a][s] * dhat_a(R[w][u])
               + sum_{a,b} (-1)^{|a|(|u|+|b|)} R[a][s] * R[b][u] * Gamma^w_ab.
    """
    if not conn.is_symbolic:
        raise ReductionError("pushforward needs a symbolic connection")
    chart = conn.chart
    T = chart.total_dim
    p = chart.parity_vector()
    images = frame_change_images(chart, G)
    images_inv = frame_change_images(chart, Ginv)

    def phi(f):
        return f.substitute_generators(images)

    def phi_inv(f):
        return f.substitute_generators(images_inv)

    coords = [SuperFunction.coordinate(chart, a) for a in range(T)]
    R = [[phi(phi_inv(coords[a]).dhat(s)) for s in range(T)] for a in range(T)]
    S = [[phi_inv(phi(coords[c]).dhat(w)) for w in range(T)] for c in range(T)]

    table = {}
    zero = SuperFunction.zero(chart)
    for s in range(T):
        for u in range(T):
            C = []
            for w in range(T):
                acc = zero
                for a in range(T):
                    if R[a][s].is_zero():
                        continue
                    da = R[w][u].dhat(a)
                    if not da.is_zero():
                        acc = acc + R[a][s] * da
                    for b in range(T):
                        gam = conn.table.get((a, b, w))
                        if gam is None or R[b][u].is_zero():
                            continue
                        term = R[a][s] * R[b][u] * gam
                        if (p[a] * (p[u] + p[b])) % 2:
                            term = -term
                        acc = acc + term
                C.append(acc)
            for c in range(T):
                acc = zero
                for w in range(T):
                    if C[w].is_zero() or S[c][w].is_zero():
                        continue
                    acc = acc + phi_inv(C[w]) * S[c][w]
                if not acc.is_zero():
                    table[(s, u, c)] = acc
    return SuperConnection.from_components(chart, table, validate=True)


class ExprChristoffels:
    """Plain classical Christoffel table with ScalarExpr entries over the
    total-space coordinates."""

    def __init__(self, chart, entries):
        self.chart = chart
        self.entries = entries  # {(s, u, r): expr}
        self._runner = None
        self._keys = None

    def christoffels_at(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        T = self.chart.total_dim
        if self._runner is None:
            self._keys = sorted(self.entries)
            cols = [self.entries[k] for k in self._keys]
            self._runner = ex.compile_columns(cols) if cols else None
        out = np.zeros((Y.shape[0], T, T, T))
        if self._runner is not None:
            vals = self._runner(Y)
            for c, (s, u, r) in enumerate(self._keys):
                out[:, s, u, r] = vals[:, c]
        return out


def classical_frame_change_maps(chart, G, Ginv):
    """The bundle automorphism (x, c) -> (x, G(x) c) and its inverse as lists
    of component expressions over the total-space coordinates."""
    n, q = chart.n, chart.q

    def build(mat):
        comps = [ex.Var(i + 1) for i in range(n)]
        for a in range(q):
            acc = _ZERO
            for b in range(q):
                acc = ex.add(acc, ex.mul(mat[a][b], ex.Var(n + b + 1)))
            comps.append(acc)
        return comps

    return build(G), build(Ginv)


def pushforward_classical(provider, chart, G, Ginv):
    """Transport classical Christoffel data (given by entries {(s,u,r): expr})
    along the bundle automorphism (x, c) -> (x, G(x) c)."""
    if not isinstance(provider, ExprChristoffels):
        raise ReductionError("classical pushforward needs symbolic Christoffel entries")
    T = chart.total_dim
    phi, phi_inv = classical_frame_change_maps(chart, G, Ginv)
    phi_map = {v + 1: phi[v] for v in range(T)}
    phi_inv_map = {v + 1: phi_inv[v] for v in range(T)}

    def subst(e, mapping):
        return e.substitute(mapping)

    R = [[subst(phi_inv[a].diff(s + 1), phi_map) for s in range(T)] for a in range(T)]
    S = [[subst(phi[c].diff(w + 1), phi_inv_map) for w in range(T)] for c in range(T)]

    out = {}
    for s in range(T):
        for u in range(T):
            C = []
            for w in range(T):
                acc = _ZERO
                for a in range(T):
                    if R[a][s].is_const(0.0):
                        continue
                    acc = ex.add(acc, ex.mul(R[a][s], R[w][u].diff(a + 1)))
                    for b in range(T):
                        gam = provider.entries.get((a, b, w))
                        if gam is None or R[b][u].is_const(0.0):
                            continue
                        acc = ex.add(acc, ex.mul(ex.mul(R[a][s], R[b][u]), gam))
                C.append(acc)
            for c in range(T):
                acc = _ZERO
                for w in range(T):
                    if C[w].is_const(0.0) or S[c][w].is_const(0.0):
                        continue
                    acc = ex.add(acc, ex.mul(subst(C[w], phi_inv_map), S[c][w]))
                if not acc.is_const(0.0):
                    out[(s, u, c)] = acc
    return ExprChristoffels(chart, out)


def reduced_to_expr_christoffels(rconn):
    """Symbolic reduced connection as a plain expression table on E."""
    if not rconn.is_symbolic:
        raise ReductionError("need a symbolic reduced connection")
    entries = {}
    for key, faf in rconn.entries.items():
        e = faf.to_total_expr()
        if not e.is_const(0.0):
            entries[key] = e
    return ExprChristoffels(rconn.chart, entries)
