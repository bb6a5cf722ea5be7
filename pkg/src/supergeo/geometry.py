"""Graded metrics and connections on a split chart, and the Levi-Civita solve.

Coordinates are indexed by slot: 0..n-1 for the even x's, n..n+q-1 for the
odd directions.  A metric of parity |g| stores superfunction entries g_rs
with parity |g|+|r|+|s| and graded symmetry g_rs = (-1)^{|r||s|} g_sr.  A
connection stores Christoffel superfunctions Gamma^r_{su} of parity
|s|+|u|+|r|.

Metric compatibility is measured by the tensor

    Theta_sur = (-1)^{|g||s|} dhat_s g_ur
                - sum_t S2[s,u,t] Gamma^t_su * g_tr
                - sum_t S3[s,u,r,t] Gamma^t_sr * g_ut

with the metric-crossing signs S2[s,u,t] = (-1)^{|g|(|s|+|u|+|t|)} and
S3[s,u,r,t] = (-1)^{|s||u| + (|s|+|r|+|t|)(|u|+|g|)} that arise when the
Christoffel superfunctions are pulled out of the slots of a parity-|g|
bilinear form, and torsion by T^r_su = Gamma^r_su - (-1)^{|s||u|}
Gamma^r_us.  The Levi-Civita connection is the unique solution of
{Theta = 0, T = 0}; it is computed from the cyclic combination

    2 L[s,u,r] = D[s,u,r] + (-1)^{|s|(|u|+|r|)} D[u,r,s]
                          - (-1)^{|r|(|s|+|u|)} D[r,s,u],

with D[a,b,c] = (-1)^{|g||a|} dhat_a g_bc and L[s,u,r] = sum_t S2[s,u,t]
Gamma^t_su g_tr, followed by a linear solve against the metric.  Because
Gamma^t_su has definite parity |s|+|u|+|t|, the noncommutative products
fold into a Grassmann-linear system with matrix
A[r,t] = (-1)^{(|s|+|u|+|t|)(|t|+|r|)} g_tr; the |g| factors from S2 and
from the definition of D cancel in the fold.

dense_levi_civita() solves {Theta = 0, T = 0} directly as one real
least-squares system in the Grassmann coefficients, sharing nothing with the
cyclic formula, and is used as the oracle for it.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import expr as ex
from ._kernel import merge_sign
from .grassmann import GrassmannValue, NotInvertible, solve as gr_solve
from .superfield import ChartSpec, SuperFunction, SuperfieldError, parse_superfunction

QMAX_DENSE = 4  # batched coefficient arrays are (..., 2**q); beyond this use the sparse path


class SupergeometryError(Exception):
    """Structural problem with a metric or connection."""


class DegenerateMetric(SupergeometryError):
    """Body matrix singular (or out of margin) at a sampled point."""


@lru_cache(maxsize=None)
def structure_tensor(q):
    """M[I, J, K] with e_I * e_J = M[I, J, I|J] * e_{I|J} (zero on overlap)."""
    dim = 1 << q
    M = np.zeros((dim, dim, dim))
    for I in range(dim):
        for J in range(dim):
            if I & J:
                continue
            M[I, J, I | J] = merge_sign(I, J)
    return M


def _coerce_superfunction(v, chart):
    if isinstance(v, SuperFunction):
        chart.require_same(v.chart)
        return v
    if isinstance(v, str):
        return parse_superfunction(v, chart)
    if isinstance(v, (int, float)):
        return SuperFunction.constant(chart, v)
    if isinstance(v, ex.ScalarExpr):
        return SuperFunction.from_scalar(chart, v)
    raise SupergeometryError(f"cannot use {v!r} as a superfunction entry")


def _slot_of(key, chart):
    if isinstance(key, str):
        return chart.slot(key)
    key = int(key)
    if not 0 <= key < chart.total_dim:
        raise SupergeometryError(f"coordinate slot {key} out of range 0..{chart.total_dim - 1}")
    return key


def _check_parity(f, want, what):
    """Entries must be parity-pure: every stored multi-index has length of
    the required parity."""
    for index in f.components:
        if len(index) % 2 != want:
            raise SupergeometryError(
                f"{what} must have parity {want}, but has a degree-{len(index)} term"
            )


class SuperMetric:
    """Graded metric on a chart; parity is 0 (even) or 1 (odd)."""

    def __init__(self, chart, parity, components, validate=True):
        if parity not in (0, 1):
            raise SupergeometryError(f"metric parity must be 0 or 1, got {parity}")
        self.chart = chart
        self.parity = parity
        self._comps = {k: v for k, v in components.items() if not v.is_zero()}
        if validate:
            self.validate_structure()

    @classmethod
    def from_components(cls, chart, parity, entries, validate=True):
        """Build from {(r, s): entry} with slots or labels like ("x1", "e2").
        Missing graded-symmetric partners are filled in; explicitly given
        partners are kept as written."""
        comps = {}
        for key, value in entries.items():
            r, s = key
            r = _slot_of(r, chart)
            s = _slot_of(s, chart)
            if (r, s) in comps:
                raise SupergeometryError(f"duplicate metric entry ({r}, {s})")
            comps[(r, s)] = _coerce_superfunction(value, chart)
        p = chart.parity_vector()
        for (r, s), f in list(comps.items()):
            if (s, r) not in comps and r != s:
                partner = f if (p[r] and p[s]) == 0 else -f
                comps[(s, r)] = partner
        return cls(chart, parity, comps, validate=validate)

    def component(self, r, s):
        r = _slot_of(r, self.chart)
        s = _slot_of(s, self.chart)
        return self._comps.get((r, s), SuperFunction.zero(self.chart))

    @property
    def components(self):
        return dict(self._comps)

    def validate_structure(self):
        """Parity purity of every entry, zero odd diagonal, and the dimension
        constraints without which the body pairing is forced degenerate."""
        chart = self.chart
        p = chart.parity_vector()
        if self.parity == 0 and chart.q % 2 != 0:
            raise SupergeometryError(
                f"an even metric needs an even number of odd directions, got q={chart.q}"
            )
        if self.parity == 1 and chart.n != chart.q:
            raise SupergeometryError(
                f"an odd metric needs matching even/odd dimensions, got n={chart.n}, q={chart.q}"
            )
        for (r, s), f in self._comps.items():
            want = (self.parity + p[r] + p[s]) % 2
            _check_parity(f, want, f"metric entry ({chart.label(r)}, {chart.label(s)})")
            if r == s and p[r] == 1 and not f.is_zero():
                raise SupergeometryError(
                    f"odd diagonal entry ({chart.label(r)}, {chart.label(r)}) must vanish"
                )

    def supersymmetry_defect(self, x):
        """Largest coefficient of g_rs - (-1)^{|r||s|} g_sr at a point."""
        p = self.chart.parity_vector()
        T = self.chart.total_dim
        worst = 0.0
        for r in range(T):
            for s in range(T):
                sign = -1.0 if p[r] and p[s] else 1.0
                d = self.component(r, s).evaluate(x) - self.component(s, r).evaluate(x) * sign
                worst = max(worst, d.max_abs())
        return worst

    def body_matrix(self, x):
        """Real matrix of empty-index coefficients at a base point; the full
        Grassmann matrix g(x) is invertible exactly when this is."""
        T = self.chart.total_dim
        out = np.zeros((T, T))
        for (r, s), f in self._comps.items():
            out[r, s] = f.reduce().evaluate(x)
        return out

    def nondegeneracy_report(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        dets = []
        conds = []
        for x in points:
            B = self.body_matrix(x)
            dets.append(float(np.linalg.det(B)))
            conds.append(float(np.linalg.cond(B)))
        return {"det": dets, "cond": conds, "min_abs_det": min(abs(d) for d in dets)}

    def evaluate(self, x):
        """Object array of GrassmannValue entries at a base point."""
        T = self.chart.total_dim
        out = np.empty((T, T), dtype=object)
        for r in range(T):
            for s in range(T):
                out[r, s] = self.component(r, s).evaluate(x)
        return out


class SuperConnection:
    """Connection coefficients, either symbolic ({(s,u,r): SuperFunction}) or
    provided pointwise by an object with at(x) / at_batch(X)."""

    def __init__(self, chart, table=None, provider=None):
        if (table is None) == (provider is None):
            raise SupergeometryError("need exactly one of a symbol table or a provider")
        self.chart = chart
        self.table = table
        self.provider = provider

    @classmethod
    def from_components(cls, chart, entries, validate=True):
        p = chart.parity_vector()
        table = {}
        for key, value in entries.items():
            s, u, r = key
            s = _slot_of(s, chart)
            u = _slot_of(u, chart)
            r = _slot_of(r, chart)
            f = _coerce_superfunction(value, chart)
            if f.is_zero():
                continue
            if validate:
                want = (p[s] + p[u] + p[r]) % 2
                _check_parity(
                    f,
                    want,
                    f"Christoffel symbol ({chart.label(s)},{chart.label(u)};{chart.label(r)})",
                )
            table[(s, u, r)] = f
        return cls(chart, table=table)

    @property
    def is_symbolic(self):
        return self.table is not None

    def symbol(self, s, u, r):
        if not self.is_symbolic:
            raise SupergeometryError("connection is pointwise only; no symbol table")
        s = _slot_of(s, self.chart)
        u = _slot_of(u, self.chart)
        r = _slot_of(r, self.chart)
        return self.table.get((s, u, r), SuperFunction.zero(self.chart))

    def at(self, x):
        """Object array Gamma[s, u, r] of GrassmannValue at a base point."""
        x = np.asarray(x, dtype=np.float64)
        if self.provider is not None:
            return self.provider.at(x)
        T = self.chart.total_dim
        out = np.empty((T, T, T), dtype=object)
        zero = GrassmannValue.zero(self.chart.q)
        out[:] = zero
        for (s, u, r), f in self.table.items():
            out[s, u, r] = f.evaluate(x)
        return out

    def at_batch(self, X):
        """Dense coefficients Gamma[b, s, u, r, I] at base points X (B, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.provider is not None:
            return self.provider.at_batch(X)
        chart = self.chart
        if chart.q > QMAX_DENSE:
            raise SupergeometryError(f"dense batch evaluation needs q <= {QMAX_DENSE}")
        T = chart.total_dim
        dim = 1 << chart.q
        out = np.zeros((X.shape[0], T, T, T, dim))
        cols = []
        slots = []
        for (s, u, r), f in sorted(self.table.items()):
            for mask, e in sorted(f._comps.items()):
                cols.append(e)
                slots.append((s, u, r, mask))
        if cols:
            vals = ex.compile_columns(cols)(X)
            for c, (s, u, r, mask) in enumerate(slots):
                out[:, s, u, r, mask] = vals[:, c]
        return out


# ---- torsion and compatibility ------------------------------------------------


def torsion_at(conn, x):
    """T[s, u, r] = Gamma[s,u,r] - (-1)^{|s||u|} Gamma[u,s,r] at a point."""
    G = conn.at(x)
    p = conn.chart.parity_vector()
    T = conn.chart.total_dim
    out = np.empty((T, T, T), dtype=object)
    for s in range(T):
        for u in range(T):
            sign = -1.0 if p[s] and p[u] else 1.0
            for r in range(T):
                out[s, u, r] = G[s, u, r] - G[u, s, r] * sign
    return out


def torsion_batch(conn, X):
    G = conn.at_batch(X)
    p = conn.chart.parity_vector()
    sign = np.where((p[:, None] * p[None, :]) % 2 == 1, -1.0, 1.0)
    return G - sign[None, :, :, None, None] * np.einsum("busrI->bsurI", G)


def _theta_signs(chart, pg):
    """Pulling Gamma^t out of the metric slots costs metric-crossing signs:
    S2[s,u,t] = (-1)^{|g|(|s|+|u|+|t|)} on g(nabla_s d_u, d_r) and
    S3[s,u,r,t] = (-1)^{|s||u| + (|s|+|r|+|t|)(|u|+|g|)} on the third term."""
    p = chart.parity_vector()
    T = chart.total_dim
    S2 = np.ones((T, T, T))
    S3 = np.ones((T, T, T, T))
    for s in range(T):
        for u in range(T):
            for t in range(T):
                if (pg * (p[s] + p[u] + p[t])) % 2:
                    S2[s, u, t] = -1.0
            for r in range(T):
                for t in range(T):
                    if (p[s] * p[u] + (p[s] + p[r] + p[t]) * (p[u] + pg)) % 2:
                        S3[s, u, r, t] = -1.0
    return S2, S3


def theta_at(conn, metric, x):
    """The compatibility tensor at a point, straight from its definition."""
    chart = conn.chart
    chart.require_same(metric.chart)
    T = chart.total_dim
    p = chart.parity_vector()
    Gm = metric.evaluate(x)
    Gc = conn.at(x)
    pg = metric.parity
    S2, S3 = _theta_signs(chart, pg)
    out = np.empty((T, T, T), dtype=object)
    for s in range(T):
        sgn_s = -1.0 if (pg and p[s]) else 1.0
        for u in range(T):
            for r in range(T):
                d = metric.component(u, r).dhat(s).evaluate(x) * sgn_s
                acc = d
                for t in range(T):
                    acc = acc - (Gc[s, u, t] * Gm[t, r]) * S2[s, u, t]
                for t in range(T):
                    acc = acc - (Gc[s, r, t] * Gm[u, t]) * S3[s, u, r, t]
                out[s, u, r] = acc
    return out


def theta_batch(conn, metric, X):
    """Dense compatibility tensor over a batch of base points."""
    tables = _MetricTables.get(metric)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    G, Dg = tables.evaluate(X)
    Gamma = conn.at_batch(X)
    M = structure_tensor(metric.chart.q)
    S2, S3 = _theta_signs(metric.chart, metric.parity)
    term2 = np.einsum("sut,bsutI,btrJ,IJK->bsurK", S2, Gamma, G, M)
    term3 = np.einsum("surt,bsrtI,butJ,IJK->bsurK", S3, Gamma, G, M)
    return Dg - term2 - term3


def max_abs_table(table):
    """Largest coefficient magnitude in an object array of GrassmannValue."""
    return max((v.max_abs() for v in table.ravel()), default=0.0)


# ---- shared compiled tables -----------------------------------------------------


class _MetricTables:
    """Compiled evaluators for g and its signed derivatives D[a,b,c] =
    (-1)^{|g||a|} dhat_a g_bc, shared by the Levi-Civita solver and the
    compatibility check."""

    _cache = {}

    @classmethod
    def get(cls, metric):
        key = id(metric)
        hit = cls._cache.get(key)
        if hit is None or hit[0] is not metric:
            tables = cls(metric)
            cls._cache[key] = (metric, tables)
            return tables
        return hit[1]

    def __init__(self, metric):
        chart = metric.chart
        if chart.q > QMAX_DENSE:
            raise SupergeometryError(f"batched evaluation needs q <= {QMAX_DENSE}")
        self.metric = metric
        self.chart = chart
        self.T = chart.total_dim
        self.dim = 1 << chart.q
        self.p = chart.parity_vector()
        exprs = []
        col_of = {}

        def column(e):
            c = col_of.get(e)
            if c is None:
                c = len(exprs)
                exprs.append(e)
                col_of[e] = c
            return c

        self.g_slots = []  # (r, s, mask, column)
        for (r, s), f in metric.components.items():
            for mask, e in f._comps.items():
                self.g_slots.append((r, s, mask, column(e)))
        self.d_slots = []  # (a, b, c, mask, column)
        for (b, c), f in metric.components.items():
            for a in range(self.T):
                df = f.dhat(a)
                for mask, e in df._comps.items():
                    self.d_slots.append((a, b, c, mask, column(e)))
        self._runner = ex.compile_columns(exprs) if exprs else None

    def evaluate(self, X):
        """G[b,r,s,I] and Dg[b,a,b',c,I] (the latter carrying the
        (-1)^{|g||a|} factor)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        B = X.shape[0]
        G = np.zeros((B, self.T, self.T, self.dim))
        D = np.zeros((B, self.T, self.T, self.T, self.dim))
        if self._runner is None:
            return G, D
        vals = self._runner(X)
        for r, s, mask, c in self.g_slots:
            G[:, r, s, mask] = vals[:, c]
        for a, b, c_, mask, c in self.d_slots:
            D[:, a, b, c_, mask] = vals[:, c]
        if self.metric.parity:
            sgn = np.where(self.p == 1, -1.0, 1.0)
            D *= sgn[None, :, None, None, None]
        return G, D


# ---- Levi-Civita -------------------------------------------------------------------


class _LeviCivitaProvider:
    """Pointwise Christoffel data for the Levi-Civita connection of a metric."""

    def __init__(self, metric, parity_tol=1e-9):
        self.metric = metric
        self.chart = metric.chart
        self.parity_tol = parity_tol
        self.p = metric.chart.parity_vector()
        T = self.chart.total_dim
        p = self.p
        # Moving Gamma^t_su (parity pi+|t|) to the right across g_tr and
        # cancelling the metric-crossing sign leaves F[pi,t,r] =
        # (-1)^{(pi+|t|)(|t|+|r|)}, independent of the metric parity.
        self.F = np.empty((2, T, T))
        for pi in (0, 1):
            for t in range(T):
                for r in range(T):
                    self.F[pi, t, r] = -1.0 if ((pi + p[t]) * (p[t] + p[r])) % 2 else 1.0
        # cyclic combination signs
        self.s1 = np.empty((T, T, T))
        self.s2 = np.empty((T, T, T))
        for s in range(T):
            for u in range(T):
                for r in range(T):
                    self.s1[s, u, r] = -1.0 if (p[s] * (p[u] + p[r])) % 2 else 1.0
                    self.s2[s, u, r] = -1.0 if (p[r] * (p[s] + p[u])) % 2 else 1.0
        self._parity_mask = None

    def parity_mask(self):
        """W[s,u,t,I] = 1 where popcount(I) matches the parity of Gamma^t_su."""
        if self._parity_mask is None:
            T = self.chart.total_dim
            dim = 1 << self.chart.q
            pops = np.array([I.bit_count() & 1 for I in range(dim)])
            want = (self.p[:, None, None] + self.p[None, :, None] + self.p[None, None, :]) % 2
            self._parity_mask = (want[:, :, :, None] == pops[None, None, None, :]).astype(float)
        return self._parity_mask

    def rhs_batch(self, X):
        """K[b,s,u,r,I] = sum_t (Gamma^t_su g_tr)(x_b) via the cyclic combination."""
        tables = _MetricTables.get(self.metric)
        G, Dg = tables.evaluate(X)
        K = 0.5 * (
            Dg
            + self.s1[None, :, :, :, None] * np.einsum("bursk->bsurk", Dg)
            - self.s2[None, :, :, :, None] * np.einsum("brsuk->bsurk", Dg)
        )
        return G, K

    def at_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        chart = self.chart
        T = chart.total_dim
        dim = 1 << chart.q
        B = X.shape[0]
        G, K = self.rhs_batch(X)
        bodydet = np.linalg.det(G[:, :, :, 0])
        if np.any(np.abs(bodydet) < 1e-12) or not np.all(np.isfinite(bodydet)):
            raise DegenerateMetric(
                f"metric body is singular at a sample point (|det| min {np.min(np.abs(bodydet)):.3e})"
            )
        M = structure_tensor(chart.q)
        Aop = np.einsum("btrJ,JIK->btrKI", G, M)
        Gamma = np.zeros((B, T, T, T, dim))
        p = self.p
        for pi in (0, 1):
            pairs = [(s, u) for s in range(T) for u in range(T) if (p[s] + p[u]) % 2 == pi]
            if not pairs:
                continue
            Api = np.einsum("tr,btrKI->brKtI", self.F[pi], Aop).reshape(B, T * dim, T * dim)
            ss = [s for s, _ in pairs]
            uu = [u for _, u in pairs]
            rhs = np.einsum("bprk->brkp", K[:, ss, uu, :, :])
            rhs = rhs.reshape(B, T * dim, len(pairs))
            try:
                sol = np.linalg.solve(Api, rhs)
            except np.linalg.LinAlgError as exc:
                raise DegenerateMetric(str(exc)) from None
            sol = sol.reshape(B, T, dim, len(pairs))
            for k, (s, u) in enumerate(pairs):
                Gamma[:, s, u, :, :] = sol[:, :, :, k]
        W = self.parity_mask()
        junk = np.max(np.abs(Gamma * (1.0 - W[None])), initial=0.0)
        scale = max(1.0, np.max(np.abs(Gamma), initial=0.0))
        if junk > self.parity_tol * scale:
            raise SupergeometryError(
                f"Levi-Civita solve produced parity-violating coefficients ({junk:.3e})"
            )
        return Gamma * W[None]

    def at(self, x):
        """Pointwise sparse solve through Grassmann arithmetic (independent of
        the batched real-matrix path; used to cross-check it)."""
        x = np.asarray(x, dtype=np.float64)
        chart = self.chart
        T = chart.total_dim
        q = chart.q
        p = self.p
        metric = self.metric
        pg = metric.parity
        gval = metric.evaluate(x)
        dval = {}
        for s in range(T):
            sgn_s = -1.0 if (pg and p[s]) else 1.0
            for u in range(T):
                for r in range(T):
                    dval[(s, u, r)] = metric.component(u, r).dhat(s).evaluate(x) * sgn_s
        out = np.empty((T, T, T), dtype=object)
        for s in range(T):
            for u in range(T):
                rhs = []
                for r in range(T):
                    k = dval[(s, u, r)] + dval[(u, r, s)] * self.s1[s, u, r] - dval[(r, s, u)] * self.s2[s, u, r]
                    rhs.append(k * 0.5)
                pi = (p[s] + p[u]) % 2
                A = [[gval[t, r] * self.F[pi, t, r] for t in range(T)] for r in range(T)]
                try:
                    sol = gr_solve(A, rhs)
                except NotInvertible as exc:
                    raise DegenerateMetric(str(exc)) from None
                for t in range(T):
                    want = (p[s] + p[u] + p[t]) % 2
                    total = GrassmannValue.zero(q)
                    junk = 0.0
                    for deg in range(q + 1):
                        part = sol[t].degree_project(deg)
                        if deg % 2 == want:
                            total = total + part
                        else:
                            junk = max(junk, part.max_abs())
                    if junk > self.parity_tol * max(1.0, sol[t].max_abs()):
                        raise SupergeometryError(
                            f"Levi-Civita solve produced parity-violating coefficients ({junk:.3e})"
                        )
                    out[s, u, t] = total
        return out


def levi_civita(metric):
    """The torsion-free metric-compatible connection, as a pointwise provider."""
    return SuperConnection(metric.chart, provider=_LeviCivitaProvider(metric))


def dense_levi_civita(metric, x, tol=1e-9):
    """Independent oracle: solve {Theta = 0, torsion = 0} at one point as a
    real least-squares system over all parity-admissible Christoffel
    coefficients.  Returns (table, report)."""
    chart = metric.chart
    T = chart.total_dim
    q = chart.q
    dim = 1 << q
    p = chart.parity_vector()
    pg = metric.parity
    M = structure_tensor(q)
    x = np.asarray(x, dtype=np.float64)

    gdense = np.zeros((T, T, dim))
    for r in range(T):
        for s in range(T):
            gdense[r, s] = metric.component(r, s).evaluate(x).to_dense()
    ddense = np.zeros((T, T, T, dim))
    for s in range(T):
        sgn_s = -1.0 if (pg and p[s]) else 1.0
        for u in range(T):
            for r in range(T):
                ddense[s, u, r] = metric.component(u, r).dhat(s).evaluate(x).to_dense() * sgn_s

    unknowns = []  # (s, u, t, I)
    col = {}
    for s in range(T):
        for u in range(T):
            for t in range(T):
                want = (p[s] + p[u] + p[t]) % 2
                for I in range(dim):
                    if I.bit_count() % 2 == want:
                        col[(s, u, t, I)] = len(unknowns)
                        unknowns.append((s, u, t, I))

    rows = []
    rhs = []
    S2, S3 = _theta_signs(chart, pg)
    # Theta = 0: for each (s, u, r, K)
    for s in range(T):
        for u in range(T):
            for r in range(T):
                for K in range(dim):
                    row = np.zeros(len(unknowns))
                    for t in range(T):
                        for I in range(dim):
                            c = col.get((s, u, t, I))
                            if c is not None:
                                row[c] += S2[s, u, t] * float(M[I, :, K] @ gdense[t, r])
                            c = col.get((s, r, t, I))
                            if c is not None:
                                row[c] += S3[s, u, r, t] * float(M[I, :, K] @ gdense[u, t])
                    rows.append(row)
                    rhs.append(ddense[s, u, r, K])
    # torsion = 0: Gamma[s,u,t,I] - (-1)^{|s||u|} Gamma[u,s,t,I]
    for (s, u, t, I), c in col.items():
        if s > u:
            continue
        row = np.zeros(len(unknowns))
        row[c] += 1.0
        sign = -1.0 if (p[s] and p[u]) else 1.0
        c2 = col[(u, s, t, I)]
        row[c2] -= sign
        rows.append(row)
        rhs.append(0.0)

    A = np.array(rows)
    b = np.array(rhs)
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    residual = float(np.max(np.abs(A @ sol - b)))
    if rank < len(unknowns):
        raise DegenerateMetric(f"least-squares system is rank deficient ({rank} < {len(unknowns)})")
    if residual > tol:
        raise SupergeometryError(f"least-squares residual {residual:.3e} exceeds {tol}")
    table = np.empty((T, T, T), dtype=object)
    dense = np.zeros((T, T, T, dim))
    for (s, u, t, I), c in col.items():
        dense[s, u, t, I] = sol[c]
    for s in range(T):
        for u in range(T):
            for t in range(T):
                table[s, u, t] = GrassmannValue.from_dense(q, dense[s, u, t])
    return table, {"rank": int(rank), "unknowns": len(unknowns), "residual": residual}
