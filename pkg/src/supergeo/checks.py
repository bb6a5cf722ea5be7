"""Per-scenario verification suites and the report they produce.

Each suite measures one property as a single max-violation number and passes
exactly when that number is at or below the suite's tolerance.  Tolerances
live in one table and can be overridden per scenario.  Suites draw their
sample points from a generator seeded by (scenario seed, suite index), so a
report is reproducible no matter the execution order; independent suites run
on a small thread pool and the report is assembled in canonical order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .flow import batch_deviation, geodesic_pair
from .geometry import SuperConnection, levi_civita, theta_batch, torsion_batch
from .reduction import (
    ClassicalLeviCivita,
    bundle_reduce,
    classical_compatibility_defect,
    classical_torsion_at,
    pushforward_classical,
    pushforward_connection,
    reduce_connection,
    reduce_metric,
    reduced_to_expr_christoffels,
    zero_section_pullback,
)
from .scenario import SUITES, METRIC_ONLY_SUITES
from .superfield import parse_superfunction

DEFAULT_SAMPLES = 32

#: invertibility cushion for the fiber pairings in the appendix-a suite
DET_MARGIN = 1e-6

TOLERANCES = {
    "levi-civita": 1e-9,
    "reduction-structure": 1e-12,
    "torsion-compat-preservation": 1e-9,
    "levi-civita-preservation": 1e-8,
    "correspondence": 1e-6,
    "appendix-a": 1e-12,
    "equivariance": 1e-8,
}


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one suite: pass exactly when violation <= tolerance."""

    name: str
    violation: float
    tolerance: float
    samples: int
    wall_time: float
    detail: str = ""

    @property
    def status(self):
        return "pass" if self.violation <= self.tolerance else "fail"


@dataclass(frozen=True)
class Report:
    """All suite results for one scenario, in canonical suite order."""

    seed: int
    results: tuple

    @property
    def passed(self):
        return all(r.status == "pass" for r in self.results)

    def to_json_dict(self):
        """Serializable form; wall time is intentionally left out so reports
        for a fixed seed compare byte-for-byte."""
        return {
            "seed": self.seed,
            "passed": self.passed,
            "checks": [
                {
                    "name": r.name,
                    "status": r.status,
                    "violation": r.violation if math.isfinite(r.violation) else "inf",
                    "tolerance": r.tolerance,
                    "samples": r.samples,
                    "detail": r.detail,
                }
                for r in self.results
            ],
        }


# ---- sample points ---------------------------------------------------------------


def _base_points(scenario, rng, count):
    lo, hi = scenario.box
    return lo + rng.uniform(0.0, 1.0, size=(count, scenario.chart.n)) * (hi - lo)


def _total_points(scenario, rng, count):
    X = _base_points(scenario, rng, count)
    C = rng.uniform(-0.8, 0.8, size=(count, scenario.chart.q))
    return np.concatenate([X, C], axis=1)


# ---- random ingredients for the equivariance suite --------------------------------


def _poly_text(rng, n, scale, constant=0.0):
    parts = [f"{constant:.6f}"] if constant else []
    for i in range(n):
        c = rng.uniform(-1, 1) * scale
        parts.append(("+ " if c >= 0 else "- ") + f"{abs(c):.6f}*x{i + 1}")
    if not parts:
        return "0.0"
    return " ".join(parts).lstrip("+ ")


def _random_superfunction(chart, parity, rng):
    """A parity-pure superfunction with low-degree coefficients."""
    n, q = chart.n, chart.q
    if parity == 0:
        text = _poly_text(rng, n, 0.3, constant=rng.uniform(-0.6, 0.6))
        if q >= 2 and rng.uniform() < 0.5:
            c = rng.uniform(-0.3, 0.3)
            text += ("+ " if c >= 0 else " - ") + f"{abs(c):.6f}*e[1,2]"
    else:
        pieces = []
        for b in range(q):
            coeff = _poly_text(rng, n, 0.3, constant=rng.uniform(-0.5, 0.5))
            pieces.append(f"({coeff})*e[{b + 1}]")
        text = " + ".join(pieces)
    return parse_superfunction(text, chart)


def synthesize_connection(chart, seed, entries=8):
    """Deterministic random symbolic connection with parity-pure symbols."""
    rng = np.random.default_rng([int(seed), 1705])
    p = chart.parity_vector()
    T = chart.total_dim
    table = {}
    for _ in range(entries):
        s, u, r = (int(v) for v in rng.integers(0, T, size=3))
        want = (p[s] + p[u] + p[r]) % 2
        table[(s, u, r)] = _random_superfunction(chart, want, rng)
    return SuperConnection.from_components(chart, table)


def _invert_unitriangular(N, q):
    """Exact inverse of I + N for strictly upper-triangular expression N,
    via the terminating Neumann series."""
    ident = [[ex.Const(1.0 if a == b else 0.0) for b in range(q)] for a in range(q)]
    out = [row[:] for row in ident]
    power = [row[:] for row in ident]
    sign = 1.0
    for _ in range(q - 1):
        power = [
            [
                sum((ex.mul(power[a][t], N[t][b]) for t in range(q)), start=ex.Const(0.0))
                for b in range(q)
            ]
            for a in range(q)
        ]
        sign = -sign
        out = [
            [ex.add(out[a][b], ex.mul(ex.Const(sign), power[a][b])) for b in range(q)]
            for a in range(q)
        ]
    return out


def random_frame_change(chart, rng):
    """Invertible x-dependent fiber frame change G = D(I + N) with diagonal
    entries bounded away from zero and strictly triangular N."""
    n, q = chart.n, chart.q
    D = [ex.parse(f"{int(rng.integers(1, 3))} + x1^2") for _ in range(q)]
    N = [[ex.Const(0.0) for _ in range(q)] for _ in range(q)]
    for a in range(q):
        for b in range(a + 1, q):
            N[a][b] = ex.parse(_poly_text(rng, n, 0.4, constant=rng.uniform(-0.5, 0.5)))
    G = [
        [ex.mul(D[a], ex.add(ex.Const(1.0 if a == b else 0.0), N[a][b])) for b in range(q)]
        for a in range(q)
    ]
    M = _invert_unitriangular(N, q)
    Ginv = [[ex.div(M[a][b], D[b]) for b in range(q)] for a in range(q)]
    return G, Ginv


# ---- individual suites ------------------------------------------------------------


def _suite_levi_civita(scenario, samples, rng):
    conn = levi_civita(scenario.metric)
    X = _base_points(scenario, rng, samples)
    theta = np.max(np.abs(theta_batch(conn, scenario.metric, X)))
    torsion = np.max(np.abs(torsion_batch(conn, X)))
    return max(theta, torsion), f"theta {theta:.3e}, torsion {torsion:.3e}"


def _erased_mask(chart):
    """Boolean (T,T,T) mask of the Christoffel blocks the reduction drops."""
    n, T = chart.n, chart.total_dim
    keep = np.zeros((T, T, T), dtype=bool)
    keep[:n, :n, :] = True  # base-base rows, both base and fiber upper index
    keep[:n, n:, n:] = True
    keep[n:, :n, n:] = True
    return ~keep


def _suite_reduction_structure(scenario, samples, rng):
    conn = scenario.working_connection()
    rconn = reduce_connection(conn)
    chart = scenario.chart
    n, q = chart.n, chart.q
    Y = _total_points(scenario, rng, samples)
    Gm = rconn.christoffels_at(Y)
    erased = float(np.max(np.abs(Gm[:, _erased_mask(chart)]))) if q else 0.0

    # affine dependence on the fiber point: vanishing second differences
    h = 0.25
    worst_affine = 0.0
    for b in range(q):
        step = np.zeros(chart.total_dim)
        step[n + b] = h
        second = (
            rconn.christoffels_at(Y + step)
            - 2.0 * Gm
            + rconn.christoffels_at(Y - step)
        )
        worst_affine = max(worst_affine, float(np.max(np.abs(second))))

    parts = [f"erased blocks {erased:.3e}", f"fiber affinity {worst_affine:.3e}"]
    worst = max(erased, worst_affine)

    if scenario.metric is not None:
        rg = reduce_metric(scenario.metric)
        M = rg.matrix_at(Y)
        sym = float(np.max(np.abs(M - np.transpose(M, (0, 2, 1)))))
        fib = float(np.max(np.abs(M[:, n:, n:])))
        mixed = float(np.max(np.abs(M[:, :n, n:]))) if scenario.metric.parity == 0 else 0.0
        worst = max(worst, sym, fib, mixed)
        parts.append(f"metric pattern {max(sym, fib, mixed):.3e}")
    return worst, ", ".join(parts)


def _suite_torsion_compat(scenario, samples, rng):
    chart = scenario.chart
    Y = _total_points(scenario, rng, samples)
    if scenario.metric is not None:
        conn = levi_civita(scenario.metric)
        rconn = reduce_connection(conn)
        torsion = float(np.max(np.abs(classical_torsion_at(rconn, Y))))
        rg = reduce_metric(scenario.metric)
        compat = float(classical_compatibility_defect(rconn, rg, Y))
        return max(torsion, compat), f"torsion {torsion:.3e}, compat {compat:.3e}"
    conn = scenario.connection
    X = _base_points(scenario, rng, samples)
    super_torsion = float(np.max(np.abs(torsion_batch(conn, X))))
    rconn = reduce_connection(conn)
    torsion = float(np.max(np.abs(classical_torsion_at(rconn, Y))))
    return (
        max(super_torsion, torsion),
        f"torsion {super_torsion:.3e} upstairs, {torsion:.3e} reduced",
    )


def _suite_lc_preservation(scenario, samples, rng):
    g = scenario.metric
    Y = _total_points(scenario, rng, samples)
    reduced = reduce_connection(levi_civita(g)).christoffels_at(Y)
    classical = ClassicalLeviCivita(reduce_metric(g)).christoffels_at(Y)
    gap = float(np.max(np.abs(reduced - classical)))
    scale = float(np.max(np.abs(classical)))
    return gap, f"gap {gap:.3e} against table of size {scale:.3e}"


def _suite_correspondence(scenario, samples, rng):
    conn = scenario.working_connection()
    rconn = reduce_connection(conn)
    sup, cls = geodesic_pair(
        conn,
        rconn,
        list(scenario.initial_conditions),
        dt=scenario.dt,
        t_end=scenario.t_end,
        box=scenario.box,
    )
    gap, valid = batch_deviation(sup, cls)
    if np.any(valid < sup.times.shape[0]):
        worst = int(valid.min()) - 1
        return (
            float("inf"),
            f"trajectory left the box after {worst} steps (partial deviation {gap:.3e})",
        )
    return float(gap), f"{len(scenario.initial_conditions)} initial conditions, gap {gap:.3e}"


def _base_koszul(base_exprs, X):
    """Classical Levi-Civita symbols of the base metric, from its expressions."""
    n = len(base_exprs)
    B = X.shape[0]
    cols = []
    for a in range(n):
        for b in range(n):
            cols.append(base_exprs[a][b])
    for c in range(n):
        for a in range(n):
            for b in range(n):
                cols.append(base_exprs[a][b].diff(c + 1))
    vals = ex.compile_columns(cols)(X)
    G = vals[:, : n * n].reshape(B, n, n)
    dG = vals[:, n * n :].reshape(B, n, n, n)
    K = 0.5 * (dG + np.einsum("busl->bsul", dG) - np.einsum("blsu->bsul", dG))
    rhs = K.reshape(B, n * n, n)
    sol = np.linalg.solve(G[:, None, :, :], rhs[..., None])[..., 0]
    return sol.reshape(B, n, n, n)


def _suite_appendix_a(scenario, samples, rng):
    g = scenario.metric
    conn = levi_civita(g)
    bundle = bundle_reduce(g, conn)
    chart = scenario.chart
    n, q = chart.n, chart.q
    X = _base_points(scenario, rng, samples)
    parts = []
    worst = 0.0

    F = bundle.fiber_form_at(X)
    if g.parity == 0:
        anti = float(np.max(np.abs(F + np.transpose(F, (0, 2, 1)))))
        worst = max(worst, anti)
        parts.append(f"two-form antisymmetry {anti:.3e}")
    dets = np.linalg.det(F)  # square in both parities: (q, q) or (q, n) with n = q
    margin_gap = max(0.0, DET_MARGIN - float(np.min(np.abs(dets))))
    worst = max(worst, margin_gap)
    parts.append(f"pairing min |det| {float(np.min(np.abs(dets))):.3e}")

    # the fiber connection coefficients are exactly the reduced mixed block
    rconn = reduce_connection(conn)
    _, _, M1, _ = rconn.tables_at(X)
    W = bundle.connection_at(X)
    nabla_gap = float(np.max(np.abs(W - M1)))
    worst = max(worst, nabla_gap)
    parts.append(f"fiber connection {nabla_gap:.3e}")

    if g.parity == 0:
        # the base projection of the reduced connection is the Levi-Civita
        # connection of the base form
        table = zero_section_pullback(rconn)
        if callable(table):
            A0 = table(X)
        else:
            cols = [table[i][j][k] for i in range(n) for j in range(n) for k in range(n)]
            A0 = ex.compile_columns(cols)(X).reshape(X.shape[0], n, n, n)
        want = _base_koszul(bundle.base_form, X)
        base_gap = float(np.max(np.abs(A0 - want)))
        worst = max(worst, base_gap)
        parts.append(f"base Levi-Civita {base_gap:.3e}")

    return worst, ", ".join(parts)


def _suite_equivariance(scenario, samples, rng):
    chart = scenario.chart
    conn = scenario.connection
    if conn is None or not conn.is_symbolic:
        conn = synthesize_connection(chart, scenario.seed)
    Y = _total_points(scenario, rng, samples)
    worst = 0.0
    trials = 2
    for _ in range(trials):
        G, Ginv = random_frame_change(chart, rng)
        upstairs = reduce_connection(pushforward_connection(conn, G, Ginv))
        downstairs = pushforward_classical(
            reduced_to_expr_christoffels(reduce_connection(conn)), chart, G, Ginv
        )
        gap = float(np.max(np.abs(upstairs.christoffels_at(Y) - downstairs.christoffels_at(Y))))
        worst = max(worst, gap)
    return worst, f"{trials} frame changes, worst gap {worst:.3e}"


_SUITE_FUNCS = {
    "levi-civita": _suite_levi_civita,
    "reduction-structure": _suite_reduction_structure,
    "torsion-compat-preservation": _suite_torsion_compat,
    "levi-civita-preservation": _suite_lc_preservation,
    "correspondence": _suite_correspondence,
    "appendix-a": _suite_appendix_a,
    "equivariance": _suite_equivariance,
}


def applicable_suites(scenario):
    """Every suite that makes sense for this scenario, in canonical order."""
    out = []
    for name in SUITES:
        if name in METRIC_ONLY_SUITES and scenario.metric is None:
            continue
        if name == "levi-civita-preservation" and scenario.parity != 1:
            continue
        out.append(name)
    return tuple(out)


def run_checks(scenario, samples=DEFAULT_SAMPLES, parallel=True):
    """Execute the scenario's requested suites (or all applicable ones).

    Failures are collected, never short-circuited; each suite gets an
    independent deterministic point stream, so the report does not depend on
    scheduling.
    """
    names = list(scenario.checks) or list(applicable_suites(scenario))

    def run_one(name):
        rng = np.random.default_rng([scenario.seed, SUITES.index(name)])
        tol = scenario.tolerances.get(name, TOLERANCES[name])
        start = time.perf_counter()
        try:
            violation, detail = _SUITE_FUNCS[name](scenario, samples, rng)
        except Exception as err:  # noqa: BLE001 - a crashed suite is a failed suite
            violation, detail = float("inf"), f"suite raised {type(err).__name__}: {err}"
        elapsed = time.perf_counter() - start
        return CheckResult(
            name=name,
            violation=float(violation),
            tolerance=tol,
            samples=samples,
            wall_time=elapsed,
            detail=detail,
        )

    if parallel and len(names) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(names))) as pool:
            results = list(pool.map(run_one, names))
    else:
        results = [run_one(name) for name in names]
    return Report(seed=scenario.seed, results=tuple(results))
