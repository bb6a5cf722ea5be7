"""Metrics, connections, the compatibility tensor, and the Levi-Civita solve.

The independent check is dense_levi_civita: a least-squares solve of
{Theta = 0, torsion = 0} in raw coefficients, compared against the cyclic
formula's solution at sampled points.
"""

import numpy as np
import pytest

from supergeo.geometry import (
    DegenerateMetric,
    SuperConnection,
    SuperMetric,
    SupergeometryError,
    dense_levi_civita,
    levi_civita,
    max_abs_table,
    structure_tensor,
    theta_at,
    theta_batch,
    torsion_at,
    torsion_batch,
)
from supergeo.grassmann import GrassmannValue
from supergeo.superfield import ChartSpec

C12 = ChartSpec(n=1, q=2)
C22 = ChartSpec(n=2, q=2)
C11 = ChartSpec(n=1, q=1)


def worked_example_metric():
    """Even metric with g_xx = 1 and g_(e1,e2) = 1 + x1."""
    return SuperMetric.from_components(
        C12,
        0,
        {
            ("x1", "x1"): "1",
            ("e1", "e2"): "1 + x1",
        },
    )


def even_metric_22():
    return SuperMetric.from_components(
        C22,
        0,
        {
            ("x1", "x1"): "2 + x2^2",
            ("x1", "x2"): "x1*x2/4 + x1*e[1,2]/2",
            ("x2", "x2"): "2",
            ("x1", "e1"): "x1*e[1]/3 + e[2]/5",
            ("x2", "e2"): "x2*e[1]/4",
            ("e1", "e2"): "1 + x1^2 + x2*e[1,2]/3",
        },
    )


def odd_metric_11():
    return SuperMetric.from_components(
        C11,
        1,
        {
            ("x1", "x1"): "(1 + x1^2)*e[1]",
            ("x1", "e1"): "2 + x1/2",
        },
    )


def odd_metric_22():
    return SuperMetric.from_components(
        C22,
        1,
        {
            ("x1", "x1"): "(1 + x1^2)*e[1] + x2*e[2]/3",
            ("x1", "x2"): "x1*e[2]/2",
            ("x2", "x2"): "2*e[2]",
            ("x1", "e1"): "2 + x2/3 + x1*e[1,2]/4",
            ("x1", "e2"): "x1/5",
            ("x2", "e1"): "x2^2/6",
            ("x2", "e2"): "3 + x1*e[1,2]/5",
            ("e1", "e2"): "x1*e[1]/7 + x2*e[2]/2",
        },
    )


CORPUS = [
    (worked_example_metric, [[0.0], [0.5], [-0.3], [1.2]]),
    (even_metric_22, [[0.1, -0.2], [0.5, 0.8], [-0.4, 0.3]]),
    (odd_metric_11, [[0.0], [0.7], [-0.6]]),
    (odd_metric_22, [[0.2, -0.1], [-0.3, 0.4]]),
]


# ---- structure tensor ---------------------------------------------------------


def test_structure_tensor_matches_products():
    q = 3
    M = structure_tensor(q)
    for I in range(8):
        for J in range(8):
            a = GrassmannValue.from_dense(q, np.eye(8)[I])
            b = GrassmannValue.from_dense(q, np.eye(8)[J])
            want = (a * b).to_dense()
            assert np.array_equal(M[I, J], want)


# ---- validation ----------------------------------------------------------------


def test_metric_parity_purity_enforced():
    with pytest.raises(SupergeometryError):
        SuperMetric.from_components(C12, 0, {("x1", "x1"): "1 + e[1]"})
    with pytest.raises(SupergeometryError):
        SuperMetric.from_components(C12, 0, {("x1", "e1"): "1"})


def test_metric_dimension_rules():
    with pytest.raises(SupergeometryError):
        SuperMetric.from_components(ChartSpec(n=1, q=1), 0, {("x1", "x1"): "1"})
    with pytest.raises(SupergeometryError):
        SuperMetric.from_components(C12, 1, {("x1", "e1"): "1"})


def test_metric_odd_diagonal_must_vanish():
    with pytest.raises(SupergeometryError):
        SuperMetric.from_components(C22, 0, {("e1", "e1"): "1", ("x1", "x1"): "1"})


def test_supersymmetry_fill():
    g = worked_example_metric()
    x = np.array([0.5])
    assert g.supersymmetry_defect(x) == 0.0
    # odd-odd partner carries the minus sign
    assert g.component("e2", "e1").evaluate(x).coefficient(()) == -1.5
    godd = odd_metric_22()
    assert godd.supersymmetry_defect(np.array([0.3, -0.2])) == 0.0


def test_body_matrix_and_nondegeneracy():
    g = worked_example_metric()
    B = g.body_matrix(np.array([0.5]))
    assert B[0, 0] == 1.0 and B[1, 2] == 1.5 and B[2, 1] == -1.5
    rep = g.nondegeneracy_report([[0.0], [0.5]])
    assert rep["min_abs_det"] > 0.5
    godd = odd_metric_11()
    Bo = godd.body_matrix(np.array([0.2]))
    assert Bo[0, 0] == 0.0 and Bo[0, 1] == pytest.approx(2.1) and Bo[1, 0] == pytest.approx(2.1)


def test_connection_parity_validation():
    with pytest.raises(SupergeometryError):
        SuperConnection.from_components(C12, {("x1", "x1", "e1"): "1"})
    conn = SuperConnection.from_components(C12, {("x1", "x1", "e1"): "e[2]"})
    assert not conn.symbol("x1", "x1", "e1").is_zero()


# ---- the worked example ----------------------------------------------------------


def test_worked_example_closed_form():
    g = worked_example_metric()
    conn = levi_civita(g)
    for x1 in (0.0, 0.5, -0.25, 1.5):
        x = np.array([x1])
        want = 1.0 / (2.0 * (1.0 + x1))
        table = conn.at(x)
        assert table[0, 1, 1].coefficient(()) == pytest.approx(want, abs=1e-12)
        assert table[0, 2, 2].coefficient(()) == pytest.approx(want, abs=1e-12)
        # torsion-free partner
        assert table[1, 0, 1].coefficient(()) == pytest.approx(want, abs=1e-12)
        # nothing else at degree zero in the x-e1 slot
        assert table[0, 1, 1].soul().max_abs() <= 1e-12


def test_worked_example_against_dense_oracle():
    g = worked_example_metric()
    table, report = dense_levi_civita(g, np.array([0.5]))
    assert report["rank"] == report["unknowns"]
    assert report["residual"] <= 1e-12
    want = 1.0 / (2.0 * 1.5)
    assert table[0, 1, 1].coefficient(()) == pytest.approx(want, abs=1e-10)


# ---- oracle agreement across the corpus --------------------------------------------


@pytest.mark.parametrize("make,points", CORPUS)
def test_cyclic_solution_matches_dense_oracle(make, points):
    g = make()
    conn = levi_civita(g)
    T = g.chart.total_dim
    for x in points:
        x = np.array(x, dtype=float)
        dense_table, report = dense_levi_civita(g, x)
        assert report["rank"] == report["unknowns"]
        fast_table = conn.at(x)
        worst = max(
            (dense_table[s, u, t] - fast_table[s, u, t]).max_abs()
            for s in range(T)
            for u in range(T)
            for t in range(T)
        )
        assert worst <= 1e-10, (x, worst)


@pytest.mark.parametrize("make,points", CORPUS)
def test_levi_civita_kills_theta_and_torsion(make, points):
    g = make()
    conn = levi_civita(g)
    X = np.array(points, dtype=float)
    th = theta_batch(conn, g, X)
    to = torsion_batch(conn, X)
    assert np.max(np.abs(th)) <= 1e-9
    assert np.max(np.abs(to)) <= 1e-9
    # pointwise formulas agree
    x = X[0]
    assert max_abs_table(theta_at(conn, g, x)) <= 1e-9
    assert max_abs_table(torsion_at(conn, x)) <= 1e-9


@pytest.mark.parametrize("make,points", CORPUS)
def test_batched_solve_matches_pointwise_solve(make, points):
    g = make()
    conn = levi_civita(g)
    X = np.array(points, dtype=float)
    dense = conn.at_batch(X)
    T = g.chart.total_dim
    for b, x in enumerate(X):
        table = conn.at(x)
        for s in range(T):
            for u in range(T):
                for t in range(T):
                    got = dense[b, s, u, t]
                    want = table[s, u, t].to_dense()
                    assert np.max(np.abs(got - want)) <= 1e-12


def test_christoffel_parity_is_clean():
    g = even_metric_22()
    conn = levi_civita(g)
    X = np.array([[0.3, -0.4]])
    dense = conn.at_batch(X)
    p = [0, 0, 1, 1]
    for s in range(4):
        for u in range(4):
            for t in range(4):
                want = (p[s] + p[u] + p[t]) % 2
                for I in range(4):
                    if I.bit_count() % 2 != want:
                        assert dense[0, s, u, t, I] == 0.0


# ---- non-metric connections through the same checks ----------------------------------


def test_theta_batch_matches_pointwise_for_symbolic_connection():
    g = worked_example_metric()
    conn = SuperConnection.from_components(
        C12,
        {
            ("x1", "x1", "x1"): "x1",
            ("x1", "e1", "e1"): "1 + x1^2",
            ("e1", "e2", "x1"): "2 + x1*e[1,2]",
            ("e1", "x1", "e2"): "x1^2",
        },
    )
    X = np.array([[0.2], [0.9], [-0.5]])
    th = theta_batch(conn, g, X)
    to = torsion_batch(conn, X)
    q = 2
    for b, x in enumerate(X):
        th_pt = theta_at(conn, g, x)
        to_pt = torsion_at(conn, x)
        for s in range(3):
            for u in range(3):
                for r in range(3):
                    assert np.allclose(th[b, s, u, r], th_pt[s, u, r].to_dense(), atol=1e-12)
                    assert np.allclose(to[b, s, u, r], to_pt[s, u, r].to_dense(), atol=1e-12)
    # a generic connection is neither compatible nor torsion-free
    assert np.max(np.abs(th)) > 1e-3
    assert np.max(np.abs(to)) > 1e-3


# ---- degeneracy ---------------------------------------------------------------------


def test_degenerate_metric_raises():
    g = SuperMetric.from_components(
        C12,
        0,
        {("x1", "x1"): "x1", ("e1", "e2"): "1"},
    )
    conn = levi_civita(g)
    with pytest.raises(DegenerateMetric):
        conn.at_batch(np.array([[0.0]]))
    with pytest.raises(DegenerateMetric):
        conn.at(np.array([0.0]))
    # fine away from the singular locus
    table = conn.at(np.array([2.0]))
    assert table[0, 0, 0].coefficient(()) == pytest.approx(0.25)  # 1/(2 x1) at x1=2
