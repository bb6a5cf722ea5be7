"""Geodesic integration on both sides of the reduction.

Closed-form checks first (flat lines, the logarithmic one-dimensional
geodesic), then the RK4 convergence order, and only then the correspondence
between the tau-expanded super system and the classical system on E.
"""

import numpy as np
import pytest

from supergeo import expr as ex
from supergeo.flow import (
    CurveSample,
    FlowError,
    InitialCondition,
    batch_deviation,
    classical_geodesic_rhs,
    correspondence_deviation,
    geodesic_pair,
    integrate_classical,
    integrate_super,
    super_geodesic_rhs,
)
from supergeo.geometry import SuperConnection, levi_civita
from supergeo.reduction import (
    ClassicalLeviCivita,
    ExprChristoffels,
    reduce_connection,
    reduce_metric,
)
from supergeo.superfield import ChartSpec

from test_geometry import C12, C22, even_metric_22, odd_metric_11, odd_metric_22


def flat_connection(chart):
    return SuperConnection.from_components(chart, {})


def ic(x0, v0, e0, w0):
    return InitialCondition.from_arrays(x0, v0, e0, w0)


# ---- right-hand sides ------------------------------------------------------------


def test_flat_rhs_moves_positions_only():
    conn = flat_connection(C12)
    state = np.array([0.3, 0.1, -0.2, 0.7, 0.4, -0.5])
    d = super_geodesic_rhs(conn, state)
    assert np.allclose(d[:3], state[3:])
    assert np.all(d[3:] == 0.0)
    rconn = reduce_connection(conn)
    d2 = classical_geodesic_rhs(rconn, C12, state)
    assert np.allclose(d2, d)


def test_h_equation_is_linear_in_fiber_data():
    """For a fixed base state the fiber acceleration is linear in (h, h')."""
    conn = levi_civita(even_metric_22())
    rng = np.random.default_rng(0)
    base = rng.uniform(-0.3, 0.3, size=4)  # f and f'
    def acc(h, dh):
        state = np.concatenate([base[:2], h, base[2:], dh])
        return super_geodesic_rhs(conn, state)[6:]
    h1, dh1 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
    h2, dh2 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
    lhs = acc(2.0 * h1 + h2, 2.0 * dh1 + dh2)
    rhs = 2.0 * acc(h1, dh1) + acc(h2, dh2)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


# ---- integration against closed forms ------------------------------------------------


def test_flat_trajectories_are_straight_lines():
    conn = flat_connection(C12)
    rconn = reduce_connection(conn)
    ics = [ic([0.1], [0.5], [0.2, -0.3], [1.0, 0.25])]
    sup, cls = geodesic_pair(conn, rconn, ics, dt=1e-2, t_end=1.0)
    t = sup.times
    assert np.max(np.abs(sup.f[0, :, 0] - (0.1 + 0.5 * t))) < 1e-12
    assert np.max(np.abs(sup.h[0, :, 0] - (0.2 + 1.0 * t))) < 1e-12
    assert np.max(np.abs(sup.h[0, :, 1] - (-0.3 + 0.25 * t))) < 1e-12
    gap, _ = batch_deviation(sup, cls)
    assert gap < 1e-12


def test_rk4_against_logarithmic_closed_form():
    """y'' = -k (y')^2 integrates to y(t) = y0 + log(1 + k v0 t)/k."""
    chart = ChartSpec(1, 1)
    k = 0.8
    provider = ExprChristoffels(chart, {(0, 0, 0): ex.Const(k)})
    traj = integrate_classical(provider, chart, [ic([0.2], [1.1], [0.0], [0.0])], dt=1e-3, t_end=1.0)
    t = traj.times
    want = 0.2 + np.log(1.0 + k * 1.1 * t) / k
    assert np.max(np.abs(traj.f[0, :, 0] - want)) < 1e-10


def test_rk4_convergence_order():
    """Richardson dt-halving: the error ratio sits near 2^4 = 16."""
    g = odd_metric_22()
    rconn = reduce_connection(levi_civita(g))
    start = [ic([0.1, -0.2], [0.35, 0.3], [0.15, -0.2], [0.3, 0.1])]

    def end_state(dt):
        traj = integrate_classical(rconn, g.chart, start, dt=dt, t_end=1.0)
        pos, vel = traj.final_states()
        return np.concatenate([pos[0], vel[0]])

    ref = end_state(0.00125)
    err_coarse = np.max(np.abs(end_state(0.04) - ref))
    err_fine = np.max(np.abs(end_state(0.02) - ref))
    assert err_coarse > 1e-12
    ratio = err_coarse / err_fine
    assert 12.0 <= ratio <= 20.0


def test_reversibility():
    """Running the final state backwards recovers the start."""
    g = odd_metric_22()
    rconn = reduce_connection(levi_civita(g))
    start = ic([0.1, -0.2], [0.4, 0.3], [0.15, -0.2], [0.3, 0.1])
    fwd = integrate_classical(rconn, g.chart, [start], dt=1e-3, t_end=1.0)
    pos, vel = fwd.final_states()
    back_ic = InitialCondition.from_arrays(pos[0][:2], -vel[0][:2], pos[0][2:], -vel[0][2:])
    back = integrate_classical(rconn, g.chart, [back_ic], dt=1e-3, t_end=1.0)
    pos2, vel2 = back.final_states()
    assert np.max(np.abs(pos2[0] - np.array(start.x0 + start.e0))) < 1e-8
    assert np.max(np.abs(vel2[0] + np.array(start.v0 + start.w0))) < 1e-8


def test_fiber_superposition_linearity():
    """With the base initial data fixed, (e0, w0) -> (h, h') is linear."""
    conn = levi_civita(even_metric_22())
    base = dict(x0=[0.1, -0.15], v0=[0.3, 0.25])
    one = ic(base["x0"], base["v0"], [0.4, -0.2], [0.1, 0.3])
    two = ic(base["x0"], base["v0"], [-0.3, 0.5], [0.2, -0.1])
    combined = ic(
        base["x0"],
        base["v0"],
        [0.4 * 2 - 0.3, -0.2 * 2 + 0.5],
        [0.1 * 2 + 0.2, 0.3 * 2 - 0.1],
    )
    trajs = integrate_super(conn, [one, two, combined], dt=1e-3, t_end=1.0)
    lhs_h = trajs.h[2]
    rhs_h = 2.0 * trajs.h[0] + trajs.h[1]
    assert np.max(np.abs(lhs_h - rhs_h)) < 1e-8
    # base solutions are identical by construction
    assert np.max(np.abs(trajs.f[2] - trajs.f[0])) < 1e-12


# ---- correspondence ---------------------------------------------------------------


@pytest.mark.parametrize("make", [even_metric_22, odd_metric_11, odd_metric_22])
def test_correspondence_for_levi_civita_scenarios(make):
    g = make()
    conn = levi_civita(g)
    rconn = reduce_connection(conn)
    n, q = g.chart.n, g.chart.q
    rng = np.random.default_rng(61)
    ics = [
        InitialCondition.from_arrays(
            rng.uniform(-0.2, 0.2, n),
            rng.uniform(-0.3, 0.3, n),
            rng.uniform(-0.5, 0.5, q),
            rng.uniform(-0.5, 0.5, q),
        )
        for _ in range(3)
    ]
    sup, cls = geodesic_pair(conn, rconn, ics, dt=1e-3, t_end=1.0)
    gap, valid = batch_deviation(sup, cls)
    assert np.all(valid == sup.times.shape[0])
    assert gap <= 1e-6


def test_correspondence_single_pair_wrapper():
    g = odd_metric_11()
    conn = levi_civita(g)
    rconn = reduce_connection(conn)
    gap = correspondence_deviation(
        conn, rconn, ic([0.1], [0.3], [0.2], [-0.4]), t_end=1.0, dt=1e-3
    )
    assert gap <= 1e-6


def test_corrupted_reduction_breaks_correspondence():
    """Negative control: a wrong classical table produces a visible gap."""
    g = odd_metric_11()
    conn = levi_civita(g)
    chart = g.chart
    wrong = ExprChristoffels(chart, {(0, 0, 0): ex.parse("1/2 + x1^2")})
    sup = integrate_super(conn, [ic([0.1], [0.3], [0.2], [-0.4])], dt=1e-3, t_end=1.0)
    cls = integrate_classical(wrong, chart, [ic([0.1], [0.3], [0.2], [-0.4])], dt=1e-3, t_end=1.0)
    gap, _ = batch_deviation(sup, cls)
    assert gap > 1e-2


def test_energy_is_conserved_along_classical_geodesics():
    """For an odd metric, g^TE(y', y') is constant along the geodesic."""
    g = odd_metric_22()
    rg = reduce_metric(g)
    rconn = reduce_connection(levi_civita(g))
    traj = integrate_classical(
        rconn, g.chart, [ic([0.1, -0.2], [0.4, 0.3], [0.15, -0.2], [0.3, 0.1])], dt=1e-3, t_end=1.0
    )
    Y = traj.positions[0]
    V = traj.velocities[0]
    G = rg.matrix_at(Y)
    energy = np.einsum("ks,ksu,ku->k", V, G, V)
    assert np.max(np.abs(energy - energy[0])) < 1e-6


def test_base_projection_matches_base_geodesic():
    """The f-components solve the base system alone (the base block of the
    reduced table is fiber-independent)."""
    g = even_metric_22()
    conn = levi_civita(g)
    rconn = reduce_connection(conn)
    chart = g.chart
    start = ic([0.1, -0.2], [0.4, 0.3], [0.6, -0.8], [0.2, 0.9])
    sup = integrate_super(conn, [start], dt=1e-3, t_end=1.0)

    class BaseOnly:
        """Christoffel provider for the base manifold alone."""

        def christoffels_at(self, Yb):
            n = chart.n
            A0, _, _, _ = rconn.tables_at(Yb[:, :n])
            return A0

    class BaseChart:
        """Dimension stub: the base manifold alone, no odd directions."""

        n, q, total_dim = chart.n, 0, chart.n

    base_traj = integrate_classical(
        BaseOnly(), BaseChart(), [InitialCondition.from_arrays(start.x0, start.v0, (), ())],
        dt=1e-3, t_end=1.0,
    )
    assert np.max(np.abs(sup.f[0] - base_traj.f[0])) <= 1e-8


# ---- chart box handling ----------------------------------------------------------


def test_box_exit_truncates_and_flags():
    conn = flat_connection(C12)
    box = (np.array([-1.0]), np.array([1.0]))
    traj = integrate_super(conn, [ic([0.0], [2.0], [0.0, 0.0], [0.0, 0.0])], dt=0.01, t_end=1.0, box=box)
    assert traj.exited[0]
    k = int(traj.valid_steps[0])
    assert traj.f[0, k - 1, 0] <= 1.0
    # frozen beyond the exit
    assert np.all(traj.f[0, k:, 0] == traj.f[0, k - 1, 0])
    curve = traj.curve(0)
    assert isinstance(curve, CurveSample)
    assert curve.exited and curve.times.shape[0] == k
    # the single-pair wrapper refuses truncated runs
    rconn = reduce_connection(conn)
    with pytest.raises(FlowError):
        correspondence_deviation(conn, rconn, ic([0.0], [2.0], [0, 0], [0, 0]), t_end=1.0, dt=0.01, box=box)


def test_grid_and_shape_validation():
    conn = flat_connection(C12)
    with pytest.raises(FlowError):
        integrate_super(conn, [ic([0.0], [1.0], [0, 0], [0, 0])], dt=-1e-3, t_end=1.0)
    with pytest.raises(FlowError):
        integrate_super(conn, [ic([0.0], [1.0], [0, 0], [0, 0])], dt=0.3, t_end=1.0)
    with pytest.raises(FlowError):
        integrate_super(conn, [ic([0.0, 0.0], [1.0], [0, 0], [0, 0])], dt=1e-2, t_end=1.0)
