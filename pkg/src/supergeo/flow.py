"""Geodesic flows: the reduced super system and the classical system on E.

A supercurve into the (n, q) chart is carried by even images f_i(t) of the
base coordinates and odd images h_a(t) tau of the odd generators.  Expanding
the geodesic equations in tau (powers >= 2 vanish) leaves the coupled system

    f_i'' + sum_jk f_j' f_k' ~Gamma^i_jk(f)                       = 0
    h_a'' + sum_jkb f_j' f_k' (e_b-coeff of Gamma^a_jk)(f) h_b
          + sum_jb f_j' h_b' (~Gamma^a_jb + ~Gamma^a_bj)(f)       = 0

while a classical geodesic on E solves y_r'' + sum_su y_s' y_u'
Gamma^r_su(y) = 0 against any Christoffel provider.  Identifying (f, h) with
y = (x, c) turns one system into the other, which is what the correspondence
check exercises.

Both integrators use fixed-step RK4 over a batch of initial conditions.  A
trajectory that leaves the configured base box is frozen at its last inside
sample and flagged, so comparisons only ever read the shared valid prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FlowError(Exception):
    pass


@dataclass(frozen=True)
class InitialCondition:
    """Initial data shared by both pictures: base position/velocity and fiber
    position/velocity.  The super side reads (f, f', h, h')(0), the classical
    side y(0) = (x0, e0) and y'(0) = (v0, w0)."""

    x0: tuple
    v0: tuple
    e0: tuple
    w0: tuple

    @classmethod
    def from_arrays(cls, x0, v0, e0, w0):
        return cls(tuple(map(float, x0)), tuple(map(float, v0)),
                   tuple(map(float, e0)), tuple(map(float, w0)))

    def state(self):
        """Flat phase-space vector (positions then velocities)."""
        return np.array(self.x0 + self.e0 + self.v0 + self.w0, dtype=np.float64)


@dataclass
class CurveSample:
    """One sampled curve: strictly increasing times, base components f, and
    fiber components h (arrays congruent along the time axis)."""

    times: np.ndarray
    f: np.ndarray
    h: np.ndarray
    exited: bool = False


@dataclass
class TrajectoryBatch:
    """Fixed-grid samples for a batch of geodesics.

    positions[b, k] is the configuration at time times[k] (n_base columns of
    base then fiber), velocities likewise; valid_steps[b] counts how many
    samples of trajectory b are trustworthy (the rest are frozen copies)."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    valid_steps: np.ndarray
    n_base: int

    @property
    def exited(self):
        return self.valid_steps < self.times.shape[0]

    @property
    def f(self):
        return self.positions[:, :, : self.n_base]

    @property
    def h(self):
        return self.positions[:, :, self.n_base :]

    def curve(self, b):
        """The b-th trajectory as a CurveSample, cut to its valid prefix."""
        k = int(self.valid_steps[b])
        return CurveSample(
            self.times[:k].copy(),
            self.f[b, :k].copy(),
            self.h[b, :k].copy(),
            exited=bool(self.exited[b]),
        )

    def final_states(self):
        idx = self.valid_steps - 1
        take = np.arange(self.positions.shape[0])
        return self.positions[take, idx], self.velocities[take, idx]


def _stack_initial(ics, chart):
    if isinstance(ics, InitialCondition):
        ics = [ics]
    states = []
    for ic in ics:
        if (len(ic.x0), len(ic.v0), len(ic.e0), len(ic.w0)) != (chart.n, chart.n, chart.q, chart.q):
            raise FlowError(
                f"initial condition has shapes {(len(ic.x0), len(ic.v0), len(ic.e0), len(ic.w0))}, "
                f"chart wants n={chart.n}, q={chart.q}"
            )
        states.append(ic.state())
    return np.array(states, dtype=np.float64)


def _step_grid(dt, t_end):
    if dt <= 0 or t_end <= 0:
        raise FlowError("dt and t_end must be positive")
    steps = int(round(t_end / dt))
    if steps < 1 or abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise FlowError(f"t_end = {t_end} is not an integer multiple of dt = {dt}")
    return steps


def _rk4(rhs, states, dt, steps, inside):
    """Classic fixed-step RK4 with per-trajectory freezing.

    rhs maps (B, 2T) -> (B, 2T); inside maps positions (B, T) -> bool mask.
    Returns (samples1, samples2, valid_steps): positions, velocities at every
    grid time, and per-trajectory count of valid samples."""
    B, twoT = states.shape
    T = twoT // 2
    pos = np.empty((B, steps + 1, T))
    vel = np.empty((B, steps + 1, T))
    pos[:, 0] = states[:, :T]
    vel[:, 0] = states[:, T:]
    valid = np.full(B, steps + 1, dtype=np.int64)
    active = inside(states[:, :T]).copy()
    valid[~active] = 1
    y = states.copy()
    for k in range(1, steps + 1):
        if np.any(active):
            ya = y[active]
            k1 = rhs(ya)
            k2 = rhs(ya + 0.5 * dt * k1)
            k3 = rhs(ya + 0.5 * dt * k2)
            k4 = rhs(ya + dt * k3)
            y[active] = ya + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        pos[:, k] = y[:, :T]
        vel[:, k] = y[:, T:]
        newly_out = active & ~inside(y[:, :T])
        if np.any(newly_out):
            # the sample that stepped outside is not trustworthy; freeze at k-1
            valid[newly_out] = k
            pos[newly_out, k] = pos[newly_out, k - 1]
            vel[newly_out, k] = vel[newly_out, k - 1]
            y[newly_out, :T] = pos[newly_out, k]
            y[newly_out, T:] = vel[newly_out, k]
            active &= ~newly_out
    return pos, vel, valid


def _box_mask(box, n):
    if box is None:
        return lambda P: np.ones(P.shape[0], dtype=bool)
    lo = np.asarray(box[0], dtype=np.float64)
    hi = np.asarray(box[1], dtype=np.float64)
    if lo.shape != (n,) or hi.shape != (n,):
        raise FlowError(f"box bounds must have shape ({n},)")

    def inside(P):
        X = P[:, :n]
        return np.all((X >= lo[None]) & (X <= hi[None]), axis=1)

    return inside


class SuperGeodesicField:
    """Right-hand side of the tau-expanded geodesic system for a super
    connection, evaluated from its dense coefficient batches."""

    def __init__(self, conn):
        self.conn = conn
        self.chart = conn.chart
        self._odd_masks = [1 << b for b in range(self.chart.q)]

    def __call__(self, states):
        n, q = self.chart.n, self.chart.q
        T = n + q
        F = states[:, :n]
        dF = states[:, T : T + n]
        H = states[:, n:T]
        dH = states[:, T + n :]
        D = self.conn.at_batch(F)
        body = D[..., 0]
        acc = np.empty((states.shape[0], T))
        acc[:, :n] = -np.einsum("bj,bk,bjki->bi", dF, dF, body[:, :n, :n, :n])
        A1 = D[:, :n, :n, n:, :][:, :, :, :, self._odd_masks]  # (B, j, k, a, b)
        mix = body[:, :n, n:, n:] + np.einsum("byjx->bjyx", body[:, n:, :n, n:])
        acc[:, n:] = -np.einsum("bj,bk,bjkxy,by->bx", dF, dF, A1, H)
        acc[:, n:] -= np.einsum("bj,by,bjyx->bx", dF, dH, mix)
        return np.concatenate([states[:, T:], acc], axis=1)


class ClassicalGeodesicField:
    """Right-hand side y'' = -Gamma(y)(y', y') for any Christoffel provider."""

    def __init__(self, provider, total_dim):
        self.provider = provider
        self.total_dim = total_dim

    def __call__(self, states):
        T = self.total_dim
        Y = states[:, :T]
        dY = states[:, T:]
        Gm = self.provider.christoffels_at(Y)
        acc = -np.einsum("bs,bu,bsur->br", dY, dY, Gm)
        return np.concatenate([dY, acc], axis=1)


def super_geodesic_rhs(conn, state):
    """Derivative of a phase-space state (f, h, f', h') under the reduced
    super system; accepts a single state or a batch."""
    field = SuperGeodesicField(conn)
    arr = np.asarray(state, dtype=np.float64)
    if arr.ndim == 1:
        return field(arr[None])[0]
    return field(arr)


def classical_geodesic_rhs(provider, chart, state):
    """Derivative of (y, y') under the classical system of a Christoffel
    provider; accepts a single state or a batch."""
    field = ClassicalGeodesicField(provider, chart.total_dim)
    arr = np.asarray(state, dtype=np.float64)
    if arr.ndim == 1:
        return field(arr[None])[0]
    return field(arr)


def integrate(rhs, chart, ics, dt, t_end, box=None):
    """Fixed-step RK4 over a batch of initial conditions for any phase-space
    field rhs: (B, 2(n+q)) -> (B, 2(n+q))."""
    states = _stack_initial(ics, chart)
    steps = _step_grid(dt, t_end)
    pos, vel, valid = _rk4(rhs, states, dt, steps, _box_mask(box, chart.n))
    return TrajectoryBatch(np.arange(steps + 1) * dt, pos, vel, valid, chart.n)


def integrate_super(conn, ics, dt, t_end, box=None):
    """Integrate the tau-expanded geodesic system of a super connection."""
    return integrate(SuperGeodesicField(conn), conn.chart, ics, dt, t_end, box=box)


def integrate_classical(provider, chart, ics, dt, t_end, box=None):
    """Integrate classical geodesics on E for a Christoffel provider."""
    return integrate(ClassicalGeodesicField(provider, chart.total_dim), chart, ics, dt, t_end, box=box)


def batch_deviation(super_traj, classical_traj):
    """Largest pointwise gap between the identified curves (f, h) and y over
    the shared valid prefix of each pair; also returns those prefix lengths."""
    if super_traj.positions.shape != classical_traj.positions.shape:
        raise FlowError("trajectory batches have different shapes")
    valid = np.minimum(super_traj.valid_steps, classical_traj.valid_steps)
    B, S, T = super_traj.positions.shape
    grid = np.arange(S)[None, :] < valid[:, None]
    gap_pos = np.abs(super_traj.positions - classical_traj.positions)
    gap_vel = np.abs(super_traj.velocities - classical_traj.velocities)
    gap = np.maximum(gap_pos.max(axis=2), gap_vel.max(axis=2))
    gap = np.where(grid, gap, 0.0)
    return float(gap.max()), valid


def geodesic_pair(conn, rconn, ics, dt, t_end, box=None):
    """Integrate the same initial conditions through both pictures."""
    sup = integrate_super(conn, ics, dt, t_end, box=box)
    cls = integrate_classical(rconn, conn.chart, ics, dt, t_end, box=box)
    return sup, cls


def correspondence_deviation(conn, rconn, ic, t_end, dt, box=None):
    """Integrate one initial condition through both pictures and return the
    largest sup-norm distance between (f, h) and y over all samples.  A
    truncated integration is an error (the partial gap is reported)."""
    sup, cls = geodesic_pair(conn, rconn, ic, dt, t_end, box=box)
    gap, valid = batch_deviation(sup, cls)
    if np.any(valid < sup.times.shape[0]):
        raise FlowError(
            f"trajectory left the chart box after {int(valid.min()) - 1} steps "
            f"(partial deviation {gap:.3e})"
        )
    return gap
