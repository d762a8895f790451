"""
Local unstable sets of hyperbolic solutions as Lipschitz graphs over the
unstable subspace, with the smallness, sandwich, backward decay and
attraction checks that license them.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.interpolate import griddata
from scipy.spatial.distance import pdist
from scipy.stats import linregress

from nrds.cocycle import ball_probes, integrate, step_count
from nrds.errors import (
    GridMismatchError,
    NoContractionError,
    SmallnessViolatedError,
)
from nrds.hyperbolic import spectral_projections, stalled
from nrds.lattice import Box, box_lattice

DEFAULT_L = 0.5
DEFAULT_SLACK = 2.0
RHO_FLOOR = 1e-12


class SmallnessReport(NamedTuple):
    rho: float
    M: float
    alpha: float
    L: float
    conditions: tuple

    @property
    def passed(self):
        return all(self.conditions)

    def to_report(self):
        return {
            "rho": self.rho,
            "M": self.M,
            "alpha": self.alpha,
            "L": self.L,
            "conditions": [bool(c) for c in self.conditions],
            "passed": self.passed,
        }


def check_smallness(rho, M, alpha, L):
    """
    Evaluate the four smallness inequalities licensing the graph transform:

        rho M / alpha <= L
        rho M (1 + L) / alpha < 1
        rho M^2 (1 + L) / (alpha - rho M (1 + L)) <= L
        rho M + rho^2 M^2 (1 + L)(1 + M) / (2 alpha - rho M (1 + L)) < alpha / 2

    A fraction with a non-positive denominator makes its condition false.

    Raises:
        ValueError: an input is not positive
    """
    if min(rho, M, alpha, L) <= 0:
        raise ValueError(
            f"Smallness check needs positive inputs, got rho={rho}, M={M}, "
            f"alpha={alpha}, L={L}"
        )
    spread = rho * M * (1.0 + L)
    first = rho * M / alpha <= L
    second = spread / alpha < 1.0
    denominator = alpha - spread
    third = denominator > 0 and rho * M * M * (1.0 + L) / denominator <= L
    denominator = 2.0 * alpha - spread
    fourth = (
        denominator > 0
        and rho * M + rho**2 * M**2 * (1.0 + L) * (1.0 + M) / denominator
        < alpha / 2.0
    )
    return SmallnessReport(
        rho=float(rho),
        M=float(M),
        alpha=float(alpha),
        L=float(L),
        conditions=(bool(first), bool(second), bool(third), bool(fourth)),
    )


def _bump(x):
    positive = x > 0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def smooth_cutoff(r, radius):
    """C-infinity cut-off equal to 1 for r <= radius/2 and 0 for r >= radius."""
    s = np.clip((radius - np.asarray(r, dtype=float)) / (0.5 * radius), 0.0, 1.0)
    rising = _bump(s)
    return rising / (rising + _bump(1.0 - s))


def ball_lattice(dim, radius, n_per_axis):
    """Lattice points of the cube [-radius, radius]^dim inside the ball."""
    if dim > 3:
        return ball_probes(dim, radius, n_per_axis**2)
    points, _ = box_lattice(Box.symmetric(radius, dim), n_per_axis)
    return points[np.linalg.norm(points, axis=1) <= radius * (1.0 + 1e-12)]


def _lipschitz_quotient(values, points):
    if len(points) < 2:
        return 0.0
    spread = pdist(points)
    moved = pdist(values)
    mask = spread > 0
    return float(np.max(moved[mask] / spread[mask])) if mask.any() else 0.0


def _probe_sup(remainder, times, probes):
    rho = 0.0
    for t in times:
        h = remainder(t, probes)
        rho = max(rho, float(np.max(np.linalg.norm(h, axis=-1))))
        rho = max(rho, _lipschitz_quotient(h, probes))
    return rho


def _probe_times(trace, n_times, t_start=None, t_end=None):
    t_start = trace.times[0] if t_start is None else t_start
    t_end = trace.times[-1] if t_end is None else t_end
    return np.linspace(t_start, t_end, n_times)


def estimate_rho(F, eta, trace, delta0, n_probe=11, n_times=21, frozen=False):
    """
    Measured size of the nonlinear remainder

        h(t, z) = rhs(xi(t) + z) - rhs(xi(t)) - jac(xi(t)) z

    over probes in the ball |z| <= delta0 and times of the trace.

    With frozen the remainder of the graph system is measured instead: the
    linear part is the matrix A of the trace and h is cut off outside
    delta0, so the result is the rho entering the smallness conditions of
    graph_transform.

    Returns:
        float: max of sup |h| and of the Lipschitz quotients of h
    """
    probes = ball_lattice(trace.dim, delta0, n_probe)
    times = _probe_times(trace, n_times)
    if frozen:
        solver = _GraphSolver(F, eta, trace, delta0, trace.dt, 1.0, 1)
        return _probe_sup(solver.remainder, times, probes)

    pp = trace.pp

    def remainder(t, z):
        x = trace.state_at(t)
        stacked = np.broadcast_to(x, z.shape)
        return (
            F.rhs(eta, t, pp, stacked + z)
            - F.rhs(eta, t, pp, stacked)
            - z @ np.atleast_2d(F.jac(eta, t, pp, x)).T
        )

    return _probe_sup(remainder, times, probes)


class _GraphSolver:
    """
    Lyapunov-Perron solver of the cut-off system around a trace,

        zeta' = A zeta + chi(|zeta|) (rhs(xi + zeta) - rhs(xi) - A zeta),

    with A frozen at the equilibrium. Solutions are computed on [s - horizon, s]
    with prescribed unstable component at s.
    """

    def __init__(self, F, eta, trace, radius, horizon, tol, max_iter):
        self.F = F
        self.eta = eta
        self.trace = trace
        self.radius = radius
        self.horizon = horizon
        self.tol = tol
        self.max_iter = max_iter
        self.A = trace.A
        self.proj_u = trace.proj_u
        self.proj_s = trace.proj_s
        self.basis = spectral_projections(trace.A)[2]
        dt = trace.dt
        self.forward = linalg.expm(self.A * dt) @ self.proj_s
        self.backward = linalg.expm(-self.A * dt) @ self.proj_u

    def remainder(self, t, zeta, base=None):
        x = np.broadcast_to(self.trace.state_at(t), zeta.shape)
        pp = self.trace.pp
        if base is None:
            base = self.F.rhs(self.eta, t, pp, x)
        drift = self.F.rhs(self.eta, t, pp, x + zeta) - base - zeta @ self.A.T
        chi = smooth_cutoff(np.linalg.norm(zeta, axis=-1), self.radius)
        return chi[..., None] * drift

    def solve(self, s, coords):
        """
        Backward orbits through the graph points over coords at anchor s.

        Returns:
            tuple: (times from s - horizon to s, zeta of shape (n, m, dim))
        """
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        trace = self.trace
        dt = trace.dt
        n = step_count(self.horizon, dt)
        times = s - dt * np.arange(n, -1, -1)
        if times[0] < trace.times[0] - 1e-9 or s > trace.times[-1] + 1e-9:
            raise ValueError(
                f"Graph anchor {s} with horizon {self.horizon} leaves the trace "
                f"window [{trace.times[0]}, {trace.times[-1]}]"
            )

        m = coords.shape[0]
        dim = trace.dim
        top = coords @ self.basis.T if self.basis.shape[1] else np.zeros((m, dim))
        pp = trace.pp
        centres = [np.broadcast_to(trace.state_at(t), (m, dim)) for t in times]
        bases = np.array(
            [self.F.rhs(self.eta, t, pp, x) for t, x in zip(times, centres)]
        )

        zeta = np.empty((n + 1, m, dim))
        zeta[n] = top
        for j in range(n, 0, -1):
            zeta[j - 1] = zeta[j] @ self.backward.T

        updates = []
        for _ in range(self.max_iter):
            h = np.array(
                [self.remainder(t, zeta[j], bases[j]) for j, t in enumerate(times)]
            )

            unstable = np.empty_like(zeta)
            unstable[n] = top
            for j in range(n, 0, -1):
                unstable[j - 1] = unstable[j] @ self.backward.T - 0.5 * dt * (
                    h[j - 1] @ self.proj_u.T + h[j] @ self.backward.T
                )
            stable = np.zeros_like(zeta)
            for j in range(n):
                stable[j + 1] = stable[j] @ self.forward.T + 0.5 * dt * (
                    h[j] @ self.forward.T + h[j + 1] @ self.proj_s.T
                )

            updated = unstable + stable
            change = float(np.max(np.linalg.norm(updated - zeta, axis=-1)))
            zeta = updated
            updates.append(change)
            if change < self.tol:
                return times, zeta
            if stalled(updates):
                break

        raise NoContractionError(
            f"Graph fixed point at anchor {s} did not converge "
            f"(last update {updates[-1]:.3g}, eta = {self.eta})"
        )

    def graph_values(self, s, coords):
        _, zeta = self.solve(s, coords)
        return zeta[-1] @ self.proj_s.T


@dataclass(frozen=True)
class GraphMap:
    """
    Sampled graph Sigma(s, c) of the local unstable set over the ball
    |c| <= delta0 in orthonormal unstable coordinates c, at each anchor s.
    """

    center: object
    dich: object
    delta0: float
    basis: np.ndarray
    nodes: np.ndarray
    node_index: dict
    anchors: np.ndarray
    values: np.ndarray
    L: float
    L_est: float
    rho: float
    smallness: SmallnessReport
    solver: _GraphSolver = field(repr=False, compare=False)

    @property
    def unstable_dim(self):
        return self.basis.shape[1]

    def interpolate(self, anchor_index, coords):
        """Graph values at arbitrary coordinates from the stored nodes."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        values = self.values[anchor_index]
        if self.unstable_dim == 0:
            return np.zeros((coords.shape[0], values.shape[-1]))
        if self.unstable_dim == 1:
            return np.stack(
                [
                    np.interp(coords[:, 0], self.nodes[:, 0], values[:, d])
                    for d in range(values.shape[-1])
                ],
                axis=-1,
            )
        return griddata(self.nodes, values, coords, method="linear")

    def value_at(self, s, coords):
        """Graph values at anchor s by a fresh fixed-point solve."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if self.unstable_dim == 0:
            return np.zeros((coords.shape[0], self.center.dim))
        return self.solver.graph_values(s, coords)

    def graph_points(self, anchor_index, coords=None):
        """States xi(s) + U c + Sigma(s, c) of the graph at one anchor."""
        if coords is None:
            coords = self.nodes
            sigma = self.values[anchor_index]
        else:
            sigma = self.interpolate(anchor_index, coords)
        s = self.anchors[anchor_index]
        return self.center.state_at(s) + np.atleast_2d(coords) @ self.basis.T + sigma

    def to_frame(self):
        rows = []
        for i, s in enumerate(self.anchors):
            for node, value in zip(self.nodes, self.values[i]):
                row = {"s": float(s)}
                row.update({f"c_{j + 1}": float(c) for j, c in enumerate(node)})
                row.update({f"sigma_{j + 1}": float(v) for j, v in enumerate(value)})
                rows.append(row)
        return pd.DataFrame(rows)

    def to_report(self):
        return {
            "delta0": self.delta0,
            "unstable_dim": self.unstable_dim,
            "anchors": [float(s) for s in self.anchors],
            "L": self.L,
            "L_est": self.L_est,
            "nodes": int(self.nodes.shape[0]),
            "smallness": self.smallness.to_report(),
            "dichotomy": self.dich.to_report(),
        }


def _node_grid(k, delta0, grid_n):
    if k == 0:
        return np.zeros((1, 0)), {(): 0}
    points, idx_to_id = box_lattice(Box.symmetric(delta0, k), grid_n)
    inside = np.linalg.norm(points, axis=1) <= delta0 * (1.0 + 1e-12)
    node_index = {}
    kept = []
    for multi_index, point_id in idx_to_id.items():
        if inside[point_id]:
            node_index[multi_index] = len(kept)
            kept.append(points[point_id])
    return np.asarray(kept), node_index


def _default_anchors(trace, horizon, n_anchors=3):
    earliest = trace.times[0] + horizon
    latest = trace.times[-1]
    if earliest > latest + 1e-9:
        raise ValueError(
            f"Trace window of length {trace.times[-1] - trace.times[0]:g} is "
            f"shorter than the graph horizon {horizon:g}"
        )
    anchors = np.linspace(earliest, latest, n_anchors)
    offsets = np.round((anchors - trace.times[0]) / trace.dt)
    return np.unique(trace.times[0] + trace.dt * offsets)


def graph_transform(
    F,
    eta,
    trace,
    dich,
    delta0,
    grid_n=17,
    tol=1e-10,
    anchors=None,
    horizon=None,
    L=DEFAULT_L,
    strict=False,
    max_iter=100,
    n_probe=11,
):
    """
    Sample the unstable graph of a hyperbolic trace by backward shooting.

    For every node c and anchor s the cut-off system is solved backward on
    [s - horizon, s] with unstable component U c at s; the stable component
    at s is the graph value.

    Args:
        F: Vector field family
        eta: Noise amplitude
        trace: Hyperbolic solution the graph is built around
        dich: Dichotomy estimate along the trace
        delta0: Radius of the node ball and of the cut-off
        grid_n: Nodes per unstable axis
        tol: Fixed-point tolerance
        anchors: Anchor times on the trace grid, default three evenly spaced
        horizon: Backward horizon, default 12/alpha clipped to the trace
        L: Target Lipschitz constant of the smallness check
        strict: Raise instead of recording a failed smallness check
        max_iter: Fixed-point iteration cap
        n_probe: Probes per axis of the cut-off rho estimate

    Returns:
        GraphMap: nodes, graph values and diagnostics

    Raises:
        SmallnessViolatedError: strict and the smallness check fails
        NoContractionError: the fixed point does not converge
    """
    span = trace.times[-1] - trace.times[0]
    if horizon is None:
        horizon = min(12.0 / dich.alpha, 0.5 * span)
    horizon = trace.dt * max(1, round(horizon / trace.dt))
    if anchors is None:
        anchors = _default_anchors(trace, horizon)
    anchors = np.atleast_1d(np.asarray(anchors, dtype=float))

    solver = _GraphSolver(F, eta, trace, delta0, horizon, tol, max_iter)
    k = solver.basis.shape[1]
    nodes, node_index = _node_grid(k, delta0, grid_n)

    if k == 0:
        values = np.zeros((anchors.size, 1, trace.dim))
    else:
        values = np.stack([solver.graph_values(s, nodes) for s in anchors])

    L_est = max(_lipschitz_quotient(v, nodes) for v in values)
    rho = estimate_rho(F, eta, trace, delta0, n_probe, n_times=11, frozen=True)
    rho = max(rho, RHO_FLOOR)
    smallness = check_smallness(rho, dich.M, dich.alpha, L)
    if strict and not smallness.passed:
        raise SmallnessViolatedError(
            f"Smallness conditions {smallness.conditions} fail for rho={rho:.3g}, "
            f"M={dich.M:.3g}, alpha={dich.alpha:.3g}, L={L}"
        )

    return GraphMap(
        center=trace,
        dich=dich,
        delta0=float(delta0),
        basis=solver.basis,
        nodes=nodes,
        node_index=node_index,
        anchors=anchors,
        values=values,
        L=float(L),
        L_est=float(L_est),
        rho=float(rho),
        smallness=smallness,
        solver=solver,
    )


def calibrate_delta0(F, eta, trace, dich, delta0, L=DEFAULT_L, max_halvings=12):
    """
    Halve delta0 until the smallness check passes with the measured cut-off rho.

    Returns:
        tuple: (delta0, SmallnessReport)

    Raises:
        SmallnessViolatedError: no tried radius passes
    """
    delta = float(delta0)
    for _ in range(max_halvings + 1):
        rho = estimate_rho(F, eta, trace, delta, n_times=11, frozen=True)
        rho = max(rho, RHO_FLOOR)
        report = check_smallness(rho, dich.M, dich.alpha, L)
        if report.passed:
            return delta, report
        delta /= 2.0
    raise SmallnessViolatedError(
        f"Smallness check still fails after {max_halvings} halvings of "
        f"delta0 = {delta0} (last rho {rho:.3g})"
    )


@dataclass(frozen=True)
class SandwichReport:
    delta: float
    delta_prime: float
    delta_second: float
    n_samples: int
    start_radius: float
    max_norm: float
    max_ratio: float
    escaped: bool
    passed: bool

    def to_report(self):
        return {key: value for key, value in self.__dict__.items()}


def _sample_coords(k, radius, n):
    if k == 0:
        return np.zeros((1, 0))
    if k == 1:
        return np.linspace(-radius, radius, n)[:, None]
    angles = 2.0 * np.pi * np.arange(n) / n
    radii = radius * (0.5 + 0.5 * (np.arange(n) % 2))
    directions = np.zeros((n, k))
    directions[:, 0] = np.cos(angles)
    directions[:, 1] = np.sin(angles)
    return directions * radii[:, None]


def sandwich_check(gm, delta, n_solutions=20, slack=DEFAULT_SLACK):
    """
    Check that graph solutions started inside radius delta'' stay in the
    delta-tube backward and obey

        |zeta(t)| <= M^2 (1 + L) e^{(alpha - rho M (1 + L))(t - s)} |zeta(s)|

    for t <= s, within the slack factor. The radii are
    delta' = delta / (M^2 (1 + L)) and delta'' = delta' / (M^2 (1 + L)).

    Unstable coordinates are drawn with |c| <= delta'' / (1 + L). The graph
    point U c + Sigma(s, c) then has norm at most (1 + L)|c| <= delta''
    because Sigma is L-Lipschitz with Sigma(s, 0) = 0; start_radius in the
    report is the largest norm actually sampled.

    Returns:
        SandwichReport: radii, worst bound ratio and the escape flag
    """
    M, L = gm.dich.M, gm.L
    alpha, rho = gm.dich.alpha, gm.rho
    factor = M * M * (1.0 + L)
    delta_prime = delta / factor
    delta_second = delta_prime / factor

    k = gm.unstable_dim
    s = float(gm.anchors[-1])
    trace = gm.center
    coords = _sample_coords(k, delta_second / (1.0 + L), n_solutions)

    if k == 0:
        times = np.array([s])
        norms = np.zeros((1, 1))
    else:
        back_times, zeta_back = gm.solver.solve(s, coords)
        start = trace.state_at(back_times[0]) + zeta_back[0]
        trajectory = integrate(
            gm.solver.F, gm.solver.eta, trace.pp, start, back_times[0], s, trace.dt
        )
        times = trajectory.times
        centre = np.array([trace.state_at(t) for t in times])
        norms = np.linalg.norm(trajectory.states - centre[:, None, :], axis=-1)

    escaped = bool(np.any(norms > delta))
    rate = alpha - rho * M * (1.0 + L)
    bound = factor * np.exp(rate * (times - s))[:, None] * norms[-1][None, :]
    positive = bound > 0
    ratios = np.where(positive, norms / np.where(positive, bound, 1.0), 0.0)
    max_ratio = float(np.max(ratios))
    return SandwichReport(
        delta=float(delta),
        delta_prime=float(delta_prime),
        delta_second=float(delta_second),
        n_samples=int(coords.shape[0]),
        start_radius=float(np.max(norms[-1])),
        max_norm=float(np.max(norms)),
        max_ratio=max_ratio,
        escaped=escaped,
        passed=not escaped and max_ratio <= slack,
    )


@dataclass(frozen=True)
class AttractionReport:
    times: np.ndarray
    gaps: np.ndarray
    gamma_fit: float
    gamma: float
    max_ratio: float
    escaped: bool
    passed: bool

    def to_report(self):
        return {
            "gamma_fit": self.gamma_fit,
            "gamma": self.gamma,
            "max_ratio": self.max_ratio,
            "escaped": self.escaped,
            "passed": self.passed,
            "samples": int(self.times.size),
        }


def attraction_rate_check(
    F, eta, trace, gm, zeta0, window, n_samples=21, slack=DEFAULT_SLACK, floor=1e-12
):
    """
    Measure how fast a solution near the trace approaches the unstable graph.

    The graph gap g(t) = |P_s zeta(t) - Sigma(t, P_u zeta(t))| is sampled
    along the forward solution from xi(t0) + zeta0, its decay rate is fitted
    and every pair s < t is checked against
    g(t) <= slack M e^{-gamma (t - s)} g(s) with gamma from the dichotomy.

    Returns:
        AttractionReport: sampled gaps, fitted and reference rates, escape flag
    """
    t0, t1 = window
    dt = trace.dt
    start = trace.state_at(t0) + np.asarray(zeta0, dtype=float)
    trajectory = integrate(F, eta, trace.pp, start, t0, t1, dt)
    picks = np.unique(np.linspace(0, trajectory.times.size - 1, n_samples).astype(int))
    times = trajectory.times[picks]
    zeta = trajectory.states[picks] - np.array([trace.state_at(t) for t in times])

    gamma = gm.dich.gamma
    if np.any(np.linalg.norm(zeta, axis=-1) > gm.delta0):
        return AttractionReport(
            times=times,
            gaps=np.full(times.size, np.nan),
            gamma_fit=float("nan"),
            gamma=float(gamma),
            max_ratio=float("inf"),
            escaped=True,
            passed=False,
        )

    coords = (zeta @ gm.solver.proj_u.T) @ gm.basis
    gaps = np.empty(times.size)
    for i, t in enumerate(times):
        sigma = gm.value_at(t, coords[i : i + 1])[0]
        gaps[i] = np.linalg.norm(zeta[i] @ gm.solver.proj_s.T - sigma)

    valid = gaps > floor
    if valid.sum() >= 3:
        gamma_fit = float(-linregress(times[valid], np.log(gaps[valid])).slope)
    else:
        gamma_fit = float("nan")

    # rows are the earlier sample s, columns the later sample t
    elapsed = times[None, :] - times[:, None]
    relevant = (elapsed > 0) & valid[:, None] & valid[None, :]
    bound = gm.dich.M * np.exp(-gamma * elapsed) * gaps[:, None]
    later_gaps = np.broadcast_to(gaps[None, :], bound.shape)
    if relevant.any():
        max_ratio = float(np.max(later_gaps[relevant] / bound[relevant]))
    else:
        max_ratio = 0.0
    return AttractionReport(
        times=times,
        gaps=gaps,
        gamma_fit=gamma_fit,
        gamma=float(gamma),
        max_ratio=max_ratio,
        escaped=False,
        passed=max_ratio <= slack,
    )


def graph_continuity_gap(gm_eta, gm_0):
    """
    Distance of a perturbed graph from the unperturbed one: projection
    difference (spectral norm) plus the largest value difference over the
    shared nodes and anchors.

    Raises:
        GridMismatchError: node grids or anchors differ
    """
    same_nodes = gm_eta.nodes.shape == gm_0.nodes.shape and np.array_equal(
        gm_eta.nodes, gm_0.nodes
    )
    same_anchors = gm_eta.anchors.shape == gm_0.anchors.shape and np.allclose(
        gm_eta.anchors, gm_0.anchors, rtol=0.0, atol=1e-12
    )
    if not (same_nodes and same_anchors):
        raise GridMismatchError("Graphs do not share node grids and anchor times")
    projection_gap = float(np.linalg.norm(gm_eta.dich.proj_u - gm_0.dich.proj_u, ord=2))
    value_gap = float(np.max(np.linalg.norm(gm_eta.values - gm_0.values, axis=-1)))
    return projection_gap + value_gap
