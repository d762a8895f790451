"""
Hyperbolic equilibria of the autonomous field, their continuation to bounded
solutions of the perturbed per-path process and exponential dichotomy
estimates for linearised processes.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.stats import linregress

from nrds.cocycle import step_count
from nrds.errors import (
    FitFailureError,
    NoContractionError,
    NoGapError,
    WindowTooShortError,
)
from nrds.lattice import box_lattice

GAP_TOL = 1e-3
DEDUP_DISTANCE = 1e-6
STALL_WINDOW = 5


@dataclass(frozen=True)
class Equilibrium:
    y_star: np.ndarray
    spectrum: np.ndarray
    gap: float

    @property
    def unstable_dim(self):
        return int(np.sum(self.spectrum.real > 0))

    @property
    def hyperbolic(self):
        return self.gap >= GAP_TOL


@dataclass(frozen=True)
class DichotomyEstimate:
    """
    Dichotomy data (projections, M, alpha, gamma) of a linear process.

    `basis_u` is an orthonormal basis of range(proj_u); `r2` is the worst
    coefficient of determination of the log-norm fits.
    """

    proj_u: np.ndarray
    proj_s: np.ndarray
    M: float
    alpha: float
    gamma: float
    r2: float = 1.0
    basis_u: np.ndarray = field(default=None, repr=False)

    @property
    def unstable_dim(self):
        return int(round(np.trace(self.proj_u)))

    def to_report(self):
        return {
            "unstable_rank": self.unstable_dim,
            "stable_rank": int(round(np.trace(self.proj_s))),
            "M": float(self.M),
            "alpha": float(self.alpha),
            "gamma": float(self.gamma),
            "fit_r2": float(self.r2),
        }


@dataclass(frozen=True)
class LinearizedProcess:
    """Matrix-valued map t -> A(t) on the window [t0, t1] with grid step dt."""

    matrix: Callable[[float], np.ndarray]
    t0: float
    t1: float
    dt: float

    @classmethod
    def constant(cls, A, t0, t1, dt):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(matrix=lambda t: A, t0=t0, t1=t1, dt=dt)

    @property
    def dim(self):
        return np.atleast_2d(self.matrix(self.t0)).shape[0]


@dataclass(frozen=True)
class HyperbolicSolutionTrace:
    times: np.ndarray
    states: np.ndarray
    eta: float
    pp: object
    residual: float
    sup_dist: float
    equilibrium: Equilibrium
    A: np.ndarray
    proj_u: np.ndarray
    proj_s: np.ndarray
    contraction: tuple = ()

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def dim(self):
        return self.states.shape[1]

    def state_at(self, t):
        """Trace state at time t, linear interpolation between grid times."""
        position = (t - self.times[0]) / self.dt
        nearest = round(position)
        if abs(position - nearest) <= 1e-9 * max(1.0, abs(position)):
            position = nearest
        if position < 0 or position > self.times.size - 1:
            raise ValueError(
                f"Time {t} lies outside the trace window "
                f"[{self.times[0]}, {self.times[-1]}]"
            )
        i = int(np.floor(position))
        frac = position - i
        if frac == 0.0:
            return self.states[i]
        return (1.0 - frac) * self.states[i] + frac * self.states[i + 1]

    def to_frame(self):
        columns = {"t": self.times}
        for i in range(self.dim):
            columns[f"xi_{i + 1}"] = self.states[:, i]
        return pd.DataFrame(columns)


def _newton(F, seed, max_iter, tol, escape_radius):
    y = np.array(seed, dtype=float)
    for _ in range(max_iter):
        residual = F.autonomous_rhs(y)
        if np.linalg.norm(residual) <= tol:
            return y
        try:
            step = linalg.solve(F.autonomous_jac(y), residual)
        except (linalg.LinAlgError, ValueError):
            return None
        y = y - step
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > escape_radius:
            return None
    if np.linalg.norm(F.autonomous_rhs(y)) <= tol:
        return y
    return None


def make_equilibrium(F, y_star):
    spectrum = linalg.eigvals(F.autonomous_jac(y_star))
    gap = float(np.min(np.abs(spectrum.real)))
    y_star = np.asarray(y_star, dtype=float)
    return Equilibrium(y_star=y_star, spectrum=spectrum, gap=gap)


def find_equilibria(F, box, n_seeds, max_iter=50, tol=1e-12):
    """
    Roots of the autonomous field by Newton from a seed lattice.

    Args:
        F: Vector field family, only its eta = 0 member is used
        box: Box of the seed lattice; roots outside it are dropped
        n_seeds: Seeds per axis
        max_iter: Newton iterations per seed
        tol: Residual at which a seed counts as converged

    Returns:
        list: Equilibrium objects sorted by coordinates, deduplicated at 1e-6
    """
    seeds, _ = box_lattice(box, n_seeds)
    escape_radius = 100.0 * (1.0 + np.max(np.abs(np.asarray(box.lower + box.upper))))

    roots = []
    for seed in seeds:
        root = _newton(F, seed, max_iter, tol, escape_radius)
        if root is None or not box.contains(root):
            continue
        if any(np.linalg.norm(root - known) <= DEDUP_DISTANCE for known in roots):
            continue
        roots.append(root)

    roots.sort(key=lambda y: tuple(y))
    return [make_equilibrium(F, root) for root in roots]


def spectral_projections(A, gap_tol=GAP_TOL):
    """
    Spectral projections onto the unstable and stable subspaces of A.

    Returns:
        tuple: (proj_u, proj_s, basis_u) with basis_u an orthonormal basis
            of the unstable subspace from the ordered Schur form

    Raises:
        NoGapError: an eigenvalue lies within gap_tol of the imaginary axis
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    dim = A.shape[0]
    gap = float(np.min(np.abs(linalg.eigvals(A).real)))
    if gap < gap_tol:
        raise NoGapError(f"Spectral gap {gap:.3g} is below {gap_tol:g}")

    _, unstable_vectors, k_u = linalg.schur(A, output="real", sort="rhp")
    _, stable_vectors, k_s = linalg.schur(A, output="real", sort="lhp")
    basis_u = unstable_vectors[:, :k_u]
    frame = np.hstack([basis_u, stable_vectors[:, :k_s]])

    selector = np.zeros((dim, dim))
    selector[:k_u, :k_u] = np.eye(k_u)
    proj_u = frame @ selector @ linalg.inv(frame)
    proj_s = np.eye(dim) - proj_u
    return proj_u, proj_s, basis_u


def fundamental_solution(L, t_start, t_end, dt):
    """
    Matrix solution Phi(t, t_start) of X' = A(t) X by RK4.

    dt may be negative to integrate backward.

    Returns:
        tuple: (times, Phi array of shape (n, dim, dim))
    """
    n_steps = step_count(abs(t_end - t_start), abs(dt)) if t_end != t_start else 0
    dim = L.dim
    phi = np.eye(dim)
    solutions = np.empty((n_steps + 1, dim, dim))
    solutions[0] = phi
    half = dt / 2.0
    for k in range(n_steps):
        t = t_start + k * dt
        A0 = L.matrix(t)
        A_half = L.matrix(t + half)
        A1 = L.matrix(t + dt)
        k1 = A0 @ phi
        k2 = A_half @ (phi + half * k1)
        k3 = A_half @ (phi + half * k2)
        k4 = A1 @ (phi + dt * k3)
        phi = phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        solutions[k + 1] = phi
    times = t_start + dt * np.arange(n_steps + 1)
    return times, solutions


def _fit_decay(elapsed, norms, part):
    log_norms = np.log(norms)
    fit = linregress(elapsed, log_norms)
    half = log_norms.size // 2
    if fit.slope >= 0 or np.mean(log_norms[half:]) >= np.mean(log_norms[:half]):
        raise FitFailureError(
            f"{part} log-norms do not decay (slope {fit.slope:.3g}); "
            "the process shows no dichotomy on this window"
        )
    return -fit.slope, fit.rvalue**2


def dichotomy_estimate(L, window=None, proj_guess=None):
    """
    Fit exponential dichotomy constants of a linear process.

    Projections come from the spectral splitting of A at the window midpoint
    unless proj_guess = (proj_u, proj_s) is given. The stable part is
    propagated forward and the unstable part backward from the midpoint; the
    rates are least-squares slopes of the log operator norms and M is the
    smallest constant bounding both envelopes.

    Args:
        L: Linearised process
        window: (t0, t1), defaults to the process window
        proj_guess: Optional projection pair

    Returns:
        DichotomyEstimate: fitted projections, M, alpha and gamma

    Raises:
        NoGapError: no spectral gap at the midpoint
        FitFailureError: a log-norm sequence does not decay
    """
    t0, t1 = window if window is not None else (L.t0, L.t1)
    dt = L.dt
    t_mid = t0 + dt * round((t1 - t0) / (2.0 * dt))

    if proj_guess is None:
        proj_u, proj_s, basis_u = spectral_projections(L.matrix(t_mid))
    else:
        proj_u, proj_s = (np.asarray(p, dtype=float) for p in proj_guess)
        basis_u = linalg.orth(proj_u)
    k_u = int(round(np.trace(proj_u)))
    k_s = int(round(np.trace(proj_s)))

    rates = []
    envelopes = []
    r2 = 1.0
    gamma = None
    if k_s > 0:
        times, phi = fundamental_solution(L, t_mid, t1, dt)
        elapsed = times[1:] - t_mid
        norms = np.linalg.norm(phi[1:] @ proj_s, ord=2, axis=(1, 2))
        alpha_s, r2_s = _fit_decay(elapsed, norms, "Stable")
        rates.append(alpha_s)
        envelopes.append((elapsed, norms))
        gamma = alpha_s
        r2 = min(r2, r2_s)
    if k_u > 0:
        times, phi = fundamental_solution(L, t_mid, t0, -dt)
        elapsed = t_mid - times[1:]
        norms = np.linalg.norm(phi[1:] @ proj_u, ord=2, axis=(1, 2))
        alpha_u, r2_u = _fit_decay(elapsed, norms, "Unstable")
        rates.append(alpha_u)
        envelopes.append((elapsed, norms))
        r2 = min(r2, r2_u)

    alpha = min(rates)
    M = 1.0
    for elapsed, norms in envelopes:
        M = max(M, float(np.max(norms * np.exp(alpha * elapsed))))
    return DichotomyEstimate(
        proj_u=proj_u,
        proj_s=proj_s,
        M=M,
        alpha=float(alpha),
        gamma=float(gamma if gamma is not None else alpha),
        r2=float(r2),
        basis_u=basis_u,
    )


def stalled(updates, window=STALL_WINDOW):
    """True when the last `window` update norms never decreased."""
    recent = updates[-window:]
    return len(recent) == window and all(
        later >= earlier for earlier, later in zip(recent, recent[1:])
    )


def _lyapunov_perron(F, eta, pp, y_star, A, proj_u, proj_s, times, tol, max_iter):
    dt = times[1] - times[0]
    forward = linalg.expm(A * dt) @ proj_s
    backward = linalg.expm(-A * dt) @ proj_u
    base = F.autonomous_rhs(y_star)
    n = times.size
    xi = np.tile(y_star, (n, 1))
    updates = []

    for _ in range(max_iter):
        fields = np.array([F.rhs(eta, t, pp, state) for t, state in zip(times, xi)])
        g = fields - (xi - y_star) @ A.T - base
        g_s = g @ proj_s.T

        stable = np.zeros_like(xi)
        for j in range(n - 1):
            stable[j + 1] = forward @ stable[j] + 0.5 * dt * (
                forward @ g_s[j] + g_s[j + 1]
            )
        unstable = np.zeros_like(xi)
        for j in range(n - 1, 0, -1):
            unstable[j - 1] = backward @ unstable[j] + 0.5 * dt * (
                proj_u @ g[j - 1] + backward @ g[j]
            )

        updated = y_star + stable - unstable
        change = float(np.max(np.linalg.norm(updated - xi, axis=1)))
        xi = updated
        updates.append(change)
        if change < tol:
            return xi, updates

        if stalled(updates):
            raise NoContractionError(
                f"Continuation updates stopped shrinking at {change:.3g} "
                f"(eta = {eta}); eta is beyond the contraction range of this path"
            )

    raise NoContractionError(
        f"Continuation did not reach tolerance {tol:g} in {max_iter} iterations "
        f"(last update {updates[-1]:.3g}, eta = {eta})"
    )


def continue_hyperbolic_solution(
    F, eta, pp, eq, T_h, tol, max_iter=100, dt=0.01, check_window=True
):
    """
    Continue a hyperbolic equilibrium to a bounded solution of the perturbed
    process by Lyapunov-Perron iteration on [-T_h, T_h].

    Args:
        F: Vector field family
        eta: Noise amplitude
        pp: Driver point
        eq: Hyperbolic equilibrium of the autonomous field
        T_h: Half width of the window
        tol: Sup-norm update at which iteration stops
        max_iter: Iteration cap
        dt: Quadrature step, must divide 2 T_h
        check_window: Re-run on [-T_h - 5, T_h + 5] and compare midpoints

    Returns:
        HyperbolicSolutionTrace: the converged solution and its diagnostics

    Raises:
        NoGapError: eq is not hyperbolic
        NoContractionError: updates stall or the iteration cap is hit
        WindowTooShortError: the midpoint depends on the window boundary
    """
    y_star = np.asarray(eq.y_star, dtype=float)
    A = np.atleast_2d(F.autonomous_jac(y_star))
    proj_u, proj_s, _ = spectral_projections(A)

    n_steps = step_count(2.0 * T_h, dt)
    times = -T_h + dt * np.arange(n_steps + 1)
    states, updates = _lyapunov_perron(
        F, eta, pp, y_star, A, proj_u, proj_s, times, tol, max_iter
    )

    if check_window:
        wider = continue_hyperbolic_solution(
            F, eta, pp, eq, T_h + 5.0, tol, max_iter, dt, check_window=False
        )
        moved = float(np.linalg.norm(wider.state_at(0.0) - states[n_steps // 2]))
        if moved > 10.0 * tol:
            raise WindowTooShortError(
                f"Widening the window by 5 moved the midpoint by {moved:.3g} "
                f"(> {10.0 * tol:g}); increase T_h"
            )

    ratios = tuple(
        later / earlier for earlier, later in zip(updates, updates[1:]) if earlier > 0
    )
    sup_dist = float(np.max(np.linalg.norm(states - y_star, axis=1)))
    return HyperbolicSolutionTrace(
        times=times,
        states=states,
        eta=eta,
        pp=pp,
        residual=updates[-1],
        sup_dist=sup_dist,
        equilibrium=eq,
        A=A,
        proj_u=proj_u,
        proj_s=proj_s,
        contraction=ratios,
    )


def shift_defect(
    F, eta, pp, eq, lag, half_width, tol, dt=0.01, scale=1.0, max_window=None
):
    """
    Largest distance over |t| <= half_width between the continuation along
    the shifted driver and the time-shifted continuation,

        |xi(pp shifted by lag)(t - lag) - xi(pp)(t)|.

    Both continuations run on a window padded by the width
    ln(2 scale / tol) / gap of the layer in which the truncation at the
    window ends is still felt, so the compared slice lies outside it.

    Args:
        F: Vector field family
        eta: Noise amplitude
        pp: Driver point, None for the autonomous field
        eq: Hyperbolic equilibrium that is continued
        lag: Shift, a multiple of dt
        half_width: Half width of the compared slice
        tol: Continuation tolerance
        dt: Quadrature step
        scale: Size of the deviation from eq, e.g. a trace's sup_dist
        max_window: Cap on the padded half window, e.g. from the driver window

    Returns:
        tuple: (largest defect, padded half window)
    """
    layer = math.log(2.0 * max(scale, tol) / tol) / eq.gap
    window = half_width + abs(lag) + 1.25 * layer
    if max_window is not None:
        window = min(window, max_window)
    window = dt * math.ceil(window / dt - 1e-9)
    if window < half_width + abs(lag):
        raise WindowTooShortError(
            f"Half window {window:g} cannot hold the slice {half_width:g} "
            f"shifted by {lag:g}"
        )

    base = continue_hyperbolic_solution(
        F, eta, pp, eq, window, tol, dt=dt, check_window=False
    )
    moved = pp.shifted(lag) if pp is not None else None
    shifted = continue_hyperbolic_solution(
        F, eta, moved, eq, window, tol, dt=dt, check_window=False
    )
    inside = np.abs(base.times) <= half_width + 1e-9
    later = np.array([shifted.state_at(t - lag) for t in base.times[inside]])
    defect = np.linalg.norm(later - base.states[inside], axis=1)
    return float(np.max(defect)), window


def linearize_along(F, eta, trace):
    """Linearised process t -> jac(eta, t, pp, xi(t)) along a trace."""

    def matrix(t):
        return np.atleast_2d(F.jac(eta, t, trace.pp, trace.state_at(t)))

    return LinearizedProcess(
        matrix=matrix, t0=float(trace.times[0]), t1=float(trace.times[-1]), dt=trace.dt
    )
