"""
Noise-indexed vector field families, fixed-step RK4 integration along a
driving path and checks of the cocycle property.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import pandas as pd

from nrds.driver import PathPoint
from nrds.errors import DivergenceError

DEFAULT_BLOWUP = 1e6


@dataclass(frozen=True)
class VectorFieldFamily:
    """
    Right-hand side F(eta, t, pp, y) and its Jacobian in y.

    `t` is measured relative to pp.tau, so a field evaluated along pp at
    time t sees the driver point pp shifted by t. Both maps accept a stack
    of states of shape (..., dim); the Jacobian then has shape
    (..., dim, dim). At eta = 0 the field must not touch pp, which may be
    None.
    """

    dim: int
    rhs: Callable[[float, float, Optional[PathPoint], np.ndarray], np.ndarray]
    jac: Callable[[float, float, Optional[PathPoint], np.ndarray], np.ndarray]
    label: str = ""

    def autonomous_rhs(self, y):
        return self.rhs(0.0, 0.0, None, y)

    def autonomous_jac(self, y):
        return self.jac(0.0, 0.0, None, y)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    eta: float
    pp: Optional[PathPoint]

    @property
    def final(self):
        return self.states[-1]

    def to_frame(self):
        """Columns t, y_1..y_dim; batched trajectories export their first member."""
        states = self.states
        if states.ndim > 2:
            states = states.reshape(states.shape[0], -1, states.shape[-1])[:, 0, :]
        columns = {"t": self.times}
        for i in range(states.shape[1]):
            columns[f"y_{i + 1}"] = states[:, i]
        return pd.DataFrame(columns)


def step_count(length, dt):
    """
    Number of steps of size dt spanning length.

    Raises:
        ValueError: dt is not positive or does not divide length
    """
    if not dt > 0:
        raise ValueError(f"Integration step must be positive, got {dt}")
    steps = length / dt
    nearest = round(steps)
    if abs(steps - nearest) > 1e-9 * max(1.0, abs(steps)):
        raise ValueError(f"Step {dt} does not divide the interval length {length}")
    return int(nearest)


def integrate(F, eta, pp, y0, t0, t1, dt, blowup=DEFAULT_BLOWUP):
    """
    Classical fourth order Runge-Kutta along the driver point pp.

    Args:
        F: Vector field family
        eta: Noise amplitude
        pp: Driver point, times t0 and t1 are relative to pp.tau
        y0: Initial state of shape (dim,) or a stack (..., dim)
        t0: Start time
        t1: End time, t1 >= t0
        dt: Step, must divide t1 - t0
        blowup: Bound on the state norm

    Returns:
        Trajectory: states at t0 + k dt

    Raises:
        DivergenceError: a state norm exceeded the blow-up bound
    """
    if t1 < t0:
        raise ValueError(f"Integration window [{t0}, {t1}] is reversed")
    n_steps = step_count(t1 - t0, dt) if t1 > t0 else 0

    y = np.array(y0, dtype=float)
    states = np.empty((n_steps + 1,) + y.shape)
    states[0] = y
    half = dt / 2.0

    for k in range(n_steps):
        t = t0 + k * dt
        k1 = F.rhs(eta, t, pp, y)
        k2 = F.rhs(eta, t + half, pp, y + half * k1)
        k3 = F.rhs(eta, t + half, pp, y + half * k2)
        k4 = F.rhs(eta, t + dt, pp, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        largest = np.max(np.linalg.norm(y, axis=-1))
        if not np.isfinite(largest) or largest > blowup:
            raise DivergenceError(
                f"{F.label or 'Trajectory'} diverged at t = {t + dt:.6g} "
                f"(state norm above {blowup:g}, eta = {eta})"
            )
        states[k + 1] = y

    times = t0 + dt * np.arange(n_steps + 1)
    return Trajectory(times=times, states=states, eta=eta, pp=pp)


def evolve(F, eta, pp, y, s, t, dt, blowup=DEFAULT_BLOWUP):
    """Two-parameter evolution S(t, s) y along pp."""
    return integrate(F, eta, pp, y, s, t, dt, blowup).final


def cocycle_defect(F, eta, pp, y0, t, s, dt, blowup=DEFAULT_BLOWUP):
    """
    Norm of psi(t + s, pp) y0 - psi(t, Theta_s pp) psi(s, pp) y0.

    Both sides start at relative time 0 and use the step dt; s must be a
    multiple of the driver grid so that Theta_s pp exists.
    """
    direct = integrate(F, eta, pp, y0, 0.0, t + s, dt, blowup).final
    first_leg = integrate(F, eta, pp, y0, 0.0, s, dt, blowup).final
    shifted = pp.shifted(s) if pp is not None else None
    composed = integrate(F, eta, shifted, first_leg, 0.0, t, dt, blowup).final
    return float(np.linalg.norm(direct - composed))


def ball_probes(dim, radius, n_probe, seed=0):
    """n_probe points uniformly distributed in the ball of given radius."""
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(n_probe, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=n_probe) ** (1.0 / dim)
    return directions * radii[:, None]


def convergence_gap(F, eta, pp, r, t_window, n_probe, n_times=21, seed=0):
    """
    Sup distance between the eta member and the autonomous member.

    Args:
        F: Vector field family
        eta: Noise amplitude
        pp: Driver point
        r: Probe ball radius
        t_window: (t_start, t_end) of the probe times
        n_probe: Number of seeded probes in the ball
        n_times: Number of probe times

    Returns:
        float: max over probes and times of |rhs_eta - rhs_0| + |jac_eta - jac_0|_2
    """
    probes = ball_probes(F.dim, r, n_probe, seed)
    base_rhs = F.rhs(0.0, 0.0, None, probes)
    base_jac = F.jac(0.0, 0.0, None, probes)

    gap = 0.0
    for t in np.linspace(t_window[0], t_window[1], n_times):
        field_gap = np.linalg.norm(F.rhs(eta, t, pp, probes) - base_rhs, axis=-1)
        jac_gap = np.linalg.norm(
            F.jac(eta, t, pp, probes) - base_jac, ord=2, axis=(-2, -1)
        )
        gap = max(gap, float(np.max(field_gap + jac_gap)))
    return gap
