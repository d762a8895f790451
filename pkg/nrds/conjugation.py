"""
Conjugation of the Stratonovich equation

    dy = (By + f(y)) dt + eta kappa_t y o dW_t

into a random ODE for v = exp(-eta kappa_t z*) y, the inverse state map, an
independent Heun oracle for the SDE and the m1/m2 noise bounds.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from nrds.cocycle import DEFAULT_BLOWUP, Trajectory, VectorFieldFamily, step_count
from nrds.driver import DEFAULT_T_TRUNC, NoiseBounds, PathPoint, WienerPath, ou_series
from nrds.errors import DivergenceError


@dataclass(frozen=True)
class NoiseShape:
    kappa: Callable[[np.ndarray], np.ndarray]
    kappa_dot: Callable[[np.ndarray], np.ndarray]
    label: str = ""


@dataclass(frozen=True)
class SmoothMap:
    """Nonlinearity f with its Jacobian, both acting on stacks (..., dim)."""

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    label: str = ""


def default_shape():
    """kappa_t = 1/(1 + t^2)."""
    return NoiseShape(
        kappa=lambda t: 1.0 / (1.0 + np.square(t)),
        kappa_dot=lambda t: -2.0 * t / np.square(1.0 + np.square(t)),
        label="1/(1+t^2)",
    )


def constant_shape(level=1.0):
    return NoiseShape(
        kappa=lambda t: level + 0.0 * np.asarray(t, dtype=float),
        kappa_dot=lambda t: 0.0 * np.asarray(t, dtype=float),
        label=f"constant {level:g}",
    )


def noise_factor(eta, t, pp, shape, T_trunc=DEFAULT_T_TRUNC):
    """eta kappa_{tau+t} z*(theta_t omega), the exponent of the conjugation."""
    if eta == 0.0:
        return 0.0
    return eta * float(shape.kappa(pp.tau + t)) * pp.z(t, T_trunc)


def build_rde(B, f, shape, T_trunc=DEFAULT_T_TRUNC, label="rde"):
    """
    Random ODE family of the conjugated equation

        v' = Bv + e^{-a} f(e^{a} v) + eta (kappa_t - kappa_dot_t) z* v,
        a = eta kappa_t z*(theta_t omega).

    Args:
        B: Linear part, dim x dim
        f: Nonlinearity and Jacobian
        shape: Noise shape kappa
        T_trunc: Truncation of the z* integral
        label: Family label

    Returns:
        VectorFieldFamily: the eta-indexed family, Bv + f(v) at eta = 0
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    dim = B.shape[0]
    identity = np.eye(dim)

    def coefficients(eta, t, pp):
        z = pp.z(t, T_trunc)
        s = pp.tau + t
        kappa = float(shape.kappa(s))
        kappa_dot = float(shape.kappa_dot(s))
        return eta * kappa * z, eta * (kappa - kappa_dot) * z

    def rhs(eta, t, pp, v):
        v = np.asarray(v, dtype=float)
        linear = v @ B.T
        if eta == 0.0:
            return linear + f.value(v)
        exponent, drift = coefficients(eta, t, pp)
        scale = math.exp(exponent)
        return linear + f.value(scale * v) / scale + drift * v

    def jac(eta, t, pp, v):
        v = np.asarray(v, dtype=float)
        if eta == 0.0:
            return B + f.jacobian(v)
        exponent, drift = coefficients(eta, t, pp)
        return B + f.jacobian(math.exp(exponent) * v) + drift * identity

    return VectorFieldFamily(dim=dim, rhs=rhs, jac=jac, label=label)


def conjugate_state(v, t, pp, eta, shape, T_trunc=DEFAULT_T_TRUNC):
    """y = exp(eta kappa_t z*(theta_t omega)) v."""
    return math.exp(noise_factor(eta, t, pp, shape, T_trunc)) * np.asarray(v, float)


def rde_state(y, t, pp, eta, shape, T_trunc=DEFAULT_T_TRUNC):
    """v = exp(-eta kappa_t z*(theta_t omega)) y, inverse of conjugate_state."""
    return math.exp(-noise_factor(eta, t, pp, shape, T_trunc)) * np.asarray(y, float)


def sde_oracle(B, f, shape, eta, pp, y0, t0, t1, dt, blowup=DEFAULT_BLOWUP):
    """
    Stratonovich Heun scheme driven by the increments of the given path.

    Args:
        B: Linear part
        f: Nonlinearity
        shape: Noise shape kappa
        eta: Noise amplitude
        pp: Driver point or bare Wiener path (read at tau = 0)
        y0: Initial state
        t0: Start time relative to pp.tau
        t1: End time
        dt: Step, a multiple of the path step

    Returns:
        Trajectory: oracle solution on t0 + k dt
    """
    if isinstance(pp, WienerPath):
        pp = PathPoint(0.0, pp)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n_steps = step_count(t1 - t0, dt) if t1 > t0 else 0
    times = t0 + dt * np.arange(n_steps + 1)
    # raises OffGridError when dt is not a multiple of the path step
    omega = pp.path.values[[pp.path.index_of(t) for t in times]]
    increments = np.diff(omega)
    kappa = np.asarray(shape.kappa(pp.tau + times), dtype=float) * np.ones(times.size)

    def drift(y):
        return y @ B.T + f.value(y)

    y = np.array(y0, dtype=float)
    states = np.empty((n_steps + 1,) + y.shape)
    states[0] = y
    for k in range(n_steps):
        dw = increments[k]
        predictor = y + drift(y) * dt + eta * kappa[k] * y * dw
        y = (
            y
            + 0.5 * (drift(y) + drift(predictor)) * dt
            + 0.5 * eta * (kappa[k] * y + kappa[k + 1] * predictor) * dw
        )
        largest = np.max(np.linalg.norm(y, axis=-1))
        if not np.isfinite(largest) or largest > blowup:
            raise DivergenceError(
                f"SDE oracle diverged at t = {times[k + 1]:.6g} (eta = {eta})"
            )
        states[k + 1] = y
    return Trajectory(times=times, states=states, eta=eta, pp=pp)


def _noise_maxima(shape, pp, times, T_trunc):
    z = ou_series(pp.path, times, T_trunc)
    kappa = np.asarray(shape.kappa(pp.tau + times), dtype=float)
    kappa_dot = np.asarray(shape.kappa_dot(pp.tau + times), dtype=float)
    m1 = float(np.max(np.abs(kappa * z)))
    m2 = float(np.max(np.abs((kappa - kappa_dot) * z)))
    return m1, m2


def m1_m2_estimate(shape, pp, t_window, n_grid, T_trunc=DEFAULT_T_TRUNC):
    """
    Grid maxima m1 = max |kappa z*| and m2 = max |(kappa - kappa_dot) z*|.

    The estimate is flagged saturated when the maxima over the full window
    exceed those over the centred half window by less than 5%.

    Args:
        shape: Noise shape kappa
        pp: Driver point
        t_window: (t_start, t_end) relative to pp.tau
        n_grid: Number of grid times over the window
        T_trunc: Truncation of the z* integral

    Returns:
        NoiseBounds: (m1, m2, saturated)
    """
    t_start, t_end = t_window
    times = np.linspace(t_start, t_end, n_grid)
    m1, m2 = _noise_maxima(shape, pp, times, T_trunc)

    centre = 0.5 * (t_start + t_end)
    quarter = 0.25 * (t_end - t_start)
    inner = times[np.abs(times - centre) <= quarter * (1.0 + 1e-12)]
    m1_half, m2_half = _noise_maxima(shape, pp, inner, T_trunc)

    saturated = m1 - m1_half <= 0.05 * m1 and m2 - m2_half <= 0.05 * m2
    return NoiseBounds(m1=m1, m2=m2, saturated=bool(saturated))
