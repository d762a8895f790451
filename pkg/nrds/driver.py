"""
Two-sided Wiener paths, the Wiener shift and the stationary
Ornstein-Uhlenbeck process z*(theta_t omega) evaluated along a path.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.signal import fftconvolve

from nrds.errors import (
    GridTooLargeError,
    InvalidIntervalError,
    OffGridError,
    WindowExhaustedError,
)

DEFAULT_T_TRUNC = 30.0
MAX_SAMPLES = 20_000_000

# relative tolerance used when snapping a time onto the path grid
GRID_SNAP = 1e-9


def _grid_steps(length, dt):
    """Number of grid steps needed to cover length, exact multiples kept exact."""
    steps = length / dt
    nearest = round(steps)
    if abs(steps - nearest) <= GRID_SNAP * max(1.0, abs(steps)):
        return int(nearest)
    return int(math.ceil(steps))


@dataclass(frozen=True, eq=False)
class WienerPath:
    """
    Sampled two-sided Brownian path on a uniform grid.

    The raw samples live in `base` and are shared by every shifted path;
    `origin` is the index of the path's own time zero. Shifting only moves
    the origin, which keeps the flow property exact sample by sample.

    Args:
        base: Raw samples, read-only
        origin: Index of t = 0 inside base
        dt: Grid step
        seed: Seed the samples were drawn with (-1 for imported paths)
    """

    base: np.ndarray
    origin: int
    dt: float
    seed: int = -1
    _ou_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_samples(self):
        return self.base.size

    @property
    def t_min(self):
        return -self.origin * self.dt

    @property
    def t_max(self):
        return (self.base.size - 1 - self.origin) * self.dt

    @property
    def times(self):
        return (np.arange(self.base.size) - self.origin) * self.dt

    @property
    def values(self):
        return self.base - self.base[self.origin]

    def index_of(self, t):
        """Grid index of time t, raising when t is off the grid or outside it."""
        steps = t / self.dt
        nearest = round(steps)
        if abs(steps - nearest) > GRID_SNAP * max(1.0, abs(steps)):
            raise OffGridError(f"Time {t} is not a multiple of the path step {self.dt}")
        index = self.origin + int(nearest)
        if index < 0 or index >= self.base.size:
            raise WindowExhaustedError(
                f"Time {t} lies outside the path window [{self.t_min}, {self.t_max}]"
            )
        return index

    def value_at(self, t):
        """omega(t), linearly interpolated between grid samples."""
        position = self._position(t)
        i = int(math.floor(position))
        frac = position - i
        if frac == 0.0:
            return float(self.base[i] - self.base[self.origin])
        value = (1.0 - frac) * self.base[i] + frac * self.base[i + 1]
        return float(value - self.base[self.origin])

    def _position(self, t):
        position = self.origin + t / self.dt
        nearest = round(position)
        if abs(position - nearest) <= GRID_SNAP * max(1.0, abs(t / self.dt)):
            position = float(nearest)
        if position < 0 or position > self.base.size - 1:
            raise WindowExhaustedError(
                f"Time {t} lies outside the path window [{self.t_min}, {self.t_max}]"
            )
        return position

    @classmethod
    def from_values(cls, times, values, seed=-1):
        """
        Build a path from explicit grid values, e.g. a deterministic test path.

        Args:
            times: Uniform, increasing grid containing t = 0
            values: omega at the grid times, zero at t = 0

        Returns:
            WienerPath: path carrying exactly these samples
        """
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ValueError("Path times and values must be matching 1D arrays")
        dt = float(times[1] - times[0])
        if dt <= 0 or not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0.0):
            raise InvalidIntervalError("Path times must form a uniform increasing grid")
        origin = int(round(-times[0] / dt))
        if not 0 <= origin < times.size or abs(times[origin]) > GRID_SNAP * dt:
            raise InvalidIntervalError("Path grid does not contain t = 0")
        if values[origin] != 0.0:
            raise ValueError("Path values must vanish at t = 0")
        base = values.copy()
        base.setflags(write=False)
        return cls(base=base, origin=origin, dt=dt, seed=seed)


@dataclass(frozen=True)
class PathPoint:
    """
    Point (tau, omega) of the driving flow.

    `path` is omega read with its own time zero at absolute time tau, so
    shifting by t gives (tau + t, theta_t omega).
    """

    tau: float
    path: WienerPath

    def shifted(self, t):
        return PathPoint(self.tau + t, shift(self.path, t))

    def z(self, t, T_trunc=DEFAULT_T_TRUNC):
        """z*(theta_t omega) at time t relative to tau."""
        return ou_stationary(self.path, t, T_trunc)


class NoiseBounds(NamedTuple):
    m1: float
    m2: float
    saturated: bool


def sample_wiener_path(seed, t_min, t_max, dt, max_samples=MAX_SAMPLES):
    """
    Draw a two-sided Brownian path anchored at omega(0) = 0.

    Args:
        seed: Seed of the numpy generator, same seed gives identical samples
        t_min: Left end of the window, negative
        t_max: Right end of the window, positive
        dt: Grid step
        max_samples: Cap on the number of grid samples

    Returns:
        WienerPath: sampled path covering at least [t_min, t_max]
    """
    if not dt > 0:
        raise InvalidIntervalError(f"Path step must be positive, got {dt}")
    if not t_min < 0 < t_max:
        raise InvalidIntervalError(
            f"Path window [{t_min}, {t_max}] must contain 0 in its interior"
        )

    n_left = _grid_steps(-t_min, dt)
    n_right = _grid_steps(t_max, dt)
    n_samples = n_left + n_right + 1
    if n_samples > max_samples:
        raise GridTooLargeError(
            f"Path would need {n_samples} samples, more than the cap of {max_samples}"
        )

    rng = np.random.default_rng(seed)
    scale = math.sqrt(dt)
    right = rng.normal(0.0, scale, n_right)
    left = rng.normal(0.0, scale, n_left)

    base = np.concatenate([(-np.cumsum(left))[::-1], [0.0], np.cumsum(right)])
    base.setflags(write=False)
    return WienerPath(base=base, origin=n_left, dt=dt, seed=seed)


def shift(p, t):
    """
    Wiener shift theta_t: the path s -> omega(t + s) - omega(t).

    Raises:
        OffGridError: t is not a multiple of the path step
        WindowExhaustedError: t lies outside the sampled window
    """
    origin = p.index_of(t)
    return WienerPath(
        base=p.base, origin=origin, dt=p.dt, seed=p.seed, _ou_cache=p._ou_cache
    )


def _ou_base(p, T_trunc):
    """
    z* at every base index, NaN where the left window is too short.

    Built from differences of base samples only, so the array does not
    depend on the origin and is shared by all shifts of one path.
    """
    key = float(T_trunc)
    cached = p._ou_cache.get(key)
    if cached is not None:
        return cached

    m = _grid_steps(T_trunc, p.dt)
    weights = np.exp(-np.arange(m + 1) * p.dt)
    weights[0] *= 0.5
    weights[-1] *= 0.5

    n = p.base.size
    if n > m:
        convolved = fftconvolve(p.base, weights)[:n]
        z = -p.dt * (convolved - weights.sum() * p.base)
        z[:m] = np.nan
    else:
        z = np.full(n, np.nan)
    z.setflags(write=False)
    p._ou_cache[key] = z
    return z


def _interpolate(z, positions):
    low = np.floor(positions).astype(int)
    frac = positions - low
    high = np.minimum(low + 1, z.size - 1)
    return np.where(frac == 0.0, z[low], (1.0 - frac) * z[low] + frac * z[high])


def _positions(p, times):
    times = np.asarray(times, dtype=float)
    steps = times / p.dt
    nearest = np.round(steps)
    on_grid = np.abs(steps - nearest) <= GRID_SNAP * np.maximum(1.0, np.abs(steps))
    return p.origin + np.where(on_grid, nearest, steps)


def ou_series(p, times, T_trunc=DEFAULT_T_TRUNC):
    """
    Vectorised z*(theta_t omega) for an array of times.

    Raises:
        WindowExhaustedError: a time lacks T_trunc of path on its left or
            lies beyond the right end of the path
    """
    z = _ou_base(p, T_trunc)
    positions = _positions(p, times)
    m = _grid_steps(T_trunc, p.dt)
    if positions.size and (positions.min() < m or positions.max() > p.base.size - 1):
        raise WindowExhaustedError(
            f"z* needs the path on [t - {T_trunc}, t]; available window is "
            f"[{p.t_min}, {p.t_max}]"
        )
    return _interpolate(z, positions)


def ou_stationary(p, t, T_trunc=DEFAULT_T_TRUNC):
    """
    Truncated stationary Ornstein-Uhlenbeck value

        z*(theta_t omega) = -int_{-T_trunc}^0 e^s (theta_t omega)(s) ds

    by the trapezoid rule on the path grid, linearly interpolated between
    grid times.

    Args:
        p: Wiener path
        t: Time relative to the path's origin
        T_trunc: Truncation length of the integral

    Returns:
        float: z* at time t
    """
    return float(ou_series(p, np.array([t]), T_trunc)[0])


def sublinear_report(p, t_grid, T_trunc=DEFAULT_T_TRUNC):
    """Pairs (t, |z*(theta_t omega)| / max(1, |t|)) over t_grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    z = ou_series(p, t_grid, T_trunc)
    ratios = np.abs(z) / np.maximum(1.0, np.abs(t_grid))
    return [(float(t), float(r)) for t, r in zip(t_grid, ratios)]


def ou_residual(p, t0, t1, T_trunc=DEFAULT_T_TRUNC):
    """
    Root mean square of the discrete residual of dz = -z dt + d omega
    along the path grid on [t0, t1].
    """
    i0 = p.index_of(t0)
    i1 = p.index_of(t1)
    times = (np.arange(i0, i1 + 1) - p.origin) * p.dt
    z = ou_series(p, times, T_trunc)
    omega = p.base[i0 : i1 + 1]
    dz = np.diff(z)
    drift = 0.5 * (z[1:] + z[:-1]) * p.dt
    residual = dz + drift - np.diff(omega)
    return float(np.sqrt(np.mean(residual**2)))


def write_path_csv(p, file_path, t_min=None, t_max=None):
    """Export omega on [t_min, t_max] (default: whole path) with columns t, omega."""
    i0 = 0 if t_min is None else p.index_of(t_min)
    i1 = p.base.size - 1 if t_max is None else p.index_of(t_max)
    frame = pd.DataFrame(
        {
            "t": p.times[i0 : i1 + 1],
            "omega": p.values[i0 : i1 + 1],
        }
    )
    frame.to_csv(file_path, index=False, float_format="%.17g")
    return file_path


def read_path_csv(file_path, seed=-1):
    frame = pd.read_csv(file_path, float_precision="round_trip")
    missing = {"t", "omega"} - set(frame.columns)
    if missing:
        raise ValueError(f"Path file {file_path} lacks columns {sorted(missing)}")
    times = frame["t"].to_numpy()
    return WienerPath.from_values(times, frame["omega"].to_numpy(), seed)
