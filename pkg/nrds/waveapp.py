"""
Galerkin truncation of the damped wave equation

    u_tt + beta_eta u_t - u_xx = f(u)  on (0, pi), Dirichlet,

with randomly perturbed damping beta_eta = beta + eta |kappa z*| (or the
bounded arctan law), its energy, damping bounds and linear decay checks.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import linregress

from nrds.cocycle import VectorFieldFamily, integrate
from nrds.conjugation import NoiseShape, default_shape
from nrds.driver import DEFAULT_T_TRUNC, ou_series
from nrds.errors import FitFailureError
from nrds.hyperbolic import make_equilibrium

MAX_MODES = 64
DAMPING_LAWS = ("absolute", "arctan")


@dataclass(frozen=True)
class ScalarNonlinearity:
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    primitive: Callable[[np.ndarray], np.ndarray]
    label: str = ""


def cubic_nonlinearity(lam=1.0):
    """f(u) = lam u - u^3."""
    return ScalarNonlinearity(
        f=lambda u: lam * u - u**3,
        df=lambda u: lam - 3.0 * u**2,
        d2f=lambda u: -6.0 * u,
        primitive=lambda u: 0.5 * lam * u**2 - 0.25 * u**4,
        label=f"{lam:g}u - u^3",
    )


def zero_nonlinearity():
    return ScalarNonlinearity(
        f=np.zeros_like,
        df=np.zeros_like,
        d2f=np.zeros_like,
        primitive=np.zeros_like,
        label="0",
    )


class GrowthFit(NamedTuple):
    c: float
    p: float
    subcritical: bool


class WaveState(NamedTuple):
    a: np.ndarray
    b: np.ndarray

    @classmethod
    def from_vector(cls, y):
        y = np.asarray(y, dtype=float)
        n = y.shape[-1] // 2
        return cls(a=y[..., :n], b=y[..., n:])

    def to_vector(self):
        return np.concatenate([self.a, self.b], axis=-1)


@dataclass(frozen=True)
class WaveGalerkinSpec:
    """
    N sine modes sin(kx), k = 1..N, with the nonlinearity evaluated on 4N
    midpoint collocation nodes of (0, pi).
    """

    N: int
    beta: float
    nonlinearity: ScalarNonlinearity = field(default_factory=cubic_nonlinearity)
    shape: NoiseShape = field(default_factory=default_shape)
    damping: str = "absolute"
    T_trunc: float = DEFAULT_T_TRUNC

    def __post_init__(self):
        if not 1 <= self.N <= MAX_MODES:
            raise ValueError(f"Mode count must lie in [1, {MAX_MODES}], got {self.N}")
        if not self.beta > 0:
            raise ValueError(f"Damping beta must be positive, got {self.beta}")
        if self.damping not in DAMPING_LAWS:
            raise ValueError(f"Unknown damping law {self.damping!r}")

    @property
    def dim(self):
        return 2 * self.N

    @property
    def wavenumbers(self):
        return np.arange(1, self.N + 1, dtype=float)

    @property
    def n_colloc(self):
        return 4 * self.N

    @property
    def nodes(self):
        return (np.arange(self.n_colloc) + 0.5) * math.pi / self.n_colloc

    @property
    def sine_matrix(self):
        """S[k-1, j] = sin(k x_j)."""
        return np.sin(np.outer(self.wavenumbers, self.nodes))

    def growth_fit(self, s_max=100.0, n_probe=200):
        """
        Fit max(|f'(s)|, |f''(s)|) <= c (1 + |s|^p) on a probe grid.

        p is the log-log slope over |s| in [1, s_max]; c is the smallest
        constant making the bound hold on the whole grid [-s_max, s_max].
        """
        g = self.nonlinearity
        s = np.linspace(-s_max, s_max, 2 * n_probe + 1)
        growth = np.maximum(np.abs(g.df(s)), np.abs(g.d2f(s)))
        tail = np.geomspace(1.0, s_max, n_probe)
        tail_growth = np.maximum(np.abs(g.df(tail)), np.abs(g.d2f(tail)))
        if np.all(tail_growth == 0):
            return GrowthFit(c=0.0, p=0.0, subcritical=True)
        positive = tail_growth > 0
        fit = linregress(np.log1p(tail[positive]), np.log(tail_growth[positive]))
        p = float(fit.slope)
        p = max(p, 0.0)
        c = float(np.max(growth / (1.0 + np.abs(s) ** p)))
        return GrowthFit(c=c, p=p, subcritical=p < 2.0)


def damping_coefficient(spec, eta, t, pp):
    """beta_eta at time t along pp."""
    if eta == 0.0:
        return spec.beta
    z = pp.z(t, spec.T_trunc)
    if spec.damping == "arctan":
        return spec.beta + eta * (2.0 / math.pi) * math.atan(z)
    return spec.beta + eta * abs(float(spec.shape.kappa(pp.tau + t)) * z)


def build_wave_family(spec):
    """
    2N-dimensional family for y = (a, b):

        a' = b,  b' = -k^2 a - beta_eta b + P_N f(u),  u = sum a_k sin(kx).
    """
    n = spec.N
    k2 = spec.wavenumbers**2
    S = spec.sine_matrix
    weight = 2.0 / spec.n_colloc
    g = spec.nonlinearity

    def rhs(eta, t, pp, y):
        y = np.asarray(y, dtype=float)
        a = y[..., :n]
        b = y[..., n:]
        u = a @ S
        force = weight * (g.f(u) @ S.T)
        damping = damping_coefficient(spec, eta, t, pp)
        return np.concatenate([b, -k2 * a - damping * b + force], axis=-1)

    def jac(eta, t, pp, y):
        y = np.asarray(y, dtype=float)
        a = y[..., :n]
        u = a @ S
        coupling = weight * np.einsum("kj,...j,lj->...kl", S, g.df(u), S)
        damping = damping_coefficient(spec, eta, t, pp)
        J = np.zeros(y.shape[:-1] + (2 * n, 2 * n))
        J[..., :n, n:] = np.eye(n)
        J[..., n:, :n] = coupling - np.diag(k2)
        J[..., n:, n:] = -damping * np.eye(n)
        return J

    return VectorFieldFamily(dim=2 * n, rhs=rhs, jac=jac, label=f"wave N={n}")


class DampingBounds(NamedTuple):
    b0: float
    b1: float
    saturated: bool


def _damping_series(spec, eta, pp, times):
    if eta == 0.0:
        return np.full(times.size, spec.beta)
    z = ou_series(pp.path, times, spec.T_trunc)
    if spec.damping == "arctan":
        return spec.beta + eta * (2.0 / math.pi) * np.arctan(z)
    kappa = np.asarray(spec.shape.kappa(pp.tau + times), dtype=float)
    return spec.beta + eta * np.abs(kappa * z)


def damping_bounds(spec, eta, pp, t_window, n_grid=None):
    """
    Min and max of the damping coefficient over the window grid; saturated
    when the full window moves them by less than 5% against its centred half.
    """
    t_start, t_end = t_window
    if n_grid is None:
        n_grid = int(round((t_end - t_start) / pp.path.dt)) + 1
    times = np.linspace(t_start, t_end, n_grid)
    series = _damping_series(spec, eta, pp, times)
    b0, b1 = float(series.min()), float(series.max())

    centre = 0.5 * (t_start + t_end)
    inner = np.abs(times - centre) <= 0.25 * (t_end - t_start) * (1.0 + 1e-12)
    inner_b0, inner_b1 = float(series[inner].min()), float(series[inner].max())
    low_settled = abs(b0 - inner_b0) <= 0.05 * abs(b0)
    high_settled = abs(b1 - inner_b1) <= 0.05 * abs(b1)
    saturated = low_settled and high_settled
    return DampingBounds(b0=b0, b1=b1, saturated=bool(saturated))


def lyapunov_energy(spec, y, kinetic_weight=0.5):
    """
    E = 1/2 int |u_x|^2 + kinetic_weight int v^2 - int G(u).

    The quadratic parts use Parseval on the sine basis; int G(u) uses the
    midpoint rule on the collocation nodes. kinetic_weight = beta/2 gives the
    alternative functional with that coefficient.
    """
    state = y if isinstance(y, WaveState) else WaveState.from_vector(y)
    k2 = spec.wavenumbers**2
    gradient = 0.5 * (math.pi / 2.0) * np.sum(k2 * state.a**2, axis=-1)
    kinetic = kinetic_weight * (math.pi / 2.0) * np.sum(state.b**2, axis=-1)
    u = state.a @ spec.sine_matrix
    primitive = np.sum(spec.nonlinearity.primitive(u), axis=-1)
    potential = (math.pi / spec.n_colloc) * primitive
    return gradient + kinetic - potential


def energy_weights(spec):
    """Diagonal W with |W y|_2 equal to the H1 x L2 norm of y."""
    scale = math.sqrt(math.pi / 2.0)
    return scale * np.concatenate([spec.wavenumbers, np.ones(spec.N)])


def mode_decay_rates(spec):
    """|Re lambda| of the roots of lambda^2 + beta lambda + k^2 per mode."""
    k = spec.wavenumbers
    discriminant = spec.beta**2 - 4.0 * k**2
    overdamped = 0.5 * (spec.beta - np.sqrt(np.maximum(discriminant, 0.0)))
    return np.where(discriminant > 0, overdamped, 0.5 * spec.beta)


@dataclass(frozen=True)
class DecaySplitReport:
    K: float
    alpha: float
    r2: float
    predicted_alpha: float
    splitting_defect: float
    duhamel_defect: float
    remainder_norm: float

    def to_report(self):
        return dict(self.__dict__)


def linear_decay_split(spec, eta, pp, T, dt, y0=None, duhamel_T=None):
    """
    Decay of the linear flow and the nonlinear splitting psi = phi + varphi.

    The linear part is integrated as a matrix flow over [0, T]; (K, alpha) are
    fitted to the log energy-norm operator norm. On the probe data y0 the
    remainder varphi = psi - phi is recomputed by the Duhamel quadrature
    over [0, duhamel_T].

    Returns:
        DecaySplitReport: fitted constants, mode-wise prediction and defects

    Raises:
        FitFailureError: the fitted alpha is not positive
    """
    linear = build_wave_family(replace(spec, nonlinearity=zero_nonlinearity()))
    full = build_wave_family(spec)
    dim = spec.dim

    flow = integrate(linear, eta, pp, np.eye(dim), 0.0, T, dt)
    phi = np.swapaxes(flow.states, -1, -2)
    weights = energy_weights(spec)
    weighted = weights[:, None] * phi / weights[None, :]
    norms = np.linalg.norm(weighted, ord=2, axis=(1, 2))
    fit = linregress(flow.times, np.log(norms))
    alpha = -fit.slope
    if not alpha > 0:
        raise FitFailureError(
            f"Linear wave flow does not decay (fitted alpha {alpha:.3g}); "
            "damping is too weak at this resolution"
        )
    K = float(np.max(norms * np.exp(alpha * flow.times)))

    if y0 is None:
        y0 = np.zeros(dim)
        y0[0] = 0.5
        if spec.N > 1:
            y0[1] = 0.2
    duhamel_T = min(T, 5.0) if duhamel_T is None else duhamel_T
    n = int(round(duhamel_T / dt))
    times = flow.times[: n + 1]
    psi = integrate(full, eta, pp, y0, 0.0, times[-1], dt).states
    phi_y0 = np.einsum("tij,j->ti", phi[: n + 1], y0)
    remainder = psi - phi_y0
    splitting_defect = float(np.max(np.abs(psi - (phi_y0 + remainder))))

    forcing = np.array(
        [
            full.rhs(eta, t, pp, y) - linear.rhs(eta, t, pp, y)
            for t, y in zip(times, psi)
        ]
    )
    pulled_back = np.einsum("tij,tj->ti", np.linalg.inv(phi[: n + 1]), forcing)
    accumulated = cumulative_trapezoid(pulled_back, times, axis=0, initial=0.0)
    duhamel = np.einsum("tij,tj->ti", phi[: n + 1], accumulated)
    mismatch = np.linalg.norm((duhamel - remainder) * weights, axis=1)
    duhamel_defect = float(np.max(mismatch))

    return DecaySplitReport(
        K=K,
        alpha=float(alpha),
        r2=float(fit.rvalue**2),
        predicted_alpha=float(np.min(mode_decay_rates(spec))),
        splitting_defect=splitting_defect,
        duhamel_defect=duhamel_defect,
        remainder_norm=float(np.max(np.linalg.norm(remainder * weights, axis=1))),
    )


def wave_equilibria(spec, amplitudes=(0.0, 0.5, 1.0, 1.5, 2.0), max_iter=50, tol=1e-12):
    """
    Galerkin equilibria (a*, 0) with k^2 a*_k = P_k f(u*), by Newton from
    seeds amp * e_k for the lowest three modes.

    Returns:
        list: Equilibrium objects of the 2N system, sorted, residual <= 1e-8
    """
    family = build_wave_family(spec)
    n = spec.N
    k2 = spec.wavenumbers**2
    S = spec.sine_matrix
    weight = 2.0 / spec.n_colloc
    g = spec.nonlinearity

    def residual(a):
        return weight * (g.f(a @ S) @ S.T) - k2 * a

    def jacobian(a):
        return weight * (S * g.df(a @ S)) @ S.T - np.diag(k2)

    roots = []
    for mode in range(min(n, 3)):
        for amplitude in amplitudes:
            a = np.zeros(n)
            a[mode] = amplitude
            for _ in range(max_iter):
                r = residual(a)
                if np.linalg.norm(r) <= tol:
                    break
                try:
                    a = a - np.linalg.solve(jacobian(a), r)
                except np.linalg.LinAlgError:
                    break
                if not np.all(np.isfinite(a)) or np.linalg.norm(a) > 1e3:
                    break
            if not np.all(np.isfinite(a)) or np.linalg.norm(residual(a)) > 1e-8:
                continue
            if any(np.linalg.norm(a - known) <= 1e-6 for known in roots):
                continue
            roots.append(a.copy())

    roots.sort(key=lambda a: tuple(a))
    return [make_equilibrium(family, np.concatenate([a, np.zeros(n)])) for a in roots]
