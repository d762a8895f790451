"""
Named catalog of the built-in scenarios.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from nrds.conjugation import SmoothMap, build_rde, default_shape
from nrds.lattice import Box


def diagonal_jacobian(derivative):
    """Jacobian of a componentwise map from the derivative of its components."""

    def jacobian(y):
        y = np.asarray(y, dtype=float)
        return derivative(y)[..., :, None] * np.eye(y.shape[-1])

    return jacobian


def cubic_map():
    """f(y) = y - y^3 componentwise."""
    return SmoothMap(
        value=lambda y: np.asarray(y, dtype=float) - np.asarray(y, dtype=float) ** 3,
        jacobian=diagonal_jacobian(lambda y: 1.0 - 3.0 * y**2),
        label="y - y^3",
    )


def linear_map(rate=-1.0):
    """f(y) = rate * y."""
    return SmoothMap(
        value=lambda y: rate * np.asarray(y, dtype=float),
        jacobian=diagonal_jacobian(lambda y: rate + 0.0 * y),
        label=f"{rate:g} y",
    )


def double_well_map():
    """Negative gradient of (x1^2 - 1)^2 / 4 + x2^2 / 2."""

    def value(y):
        y = np.asarray(y, dtype=float)
        x1, x2 = y[..., 0], y[..., 1]
        return np.stack([x1 - x1**3, -x2], axis=-1)

    def jacobian(y):
        y = np.asarray(y, dtype=float)
        J = np.zeros(y.shape[:-1] + (2, 2))
        J[..., 0, 0] = 1.0 - 3.0 * y[..., 0] ** 2
        J[..., 1, 1] = -1.0
        return J

    return SmoothMap(value=value, jacobian=jacobian, label="double well")


def quadratic_saddle_map():
    """x' = x - x^3, y' = -y + x^2; the unstable graph at 0 is y = x^2/3 + O(x^4)."""

    def value(y):
        y = np.asarray(y, dtype=float)
        x, w = y[..., 0], y[..., 1]
        return np.stack([x - x**3, -w + x**2], axis=-1)

    def jacobian(y):
        y = np.asarray(y, dtype=float)
        x = y[..., 0]
        J = np.zeros(y.shape[:-1] + (2, 2))
        J[..., 0, 0] = 1.0 - 3.0 * x**2
        J[..., 1, 0] = 2.0 * x
        J[..., 1, 1] = -1.0
        return J

    return SmoothMap(value=value, jacobian=jacobian, label="x - x^3, -y + x^2")


@dataclass(frozen=True)
class Scenario:
    name: str
    section: str
    description: str
    dim: int
    box: Optional[Box] = None
    nonlinearity: Optional[Callable[[], SmoothMap]] = None

    def family(self, T_trunc, shape=None):
        """Conjugated random ODE family of the scenario (not for wave)."""
        if self.nonlinearity is None:
            raise ValueError(f"Scenario {self.name} has no conjugated ODE family")
        return build_rde(
            np.zeros((self.dim, self.dim)),
            self.nonlinearity(),
            shape or default_shape(),
            T_trunc=T_trunc,
            label=self.name,
        )


SCENARIOS = {
    "cubic1d": Scenario(
        name="cubic1d",
        section="conjugation example",
        description="scalar y' = y - y^3 with multiplicative noise eta kappa_t y o dW",
        dim=1,
        box=Box.symmetric(2.0, 1),
        nonlinearity=cubic_map,
    ),
    "gradient2d": Scenario(
        name="gradient2d",
        section="gradient structure example",
        description="double well gradient field in the plane with multiplicative noise",
        dim=2,
        box=Box.symmetric(2.0, 2),
        nonlinearity=double_well_map,
    ),
    "saddle2d": Scenario(
        name="saddle2d",
        section="unstable set continuity",
        description="x' = x - x^3, y' = -y + x^2 with multiplicative noise, "
        "curved unstable manifold",
        dim=2,
        box=Box((-2.0, -2.0), (2.0, 3.0)),
        nonlinearity=quadratic_saddle_map,
    ),
    "wave": Scenario(
        name="wave",
        section="damped wave application",
        description="Galerkin damped wave equation on (0, pi) with randomly "
        "perturbed damping",
        dim=0,
    ),
}


def get_scenario(name):
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(
            f"Unknown scenario {name!r}; available: {', '.join(SCENARIOS)}"
        ) from None


def describe_scenarios():
    """One line per scenario: name, the topic it illustrates and its description."""
    return "\n".join(
        f"{s.name} ({s.section}): {s.description}" for s in SCENARIOS.values()
    )
