"""
Uniform lattices over axis-aligned boxes of initial states.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower_i, upper_i] in state space."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("Box bounds must have the same dimension")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("Box lower bounds must lie below the upper bounds")

    @classmethod
    def symmetric(cls, half_width, dim):
        return cls((-half_width,) * dim, (half_width,) * dim)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def centre(self):
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    def scaled(self, factor):
        """Box with the same centre and every side multiplied by factor."""
        centre = self.centre
        half = (np.asarray(self.upper) - np.asarray(self.lower)) / 2.0 * factor
        return Box(tuple(centre - half), tuple(centre + half))

    def contains(self, points, tol=1e-9):
        points = np.asarray(points, dtype=float)
        inside_low = points >= np.asarray(self.lower) - tol
        inside_high = points <= np.asarray(self.upper) + tol
        return np.all(inside_low & inside_high, axis=-1)


def box_lattice(box, n_per_axis):
    """
    Build the lattice of n_per_axis points per axis over a box.

    Args:
        box: Box to cover, bounds included
        n_per_axis: Number of lattice points along every axis (at least 2)

    Returns:
        tuple: (points array of shape (n_per_axis**dim, dim),
                dict mapping each multi-index to its point id)
    """
    if n_per_axis < 2:
        raise ValueError("A lattice needs at least two points per axis")

    axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in zip(box.lower, box.upper)]

    points = []
    idx_to_id = {}

    point_id = 0
    for multi_index in product(range(n_per_axis), repeat=box.dim):
        points.append([axes[axis][i] for axis, i in enumerate(multi_index)])
        idx_to_id[multi_index] = point_id
        point_id += 1

    return np.asarray(points, dtype=float), idx_to_id


def lattice_edges(idx_to_id):
    """
    Pairs of point ids that are neighbours along one lattice axis.

    Args:
        idx_to_id: Mapping from multi-index to point id as built by box_lattice

    Returns:
        list: (id_a, id_b) pairs, each edge listed once
    """
    edges = []
    for multi_index, point_id in idx_to_id.items():
        for axis in range(len(multi_index)):
            neighbour = list(multi_index)
            neighbour[axis] += 1
            neighbour_id = idx_to_id.get(tuple(neighbour))
            if neighbour_id is not None:
                edges.append((point_id, neighbour_id))
    return edges
