"""Uniform spatial grids with quadrature weights for radial and line geometry."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform nodes on [0, L] (radial) or [-L, L] (line, n = 1 only).

    Attributes
    ----------
    nodes : ndarray
        Node coordinates (radius in the radial case).
    n : int
        Space dimension.
    radial : bool
        Whether the nodes represent |x| for radially symmetric fields.
    """

    nodes: np.ndarray
    n: int
    radial: bool

    @classmethod
    def uniform(cls, n: int, radial: bool, L: float, dx: float) -> "Grid":
        if not radial and n != 1:
            raise ValueError("line grids are only supported for n = 1")
        m = int(math.ceil(L / dx - 1e-9))
        if radial:
            nodes = dx * np.arange(m + 1)
        else:
            nodes = dx * np.arange(-m, m + 1)
        return cls(nodes=nodes, n=n, radial=radial)

    @property
    def dx(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def radius(self) -> np.ndarray:
        return np.abs(self.nodes)

    def weights(self) -> np.ndarray:
        """Trapezoidal weights for the integral over R^n of a field on this grid."""
        w = np.full(self.size, self.dx)
        w[0] *= 0.5
        w[-1] *= 0.5
        if self.radial:
            w = w * sphere_area(self.n) * self.nodes ** (self.n - 1)
            if self.n == 2:
                # r f(r) is odd for even f: Euler-Maclaurin end correction at r = 0
                w[0] += sphere_area(2) * self.dx**2 / 12.0
        return w

    def integrate(self, values) -> float:
        return float(np.dot(self.weights(), values))
