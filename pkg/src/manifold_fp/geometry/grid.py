"""Cell-centred tensor-product grids on a chart."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GridTooSmall
from .charts import SPHERE, Chart, Sphere

MIN_CELLS = 8


@dataclass(frozen=True)
class Grid:
    """``n_theta x n_phi`` cells; centres ``theta_j = (j + 1/2) dtheta``, ``phi_k = k dphi``.

    ``weights`` are the midpoint quadrature weights ``sqrt(det g) dtheta dphi``
    (``sin(theta_j) dtheta dphi`` on the sphere).
    """

    n_theta: int
    n_phi: int
    chart: Chart = field(default=SPHERE)

    def __post_init__(self):
        if self.n_theta < MIN_CELLS or self.n_phi < MIN_CELLS:
            raise GridTooSmall(f"grid {self.n_theta}x{self.n_phi} below minimum {MIN_CELLS}x{MIN_CELLS}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_theta, self.n_phi

    @property
    def dtheta(self) -> float:
        lo, hi = self.chart.theta_range
        return (hi - lo) / self.n_theta

    @property
    def dphi(self) -> float:
        return 2 * np.pi / self.n_phi

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.dtheta

    @property
    def phi(self) -> np.ndarray:
        return np.arange(self.n_phi) * self.dphi

    @property
    def theta_faces(self) -> np.ndarray:
        """All ``n_theta + 1`` face positions, ``0`` through ``theta_max``."""
        return np.arange(self.n_theta + 1) * self.dtheta

    @property
    def phi_faces(self) -> np.ndarray:
        """Face ``k`` sits between cells ``k`` and ``k + 1``."""
        return (np.arange(self.n_phi) + 0.5) * self.dphi

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @property
    def weights(self) -> np.ndarray:
        t, p = self.mesh()
        return self.chart.volume_density(t, p) * self.dtheta * self.dphi

    @property
    def total_area(self) -> float:
        return float(self.weights.sum())

    @property
    def is_sphere(self) -> bool:
        return isinstance(self.chart, Sphere)

    def coarsen(self) -> "Grid":
        return Grid(self.n_theta // 2, self.n_phi // 2, self.chart)

    def refine(self) -> "Grid":
        return Grid(self.n_theta * 2, self.n_phi * 2, self.chart)

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Area-weighted average onto :meth:`coarsen`.

        A coarse cell covers fine rows ``2j, 2j+1`` and, because phi centres
        sit on ``k dphi``, fine column ``2k`` plus half of each neighbour.
        """
        if self.n_theta % 2 or self.n_phi % 2:
            raise ValueError("restriction needs even cell counts")
        w = self.weights
        wv = w * values
        num = 0.5 * np.roll(wv, 1, axis=1) + wv + 0.5 * np.roll(wv, -1, axis=1)
        den = 0.5 * np.roll(w, 1, axis=1) + w + 0.5 * np.roll(w, -1, axis=1)
        num = num[:, ::2]
        den = den[:, ::2]
        num = num[0::2] + num[1::2]
        den = den[0::2] + den[1::2]
        return num / den
