"""Coordinate charts: the unit two-sphere and the flat two-torus.

Both charts use coordinates named ``(theta, phi)``.  On the sphere these are
co-latitude and longitude; on the torus they are two periodic angles with
the flat metric.

Array conventions (leading axes broadcast over evaluation points):

* ``metric``       ``[..., i, j]``      g_ij
* ``christoffel``  ``[..., k, i, j]``   Gamma^k_ij
* ``frame``        ``[..., a, i]``      coordinate components of E_a
* ``coframe``      ``[..., a, i]``      coordinate components of E^a
* ``frame_grad``   ``[..., i, a, k]``   d_i (E_a)^k
* ``connection``   ``[..., a, b, c]``   E^c(nabla_{E_a} E_b)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import PoleProximity

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ChartPoint:
    theta: float
    phi: float

    def as_tuple(self) -> tuple[float, float]:
        return self.theta, self.phi


@dataclass(frozen=True)
class MetricData:
    g: np.ndarray
    christoffel: np.ndarray
    frame: np.ndarray
    coframe: np.ndarray


def _shape(theta, phi):
    return np.broadcast(np.asarray(theta), np.asarray(phi)).shape


class Chart:
    """Base class; subclasses provide metric, Christoffels and frame."""

    name = "chart"
    dim = 2
    theta_periodic = True
    theta_range = (0.0, TWO_PI)
    phi_range = (0.0, TWO_PI)

    def wrap(self, theta, phi):
        raise NotImplementedError

    def check_interior(self, theta) -> None:
        pass

    def metric(self, theta, phi) -> np.ndarray:
        raise NotImplementedError

    def christoffel(self, theta, phi) -> np.ndarray:
        raise NotImplementedError

    def frame(self, theta, phi) -> np.ndarray:
        raise NotImplementedError

    def frame_grad(self, theta, phi) -> np.ndarray:
        raise NotImplementedError

    def volume_density(self, theta, phi) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.metric(theta, phi)))

    def coframe(self, theta, phi) -> np.ndarray:
        return np.swapaxes(np.linalg.inv(self.frame(theta, phi)), -1, -2)

    def connection(self, theta, phi) -> np.ndarray:
        """Frame connection coefficients ``w[a, b, c] = E^c(nabla_{E_a} E_b)``.

        Computed from the Christoffel symbols and the frame coefficients:
        ``nabla_{E_a} E_b = e_a^i (d_i e_b^k + e_b^j Gamma^k_ij) d_k``.
        """
        e = self.frame(theta, phi)
        de = self.frame_grad(theta, phi)
        gam = self.christoffel(theta, phi)
        co = self.coframe(theta, phi)
        inner = de + np.einsum("...bj,...kij->...ibk", e, gam)
        coord = np.einsum("...ai,...ibk->...abk", e, inner)
        return np.einsum("...abk,...ck->...abc", coord, co)

    def connection_grad(self, theta, phi) -> np.ndarray:
        """Coordinate partials of the connection, ``[..., i, a, b, c]``."""
        h = 1e-5
        dt = (self.connection(theta + h, phi) - self.connection(theta - h, phi)) / (2 * h)
        dp = (self.connection(theta, phi + h) - self.connection(theta, phi - h)) / (2 * h)
        return np.stack([dt, dp], axis=-4)

    def metric_data(self, point: ChartPoint) -> MetricData:
        t, p = point.theta, point.phi
        self.check_interior(t)
        return MetricData(self.metric(t, p), self.christoffel(t, p),
                          self.frame(t, p), self.coframe(t, p))

    def __repr__(self):
        return f"{type(self).__name__}()"


class Sphere(Chart):
    """Unit sphere in co-latitude/longitude coordinates.

    ``eps_pole`` is the half-width of the exclusion band around the poles:
    pointwise operators refuse points with ``theta < eps_pole`` or
    ``theta > pi - eps_pole``, and :meth:`wrap` clamps into the band.
    """

    name = "sphere"
    theta_periodic = False
    theta_range = (0.0, np.pi)

    def __init__(self, eps_pole: float = 1e-8):
        self.eps_pole = float(eps_pole)

    def __eq__(self, other):
        return isinstance(other, Sphere) and other.eps_pole == self.eps_pole

    def __hash__(self):
        return hash(("sphere", self.eps_pole))

    def wrap(self, theta, phi):
        """Map arbitrary chart values onto ``theta in [eps, pi-eps]``, ``phi in [0, 2pi)``.

        Passing through a pole is the antipodal reflection
        ``(theta, phi) -> (-theta, phi + pi)``.
        """
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        phi = np.asarray(phi, dtype=float)
        over = theta > np.pi
        theta = np.where(over, TWO_PI - theta, theta)
        phi = np.where(over, phi + np.pi, phi)
        theta = np.clip(theta, self.eps_pole, np.pi - self.eps_pole)
        phi = np.mod(phi, TWO_PI)
        # mod can return exactly 2pi for tiny negative inputs
        phi = np.where(phi >= TWO_PI, 0.0, phi)
        return theta, phi

    def check_interior(self, theta) -> None:
        t = np.asarray(theta)
        if np.any(t < self.eps_pole) or np.any(t > np.pi - self.eps_pole):
            raise PoleProximity(
                f"theta within {self.eps_pole:g} of a pole (min {t.min():.3g}, max {t.max():.3g})")

    def metric(self, theta, phi):
        s = np.sin(theta) * np.ones(_shape(theta, phi))
        g = np.zeros(s.shape + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = s * s
        return g

    def christoffel(self, theta, phi):
        t = theta * np.ones(_shape(theta, phi))
        s, c = np.sin(t), np.cos(t)
        gam = np.zeros(t.shape + (2, 2, 2))
        gam[..., 0, 1, 1] = -s * c
        gam[..., 1, 0, 1] = c / s
        gam[..., 1, 1, 0] = c / s
        return gam

    def frame(self, theta, phi):
        t = theta * np.ones(_shape(theta, phi))
        e = np.zeros(t.shape + (2, 2))
        e[..., 0, 0] = 1.0
        e[..., 1, 1] = 1.0 / np.sin(t)
        return e

    def coframe(self, theta, phi):
        t = theta * np.ones(_shape(theta, phi))
        co = np.zeros(t.shape + (2, 2))
        co[..., 0, 0] = 1.0
        co[..., 1, 1] = np.sin(t)
        return co

    def frame_grad(self, theta, phi):
        t = theta * np.ones(_shape(theta, phi))
        s = np.sin(t)
        de = np.zeros(t.shape + (2, 2, 2))
        de[..., 0, 1, 1] = -np.cos(t) / (s * s)
        return de

    def volume_density(self, theta, phi):
        return np.sin(theta) * np.ones(_shape(theta, phi))

    def connection(self, theta, phi):
        t = theta * np.ones(_shape(theta, phi))
        cot = np.cos(t) / np.sin(t)
        w = np.zeros(t.shape + (2, 2, 2))
        w[..., 1, 0, 1] = cot
        w[..., 1, 1, 0] = -cot
        return w

    def connection_grad(self, theta, phi):
        t = theta * np.ones(_shape(theta, phi))
        inv_s2 = 1.0 / np.sin(t) ** 2
        dw = np.zeros(t.shape + (2, 2, 2, 2))
        # w[phi, theta, phi] = cot, w[phi, phi, theta] = -cot
        dw[..., 0, 1, 0, 1] = -inv_s2
        dw[..., 0, 1, 1, 0] = inv_s2
        return dw

    def embed(self, theta, phi) -> np.ndarray:
        """Unit vectors in R^3, trailing axis of length 3."""
        st = np.sin(theta)
        return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi),
                                            np.cos(theta) + 0 * phi), axis=-1)

    @staticmethod
    def coordinates(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inverse of :meth:`embed` for (not necessarily unit) vectors."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        theta = np.arccos(np.clip(x[..., 2] / r, -1.0, 1.0))
        phi = np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)
        return theta, phi

    def __repr__(self):
        return f"Sphere(eps_pole={self.eps_pole:g})"


class FlatTorus(Chart):
    """Flat torus ``[0, 2pi)^2`` with the Euclidean metric."""

    name = "torus"
    theta_periodic = True

    def __eq__(self, other):
        return isinstance(other, FlatTorus)

    def __hash__(self):
        return hash("torus")

    def wrap(self, theta, phi):
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        phi = np.mod(np.asarray(phi, dtype=float), TWO_PI)
        return np.where(theta >= TWO_PI, 0.0, theta), np.where(phi >= TWO_PI, 0.0, phi)

    def metric(self, theta, phi):
        return np.broadcast_to(np.eye(2), _shape(theta, phi) + (2, 2)).copy()

    def christoffel(self, theta, phi):
        return np.zeros(_shape(theta, phi) + (2, 2, 2))

    def frame(self, theta, phi):
        return self.metric(theta, phi)

    def coframe(self, theta, phi):
        return self.metric(theta, phi)

    def frame_grad(self, theta, phi):
        return np.zeros(_shape(theta, phi) + (2, 2, 2))

    def volume_density(self, theta, phi):
        return np.ones(_shape(theta, phi))

    def connection(self, theta, phi):
        return np.zeros(_shape(theta, phi) + (2, 2, 2))

    def connection_grad(self, theta, phi):
        return np.zeros(_shape(theta, phi) + (2, 2, 2, 2))


SPHERE = Sphere()
TORUS = FlatTorus()


def metric_data(chart: Chart, point: ChartPoint) -> MetricData:
    """Metric, Christoffel symbols, frame and coframe at a chart point."""
    return chart.metric_data(point)
