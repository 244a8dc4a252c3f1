"""Grid Bayes filter on the sphere and a bootstrap particle filter oracle.

Prediction integrates the Fokker-Planck equation between measurement
times; an update multiplies by the measurement likelihood and renormalizes
with the grid quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateUpdate, WeightCollapse
from .fpe import DensityGrid, SolverConfig, evolve
from .generator import SdeSpec
from .geometry.charts import SPHERE, Sphere
from .geometry.grid import Grid
from .sde import (RESAMPLE_STREAM, NoiseStream, cell_indices, density_from_ensemble,
                  initial_state, propagate, PathEnsemble)

MIN_NORMALIZER = 1e-300
MIN_ESS = 10.0


def unit_vector(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    n = np.linalg.norm(z)
    if not np.isfinite(n) or n == 0:
        raise ValueError("direction must be a non-zero finite 3-vector")
    return z / n


@dataclass(frozen=True)
class LikelihoodSpec:
    """Measurement likelihood ``p(z | x)`` as a function of the state.

    ``kind="vmf"`` is ``exp(kappa (x . z - 1))``, proportional to a
    von Mises-Fisher density in ``x`` centred on the measured direction
    ``z``.  ``kind="grid"`` holds explicit cell values; particles read the
    value of the cell they fall in.
    """

    kind: str = "vmf"
    kappa: float = 0.0
    z: tuple[float, float, float] = (0.0, 0.0, 1.0)
    values: np.ndarray | None = None

    @classmethod
    def vmf(cls, kappa: float, z) -> "LikelihoodSpec":
        return cls("vmf", float(kappa), tuple(unit_vector(z)))

    @classmethod
    def flat(cls) -> "LikelihoodSpec":
        return cls("vmf", 0.0)

    @classmethod
    def from_grid(cls, values) -> "LikelihoodSpec":
        return cls("grid", values=np.asarray(values, dtype=float))

    def __call__(self, theta, phi, grid: Grid | None = None) -> np.ndarray:
        if self.kind == "vmf":
            x = SPHERE.embed(theta, phi)
            return np.exp(self.kappa * (x @ np.asarray(self.z) - 1.0))
        if self.kind == "grid":
            if grid is None or self.values.shape != grid.shape:
                raise ValueError("grid likelihood needs the matching grid")
            j, k = cell_indices(grid, theta, phi)
            return self.values[j, k]
        raise ValueError(f"unknown likelihood kind {self.kind!r}")

    def on_grid(self, grid: Grid) -> np.ndarray:
        if self.kind == "grid":
            return self.values
        t, p = grid.mesh()
        return self(t, p)


@dataclass
class FilterState:
    density: DensityGrid
    t: float = 0.0
    history: list = field(default_factory=list)
    # mass found after each prediction, before renormalizing
    mass_factors: list = field(default_factory=list)

    @property
    def mass(self) -> float:
        return self.density.mass


def predict(state: FilterState, spec: SdeSpec, dt_total: float,
            config: SolverConfig | None = None) -> FilterState:
    """Propagate the density over ``dt_total`` and renormalize."""
    if dt_total < 0:
        raise ValueError("dt_total must be non-negative")
    if dt_total == 0:
        return FilterState(state.density.copy(), state.t, list(state.history),
                           list(state.mass_factors))
    cfg = config or SolverConfig()
    cfg = SolverConfig(**{**cfg.__dict__, "t_final": float(dt_total)})
    res = evolve(state.density, spec, cfg)
    m = res.final.mass
    dens = DensityGrid(res.final.grid, res.final.values / m)
    return FilterState(dens, state.t + dt_total, list(state.history), state.mass_factors + [m])


def update(state: FilterState, lik: LikelihoodSpec) -> FilterState:
    """Bayes rule on the grid: ``prior * lik / <prior * lik, 1>``."""
    prior = state.density
    post = prior.values * lik.on_grid(prior.grid)
    z = float(np.sum(post * prior.grid.weights))
    if not np.isfinite(z) or z <= MIN_NORMALIZER:
        raise DegenerateUpdate(f"normalizing constant {z:g}")
    return FilterState(DensityGrid(prior.grid, post / z), state.t, list(state.history),
                       list(state.mass_factors))


def _check_schedule(schedule):
    times = [float(t) for t, _ in schedule]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("measurement times must be strictly increasing")
    if times and times[0] < 0:
        raise ValueError("measurement times must be non-negative")
    return times


def run_filter(p0: DensityGrid, spec: SdeSpec, schedule: Sequence[tuple[float, LikelihoodSpec]],
               config: SolverConfig | None = None, horizon: float | None = None
               ) -> list[FilterState]:
    """Alternate prediction and update; one posterior snapshot per measurement.

    With an empty schedule the result is a single prediction over
    ``horizon`` (default ``config.t_final``).
    """
    cfg = config or SolverConfig()
    times = _check_schedule(schedule)
    state = FilterState(p0.normalized(), 0.0)
    out = []
    if not schedule:
        h = cfg.t_final if horizon is None else horizon
        return [predict(state, spec, h, cfg)]
    for t, (_, lik) in zip(times, schedule):
        state = update(predict(state, spec, t - state.t, cfg), lik)
        out.append(state)
    if horizon is not None and horizon > state.t:
        out.append(predict(state, spec, horizon - state.t, cfg))
    return out


# -- directional summaries -------------------------------------------------------

def resultant(p: DensityGrid) -> np.ndarray:
    """``int x p dmu`` for the embedded position ``x``."""
    t, ph = p.grid.mesh()
    x = SPHERE.embed(t, ph)
    return np.einsum("jkc,jk->c", x, p.values * p.grid.weights)


def mean_direction(p: DensityGrid) -> np.ndarray:
    r = resultant(p)
    return r / np.linalg.norm(r)


def resultant_length(p: DensityGrid) -> float:
    return float(np.linalg.norm(resultant(p)) / p.mass)


def entropy(p: DensityGrid) -> float:
    v = p.values
    w = p.grid.weights
    pos = v > 0
    return float(-np.sum(v[pos] * np.log(v[pos]) * w[pos]))


def angle_between(a, b) -> float:
    """Angle in degrees between two directions."""
    a, b = unit_vector(a), unit_vector(b)
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b)))


# -- von Mises-Fisher --------------------------------------------------------------

def vmf_density(theta, phi, kappa: float, mu) -> np.ndarray:
    """Normalized von Mises-Fisher density on the unit sphere."""
    mu = unit_vector(mu)
    x = SPHERE.embed(theta, phi)
    if kappa == 0:
        return np.full(np.shape(x)[:-1], 1 / (4 * np.pi))
    # kappa / (4 pi sinh kappa) written to avoid overflow
    c = kappa / (2 * np.pi * (1 - np.exp(-2 * kappa)))
    return c * np.exp(kappa * (x @ mu - 1))


def sample_vmf(rng: np.random.Generator, n: int, kappa: float, mu) -> tuple[np.ndarray, np.ndarray]:
    """Exact von Mises-Fisher samples on the sphere, returned as chart coordinates.

    Uses the closed-form inverse CDF of ``w = x . mu``, which exists in three
    dimensions.
    """
    mu = unit_vector(mu)
    u = rng.uniform(size=n)
    if kappa == 0:
        w = 2 * u - 1
    else:
        w = 1 + np.log(u + (1 - u) * np.exp(-2 * kappa)) / kappa
    ang = rng.uniform(0, 2 * np.pi, n)
    r = np.sqrt(np.clip(1 - w * w, 0, None))
    local = np.stack([r * np.cos(ang), r * np.sin(ang), w], axis=-1)
    # rotation taking the north pole to mu (Householder reflection, then fix handedness)
    e3 = np.array([0.0, 0.0, 1.0])
    v = e3 - mu
    if np.linalg.norm(v) < 1e-12:
        x = local
    else:
        v /= np.linalg.norm(v)
        x = local - 2 * np.outer(local @ v, v)
    return Sphere.coordinates(x)


def vmf_sampler(kappa: float, mu):
    return lambda rng, n: sample_vmf(rng, n, kappa, mu)


# -- particle filter ----------------------------------------------------------------

@dataclass
class ParticleSnapshot:
    t: float
    density: DensityGrid
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    ess: float

    @property
    def mean_direction(self) -> np.ndarray:
        x = SPHERE.embed(self.theta, self.phi)
        return unit_vector(self.weights @ x)


def systematic_resample(rng: np.random.Generator, weights: np.ndarray) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset)."""
    n = weights.shape[0]
    c = np.cumsum(weights / weights.sum())
    c[-1] = 1.0
    pos = (rng.uniform() + np.arange(n)) / n
    return np.searchsorted(c, pos, side="right")


def particle_filter_oracle(n_particles: int, spec: SdeSpec,
                           schedule: Sequence[tuple[float, LikelihoodSpec]], seed: int,
                           grid: Grid, init, dt: float = 1e-2) -> list[ParticleSnapshot]:
    """Bootstrap particle filter on the shared grid.

    Particles start from ``init`` (anything accepted by
    :func:`manifold_fp.sde.simulate_ensemble`), are propagated with the SDE
    stepper between measurements, weighted by the likelihood and
    systematically resampled.  Each snapshot carries the weighted histogram
    taken before resampling.
    """
    times = _check_schedule(schedule)
    noise = NoiseStream(seed, spec.num_channels)
    theta, phi = initial_state(init, n_particles, noise)
    theta, phi = spec.chart.wrap(theta, phi)
    t, step0 = 0.0, 0
    out = []
    for k, (tm, (_, lik)) in enumerate(zip(times, schedule)):
        span = tm - t
        if span > 0:
            n_steps = int(np.ceil(span / dt - 1e-9))
            ens = propagate(theta, phi, spec, dt, span, noise, start_step=step0)
            theta, phi = ens.theta, ens.phi
            step0 += n_steps
        w = lik(theta, phi, grid)
        total = w.sum()
        if not np.isfinite(total) or total <= 0:
            raise WeightCollapse("all particle weights vanished")
        w = w / total
        ess = 1.0 / float(np.sum(w * w))
        if ess < MIN_ESS:
            raise WeightCollapse(f"effective sample size {ess:.3g} below {MIN_ESS:g}")
        ens = PathEnsemble(theta, phi, tm, np.zeros(theta.shape[0], np.int64), noise.seed)
        out.append(ParticleSnapshot(tm, density_from_ensemble(ens, grid, w), theta.copy(),
                                    phi.copy(), w, ess))
        idx = systematic_resample(noise.rng(RESAMPLE_STREAM + k), w)
        theta, phi = theta[idx], phi[idx]
        t = tm
    return out
