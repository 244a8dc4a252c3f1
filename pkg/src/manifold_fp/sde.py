"""Path simulation of chart SDEs and histogram density estimates.

Steps are taken in coordinates.  Frame components of the drift and noise
fields are mapped through the frame coefficients; for an Ito spec the
coordinate drift also carries the term ``-(1/2) sum_i Gamma^k_ij g_i^i g_i^j``
so that the simulated generator is ``X~[f] + (1/2) D : Hess_f``.  On the
sphere that term is ``(1/2) (sigma^phi)^2 cot(theta)`` in theta.

A step is computed in the extended chart and then wrapped; crossing a pole
is the antipodal map ``(theta, phi) -> (-theta, phi + pi)``.  Steps whose
theta increment exceeds ``pi/4``, that produce non-finite values, or whose
theta drift or noise scale exceeds :data:`POLE_FRACTION` of the distance to
the nearest pole are halved along a Brownian bridge, up to
:data:`MAX_SUBDIVISIONS` levels.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .errors import ConventionMismatch, NonFiniteState
from .fpe import DensityGrid, atomic_write_text
from .generator import Convention, SdeSpec
from .geometry.charts import ChartPoint
from .geometry.grid import Grid

MAX_SUBDIVISIONS = 8
MAX_DTHETA = np.pi / 4
# a step is also halved when its drift or noise scale in theta exceeds this
# fraction of the distance to the nearest pole
POLE_FRACTION = 0.5
_U64 = (1 << 64) - 1


class NoiseStream:
    """Counter-addressed standard normals.

    The increment for ``(seed, stream, step, particle, channel)`` does not
    depend on how many particles are drawn or in which order: particles are
    grouped in fixed blocks, each block reads its own Philox counter, and
    draws within a block are prefix-stable.
    """

    def __init__(self, seed: int, m: int, block: int = 4096):
        self.seed = int(seed) & _U64
        self.m = int(m)
        self.block = int(block)

    def _gen(self, stream: int, step: int, block: int) -> np.random.Generator:
        bg = np.random.Philox(key=[self.seed, stream & _U64], counter=[0, 0, step & _U64, block])
        return np.random.Generator(bg)

    def normals(self, step: int, n: int, stream: int = 0) -> np.ndarray:
        """``(n, m)`` standard normals for particles ``0..n-1``."""
        out = np.empty((n, self.m))
        if self.m == 0:
            return out
        for b, start in enumerate(range(0, n, self.block)):
            stop = min(start + self.block, n)
            out[start:stop] = self._gen(stream, step, b).standard_normal((stop - start) * self.m) \
                .reshape(stop - start, self.m)
        return out

    def increments(self, step: int, n: int, dt: float, stream: int = 0) -> np.ndarray:
        return np.sqrt(dt) * self.normals(step, n, stream)

    def rng(self, stream: int) -> np.random.Generator:
        """Independent generator for auxiliary sampling (initial states, resampling)."""
        return self._gen(stream, 0, 0)


# stream ids; subdivision streams are 1 + (level << 24) + substep
INIT_STREAM = 1 << 60
RESAMPLE_STREAM = 1 << 61


class _Coefficients:
    """Coordinate drift ``b^k`` and noise ``g_i^k`` of a spec at particle positions.

    Returns ``(b_theta, b_phi, g_theta, g_phi)`` with ``g_*`` of shape
    ``(n, m)`` (or ``(m,)`` when constant).  Ito specs include the
    Christoffel correction of the coordinate drift.
    """

    def __init__(self, spec: SdeSpec):
        self.spec = spec
        self.sphere = spec.chart.name == "sphere"
        self.m = spec.num_channels
        self.const = all(sg.is_constant for sg in spec.sigmas)
        if self.const and self.m:
            c = np.array([[sg.theta.constant_value, sg.phi.constant_value] for sg in spec.sigmas])
            self.ct, self.cp = c[:, 0], c[:, 1]
            self.sum_pp = float(np.sum(self.cp**2))
            self.sum_tp = float(np.sum(self.ct * self.cp))

    def _sigma(self, theta, phi):
        if self.const:
            return self.ct, self.cp
        s = [sg(theta, phi) for sg in self.spec.sigmas]
        return np.stack([v[..., 0] for v in s], -1), np.stack([v[..., 1] for v in s], -1)

    def __call__(self, theta, phi):
        spec = self.spec
        xt, xp = spec.drift.theta(theta, phi), spec.drift.phi(theta, phi)
        if not self.sphere:
            return self._generic(theta, phi, xt, xp)
        inv_s = 1.0 / np.sin(theta)
        bt, bp = xt, xp * inv_s
        if not self.m:
            z = np.zeros((theta.shape[0], 0))
            return bt, bp, z, z
        st, sp = self._sigma(theta, phi)
        gt = st
        gp = sp * inv_s[:, None]
        if spec.is_ito:
            cot = np.cos(theta) * inv_s
            if self.const:
                spp, stp = self.sum_pp, self.sum_tp
            else:
                spp, stp = np.sum(sp * sp, axis=1), np.sum(st * sp, axis=1)
            bt = bt + 0.5 * cot * spp
            if np.any(stp):
                bp = bp - cot * inv_s * stp
        return bt, bp, gt, gp

    def _generic(self, theta, phi, xt, xp):
        chart = self.spec.chart
        e = chart.frame(theta, phi)
        b = np.einsum("nak,na->nk", e, np.stack([xt, xp], -1))
        if not self.m:
            z = np.zeros((theta.shape[0], 0))
            return b[:, 0], b[:, 1], z, z
        s = np.stack([sg(theta, phi) for sg in self.spec.sigmas], axis=1)
        g = np.einsum("nak,nia->nik", e, s)
        if self.spec.is_ito:
            gam = chart.christoffel(theta, phi)
            b = b - 0.5 * np.einsum("nkij,nci,ncj->nk", gam, g, g)
        return b[:, 0], b[:, 1], g[..., 0], g[..., 1]


def _coefficients(spec: SdeSpec, theta, phi):
    """Coordinate drift ``(n, 2)`` and noise ``(n, m, 2)``; Ito correction included."""
    bt, bp, gt, gp = _Coefficients(spec)(theta, phi)
    n = theta.shape[0]
    g = np.stack(np.broadcast_arrays(gt, gp), -1)
    return np.stack([bt, bp], -1), np.broadcast_to(g, (n,) + g.shape[-2:])


def _pole_distance(spec: SdeSpec, theta):
    if spec.chart.name != "sphere":
        return None
    return np.minimum(np.abs(theta), np.abs(np.pi - theta))


def _noise_term(g, dw):
    return dw @ g if g.ndim == 1 else np.einsum("ni,ni->n", g, dw)


def _raw_step(spec: SdeSpec, theta, phi, dt, dw, coef: _Coefficients | None = None):
    """Coordinate increments and a flag for steps too coarse near a pole."""
    coef = coef or _Coefficients(spec)
    bt, bp, gt, gp = coef(theta, phi)
    it = bt * dt + _noise_term(gt, dw)
    ip = bp * dt + _noise_term(gp, dw)
    coarse = np.zeros(theta.shape, dtype=bool)
    d = _pole_distance(spec, theta)
    if d is not None and coef.m:
        var = np.sum(gt * gt) if gt.ndim == 1 else np.einsum("ni,ni->n", gt, gt)
        coarse = np.maximum(np.abs(bt) * dt, np.sqrt(dt * var)) > POLE_FRACTION * d
    elif d is not None:
        coarse = np.abs(bt) * dt > POLE_FRACTION * d
    if spec.convention is Convention.STRATONOVICH:
        bt2, bp2, gt2, gp2 = coef(theta + it, phi + ip)
        it = 0.5 * (bt + bt2) * dt + 0.5 * (_noise_term(gt, dw) + _noise_term(gt2, dw))
        ip = 0.5 * (bp + bp2) * dt + 0.5 * (_noise_term(gp, dw) + _noise_term(gp2, dw))
    return np.stack([it, ip], -1), coarse


def _wrap(spec: SdeSpec, theta, phi):
    lo, hi = spec.chart.theta_range
    crossed = (theta < lo) | (theta > hi)
    t, p = spec.chart.wrap(theta, phi)
    return t, p, crossed


def _step_block(spec, noise, step, theta, phi, dt, dw, idx, level, sub, stats, coef=None):
    """Advance particles ``idx``; coarse steps are halved along a Brownian bridge.

    Bridge midpoints come from their own stream keyed by ``(level, sub)``
    and are drawn for the flagged particles in index order, so the result is
    a deterministic function of the ensemble state.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        incr, coarse = _raw_step(spec, theta, phi, dt, dw, coef)
    bad = ~np.all(np.isfinite(incr), axis=1) | coarse
    if not spec.chart.theta_periodic:
        bad |= np.abs(np.nan_to_num(incr[:, 0], nan=np.inf)) > MAX_DTHETA
    nt, npf = theta + incr[:, 0], phi + incr[:, 1]
    if np.any(bad) and level < MAX_SUBDIVISIONS:
        k = np.flatnonzero(bad)
        stats["subdivided"] += k.size
        stream = 1 + ((level + 1) << 24) + sub
        z = noise._gen(stream, step, 0).standard_normal((k.size, noise.m))
        half = 0.5 * dw[k] + np.sqrt(dt / 4) * z
        t1, p1 = _step_block(spec, noise, step, theta[k], phi[k], dt / 2, half, idx[k],
                             level + 1, 2 * sub, stats, coef)
        t2, p2 = _step_block(spec, noise, step, t1, p1, dt / 2, dw[k] - half, idx[k],
                             level + 1, 2 * sub + 1, stats, coef)
        keep = ~bad
        t, p, crossed = _wrap(spec, nt[keep], npf[keep])
        stats["reflections"][idx[keep][crossed]] += 1
        out_t, out_p = np.empty_like(theta), np.empty_like(phi)
        out_t[keep], out_p[keep] = t, p
        out_t[k], out_p[k] = t2, p2
        return out_t, out_p
    if not np.all(np.isfinite(incr)):
        raise NonFiniteState(f"non-finite state at step {step} after subdivision")
    t, p, crossed = _wrap(spec, nt, npf)
    stats["reflections"][idx[crossed]] += 1
    return t, p


def _advance(spec: SdeSpec, theta, phi, dt, dw, noise=None, step=0, stats=None):
    n = theta.shape[0]
    if stats is None:
        stats = {"n": n, "reflections": np.zeros(n, dtype=np.int64), "subdivided": 0}
    if noise is None:
        noise = NoiseStream(0, spec.num_channels)
    return _step_block(spec, noise, step, theta, phi, dt, dw, np.arange(n), 0, 0, stats)


def _check_state(state: ChartPoint | tuple) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(state, ChartPoint):
        return np.array([state.theta], float), np.array([state.phi], float)
    t, p = state
    return np.atleast_1d(np.asarray(t, float)), np.atleast_1d(np.asarray(p, float))


def _single(spec, state, dt, increments, guard):
    if dt <= 0:
        raise ValueError("dt must be positive")
    t, p = _check_state(state)
    dw = np.atleast_2d(np.asarray(increments, float)).reshape(t.shape[0], spec.num_channels)
    if guard:
        t2, p2 = _advance(spec, t, p, dt, dw)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            incr, _ = _raw_step(spec, t, p, dt, dw)
        t2, p2 = spec.chart.wrap(t + incr[:, 0], p + incr[:, 1])
    if not (np.all(np.isfinite(t2)) and np.all(np.isfinite(p2))):
        raise NonFiniteState("non-finite state")
    if isinstance(state, ChartPoint):
        return ChartPoint(float(t2[0]), float(p2[0]))
    return t2, p2


def step_ito_em(state, spec: SdeSpec, dt: float, increments, guard: bool = True):
    """One Euler-Maruyama step of an Ito spec; ``increments`` are the ``dW_i``.

    ``state`` is a :class:`ChartPoint` (returned as one) or a pair of arrays.
    ``guard=False`` skips the near-pole subdivision and takes the raw step.
    """
    if spec.convention is not Convention.ITO:
        raise ConventionMismatch("step_ito_em needs an ito spec")
    return _single(spec, state, dt, increments, guard)


def step_strat_heun(state, spec: SdeSpec, dt: float, increments, guard: bool = True):
    """One stochastic Heun step of a Stratonovich spec."""
    if spec.convention is not Convention.STRATONOVICH:
        raise ConventionMismatch("step_strat_heun needs a stratonovich spec")
    return _single(spec, state, dt, increments, guard)


@dataclass
class PathEnsemble:
    theta: np.ndarray
    phi: np.ndarray
    t: float
    reflections: np.ndarray
    seed: int
    subdivided: int = 0

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def points(self) -> list[ChartPoint]:
        return [ChartPoint(float(a), float(b)) for a, b in zip(self.theta, self.phi)]


Sampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


def initial_state(init, n: int, noise: NoiseStream):
    if callable(init):
        t, p = init(noise.rng(INIT_STREAM), n)
        return np.asarray(t, float).copy(), np.asarray(p, float).copy()
    t, p = _check_state(init)
    return np.broadcast_to(t, (n,)).copy(), np.broadcast_to(p, (n,)).copy()


def simulate_ensemble(n_particles: int, spec: SdeSpec, dt: float, t_final: float, seed: int,
                      init, start_step: int = 0) -> PathEnsemble:
    """Simulate ``n_particles`` independent paths to ``t_final``.

    ``init`` is a :class:`ChartPoint`, a ``(theta, phi)`` pair of arrays or
    a sampler ``(rng, n) -> (theta, phi)``.  The step count is
    ``ceil(t_final / dt)`` with the step shortened to land on ``t_final``.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be at least 1")
    noise = NoiseStream(seed, spec.num_channels)
    theta, phi = initial_state(init, n_particles, noise)
    theta, phi = spec.chart.wrap(theta, phi)
    return propagate(theta, phi, spec, dt, t_final, noise, start_step)


def propagate(theta, phi, spec: SdeSpec, dt: float, t_final: float, noise: NoiseStream,
              start_step: int = 0) -> PathEnsemble:
    """Advance given particle states; ``start_step`` offsets the noise counter."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = theta.shape[0]
    stats = {"n": n, "reflections": np.zeros(n, dtype=np.int64), "subdivided": 0}
    n_steps = int(np.ceil(t_final / dt - 1e-9)) if t_final > 0 else 0
    coef = _Coefficients(spec)
    idx = np.arange(n)
    h = t_final / n_steps if n_steps else 0.0
    for k in range(n_steps):
        step_id = start_step + k
        dw = noise.increments(step_id, n, h)
        theta, phi = _step_block(spec, noise, step_id, theta, phi, h, dw, idx, 0, 0, stats,
                                 coef)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi))):
            raise NonFiniteState(f"non-finite particle state at step {step_id}")
    return PathEnsemble(theta, phi, float(t_final), stats["reflections"], noise.seed,
                        stats["subdivided"])


def cell_indices(grid: Grid, theta, phi) -> tuple[np.ndarray, np.ndarray]:
    """Cell containing each point; phi cells are centred on ``k dphi``."""
    lo, _ = grid.chart.theta_range
    j = np.clip(np.floor((np.asarray(theta) - lo) / grid.dtheta).astype(np.int64), 0,
                grid.n_theta - 1)
    k = np.floor(np.asarray(phi) / grid.dphi + 0.5).astype(np.int64) % grid.n_phi
    return j, k


def histogram(grid: Grid, theta, phi, weights=None) -> np.ndarray:
    """Counts (or summed weights) per cell."""
    j, k = cell_indices(grid, theta, phi)
    flat = np.bincount(j * grid.n_phi + k, weights=weights, minlength=grid.n_theta * grid.n_phi)
    return flat.reshape(grid.shape).astype(float)


def two_sample_chi2(counts_a, counts_b, min_count: float = 10.0) -> tuple[float, int, float]:
    """Chi-square test that two histograms share one distribution.

    Bins whose pooled count is below ``min_count`` are merged into a single
    bin.  Returns ``(statistic, degrees of freedom, p-value)``.
    """
    a = np.asarray(counts_a, float).ravel()
    b = np.asarray(counts_b, float).ravel()
    if a.shape != b.shape:
        raise ValueError("histograms must have the same binning")
    small = (a + b) < min_count
    if small.any():
        a = np.append(a[~small], a[small].sum())
        b = np.append(b[~small], b[small].sum())
    keep = (a + b) > 0
    a, b = a[keep], b[keep]
    na, nb = a.sum(), b.sum()
    stat = float(np.sum((np.sqrt(nb / na) * a - np.sqrt(na / nb) * b) ** 2 / (a + b)))
    dof = int(a.size - 1)
    return stat, dof, float(stats.chi2.sf(stat, dof))


def density_from_ensemble(ens: PathEnsemble, grid: Grid, weights=None) -> DensityGrid:
    """Histogram estimate ``count / (N w_jk)``; with ``weights`` they are normalized first."""
    if weights is None:
        counts = histogram(grid, ens.theta, ens.phi) / ens.n
    else:
        w = np.asarray(weights, float)
        counts = histogram(grid, ens.theta, ens.phi, w / w.sum())
    return DensityGrid(grid, counts / grid.weights)


def uniform_sphere_sampler(rng: np.random.Generator, n: int):
    """Area-uniform points on the sphere."""
    z = rng.uniform(-1.0, 1.0, n)
    return np.arccos(z), rng.uniform(0.0, 2 * np.pi, n)


def ensemble_to_csv(ens: PathEnsemble) -> str:
    buf = io.StringIO()
    buf.write("particle_id,theta,phi\n")
    for i, (a, b) in enumerate(zip(ens.theta, ens.phi)):
        buf.write(f"{i},{a:.17g},{b:.17g}\n")
    return buf.getvalue()


def write_ensemble_csv(path, ens: PathEnsemble) -> None:
    atomic_write_text(path, ensemble_to_csv(ens))
