"""Conservative finite-volume Fokker-Planck solver on cell-centred grids.

Both forms of the equation are written as a continuity equation
``dp/dt = -div J`` before discretization.  In coordinates,

    J^k = p Y^k - (1/2) K^{kl} d_l p,

with ``K = e D e^T`` the coordinate diffusion matrix and ``Y`` the reduced
drift: ``X - (1/2) sum_i div(sigma_i) sigma_i`` for a Stratonovich spec and
``X~ - (1/2) div D`` for an Ito spec (the two agree after conversion).  The
update on cell ``(j, k)`` is

    -(G[j+1/2] - G[j-1/2]) / (rho_j dtheta) - (F[k+1/2] - F[k-1/2]) / (rho_j dphi)

with ``G = rho J^theta`` on theta faces and ``F = rho J^phi`` on phi faces,
so the weighted sum of the right-hand side telescopes to zero.  On the sphere
the faces at ``theta = 0`` and ``theta = pi`` carry no flux.

Two flux discretizations are offered:

``"analytic"``
    Coefficients (including the ``sin``/``cos`` factors) are evaluated
    exactly at face centres; only ``p`` is averaged or differenced.  Works for
    any chart and any noise fields.  A uniform density is an exact fixed
    point of the Brownian spec, and an Ito spec and its Stratonovich
    counterpart give the same update up to rounding.

``"grid"``
    Sphere with constant diagonal noise only.  Each boxed product such as
    ``sin(theta) p X^theta`` or ``p sin(theta)`` is formed at cell centres
    and then averaged or differenced as a whole.  The Stratonovich and Ito
    boxes then differ by an ``O(h^2)`` truncation term.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CflViolation, ConventionMismatch, NonFiniteDensity, ShapeMismatch
from .generator import Convention, SdeSpec
from .geometry.charts import SPHERE, Chart
from .geometry.fields import FieldSpec, ScalarField
from .geometry.grid import Grid
from .geometry.operators import divergence_tensor, divergence_vf
from .geometry import sphere as sph

FLUX_MODES = ("analytic", "grid")
# largest stable step of classical RK4 on the negative real axis is ~2.785;
# used as the hard limit behind CflViolation
RK4_REAL_STABILITY = 2.785


@dataclass
class DensityGrid:
    """Density values at the cell centres of ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ShapeMismatch(f"values {self.values.shape} do not match grid {self.grid.shape}")

    @property
    def n_theta(self) -> int:
        return self.grid.n_theta

    @property
    def n_phi(self) -> int:
        return self.grid.n_phi

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @property
    def mass(self) -> float:
        return float(np.sum(self.values * self.grid.weights))

    def copy(self) -> "DensityGrid":
        return DensityGrid(self.grid, self.values.copy())

    def normalized(self) -> "DensityGrid":
        return DensityGrid(self.grid, self.values / self.mass)

    @classmethod
    def from_field(cls, grid: Grid, f, normalize: bool = True) -> "DensityGrid":
        """Sample a callable ``f(theta, phi)`` at cell centres."""
        t, p = grid.mesh()
        d = cls(grid, np.asarray(f(t, p), dtype=float) * np.ones(grid.shape))
        return d.normalized() if normalize else d


def build_grid(n_theta: int, n_phi: int, chart: Chart = SPHERE) -> DensityGrid:
    """Uniform density on a fresh grid: ``1/(4 pi)`` on the sphere."""
    grid = Grid(n_theta, n_phi, chart)
    lo, hi = chart.theta_range
    area = 2 * np.pi * (1 - np.cos(np.pi)) if grid.is_sphere else (hi - lo) * 2 * np.pi
    return DensityGrid(grid, np.full(grid.shape, 1.0 / area))


def inner_product(p: DensityGrid, q: DensityGrid) -> float:
    """Midpoint quadrature of ``int p q dmu``."""
    if p.grid.shape != q.grid.shape:
        raise ShapeMismatch(f"grid shapes differ: {p.grid.shape} vs {q.grid.shape}")
    return float(np.sum(p.values * q.values * p.grid.weights))


def l1_distance(p: DensityGrid, q: DensityGrid) -> float:
    if p.grid.shape != q.grid.shape:
        raise ShapeMismatch(f"grid shapes differ: {p.grid.shape} vs {q.grid.shape}")
    return float(np.sum(np.abs(p.values - q.values) * p.grid.weights))


# -- coefficients --------------------------------------------------------------

def reduced_drift(spec: SdeSpec, theta, phi) -> np.ndarray:
    """Frame components of the drift left after moving diffusion into divergence form."""
    chart = spec.chart
    y = spec.drift(theta, phi)
    if spec.is_ito:
        one = ScalarField.constant(1.0)
        if spec.sigmas:
            y = y - 0.5 * divergence_tensor(chart, one, spec.diffusion, theta, phi)
    else:
        for s in spec.sigmas:
            y = y - 0.5 * divergence_vf(chart, s, theta, phi)[..., None] * s(theta, phi)
    return y


def coordinate_coefficients(spec: SdeSpec, theta, phi):
    """``(rho, Y^k, K^{kl})`` in coordinates at the given points."""
    chart = spec.chart
    e = chart.frame(theta, phi)
    y = np.einsum("...ak,...a->...k", e, reduced_drift(spec, theta, phi))
    d = spec.diffusion(theta, phi)
    k = np.einsum("...ak,...ab,...bl->...kl", e, d, e)
    return chart.volume_density(theta, phi), y, k


@dataclass
class _FaceCoefficients:
    rho_c: np.ndarray           # cell centres, (nt, 1)
    rho_t: np.ndarray           # theta faces
    y_t: np.ndarray
    k_tt: np.ndarray
    k_tp: np.ndarray
    rho_p: np.ndarray           # phi faces
    y_p: np.ndarray
    k_pp: np.ndarray
    k_pt: np.ndarray
    cross: bool


class FluxOperator:
    """Discrete ``p -> dp/dt`` for a fixed grid and spec.

    Coefficients are evaluated once at construction.  With
    ``split_phi_diffusion`` the ``K^{phi phi} d_phi^2`` part is left out of
    :meth:`rhs` and exposed through :meth:`phi_diffusion_rates` so a time
    integrator can treat it exactly.
    """

    def __init__(self, grid: Grid, spec: SdeSpec, flux_mode: str = "analytic",
                 split_phi_diffusion: bool = False):
        if flux_mode not in FLUX_MODES:
            raise ValueError(f"flux_mode must be one of {FLUX_MODES}, got {flux_mode!r}")
        if grid.chart != spec.chart:
            raise ValueError("grid and spec use different charts")
        self.grid, self.spec, self.flux_mode = grid, spec, flux_mode
        self.periodic_theta = grid.chart.theta_periodic
        self._sig = spec.frame_constant_sigmas()
        if flux_mode == "grid" and (not grid.is_sphere or self._sig is None):
            raise ValueError("grid flux mode needs the sphere and constant diagonal noise")
        self.c = self._coefficients()
        row_const = np.allclose(self.c.k_pp, self.c.k_pp[:, :1], rtol=0, atol=1e-14)
        self.split = bool(split_phi_diffusion) and not self.c.cross and row_const
        if flux_mode == "grid":
            self._grid_setup()

    # -- setup ---------------------------------------------------------------
    def _coefficients(self) -> _FaceCoefficients:
        g = self.grid
        tc, pc = g.theta, g.phi
        if self.periodic_theta:
            tf = tc + 0.5 * g.dtheta
        else:
            tf = g.theta_faces[1:-1]
        pf = g.phi_faces
        T, P = np.meshgrid(tf, pc, indexing="ij")
        rho_t, y_t, k_t = coordinate_coefficients(self.spec, T, P)
        T2, P2 = np.meshgrid(tc, pf, indexing="ij")
        rho_p, y_p, k_p = coordinate_coefficients(self.spec, T2, P2)
        cross = bool(np.any(k_t[..., 0, 1] != 0.0) or np.any(k_p[..., 1, 0] != 0.0))
        rho_c = self.grid.chart.volume_density(tc, 0.0 * tc)[:, None]
        return _FaceCoefficients(rho_c, rho_t, y_t[..., 0], k_t[..., 0, 0], k_t[..., 0, 1],
                                 rho_p, y_p[..., 1], k_p[..., 1, 1], k_p[..., 1, 0], cross)

    def _grid_setup(self):
        g = self.grid
        T, P = g.mesh()
        self._s = np.sin(T)
        self._cs = np.cos(T)
        x = self.spec.drift(T, P)
        self._xt, self._xp = x[..., 0], x[..., 1]
        self._sf = np.sin(g.theta_faces[1:-1])[:, None]

    # -- flux assembly -------------------------------------------------------
    def _theta_faces(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values on both sides of every interior theta face."""
        if self.periodic_theta:
            return a, np.roll(a, -1, axis=0)
        return a[:-1], a[1:]

    def _close_theta(self, G: np.ndarray) -> np.ndarray:
        """Per-cell net theta flux difference (upper minus lower face)."""
        if self.periodic_theta:
            return G - np.roll(G, 1, axis=0)
        z = np.zeros((1, G.shape[1]))
        Gf = np.concatenate([z, G, z], axis=0)
        return Gf[1:] - Gf[:-1]

    def _dtheta_centred(self, p: np.ndarray) -> np.ndarray:
        """Centred theta differences; across the pole the ghost is the antipodal cell."""
        h = self.grid.dtheta
        if self.periodic_theta:
            return (np.roll(p, -1, 0) - np.roll(p, 1, 0)) / (2 * h)
        half = p.shape[1] // 2
        up = np.concatenate([p[1:], np.roll(p[-1:], half, 1)], axis=0)
        dn = np.concatenate([np.roll(p[:1], half, 1), p[:-1]], axis=0)
        return (up - dn) / (2 * h)

    def _analytic_fluxes(self, p: np.ndarray, include_phi_diffusion: bool):
        c, g = self.c, self.grid
        lo, hi = self._theta_faces(p)
        p_f = 0.5 * (lo + hi)
        dp = (hi - lo) / g.dtheta
        jt = p_f * c.y_t - 0.5 * c.k_tt * dp
        pr = np.roll(p, -1, axis=1)
        pq = 0.5 * (p + pr)
        dq = (pr - p) / g.dphi
        jp = pq * c.y_p
        if include_phi_diffusion:
            jp = jp - 0.5 * c.k_pp * dq
        if c.cross:
            dphi_c = (np.roll(p, -1, 1) - np.roll(p, 1, 1)) / (2 * g.dphi)
            a, b = self._theta_faces(dphi_c)
            jt = jt - 0.25 * c.k_tp * (a + b)
            dth_c = self._dtheta_centred(p)
            jp = jp - 0.25 * c.k_pt * (dth_c + np.roll(dth_c, -1, axis=1))
        return c.rho_t * jt, c.rho_p * jp

    def _grid_fluxes(self, p: np.ndarray, include_phi_diffusion: bool):
        g = self.grid
        st2, sp2 = self._sig
        s, cs = self._s, self._cs
        h = g.dtheta

        def avg(a):
            return 0.5 * (a[:-1] + a[1:])

        def diff(a):
            return (a[1:] - a[:-1]) / h

        if self.spec.is_ito:
            G = (avg(s * p * self._xt)
                 - 0.5 * (st2 * self._sf * diff(p) + (st2 - sp2) * avg(p * cs)))
        else:
            G = avg(s * p * self._xt) - 0.5 * st2 * diff(p * s)
        pxq = p * self._xp
        F = 0.5 * (pxq + np.roll(pxq, -1, axis=1))
        if include_phi_diffusion:
            F = F - sp2 / (2 * s) * (np.roll(p, -1, axis=1) - p) / g.dphi
        return G, F

    def fluxes(self, p: np.ndarray, include_phi_diffusion: bool = True):
        """``(G, F)``: theta-face fluxes (interior faces only) and phi-face fluxes."""
        if self.flux_mode == "grid":
            return self._grid_fluxes(p, include_phi_diffusion)
        return self._analytic_fluxes(p, include_phi_diffusion)

    def rhs(self, p: np.ndarray) -> np.ndarray:
        G, F = self.fluxes(p, include_phi_diffusion=not self.split)
        g = self.grid
        div = self._close_theta(G) / g.dtheta + (F - np.roll(F, 1, axis=1)) / g.dphi
        return -div / self.c.rho_c

    def full_rhs(self, p: np.ndarray) -> np.ndarray:
        """Right-hand side including any split-off phi diffusion."""
        G, F = self.fluxes(p, include_phi_diffusion=True)
        g = self.grid
        div = self._close_theta(G) / g.dtheta + (F - np.roll(F, 1, axis=1)) / g.dphi
        return -div / self.c.rho_c

    # -- stiffness -----------------------------------------------------------
    def phi_diffusion_rates(self) -> np.ndarray:
        """Decay rate of each rfft mode per row under the split phi diffusion."""
        n = self.grid.n_phi
        m = np.arange(n // 2 + 1)
        sym = 4.0 / self.grid.dphi**2 * np.sin(np.pi * m / n) ** 2
        kpp = self.c.k_pp[:, :1]
        return 0.5 * kpp * sym[None, :]

    def stable_dt(self) -> float:
        """Largest RK4 step allowed by the explicit part of the operator."""
        c, g = self.c, self.grid
        rates = [0.5 * np.max(np.abs(c.k_tt)) * 4 / g.dtheta**2]
        if not self.split:
            rates.append(0.5 * np.max(np.abs(c.k_pp)) * 4 / g.dphi**2)
        if c.cross:
            rates.append(np.max(np.abs(c.k_tp)) * 2 / (g.dtheta * g.dphi))
        adv = np.max(np.abs(c.y_t)) / g.dtheta + np.max(np.abs(c.y_p)) / g.dphi
        lam = max(sum(rates), 1e-12)
        # advection: RK4 imaginary-axis limit is 2.83
        dt = RK4_REAL_STABILITY / lam
        if adv > 0:
            dt = min(dt, 2.8 / adv)
        return float(dt)


def _operator(p: DensityGrid, spec: SdeSpec, flux_mode: str) -> FluxOperator:
    return FluxOperator(p.grid, spec, flux_mode)


def fp_rhs_strat(p: DensityGrid, spec: SdeSpec, flux_mode: str = "analytic") -> np.ndarray:
    """Stratonovich Fokker-Planck right-hand side on the grid."""
    if spec.is_ito:
        raise ConventionMismatch("fp_rhs_strat needs a stratonovich spec")
    return _operator(p, spec, flux_mode).full_rhs(p.values)


def fp_rhs_ito(p: DensityGrid, spec: SdeSpec, flux_mode: str = "analytic") -> np.ndarray:
    """Ito Fokker-Planck right-hand side on the grid."""
    if not spec.is_ito:
        raise ConventionMismatch("fp_rhs_ito needs an ito spec")
    return _operator(p, spec, flux_mode).full_rhs(p.values)


def fp_rhs(p: DensityGrid, spec: SdeSpec, flux_mode: str = "analytic") -> np.ndarray:
    return (fp_rhs_ito if spec.is_ito else fp_rhs_strat)(p, spec, flux_mode)


def fp_rhs_pointwise(spec: SdeSpec, p: ScalarField, theta, phi,
                     method: str = "auto") -> np.ndarray:
    """Continuum right-hand side at points, from analytic partials of ``p``.

    ``method="closed_form"`` evaluates the boxed sphere formulas (constant
    diagonal noise); ``"generic"`` composes the intrinsic divergences;
    ``"auto"`` picks the closed form when it applies.
    """
    chart = spec.chart
    sig = spec.frame_constant_sigmas()
    closed_ok = chart.name == "sphere" and sig is not None
    if method == "closed_form" and not closed_ok:
        raise ValueError("closed form needs the sphere and constant diagonal noise")
    if method != "generic" and closed_ok:
        chart.check_interior(theta)
        pv, (pt, pp), (ptt, _, ppp) = p.jet(theta, phi)
        xt, xp = spec.drift.theta, spec.drift.phi
        args = (pv, pt, pp, ptt, ppp, xt(theta, phi), xt.grad(theta, phi)[0],
                xp(theta, phi), xp.grad(theta, phi)[1], theta, sig[0], sig[1])
        return sph.fp_rhs_ito(*args) if spec.is_ito else sph.fp_rhs_strat(*args)
    from .geometry.operators import tensor_divergence_field

    out = -divergence_vf(chart, spec.drift * p, theta, phi)
    if spec.is_ito:
        if spec.sigmas:
            V = tensor_divergence_field(chart, p, spec.diffusion)
            out = out + 0.5 * divergence_vf(chart, V, theta, phi)
    else:
        for s in spec.sigmas:
            inner = _DivergenceField(chart, s * p)
            out = out + 0.5 * divergence_vf(chart, s * inner, theta, phi)
    return out


class _DivergenceField(ScalarField):
    def __init__(self, chart, X: FieldSpec):
        super().__init__(lambda t, ph: divergence_vf(chart, X, t, ph), label="div")


# -- time stepping -------------------------------------------------------------

@dataclass
class SolverConfig:
    """Time-stepping options.

    ``dt=None`` picks ``cfl_safety`` times the RK4 stability limit of the
    explicit part.  With ``split_phi_diffusion`` the stiff azimuthal
    diffusion near the poles is integrated exactly per row and Strang-split
    around the RK4 step.
    """

    t_final: float = 1.0
    dt: float | None = None
    cfl_safety: float = 0.25
    scheme: str = "rk4"
    flux_mode: str = "analytic"
    split_phi_diffusion: bool = True
    clip_negative: bool = True

    def __post_init__(self):
        if self.scheme != "rk4":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")


@dataclass
class StepStats:
    steps: int = 0
    clip_events: int = 0
    clipped_mass: float = 0.0
    mass_drift: float = 0.0


class Stepper:
    """RK4 integrator bound to one operator."""

    def __init__(self, op: FluxOperator, config: SolverConfig):
        self.op, self.config = op, config
        self.dt_limit = op.stable_dt()
        self.dt_auto = config.cfl_safety * self.dt_limit
        if config.dt is not None and config.dt > self.dt_limit:
            raise CflViolation(f"dt={config.dt:g} exceeds stability limit {self.dt_limit:g}")
        self._rates = op.phi_diffusion_rates() if op.split else None
        self._decay_cache: dict[float, np.ndarray] = {}
        self.stats = StepStats()

    @property
    def dt(self) -> float:
        return self.config.dt if self.config.dt is not None else self.dt_auto

    def _phi_diffuse(self, p: np.ndarray, tau: float) -> np.ndarray:
        decay = self._decay_cache.get(tau)
        if decay is None:
            decay = np.exp(-self._rates * tau)
            self._decay_cache[tau] = decay
        return np.fft.irfft(np.fft.rfft(p, axis=1) * decay, n=p.shape[1], axis=1)

    def _rk4(self, p: np.ndarray, dt: float) -> np.ndarray:
        f = self.op.rhs
        k1 = f(p)
        k2 = f(p + 0.5 * dt * k1)
        k3 = f(p + 0.5 * dt * k2)
        k4 = f(p + dt * k3)
        return p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def advance(self, p: np.ndarray, dt: float) -> np.ndarray:
        if dt > self.dt_limit * (1 + 1e-12):
            raise CflViolation(f"dt={dt:g} exceeds stability limit {self.dt_limit:g}")
        w = self.op.grid.weights
        m0 = float(np.sum(p * w))
        if self._rates is not None:
            q = self._phi_diffuse(p, 0.5 * dt)
            q = self._rk4(q, dt)
            q = self._phi_diffuse(q, 0.5 * dt)
        else:
            q = self._rk4(p, dt)
        if not np.all(np.isfinite(q)):
            raise NonFiniteDensity(f"non-finite density after step {self.stats.steps + 1}")
        m1 = float(np.sum(q * w))
        self.stats.mass_drift = max(self.stats.mass_drift, abs(m1 - m0))
        if self.config.clip_negative and q.min() < 0:
            neg = q < 0
            clipped = float(-np.sum(q[neg] * w[neg]))
            q = np.where(neg, 0.0, q)
            q *= m1 / float(np.sum(q * w))
            self.stats.clip_events += 1
            self.stats.clipped_mass += clipped
        self.stats.steps += 1
        return q


def step(p: DensityGrid, spec: SdeSpec, config: SolverConfig | None = None,
         dt: float | None = None) -> DensityGrid:
    """Advance ``p`` by one step of size ``dt`` (default: the config's step)."""
    config = config or SolverConfig()
    op = FluxOperator(p.grid, spec, config.flux_mode, config.split_phi_diffusion)
    st = Stepper(op, config)
    return DensityGrid(p.grid, st.advance(p.values, st.dt if dt is None else dt))


@dataclass
class EvolveResult:
    final: DensityGrid
    snapshots: dict[float, DensityGrid] = field(default_factory=dict)
    times: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    clipped_mass: list[float] = field(default_factory=list)
    stats: StepStats = field(default_factory=StepStats)
    dt: float = 0.0


def evolve(p0: DensityGrid, spec: SdeSpec, config: SolverConfig,
           snapshot_times: Iterable[float] = (), record_every: int = 0) -> EvolveResult:
    """Integrate to ``config.t_final``, landing exactly on each snapshot time.

    ``record_every > 0`` appends ``(t, mass, clipped mass)`` to the traces
    every that many steps (always at segment ends).
    """
    t_final = float(config.t_final)
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    marks = sorted({float(t) for t in snapshot_times if 0 <= t <= t_final} | {t_final})
    res = EvolveResult(final=p0.copy())
    if 0.0 in marks:
        res.snapshots[0.0] = p0.copy()
    res.times.append(0.0)
    res.mass.append(p0.mass)
    res.clipped_mass.append(0.0)
    if t_final == 0:
        return res
    op = FluxOperator(p0.grid, spec, config.flux_mode, config.split_phi_diffusion)
    st = Stepper(op, config)
    res.dt = st.dt
    p, t = p0.values.copy(), 0.0
    for mark in marks:
        seg = mark - t
        if seg <= 0:
            continue
        n = max(1, math.ceil(seg / st.dt - 1e-9))
        h = seg / n
        for i in range(n):
            p = st.advance(p, h)
            if (record_every and st.stats.steps % record_every == 0) or i == n - 1:
                res.times.append(t + (i + 1) * h)
                res.mass.append(float(np.sum(p * p0.grid.weights)))
                res.clipped_mass.append(st.stats.clipped_mass)
        t = mark
        res.snapshots[mark] = DensityGrid(p0.grid, p.copy())
    res.final = DensityGrid(p0.grid, p)
    res.stats = st.stats
    return res


# -- CSV -----------------------------------------------------------------------

def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def grid_to_csv(p: DensityGrid) -> str:
    t, ph = p.grid.mesh()
    buf = io.StringIO()
    buf.write("theta,phi,p\n")
    for a, b, v in zip(t.ravel(), ph.ravel(), p.values.ravel()):
        buf.write(f"{a:.17g},{b:.17g},{v:.17g}\n")
    return buf.getvalue()


def write_grid_csv(path, p: DensityGrid) -> None:
    """Write ``theta,phi,p`` rows, theta-major, 17 significant digits."""
    atomic_write_text(path, grid_to_csv(p))


def read_grid_csv(path, chart: Chart = SPHERE) -> DensityGrid:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["theta", "phi", "p"]:
        raise ValueError(f"unexpected header {rows[0]}")
    data = np.array(rows[1:], dtype=float)
    n_theta = len(np.unique(data[:, 0]))
    n_phi = len(data) // n_theta
    if n_theta * n_phi != len(data):
        raise ShapeMismatch("rows do not form a tensor-product grid")
    return DensityGrid(Grid(n_theta, n_phi, chart), data[:, 2].reshape(n_theta, n_phi))
