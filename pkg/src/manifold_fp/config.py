"""Experiment configuration files (JSON) and their translation to library objects."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .fpe import DensityGrid, SolverConfig, read_grid_csv
from .generator import SdeSpec, brownian_spec
from .geometry.charts import SPHERE, TORUS, ChartPoint
from .geometry.fields import FieldSpec, ScalarField
from .geometry.grid import Grid

Component = Union[float, str]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Model):
    n_theta: int = Field(64, ge=8)
    n_phi: int = Field(128, ge=8)


class SdeConfig(_Model):
    """Drift components are numbers or expressions in ``theta`` and ``phi``.

    ``preset="brownian"`` uses unit frame noise with the drift matching the
    convention; ``preset="rotation"`` adds ``omega sin(theta) E_phi``, a
    rigid rotation about the polar axis.
    """

    convention: Literal["stratonovich", "ito"] = "ito"
    preset: Literal["none", "brownian", "rotation"] = "none"
    drift_theta: Component = 0.0
    drift_phi: Component = 0.0
    sigma_theta: float = Field(0.0, ge=0)
    sigma_phi: float = Field(0.0, ge=0)
    omega: float = 0.0

    @field_validator("drift_theta", "drift_phi")
    @classmethod
    def _parse(cls, v):
        if isinstance(v, str):
            try:
                ScalarField.from_expr(v)
            except Exception as exc:  # sympy raises a zoo of types
                raise ValueError(f"cannot parse drift expression {v!r}: {exc}") from exc
        return v


class SolverSection(_Model):
    t_final: float = Field(1.0, ge=0)
    dt: Optional[float] = Field(None, gt=0)
    cfl_safety: float = Field(0.25, gt=0, le=1)
    flux_mode: Literal["analytic", "grid"] = "analytic"
    split_phi_diffusion: bool = True


class InitialConfig(_Model):
    kind: Literal["uniform", "vmf", "point", "csv"] = "vmf"
    kappa: float = Field(10.0, ge=0)
    mu: tuple[float, float, float] = (0.0, 0.0, 1.0)
    theta: float = 0.0
    phi: float = 0.0
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "csv" and not self.path:
            raise ValueError("initial.kind='csv' needs a path")
        if self.kind == "vmf":
            n = float(np.linalg.norm(self.mu))
            if abs(n - 1) > 1e-9:
                raise ValueError(f"initial.mu must be a unit vector (norm {n:.12g})")
        return self


class McConfig(_Model):
    n_particles: int = Field(100_000, ge=1)
    dt: float = Field(1e-3, gt=0)
    band: float = Field(0.05, gt=0)


class Measurement(_Model):
    t: float = Field(gt=0)
    kappa: float = Field(ge=0)
    z: tuple[float, float, float]

    @field_validator("z")
    @classmethod
    def _unit(cls, v):
        n = float(np.linalg.norm(v))
        if abs(n - 1) > 1e-9:
            raise ValueError(f"measurement direction must be a unit vector (norm {n:.12g})")
        return v


class FilterConfig(_Model):
    schedule: list[Measurement] = []
    n_particles: int = Field(100_000, ge=1)
    dt: float = Field(1e-2, gt=0)
    budget_l1: float = Field(0.05, gt=0)
    budget_deg: float = Field(2.0, gt=0)
    run_oracle: bool = True

    @field_validator("schedule")
    @classmethod
    def _increasing(cls, v):
        ts = [m.t for m in v]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("measurement times must be strictly increasing")
        return v


class CheckConfig(_Model):
    ladder: list[int] = [16, 32, 64]
    order_min: float = 1.8
    order_max: float = 2.2
    n_points: int = Field(1000, ge=1)


class ExperimentConfig(_Model):
    chart: Literal["sphere", "torus"] = "sphere"
    seed: int = 0
    grid: GridConfig = GridConfig()
    sde: SdeConfig = SdeConfig(preset="brownian")
    solver: SolverSection = SolverSection()
    initial: InitialConfig = InitialConfig()
    snapshots: list[float] = []
    mc: McConfig = McConfig()
    filter: FilterConfig = FilterConfig()
    check: CheckConfig = CheckConfig()
    # multiplies every pass/fail tolerance; values < 1 tighten the checks
    tolerance_scale: float = Field(1.0, gt=0)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def chart_of(cfg: ExperimentConfig):
    return SPHERE if cfg.chart == "sphere" else TORUS


def build_grid_from(cfg: ExperimentConfig) -> Grid:
    return Grid(cfg.grid.n_theta, cfg.grid.n_phi, chart_of(cfg))


def build_spec(cfg: ExperimentConfig) -> SdeSpec:
    s = cfg.sde
    chart = chart_of(cfg)
    if s.preset == "brownian":
        base = brownian_spec(s.convention, chart)
        return base
    drift = FieldSpec(s.drift_theta, s.drift_phi)
    if s.preset == "rotation":
        if chart is not SPHERE:
            raise ConfigError("the rotation preset needs the sphere chart")
        drift = drift + FieldSpec(0.0, ScalarField.from_expr(f"{s.omega!r}*sin(theta)"))
    sigmas = (FieldSpec.constant(s.sigma_theta, 0.0), FieldSpec.constant(0.0, s.sigma_phi))
    return SdeSpec(s.convention, drift, sigmas, chart)


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(t_final=s.t_final, dt=s.dt, cfl_safety=s.cfl_safety,
                        flux_mode=s.flux_mode, split_phi_diffusion=s.split_phi_diffusion)


def initial_density(cfg: ExperimentConfig, grid: Grid) -> DensityGrid:
    from .bayes import vmf_density
    from .fpe import build_grid
    from .sde import cell_indices

    ini = cfg.initial
    if ini.kind == "uniform":
        return build_grid(grid.n_theta, grid.n_phi, grid.chart)
    if ini.kind == "vmf":
        if grid.chart is not SPHERE:
            raise ConfigError("vmf initial density needs the sphere chart")
        return DensityGrid.from_field(grid, lambda t, p: vmf_density(t, p, ini.kappa, ini.mu))
    if ini.kind == "point":
        v = np.zeros(grid.shape)
        j, k = cell_indices(grid, np.array([ini.theta]), np.array([ini.phi]))
        v[j[0], k[0]] = 1.0 / grid.weights[j[0], k[0]]
        return DensityGrid(grid, v)
    d = read_grid_csv(ini.path, grid.chart)
    if d.grid.shape != grid.shape:
        raise ConfigError(f"initial csv grid {d.grid.shape} does not match {grid.shape}")
    return DensityGrid(grid, d.values)


def initial_sampler(cfg: ExperimentConfig, grid: Grid):
    """Particle initializer matching :func:`initial_density`."""
    from .bayes import vmf_sampler
    from .sde import uniform_sphere_sampler

    ini = cfg.initial
    if ini.kind == "uniform":
        if grid.chart is SPHERE:
            return uniform_sphere_sampler
        return lambda rng, n: (rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n))
    if ini.kind == "vmf":
        return vmf_sampler(ini.kappa, ini.mu)
    if ini.kind == "point":
        return ChartPoint(ini.theta, ini.phi)
    dens = initial_density(cfg, grid)

    def from_cells(rng, n):
        # sample cells by mass, then uniformly within the cell
        w = (dens.values * grid.weights).ravel()
        cells = rng.choice(w.size, size=n, p=w / w.sum())
        j, k = np.divmod(cells, grid.n_phi)
        t = (j + rng.uniform(size=n)) * grid.dtheta
        p = (k + rng.uniform(size=n) - 0.5) * grid.dphi
        return t, np.mod(p, 2 * np.pi)

    return from_cells


# -- standard filter scenario ----------------------------------------------------------

STANDARD_TRUTH = (1.0, 1.0)
STANDARD_OFFSETS = ((0.05, 0.0, 0.0), (0.0, 0.05, 0.0), (0.0, 0.0, 0.05))


def standard_scenario(seed: int = 0) -> ExperimentConfig:
    """Slowly diffusing static target observed three times with kappa = 10.

    Prior vMF(kappa=100) at the truth; isotropic noise 0.15 in both frame
    directions; measurement directions are the truth nudged by 0.05 along
    each ambient axis and renormalized.
    """
    mu = SPHERE.embed(*STANDARD_TRUTH)
    schedule = []
    for t, off in zip((0.5, 1.0, 1.5), STANDARD_OFFSETS):
        z = mu + np.asarray(off)
        z = z / np.linalg.norm(z)
        schedule.append({"t": t, "kappa": 10.0, "z": [float(c) for c in z]})
    return parse_config({
        "chart": "sphere",
        "seed": seed,
        "grid": {"n_theta": 64, "n_phi": 128},
        "sde": {"convention": "ito", "sigma_theta": 0.15, "sigma_phi": 0.15},
        "solver": {"t_final": 1.5},
        "initial": {"kind": "vmf", "kappa": 100.0, "mu": [float(c) for c in mu]},
        "filter": {"schedule": schedule, "n_particles": 100_000, "dt": 0.01},
    })
