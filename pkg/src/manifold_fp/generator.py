"""Infinitesimal generators and the Ito/Stratonovich drift conversion."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConventionMismatch
from .geometry.charts import SPHERE, Chart
from .geometry.fields import FieldSpec, ScalarField, field_grads, field_hessians
from .geometry.operators import (DiffusionTensor, contract, covariant_derivative,
                                 diffusion_tensor, hessian, lie_derivative, lie_derivative2)


class Convention(str, Enum):
    STRATONOVICH = "stratonovich"
    ITO = "ito"


@dataclass(frozen=True)
class SdeSpec:
    """Drift and diffusion vector fields of an SDE on ``chart``.

    For ``Convention.ITO`` the drift is the Ito drift (often written with a
    tilde); for Stratonovich it is the Stratonovich drift.
    """

    convention: Convention
    drift: FieldSpec
    sigmas: tuple[FieldSpec, ...] = ()
    chart: Chart = field(default=SPHERE)

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))
        object.__setattr__(self, "sigmas", tuple(self.sigmas))

    @property
    def diffusion(self) -> DiffusionTensor:
        return diffusion_tensor(self.sigmas)

    @property
    def num_channels(self) -> int:
        return len(self.sigmas)

    @property
    def is_ito(self) -> bool:
        return self.convention is Convention.ITO

    def frame_constant_sigmas(self) -> tuple[float, float] | None:
        """``(sigma_theta^2, sigma_phi^2)`` when ``D`` is constant and diagonal, else None."""
        D = self.diffusion
        if not D.is_diagonal_constant():
            return None
        m = D.constant_matrix()
        return float(m[0, 0]), float(m[1, 1])


def sphere_sde(convention, drift_theta=0.0, drift_phi=0.0, sigma_theta=0.0, sigma_phi=0.0,
               chart: Chart = SPHERE) -> SdeSpec:
    """Two-channel SDE with ``sigma_1 = s_theta E_theta``, ``sigma_2 = s_phi E_phi``."""
    sigmas = (FieldSpec.constant(sigma_theta, 0.0), FieldSpec.constant(0.0, sigma_phi))
    return SdeSpec(Convention(convention), FieldSpec(drift_theta, drift_phi), sigmas, chart)


def brownian_spec(convention, chart: Chart = SPHERE) -> SdeSpec:
    """Brownian motion: ``sigma_i = E_i`` with the matching drift.

    Stratonovich drift ``-(1/2) sum nabla_{E_i} E_i`` is ``(1/2) cot(theta) E_theta``
    on the sphere and zero on the torus; the Ito drift is zero.
    """
    convention = Convention(convention)
    sigmas = (FieldSpec.constant(1.0, 0.0), FieldSpec.constant(0.0, 1.0))
    drift = FieldSpec.zero()
    if convention is Convention.STRATONOVICH and chart.name == "sphere":
        drift = FieldSpec(ScalarField.of_theta(
            lambda t: 0.5 / np.tan(t),
            lambda t: -0.5 / np.sin(t) ** 2,
            lambda t: np.cos(t) / np.sin(t) ** 3,
            label="cot(theta)/2"), 0.0)
    return SdeSpec(convention, drift, sigmas, chart)


def _require(spec: SdeSpec, convention: Convention) -> None:
    if spec.convention is not convention:
        raise ConventionMismatch(f"expected a {convention.value} spec, got {spec.convention.value}")


def apply_generator_strat(spec: SdeSpec, f: ScalarField, theta, phi) -> np.ndarray:
    """``X[f] + (1/2) sum_i sigma_i[sigma_i[f]]``."""
    _require(spec, Convention.STRATONOVICH)
    chart = spec.chart
    out = lie_derivative(chart, f, spec.drift, theta, phi)
    for s in spec.sigmas:
        out = out + 0.5 * lie_derivative2(chart, f, s, s, theta, phi)
    return out


def apply_generator_ito(spec: SdeSpec, f: ScalarField, theta, phi) -> np.ndarray:
    """``X~[f] + (1/2) D : Hess_f``."""
    _require(spec, Convention.ITO)
    chart = spec.chart
    drift = lie_derivative(chart, f, spec.drift, theta, phi)
    return drift + 0.5 * contract(spec.diffusion(theta, phi), hessian(chart, f, theta, phi))


def apply_generator(spec: SdeSpec, f: ScalarField, theta, phi) -> np.ndarray:
    if spec.is_ito:
        return apply_generator_ito(spec, f, theta, phi)
    return apply_generator_strat(spec, f, theta, phi)


class _SelfCovariantComponent(ScalarField):
    """Component ``c`` of ``nabla_sigma sigma`` with analytic first partials.

    ``(nabla_s s)^c = s^a e_a^k d_k s^c + s^a s^b w[a,b,c]``; its partials use
    the sigma Hessians and the chart's connection gradient.
    """

    def __init__(self, chart: Chart, sigma: FieldSpec, c: int):
        self.chart, self.sigma, self.c = chart, sigma, c
        super().__init__(self._value, self._grad_impl, None, label=f"(nabla_s s)^{c}")

    def _value(self, theta, phi):
        return covariant_derivative(self.chart, self.sigma, self.sigma, theta, phi)[..., self.c]

    def _grad_impl(self, theta, phi):
        ch, c = self.chart, self.c
        e = ch.frame(theta, phi)                                   # [a, k]
        de = ch.frame_grad(theta, phi)                             # [i, a, k]
        w = ch.connection(theta, phi)                              # [a, b, c]
        dw = ch.connection_grad(theta, phi)                        # [i, a, b, c]
        s = self.sigma(theta, phi)                                 # [a]
        ds = field_grads(self.sigma.components, theta, phi)        # [a, i]
        hs = field_hessians(self.sigma.components, theta, phi)     # [a, i, k]
        dsc, hsc = ds[..., c, :], hs[..., c, :, :]
        g = (np.einsum("...ai,...ak,...k->...i", ds, e, dsc)
             + np.einsum("...a,...iak,...k->...i", s, de, dsc)
             + np.einsum("...a,...ak,...ik->...i", s, e, hsc)
             + np.einsum("...ai,...b,...ab->...i", ds, s, w[..., c])
             + np.einsum("...a,...bi,...ab->...i", s, ds, w[..., c])
             + np.einsum("...a,...b,...iab->...i", s, s, dw[..., c]))
        return g[..., 0], g[..., 1]


def drift_correction(spec: SdeSpec) -> FieldSpec:
    """``(1/2) sum_i nabla_{sigma_i} sigma_i`` as a field."""
    corr = FieldSpec.zero()
    for s in spec.sigmas:
        if s.is_constant and s.theta.constant_value == 0.0 and s.phi.constant_value == 0.0:
            continue
        if s.is_constant and spec.chart.name == "sphere":
            corr = corr + _constant_self_covariant(s.theta.constant_value, s.phi.constant_value)
            continue
        corr = corr + FieldSpec(_SelfCovariantComponent(spec.chart, s, 0),
                                _SelfCovariantComponent(spec.chart, s, 1)) * 0.5
    return corr


def _cot_field(scale: float) -> ScalarField:
    return ScalarField.of_theta(lambda t: scale * np.cos(t) / np.sin(t),
                                lambda t: -scale / np.sin(t) ** 2,
                                lambda t: 2 * scale * np.cos(t) / np.sin(t) ** 3,
                                label=f"{scale}*cot")


def _constant_self_covariant(a: float, b: float) -> FieldSpec:
    """``(1/2) nabla_s s`` on the sphere for ``s = a E_theta + b E_phi``: ``(1/2)(-b^2, a b) cot``."""
    return FieldSpec(_cot_field(-0.5 * b * b), _cot_field(0.5 * a * b))


def strat_to_ito(spec: SdeSpec) -> SdeSpec:
    """Ito spec with drift ``X + (1/2) sum nabla_{sigma_i} sigma_i``; same noise fields."""
    _require(spec, Convention.STRATONOVICH)
    return SdeSpec(Convention.ITO, spec.drift + drift_correction(spec), spec.sigmas, spec.chart)


def ito_to_strat(spec: SdeSpec) -> SdeSpec:
    """Inverse of :func:`strat_to_ito`."""
    _require(spec, Convention.ITO)
    return SdeSpec(Convention.STRATONOVICH, spec.drift - drift_correction(spec), spec.sigmas,
                   spec.chart)


def adjoint_residual(grid, spec: SdeSpec, p: ScalarField, q: ScalarField,
                     flux_mode: str = "analytic") -> float:
    """``|<p, A q> - <A* p, q>|`` with ``A* p`` the grid Fokker-Planck right-hand side."""
    from .fpe import DensityGrid, fp_rhs

    t, ph = grid.mesh()
    w = grid.weights
    pv = p(t, ph)
    lhs = np.sum(pv * apply_generator(spec, q, t, ph) * w)
    rhs_p = fp_rhs(DensityGrid(grid, pv), spec, flux_mode=flux_mode)
    rhs = np.sum(rhs_p * q(t, ph) * w)
    return float(abs(lhs - rhs))
