"""Intrinsic differential operators evaluated pointwise in the orthonormal frame.

Every operator takes a chart and coordinate arrays ``theta, phi`` (any
broadcastable shapes) and returns frame components.  The generic route goes
through the frame connection coefficients ``w[a, b, c]`` of the chart, so the
same code serves the sphere and the flat torus; the closed-form sphere
expressions live in :mod:`manifold_fp.geometry.sphere` and are tested
against this module.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .charts import Chart
from .fields import FieldSpec, ScalarField, field_grads, field_hessians


def _check(chart: Chart, theta) -> None:
    chart.check_interior(theta)


def frame_derivatives(chart: Chart, f: ScalarField, theta, phi) -> np.ndarray:
    """``E_a[f]`` for both frame vectors, trailing axis of length 2."""
    e = chart.frame(theta, phi)
    df = np.stack(f.grad(theta, phi), axis=-1)
    return np.einsum("...ai,...i->...a", e, df)


def lie_derivative(chart: Chart, f: ScalarField, X: FieldSpec, theta, phi) -> np.ndarray:
    """Directional derivative ``X[f] = df(X)``."""
    _check(chart, theta)
    return np.einsum("...a,...a->...", X(theta, phi), frame_derivatives(chart, f, theta, phi))


def lie_derivative2(chart: Chart, f: ScalarField, X: FieldSpec, Y: FieldSpec,
                    theta, phi) -> np.ndarray:
    """Nested derivative ``X[Y[f]]``.

    Expands ``X^a e_a^i d_i (Y^b e_b^k d_k f)`` with the product rule, so the
    inner derivative is differentiated exactly when ``Y`` and ``f`` carry
    analytic partials and by central differences otherwise.
    """
    _check(chart, theta)
    e = chart.frame(theta, phi)
    de = chart.frame_grad(theta, phi)
    xa = X(theta, phi)
    yb = Y(theta, phi)
    dy = field_grads(Y.components, theta, phi)                  # [b, i]
    df = np.stack(f.grad(theta, phi), axis=-1)                   # [k]
    hf = field_hessians([f], theta, phi)[..., 0, :, :]           # [i, k]
    # d_i(Y^b e_b^k d_k f)
    inner = (np.einsum("...bi,...bk,...k->...i", dy, e, df)
             + np.einsum("...b,...ibk,...k->...i", yb, de, df)
             + np.einsum("...b,...bk,...ik->...i", yb, e, hf))
    return np.einsum("...a,...ai,...i->...", xa, e, inner)


def covariant_derivative(chart: Chart, X: FieldSpec, Y: FieldSpec, theta, phi) -> np.ndarray:
    """Frame components of ``nabla_X Y``."""
    _check(chart, theta)
    w = chart.connection(theta, phi)
    xa = X(theta, phi)
    yb = Y(theta, phi)
    e = chart.frame(theta, phi)
    dy = field_grads(Y.components, theta, phi)                  # [c, i]
    xdy = np.einsum("...a,...ai,...ci->...c", xa, e, dy)
    return xdy + np.einsum("...a,...b,...abc->...c", xa, yb, w)


def divergence_vf(chart: Chart, X: FieldSpec, theta, phi) -> np.ndarray:
    """Divergence as the trace of ``Y -> nabla_Y X``."""
    _check(chart, theta)
    w = chart.connection(theta, phi)
    e = chart.frame(theta, phi)
    dx = field_grads(X.components, theta, phi)                  # [a, i]
    trace_d = np.einsum("...ai,...ai->...", e, dx)
    return trace_d + np.einsum("...b,...aba->...", X(theta, phi), w)


def hessian(chart: Chart, f: ScalarField, theta, phi) -> np.ndarray:
    """Frame components ``H[a, b] = Hess_f(E_a, E_b)``, symmetrized."""
    _check(chart, theta)
    e = chart.frame(theta, phi)
    de = chart.frame_grad(theta, phi)
    w = chart.connection(theta, phi)
    df = np.stack(f.grad(theta, phi), axis=-1)
    hf = field_hessians([f], theta, phi)[..., 0, :, :]
    # E_a[E_b[f]] - (nabla_{E_a} E_b)[f]
    eef = (np.einsum("...ai,...ibk,...k->...ab", e, de, df)
           + np.einsum("...ai,...bk,...ik->...ab", e, e, hf))
    ef = np.einsum("...ci,...i->...c", e, df)
    h = eef - np.einsum("...abc,...c->...ab", w, ef)
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def hessian_along(chart: Chart, f: ScalarField, X: FieldSpec, theta, phi) -> np.ndarray:
    """``Hess_f(X, X) = X[X[f]] - (nabla_X X)[f]`` from the defining formula."""
    xx = lie_derivative2(chart, f, X, X, theta, phi)
    nab = covariant_derivative(chart, X, X, theta, phi)
    return xx - np.einsum("...c,...c->...", nab, frame_derivatives(chart, f, theta, phi))


@dataclass(frozen=True)
class DiffusionTensor:
    """``D = sum_i sigma_i (x) sigma_i`` held through its generating fields.

    Calling the tensor returns the frame components ``D[..., a, b]``.
    """

    sigmas: tuple[FieldSpec, ...]

    @property
    def num_channels(self) -> int:
        return len(self.sigmas)

    m = num_channels

    def __call__(self, theta, phi) -> np.ndarray:
        shape = np.broadcast(np.asarray(theta), np.asarray(phi)).shape
        d = np.zeros(shape + (2, 2))
        for s in self.sigmas:
            v = s(theta, phi)
            d += v[..., :, None] * v[..., None, :]
        return d

    def grad(self, theta, phi) -> np.ndarray:
        """Coordinate partials ``dD[..., i, a, b]``."""
        shape = np.broadcast(np.asarray(theta), np.asarray(phi)).shape
        dd = np.zeros(shape + (2, 2, 2))
        for s in self.sigmas:
            v = s(theta, phi)                                    # [a]
            dv = field_grads(s.components, theta, phi)           # [a, i]
            dvi = np.swapaxes(dv, -1, -2)                        # [i, a]
            dd += dvi[..., :, :, None] * v[..., None, None, :] + v[..., None, :, None] * dvi[..., :, None, :]
        return dd

    @property
    def is_constant(self) -> bool:
        return all(s.is_constant for s in self.sigmas)

    def constant_matrix(self) -> np.ndarray | None:
        """Frame matrix when every generating field is constant, else None."""
        if not self.is_constant:
            return None
        return self(0.0, 0.0)

    def is_diagonal_constant(self) -> bool:
        m = self.constant_matrix()
        return m is not None and m[0, 1] == 0.0


def diffusion_tensor(sigmas: Sequence[FieldSpec]) -> DiffusionTensor:
    """Diffusion tensor field of a family of diffusion vector fields."""
    return DiffusionTensor(tuple(sigmas))


def contract(D: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Full contraction ``D^{ab} H_{ab}`` in an orthonormal frame."""
    return np.einsum("...ab,...ab->...", D, H)


def divergence_tensor_generic(chart: Chart, density: ScalarField, D: DiffusionTensor,
                              theta, phi) -> np.ndarray:
    """``div(p D)`` by contracting the last upper slot of ``nabla(p D)``.

    ``(div T)^a = sum_c E_c[T^{ac}] + T^{dc} w[c,d,a] + T^{ad} w[c,d,c]``.
    """
    _check(chart, theta)
    e = chart.frame(theta, phi)
    w = chart.connection(theta, phi)
    p = density(theta, phi)
    dp = np.stack(density.grad(theta, phi), axis=-1)             # [i]
    dmat = D(theta, phi)                                         # [a, b]
    ddmat = D.grad(theta, phi)                                   # [i, a, b]
    t = p[..., None, None] * dmat
    dt = dp[..., :, None, None] * dmat[..., None, :, :] + p[..., None, None, None] * ddmat
    term1 = np.einsum("...ci,...iac->...a", e, dt)
    term2 = np.einsum("...dc,...cda->...a", t, w)
    term3 = np.einsum("...ad,...cdc->...a", t, w)
    return term1 + term2 + term3


def divergence_tensor(chart: Chart, density: ScalarField, D: DiffusionTensor, theta, phi,
                      method: str = "auto") -> np.ndarray:
    """Frame components of the vector field ``V = div(p D)``.

    ``method`` is ``"generic"``, ``"closed_form"`` (sphere, constant diagonal
    ``D``) or ``"auto"``, which picks the closed form when it applies.
    """
    from .charts import Sphere
    from .sphere import inner_divergence

    closed_ok = isinstance(chart, Sphere) and D.is_diagonal_constant()
    if method == "closed_form" and not closed_ok:
        raise ValueError("closed form requires the sphere chart and constant diagonal D")
    if method == "generic" or not closed_ok:
        return divergence_tensor_generic(chart, density, D, theta, phi)
    _check(chart, theta)
    dm = D.constant_matrix()
    pt, pp = density.grad(theta, phi)
    vt, vp = inner_divergence(density(theta, phi), pt, pp, theta, dm[0, 0], dm[1, 1])
    return np.stack([vt, vp], axis=-1)


class _PointwiseComponent(ScalarField):
    """Component of a vector field computed by a pointwise operator; partials by FD."""

    def __init__(self, fn, index, label=""):
        super().__init__(lambda t, p: fn(t, p)[..., index], label=label)


def tensor_divergence_field(chart: Chart, density: ScalarField, D: DiffusionTensor,
                            method: str = "auto") -> FieldSpec:
    """``div(p D)`` wrapped as a :class:`FieldSpec` (finite-difference partials)."""
    fn = lambda t, p: divergence_tensor(chart, density, D, t, p, method=method)
    return FieldSpec(_PointwiseComponent(fn, 0, "V^theta"), _PointwiseComponent(fn, 1, "V^phi"))


def double_divergence(chart: Chart, density: ScalarField, D: DiffusionTensor, theta, phi,
                      method: str = "auto") -> np.ndarray:
    """``div(div(p D))`` pointwise."""
    return divergence_vf(chart, tensor_divergence_field(chart, density, D, method), theta, phi)
