"""Quadrature residuals of the integration-by-parts identities.

Each residual vanishes in the continuum; on a grid it measures midpoint
quadrature error (and finite-difference error where partials are not
analytic), which shrinks as ``O(h^2)``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .fields import FieldSpec, ScalarField
from .grid import Grid
from .operators import (DiffusionTensor, contract, divergence_vf, double_divergence,
                        hessian, hessian_along, lie_derivative)


def _integrate(grid: Grid, values: np.ndarray) -> float:
    return float(np.sum(values * grid.weights))


def quadrature_ibp_residual(grid: Grid, p: ScalarField, q: ScalarField, X: FieldSpec) -> float:
    """``|<p, X[q]> + <div(p X), q>|`` by midpoint quadrature."""
    chart = grid.chart
    t, ph = grid.mesh()
    lhs = p(t, ph) * lie_derivative(chart, q, X, t, ph)
    rhs = divergence_vf(chart, X * p, t, ph) * q(t, ph)
    return abs(_integrate(grid, lhs + rhs))


def tensor_ibp_residual(grid: Grid, p: ScalarField, D: DiffusionTensor, q: ScalarField,
                        method: str = "auto") -> float:
    """``|<p D, nabla nabla q>_T - <div(div(p D)), q>|``.

    Two applications of the tensor identity (the second divergence acts on a
    vector field), as used for the Ito diffusion term.
    """
    chart = grid.chart
    t, ph = grid.mesh()
    paired = p(t, ph) * contract(D(t, ph), hessian(chart, q, t, ph))
    dd = double_divergence(chart, p, D, t, ph, method=method) * q(t, ph)
    return abs(_integrate(grid, paired - dd))


def d_hess_residual(chart, f: ScalarField, sigmas: Sequence[FieldSpec], D: DiffusionTensor,
                    theta, phi) -> np.ndarray:
    """Pointwise ``|sum_i Hess_f(sigma_i, sigma_i) - D : Hess_f|``.

    The left side uses the defining formula ``X[X[f]] - (nabla_X X)[f]``; the
    right side contracts the frame Hessian with the frame components of ``D``.
    """
    lhs = sum(hessian_along(chart, f, s, theta, phi) for s in sigmas)
    rhs = contract(D(theta, phi), hessian(chart, f, theta, phi))
    return np.abs(lhs - rhs)


def observed_order(errors: Sequence[float], ratio: float = 2.0) -> list[float]:
    """Successive convergence orders ``log(e_k / e_{k+1}) / log(ratio)``."""
    e = np.asarray(errors, dtype=float)
    return list(np.log(e[:-1] / e[1:]) / np.log(ratio))
