"""Scalar and vector fields on a two-dimensional chart.

A :class:`ScalarField` is a vectorized function of the chart coordinates
``(theta, phi)`` that optionally carries analytic first and second partial
derivatives.  When a partial is missing it is replaced by central finite
differences.  A :class:`FieldSpec` is a vector field given by its two
components in the chart's orthonormal frame.

Arithmetic on fields propagates analytic derivatives through the sum and
product rules, so composite fields stay in analytic mode whenever their
operands are.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

# first partials; second partials from finite differences of analytic first
# partials also use this step
H_FD = 1e-5
# plain second differences (no analytic first partials available)
H_FD2 = 1e-4

Grad = tuple[np.ndarray, np.ndarray]
Hess = tuple[np.ndarray, np.ndarray, np.ndarray]


def _shape(theta, phi):
    return np.broadcast(np.asarray(theta), np.asarray(phi)).shape


def _full(value, theta, phi):
    out = np.zeros(_shape(theta, phi))
    out += value
    return out


class ScalarField:
    """Smooth function of the chart coordinates.

    Parameters
    ----------
    fn : callable ``(theta, phi) -> array``
    grad : callable ``(theta, phi) -> (f_theta, f_phi)``, optional
    hess : callable ``(theta, phi) -> (f_tt, f_tp, f_pp)``, optional
    label : str, optional
        Human readable description, used in reports.
    """

    __array_ufunc__ = None

    def __init__(self, fn: Callable, grad: Optional[Callable] = None,
                 hess: Optional[Callable] = None, label: str = "",
                 constant: Optional[float] = None):
        self._fn = fn
        self._grad = grad
        self._hess = hess
        self.label = label
        self.constant_value = constant

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "ScalarField":
        c = float(c)

        def zeros2(t, p):
            z = _full(0.0, t, p)
            return z, z.copy()

        def zeros3(t, p):
            z = _full(0.0, t, p)
            return z, z.copy(), z.copy()

        return cls(lambda t, p: _full(c, t, p), zeros2, zeros3,
                   label=repr(c), constant=c)

    @classmethod
    def from_expr(cls, expr: str) -> "ScalarField":
        """Build a field from a sympy-parsable expression in ``theta``, ``phi``.

        All partials up to second order are derived symbolically.
        """
        import sympy as sp

        th, ph = sp.symbols("theta phi", real=True)
        e = sp.sympify(expr, locals={"theta": th, "phi": ph})
        free = e.free_symbols - {th, ph}
        if free:
            raise ValueError(f"unknown symbols in field expression: {sorted(map(str, free))}")
        if not e.free_symbols:
            return cls.constant(float(e))

        def lam(x):
            f = sp.lambdify((th, ph), x, modules="numpy")
            return lambda t, p: _full(f(t, p), t, p)

        f0 = lam(e)
        ft, fp = lam(sp.diff(e, th)), lam(sp.diff(e, ph))
        ftt = lam(sp.diff(e, th, 2))
        ftp = lam(sp.diff(e, th, ph))
        fpp = lam(sp.diff(e, ph, 2))
        return cls(f0, lambda t, p: (ft(t, p), fp(t, p)),
                   lambda t, p: (ftt(t, p), ftp(t, p), fpp(t, p)), label=str(e))

    @classmethod
    def of_theta(cls, f: Callable, df: Callable, d2f: Callable, label: str = "") -> "ScalarField":
        """Field depending on theta only, with its two derivatives."""
        def grad(t, p):
            return _full(df(t), t, p), _full(0.0, t, p)

        def hess(t, p):
            z = _full(0.0, t, p)
            return _full(d2f(t), t, p), z, z.copy()

        return cls(lambda t, p: _full(f(t), t, p), grad, hess, label=label)

    # -- evaluation -------------------------------------------------------
    @property
    def analytic(self) -> bool:
        return self._grad is not None and self._hess is not None

    def __call__(self, theta, phi) -> np.ndarray:
        return _full(self._fn(theta, phi), theta, phi)

    def grad(self, theta, phi) -> Grad:
        if self._grad is not None:
            gt, gp = self._grad(theta, phi)
            return _full(gt, theta, phi), _full(gp, theta, phi)
        h = H_FD
        gt = (self(theta + h, phi) - self(theta - h, phi)) / (2 * h)
        gp = (self(theta, phi + h) - self(theta, phi - h)) / (2 * h)
        return gt, gp

    def hess(self, theta, phi) -> Hess:
        if self._hess is not None:
            return tuple(_full(x, theta, phi) for x in self._hess(theta, phi))
        if self._grad is not None:
            h = H_FD
            gt_p, gp_p = self.grad(theta + h, phi)
            gt_m, gp_m = self.grad(theta - h, phi)
            gt_q, gp_q = self.grad(theta, phi + h)
            gt_r, gp_r = self.grad(theta, phi - h)
            ftt = (gt_p - gt_m) / (2 * h)
            fpp = (gp_q - gp_r) / (2 * h)
            ftp = 0.5 * ((gt_q - gt_r) + (gp_p - gp_m)) / (2 * h)
            return ftt, ftp, fpp
        h = H_FD2
        f0 = self(theta, phi)
        ftt = (self(theta + h, phi) - 2 * f0 + self(theta - h, phi)) / h**2
        fpp = (self(theta, phi + h) - 2 * f0 + self(theta, phi - h)) / h**2
        ftp = (self(theta + h, phi + h) - self(theta + h, phi - h)
               - self(theta - h, phi + h) + self(theta - h, phi - h)) / (4 * h**2)
        return ftt, ftp, fpp

    def jet(self, theta, phi):
        return self(theta, phi), self.grad(theta, phi), self.hess(theta, phi)

    # -- algebra ----------------------------------------------------------
    @property
    def has_grad(self) -> bool:
        return self._grad is not None

    @property
    def has_hess(self) -> bool:
        return self._hess is not None

    def __add__(self, other) -> "ScalarField":
        other = as_field(other)
        if self.constant_value is not None and other.constant_value is not None:
            return ScalarField.constant(self.constant_value + other.constant_value)
        a, b = self, other
        fn = lambda t, p: a(t, p) + b(t, p)
        grad = hess = None
        if a.has_grad and b.has_grad:
            def grad(t, p):
                (at, ap), (bt, bp) = a.grad(t, p), b.grad(t, p)
                return at + bt, ap + bp
        if a.has_hess and b.has_hess:
            def hess(t, p):
                return tuple(x + y for x, y in zip(a.hess(t, p), b.hess(t, p)))
        return ScalarField(fn, grad, hess, label=f"({a.label} + {b.label})")

    __radd__ = __add__

    def __neg__(self) -> "ScalarField":
        return self * -1.0

    def __sub__(self, other) -> "ScalarField":
        return self + (-as_field(other))

    def __rsub__(self, other) -> "ScalarField":
        return as_field(other) + (-self)

    def __mul__(self, other) -> "ScalarField":
        other = as_field(other)
        if self.constant_value is not None and other.constant_value is not None:
            return ScalarField.constant(self.constant_value * other.constant_value)
        a, b = self, other
        label = f"{a.label}*{b.label}"
        fn = lambda t, p: a(t, p) * b(t, p)
        grad = hess = None
        if a.has_grad and b.has_grad:
            def grad(t, p):
                va, vb = a(t, p), b(t, p)
                (at, ap), (bt, bp) = a.grad(t, p), b.grad(t, p)
                return at * vb + va * bt, ap * vb + va * bp
        if a.analytic and b.analytic:
            def hess(t, p):
                va, (at, ap), (att, atp, app) = a.jet(t, p)
                vb, (bt, bp), (btt, btp, bpp) = b.jet(t, p)
                return (att * vb + 2 * at * bt + va * btt,
                        atp * vb + at * bp + ap * bt + va * btp,
                        app * vb + 2 * ap * bp + va * bpp)
        return ScalarField(fn, grad, hess, label=label)

    __rmul__ = __mul__

    def __repr__(self):
        return f"ScalarField({self.label or '<fn>'})"


def as_field(x) -> ScalarField:
    if isinstance(x, ScalarField):
        return x
    if isinstance(x, str):
        return ScalarField.from_expr(x)
    if np.isscalar(x):
        return ScalarField.constant(float(x))
    raise TypeError(f"cannot interpret {type(x).__name__} as a scalar field")


@dataclass(frozen=True)
class FieldSpec:
    """Vector field given by its components in the orthonormal frame.

    ``theta`` and ``phi`` are the coefficients of ``E_theta`` and ``E_phi``
    (on the torus, of the two coordinate unit vectors).
    """

    theta: ScalarField
    phi: ScalarField

    __array_ufunc__ = None

    def __init__(self, theta, phi):
        object.__setattr__(self, "theta", as_field(theta))
        object.__setattr__(self, "phi", as_field(phi))

    @classmethod
    def constant(cls, a: float, b: float) -> "FieldSpec":
        return cls(ScalarField.constant(a), ScalarField.constant(b))

    @classmethod
    def zero(cls) -> "FieldSpec":
        return cls.constant(0.0, 0.0)

    @property
    def components(self) -> tuple[ScalarField, ScalarField]:
        return self.theta, self.phi

    @property
    def analytic(self) -> bool:
        return self.theta.analytic and self.phi.analytic

    @property
    def is_constant(self) -> bool:
        return self.theta.constant_value is not None and self.phi.constant_value is not None

    def __call__(self, theta, phi) -> np.ndarray:
        """Frame components stacked on a trailing axis of length 2."""
        return np.stack([self.theta(theta, phi), self.phi(theta, phi)], axis=-1)

    def __add__(self, other: "FieldSpec") -> "FieldSpec":
        return FieldSpec(self.theta + other.theta, self.phi + other.phi)

    def __sub__(self, other: "FieldSpec") -> "FieldSpec":
        return FieldSpec(self.theta - other.theta, self.phi - other.phi)

    def __mul__(self, s) -> "FieldSpec":
        """Multiply by a scalar or a :class:`ScalarField`."""
        return FieldSpec(self.theta * s, self.phi * s)

    __rmul__ = __mul__

    def __neg__(self) -> "FieldSpec":
        return self * -1.0


def field_grads(fields: Sequence[ScalarField], theta, phi) -> np.ndarray:
    """Coordinate gradients of several fields, shape ``(..., len(fields), 2)``."""
    return np.stack([np.stack(f.grad(theta, phi), axis=-1) for f in fields], axis=-2)


def field_hessians(fields: Sequence[ScalarField], theta, phi) -> np.ndarray:
    """Coordinate Hessians, shape ``(..., len(fields), 2, 2)``."""
    out = []
    for f in fields:
        ftt, ftp, fpp = f.hess(theta, phi)
        out.append(np.stack([np.stack([ftt, ftp], -1), np.stack([ftp, fpp], -1)], -2))
    return np.stack(out, axis=-3)
