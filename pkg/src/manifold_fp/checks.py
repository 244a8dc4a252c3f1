"""Identity suite: integration-by-parts residuals, adjointness, generator
equivalences and flat-torus Euclidean oracles, with refinement orders."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp

from .fpe import DensityGrid, SolverConfig, evolve, fp_rhs, fp_rhs_pointwise
from .generator import (SdeSpec, adjoint_residual, apply_generator, apply_generator_ito,
                        apply_generator_strat, brownian_spec, sphere_sde, strat_to_ito)
from .geometry import (SPHERE, TORUS, FieldSpec, Grid, ScalarField, d_hess_residual, diffusion_tensor,
                       observed_order, quadrature_ibp_residual, tensor_ibp_residual)

# smooth, non-symmetric test data; symmetric pairs make several residuals vanish identically
P_SPHERE = "1 + 0.5*cos(theta) + 0.25*sin(theta)*cos(phi)"
Q_SPHERE = "sin(theta)**2 + sin(theta)*cos(phi) + cos(theta)"
X_SPHERE = ("0.6*sin(theta)*(1 + 0.5*cos(phi))", "0.2*sin(theta)")
L1_FUNCTIONS = ("cos(theta)", "sin(theta)*cos(phi)", "sin(theta)*sin(phi)")

P_TORUS = "1 + 0.5*sin(theta)*cos(phi) + 0.3*cos(2*theta)"
Q_TORUS = "cos(theta) + 0.5*sin(theta + phi)"
X_TORUS = ("0.3 + 0.2*sin(phi)", "0.2*cos(theta)")
SIGMA_TORUS = (("0.5 + 0.2*sin(phi)", "0.1*cos(theta)"), ("0", "0.8"))
# tangential projections of smooth ambient fields; a frame-constant anisotropic D
# is not smooth at the poles and leaves a pole term in the tensor identity
SIGMA_SMOOTH = (("sin(theta)", "0"), ("0", "0.8*sin(theta)"),
                ("0.5*cos(theta)*cos(phi)", "-0.5*sin(phi)"))

POLE_MARGIN = 0.05


@dataclass
class CheckRow:
    """One line of the report: an absolute check or a refinement-order check."""

    name: str
    kind: str  # "abs" or "order"
    values: list
    tol: float | tuple[float, float]
    levels: list = field(default_factory=list)

    @property
    def orders(self) -> list:
        return observed_order(self.values) if self.kind == "order" else []

    @property
    def passed(self) -> bool:
        if self.kind == "abs":
            return bool(np.isfinite(self.values[0]) and self.values[0] <= self.tol)
        lo, hi = self.tol
        o = np.asarray(self.orders)
        return bool(o.size and np.all(np.isfinite(o)) and np.all((o >= lo) & (o <= hi)))

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.kind == "abs":
            return f"{status}  {self.name:<28} value={self.values[0]:.3e}  tol={self.tol:.1e}"
        vals = " ".join(f"{v:.3e}" for v in self.values)
        ords = " ".join(f"{o:.2f}" for o in self.orders)
        return (f"{status}  {self.name:<28} levels={self.levels} values=[{vals}] "
                f"orders=[{ords}] band=[{self.tol[0]}, {self.tol[1]}]")


def generic_spec(convention="stratonovich") -> SdeSpec:
    return sphere_sde(convention, 0.3, 0.2, 0.5, 0.8)


def _points(rng: np.random.Generator, n: int, chart):
    if chart is SPHERE:
        return rng.uniform(POLE_MARGIN, np.pi - POLE_MARGIN, n), rng.uniform(0, 2 * np.pi, n)
    return rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n)


def _sphere_grid(n: int) -> Grid:
    return Grid(n, 2 * n, SPHERE)


def _weighted_l1(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(np.abs(a - b) * grid.weights))


# -- sphere rows ------------------------------------------------------------------

def brownian_reduction_error(theta, phi) -> float:
    """max |A f + f| for degree-one harmonics under both conventions."""
    err = 0.0
    for conv in ("stratonovich", "ito"):
        spec = brownian_spec(conv)
        for expr in L1_FUNCTIONS:
            f = ScalarField.from_expr(expr)
            err = max(err, float(np.max(np.abs(apply_generator(spec, f, theta, phi) + f(theta, phi)))))
    return err


def generator_equivalence_error(theta, phi) -> float:
    """max |A_strat(s) f - A_ito(strat_to_ito(s)) f| over two specs and test functions."""
    varying = SdeSpec("stratonovich", FieldSpec(*X_SPHERE),
                      (FieldSpec("0.5 + 0.2*cos(phi)*sin(theta)", "0.3*cos(theta)"),
                       FieldSpec(0.0, "0.8*sin(theta)")))
    err = 0.0
    for s in (generic_spec(), varying):
        ito = strat_to_ito(s)
        for expr in (Q_SPHERE, P_SPHERE):
            f = ScalarField.from_expr(expr)
            d = apply_generator_strat(s, f, theta, phi) - apply_generator_ito(ito, f, theta, phi)
            err = max(err, float(np.max(np.abs(d))))
    return err


def fp_equivalence_error(theta, phi) -> float:
    s = generic_spec()
    p = ScalarField.from_expr(P_SPHERE)
    a = fp_rhs_pointwise(s, p, theta, phi)
    b = fp_rhs_pointwise(strat_to_ito(s), p, theta, phi)
    return float(np.max(np.abs(a - b)))


def d_hess_error(theta, phi, chart=SPHERE) -> float:
    s = SdeSpec("ito", FieldSpec.zero(),
                (FieldSpec("0.5 + 0.2*cos(phi)*sin(theta)", "0.3*cos(theta)"),
                 FieldSpec(0.1, "0.8*sin(theta)")), chart)
    f = ScalarField.from_expr(Q_SPHERE if chart is SPHERE else Q_TORUS)
    return float(np.max(d_hess_residual(chart, f, s.sigmas, s.diffusion, theta, phi)))


def ibp_ladder(ladder: Sequence[int]) -> list:
    p, q = ScalarField.from_expr(P_SPHERE), ScalarField.from_expr(Q_SPHERE)
    X = FieldSpec(*X_SPHERE)
    return [quadrature_ibp_residual(_sphere_grid(n), p, q, X) for n in ladder]


def tensor_ibp_ladder(ladder: Sequence[int]) -> list:
    p, q = ScalarField.from_expr(P_SPHERE), ScalarField.from_expr(Q_SPHERE)
    D = diffusion_tensor([FieldSpec(*c) for c in SIGMA_SMOOTH])
    return [tensor_ibp_residual(_sphere_grid(n), p, D, q) for n in ladder]


def adjoint_ladder(ladder: Sequence[int], convention="stratonovich") -> list:
    p, q = ScalarField.from_expr(P_SPHERE), ScalarField.from_expr(Q_SPHERE)
    s = generic_spec()
    if convention == "ito":
        s = strat_to_ito(s)
    return [adjoint_residual(_sphere_grid(n), s, p, q) for n in ladder]


def strat_ito_grid_ladder(ladder: Sequence[int]) -> list:
    """Weighted L1 gap between the grid-mode Stratonovich and Ito right-hand sides."""
    s = generic_spec()
    ito = strat_to_ito(s)
    p = ScalarField.from_expr(P_SPHERE)
    out = []
    for n in ladder:
        g = _sphere_grid(n)
        d = DensityGrid.from_field(g, p, normalize=False)
        out.append(_weighted_l1(g, fp_rhs(d, s, "grid"), fp_rhs(d, ito, "grid")))
    return out


# -- torus rows (Euclidean oracles built independently with sympy) --------------------

_T, _P = sp.symbols("theta phi", real=True)


def _sym(expr: str):
    return sp.sympify(expr, locals={"theta": _T, "phi": _P})


def _lamb(expr):
    fn = sp.lambdify((_T, _P), expr, "numpy")
    return lambda t, p: np.broadcast_to(fn(t, p), np.broadcast(t, p).shape).astype(float)


def _euclid_fields():
    X = [_sym(c) for c in X_TORUS]
    S = [[_sym(c) for c in s] for s in SIGMA_TORUS]
    return X, S


def _grad(f):
    return [sp.diff(f, _T), sp.diff(f, _P)]


def _dot(v, g):
    return v[0] * g[0] + v[1] * g[1]


def torus_spec(convention: str) -> SdeSpec:
    return SdeSpec(convention, FieldSpec(*X_TORUS), tuple(FieldSpec(*s) for s in SIGMA_TORUS), TORUS)


def euclid_generator(convention: str, f):
    """``X . grad f + 1/2 sum s.grad(s.grad f)`` (Stratonovich) or ``+ 1/2 D : grad grad f`` (Ito)."""
    X, S = _euclid_fields()
    out = _dot(X, _grad(f))
    for s in S:
        if convention == "stratonovich":
            out += sp.Rational(1, 2) * _dot(s, _grad(_dot(s, _grad(f))))
        else:
            H = sp.hessian(f, (_T, _P))
            out += sp.Rational(1, 2) * sum(s[i] * s[j] * H[i, j] for i in range(2) for j in range(2))
    return out


def euclid_fp(convention: str, p):
    """Adjoint of :func:`euclid_generator` in flat coordinates."""
    X, S = _euclid_fields()
    out = -(sp.diff(X[0] * p, _T) + sp.diff(X[1] * p, _P))
    v = [_T, _P]
    for s in S:
        if convention == "stratonovich":
            inner = sp.diff(s[0] * p, _T) + sp.diff(s[1] * p, _P)
            out += sp.Rational(1, 2) * (sp.diff(s[0] * inner, _T) + sp.diff(s[1] * inner, _P))
        else:
            out += sp.Rational(1, 2) * sum(sp.diff(s[i] * s[j] * p, v[i], v[j])
                                           for i in range(2) for j in range(2))
    return out


def torus_generator_error(theta, phi) -> float:
    f = _sym(Q_TORUS)
    err = 0.0
    for conv in ("stratonovich", "ito"):
        ref = _lamb(euclid_generator(conv, f))(theta, phi)
        got = apply_generator(torus_spec(conv), ScalarField.from_expr(Q_TORUS), theta, phi)
        err = max(err, float(np.max(np.abs(got - ref))))
    return err


def torus_fp_pointwise_error(theta, phi) -> float:
    p = _sym(P_TORUS)
    err = 0.0
    for conv in ("stratonovich", "ito"):
        ref = _lamb(euclid_fp(conv, p))(theta, phi)
        got = fp_rhs_pointwise(torus_spec(conv), ScalarField.from_expr(P_TORUS), theta, phi)
        err = max(err, float(np.max(np.abs(got - ref))))
    return err


def torus_fp_grid_ladder(ladder: Sequence[int], convention="ito") -> list:
    """Weighted L1 error of the grid right-hand side against the Euclidean formula."""
    ref = _lamb(euclid_fp(convention, _sym(P_TORUS)))
    pf = ScalarField.from_expr(P_TORUS)
    out = []
    for n in ladder:
        g = Grid(n, n, TORUS)
        t, ph = g.mesh()
        d = DensityGrid.from_field(g, pf, normalize=False)
        out.append(_weighted_l1(g, fp_rhs(d, torus_spec(convention)), ref(t, ph)))
    return out


def torus_ibp_error() -> float:
    """Midpoint quadrature is exact for trigonometric polynomials on the torus.

    What remains is finite-difference error in the double divergence.
    """
    g = Grid(32, 32, TORUS)
    p, q = ScalarField.from_expr(P_TORUS), ScalarField.from_expr(Q_TORUS)
    spec = torus_spec("ito")
    return max(quadrature_ibp_residual(g, p, q, FieldSpec(*X_TORUS)),
               tensor_ibp_residual(g, p, spec.diffusion, q))


def torus_heat_ladder(ladder: Sequence[int], t_final: float = 0.5) -> list:
    """Brownian motion on the torus against the exact decay of a cosine mode."""
    out = []
    for n in ladder:
        g = Grid(n, n, TORUS)
        t, ph = g.mesh()
        p0 = DensityGrid(g, 1 + 0.5 * np.cos(t) * np.cos(ph))
        res = evolve(p0, brownian_spec("ito", TORUS), SolverConfig(t_final=t_final))
        exact = 1 + 0.5 * np.exp(-t_final) * np.cos(t) * np.cos(ph)
        out.append(_weighted_l1(g, res.final.values, exact))
    return out


# -- suite ---------------------------------------------------------------------------

def run_identity_suite(chart: str = "sphere", ladder: Sequence[int] = (16, 32, 64),
                       order_range: tuple[float, float] = (1.8, 2.2), n_points: int = 1000,
                       tolerance_scale: float = 1.0, seed: int = 0) -> list[CheckRow]:
    """Run every identity check for ``chart`` and return the report rows.

    Absolute tolerances are multiplied by ``tolerance_scale``; the order band
    is used as given.
    """
    ladder = list(ladder)
    rng = np.random.default_rng(seed)
    band = tuple(order_range)
    s = tolerance_scale
    rows = []
    if chart == "sphere":
        t, ph = _points(rng, n_points, SPHERE)
        rows += [
            CheckRow("brownian_reduction", "abs", [brownian_reduction_error(t, ph)], 1e-10 * s),
            CheckRow("generator_equivalence", "abs", [generator_equivalence_error(t, ph)], 1e-9 * s),
            CheckRow("fp_equivalence_pointwise", "abs", [fp_equivalence_error(t, ph)], 1e-9 * s),
            CheckRow("d_hess", "abs", [d_hess_error(t, ph)], 1e-9 * s),
            CheckRow("ibp_functions", "order", ibp_ladder(ladder), band, ladder),
            CheckRow("ibp_tensor", "order", tensor_ibp_ladder(ladder), band, ladder),
            CheckRow("adjointness_strat", "order", adjoint_ladder(ladder), band, ladder),
            CheckRow("adjointness_ito", "order", adjoint_ladder(ladder, "ito"), band, ladder),
            CheckRow("strat_ito_grid_mode", "order", strat_ito_grid_ladder(ladder), band, ladder),
        ]
    elif chart == "torus":
        t, ph = _points(rng, n_points, TORUS)
        rows += [
            CheckRow("torus_generator_euclidean", "abs", [torus_generator_error(t, ph)], 1e-9 * s),
            CheckRow("torus_fp_pointwise_euclidean", "abs", [torus_fp_pointwise_error(t, ph)], 1e-9 * s),
            CheckRow("torus_d_hess", "abs", [d_hess_error(t, ph, TORUS)], 1e-9 * s),
            CheckRow("torus_ibp_exact", "abs", [torus_ibp_error()], 1e-9 * s),
            CheckRow("torus_fp_grid_ito", "order", torus_fp_grid_ladder(ladder, "ito"), band, ladder),
            CheckRow("torus_fp_grid_strat", "order", torus_fp_grid_ladder(ladder, "stratonovich"),
                     band, ladder),
            CheckRow("torus_heat_decay", "order", torus_heat_ladder(ladder), band, ladder),
        ]
    else:
        raise ValueError(f"unknown chart {chart!r}")
    return rows


def format_report(rows: Sequence[CheckRow]) -> str:
    return "\n".join(r.format() for r in rows)
