"""Acceptance criteria, one test each.

Every test prints a single ``[C<n>] PASS|FAIL`` line with the measured value,
the tolerance and the wall time, visible in ``pytest -v`` output.
"""
import time

import numpy as np
import pytest

from manifold_fp.bayes import (angle_between, mean_direction, particle_filter_oracle,
                               run_filter, LikelihoodSpec)
from manifold_fp.checks import run_identity_suite
from manifold_fp.config import (build_grid_from, build_spec, initial_density, initial_sampler,
                                parse_config, solver_config, standard_scenario)
from manifold_fp.fpe import (DensityGrid, SolverConfig, evolve, fp_rhs, fp_rhs_ito,
                             fp_rhs_pointwise, fp_rhs_strat, l1_distance)
from manifold_fp.generator import (adjoint_residual, apply_generator_ito, apply_generator_strat,
                                   brownian_spec, sphere_sde, strat_to_ito)
from manifold_fp.geometry import ChartPoint, Grid, ScalarField, observed_order
from manifold_fp.sde import density_from_ensemble, histogram, simulate_ensemble, two_sample_chi2

from oracles import cap_bump, heat_kernel_zonal

GENERIC = sphere_sde("stratonovich", 0.3, 0.2, 0.5, 0.8)
ORDER_BAND = (1.8, 2.2)


@pytest.fixture
def report(capsys):
    t0 = time.perf_counter()

    def emit(n, ok, text):
        with capsys.disabled():
            print(f"\n[C{n}] {'PASS' if ok else 'FAIL'} {text} ({time.perf_counter() - t0:.1f} s)")
        return ok
    return emit


def in_band(orders):
    return all(ORDER_BAND[0] <= o <= ORDER_BAND[1] for o in orders)


def test_c1_brownian_reduction(report):
    rng = np.random.default_rng(0)
    t, p = rng.uniform(0.05, np.pi - 0.05, 1000), rng.uniform(0, 2 * np.pi, 1000)
    err = 0.0
    for expr in ("cos(theta)", "sin(theta)*cos(phi)", "sin(theta)*sin(phi)"):
        f = ScalarField.from_expr(expr)
        err = max(err, np.abs(apply_generator_strat(brownian_spec("stratonovich"), f, t, p)
                              + f(t, p)).max(),
                  np.abs(apply_generator_ito(brownian_spec("ito"), f, t, p) + f(t, p)).max())
    assert report(1, err <= 1e-10, f"Brownian reduction max|Af + f| = {err:.2e} <= 1e-10")


def test_c2_ito_strat_consistency(report):
    rng = np.random.default_rng(1)
    t, p = rng.uniform(0.05, np.pi - 0.05, 1000), rng.uniform(0, 2 * np.pi, 1000)
    field = ScalarField.from_expr("1 + 0.5*cos(theta) + 0.25*sin(theta)*cos(phi)")
    ito = strat_to_ito(GENERIC)
    point = np.abs(fp_rhs_pointwise(GENERIC, field, t, p, "closed_form")
                   - fp_rhs_pointwise(ito, field, t, p, "closed_form")).max()
    g = Grid(64, 128)
    dens = DensityGrid.from_field(g, field)
    grid_an = np.abs(fp_rhs_strat(dens, GENERIC) - fp_rhs_ito(dens, ito)).max()
    gaps = []
    for n in (32, 64, 128):
        d = DensityGrid.from_field(Grid(n, 2 * n), field)
        diff = fp_rhs_strat(d, GENERIC, "grid") - fp_rhs_ito(d, ito, "grid")
        gaps.append(float(np.sum(np.abs(diff) * d.grid.weights)))
    orders = observed_order(gaps)
    ok = point <= 1e-9 and grid_an <= 1e-9 and in_band(orders)
    assert report(2, ok, f"pointwise {point:.2e}, analytic grid {grid_an:.2e} <= 1e-9; "
                  f"grid-mode gaps {['%.2e' % x for x in gaps]} orders "
                  f"{['%.2f' % o for o in orders]} in [1.8, 2.2]")


def test_c3_adjointness(report):
    res_pair = adjoint_residual(Grid(128, 256), GENERIC, ScalarField.from_expr("1 + 0.5*cos(theta)"),
                                ScalarField.from_expr("sin(theta)*cos(phi)"))
    p = ScalarField.from_expr("1 + 0.5*cos(theta) + 0.25*sin(theta)*cos(phi)")
    q = ScalarField.from_expr("sin(theta)**2 + sin(theta)*cos(phi) + cos(theta)")
    ladder = [adjoint_residual(Grid(n, 2 * n), GENERIC, p, q) for n in (32, 64, 128)]
    orders = observed_order(ladder)
    ok = res_pair <= 1e-4 and in_band(orders)
    assert report(3, ok, f"residual on 128x256 {res_pair:.2e} <= 1e-4 (phi-symmetric pair); "
                  f"non-symmetric pair {['%.3e' % x for x in ladder]} orders "
                  f"{['%.2f' % o for o in orders]} in [1.8, 2.2]")


def test_c4_heat_kernel_oracle(report):
    g = Grid(64, 128)
    # the sampled bump has grid mass 1.001; it is normalized like every initial density
    p0 = DensityGrid.from_field(g, lambda t, ph: cap_bump(t, 10.0))
    res = evolve(p0, brownian_spec("ito"), SolverConfig(t_final=2.0))
    t, _ = g.mesh()
    exact = heat_kernel_zonal(lambda x: cap_bump(x, 10.0), t, 2.0)
    err = l1_distance(res.final, DensityGrid(g, exact))
    assert report(4, err <= 1e-3, f"heat-kernel L1 at t=2 on 64x128 = {err:.2e} <= 1e-3")


def test_c5_mass_conservation(report):
    g = Grid(64, 128)
    p0 = DensityGrid.from_field(g, lambda t, ph: cap_bump(t, 5.0) * (1 + 0.5 * np.sin(t) * np.cos(ph)))
    res = evolve(p0, GENERIC, SolverConfig(t_final=1.0, dt=1e-3))
    drift = abs(res.final.mass - 1)
    vals = np.random.default_rng(2).uniform(0, 1, g.shape)
    flux = max(abs(np.sum(fp_rhs(DensityGrid(g, vals), spec, mode) * g.weights))
               for spec in (GENERIC, strat_to_ito(GENERIC)) for mode in ("analytic", "grid"))
    ok = res.stats.steps == 1000 and drift <= 1e-9 and flux <= 1e-12
    assert report(5, ok, f"{res.stats.steps} RK4 steps |mass-1| = {drift:.2e} <= 1e-9; "
                  f"flux sum {flux:.2e} <= 1e-12")


def _compare(cfg, n):
    cfg = cfg.model_copy(update={"mc": cfg.mc.model_copy(update={"n_particles": n})})
    grid = build_grid_from(cfg)
    ens = simulate_ensemble(n, build_spec(cfg), cfg.mc.dt, cfg.solver.t_final, cfg.seed,
                            initial_sampler(cfg, grid))
    return density_from_ensemble(ens, grid)


def test_c6_mc_vs_pde(report):
    """Expected to fail the L1 bound: see the noise-floor estimate in the message."""
    cfg = parse_config({"seed": 1, "sde": {"convention": "ito", "preset": "brownian"},
                        "solver": {"t_final": 1.0},
                        "initial": {"kind": "vmf", "kappa": 10.0, "mu": [0, 0, 1]},
                        "mc": {"n_particles": 100_000, "dt": 0.005}})
    grid = build_grid_from(cfg)
    pde = evolve(initial_density(cfg, grid), build_spec(cfg), solver_config(cfg)).final
    ns = (100_000, 400_000)
    l1 = [l1_distance(_compare(cfg, n), pde) for n in ns]
    slope = float(np.polyfit(np.log(ns), np.log(l1), 1)[0])
    prob = np.clip(pde.values * grid.weights, 0, 1)
    floor = float(np.sum(np.sqrt(2 * prob * (1 - prob) / (np.pi * ns[0]))))
    ok_l1, ok_slope = l1[0] <= 0.05, abs(slope + 0.5) <= 0.15
    report(6, ok_l1 and ok_slope,
           f"L1(N=1e5) = {l1[0]:.3f} <= 0.05 [{'ok' if ok_l1 else 'unattainable'}: "
           f"histogram noise floor {floor:.3f}]; L1(N=4e5) = {l1[1]:.3f}; "
           f"slope {slope:.3f} in -0.5 +/- 0.15 [{'ok' if ok_slope else 'fail'}]")
    assert ok_slope
    assert ok_l1


def test_c7_path_level_equivalence(report):
    n = 100_000
    init = ChartPoint(1.0, 1.0)
    a = simulate_ensemble(n, GENERIC, 0.01, 1.0, 101, init)
    b = simulate_ensemble(n, strat_to_ito(GENERIC), 0.01, 1.0, 202, init)
    bins = Grid(16, 32)
    stat, dof, pval = two_sample_chi2(histogram(bins, a.theta, a.phi),
                                      histogram(bins, b.theta, b.phi))
    assert report(7, pval > 0.01, f"two-sample chi2 = {stat:.1f} on {dof} dof, "
                  f"p = {pval:.3f} > 0.01 (16x32 bins)")


def test_c8_bayes_filter(report):
    cfg = standard_scenario(0)
    grid = build_grid_from(cfg)
    spec = build_spec(cfg)
    schedule = [(m.t, LikelihoodSpec.vmf(m.kappa, m.z)) for m in cfg.filter.schedule]
    states = run_filter(initial_density(cfg, grid), spec, schedule, solver_config(cfg))
    pf = particle_filter_oracle(cfg.filter.n_particles, spec, schedule, cfg.seed, grid,
                                initial_sampler(cfg, grid), cfg.filter.dt)
    l1 = [l1_distance(s.density, o.density) for s, o in zip(states, pf)]
    ang = [angle_between(mean_direction(s.density), o.mean_direction) for s, o in zip(states, pf)]
    ok = len(l1) == 3 and max(l1) <= 0.05 and max(ang) <= 2.0
    assert report(8, ok, f"posterior L1 {['%.3f' % x for x in l1]} <= 0.05; "
                  f"angle {['%.3f' % x for x in ang]} deg <= 2")


def test_c9_identity_suite(report):
    rows = run_identity_suite("sphere") + run_identity_suite("torus")
    failed = [r.name for r in rows if not r.passed]
    assert report(9, not failed, f"{len(rows) - len(failed)}/{len(rows)} identity rows pass"
                  + (f"; failed: {', '.join(failed)}" if failed else ""))
