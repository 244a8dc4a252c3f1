import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_fp.bayes import (FilterState, LikelihoodSpec, angle_between, entropy,
                               mean_direction, particle_filter_oracle, predict,
                               resultant_length, run_filter, sample_vmf, systematic_resample,
                               update, vmf_density, vmf_sampler)
from manifold_fp.errors import DegenerateUpdate, WeightCollapse
from manifold_fp.fpe import DensityGrid, SolverConfig, build_grid, evolve, l1_distance
from manifold_fp.generator import SdeSpec, brownian_spec, sphere_sde
from manifold_fp.geometry import SPHERE, ChartPoint, FieldSpec, Grid, ScalarField, observed_order
from manifold_fp.sde import density_from_ensemble, simulate_ensemble

G = Grid(32, 64)
Z1 = np.array([0.3, 0.4, np.sqrt(0.75)])
Z2 = np.array([-0.6, 0.0, 0.8])
GENERIC_ITO = sphere_sde("ito", 0.3, 0.2, 0.5, 0.8)


def vmf_grid(grid, kappa, mu):
    t, p = grid.mesh()
    return DensityGrid(grid, vmf_density(t, p, kappa, mu))


def prior():
    t, p = G.mesh()
    return DensityGrid(G, (1 + 0.5 * np.cos(t) + 0.3 * np.sin(t) * np.sin(p))).normalized()


def test_update_is_bayes_rule():
    p = prior()
    lik = LikelihoodSpec.vmf(4.0, Z1)
    post = update(FilterState(p), lik).density
    raw = p.values * lik.on_grid(G)
    want = raw / np.sum(raw * G.weights)
    assert np.abs(post.values - want).max() <= 1e-14 * want.max()
    assert abs(post.mass - 1) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 20), st.floats(0, 20))
def test_same_time_updates_commute(k1, k2):
    s = FilterState(prior())
    a, b = LikelihoodSpec.vmf(k1, Z1), LikelihoodSpec.vmf(k2, Z2)
    x = update(update(s, a), b).density.values
    y = update(update(s, b), a).density.values
    assert np.abs(x - y).max() <= 1e-12 * x.max()
    assert abs(update(update(s, a), b).mass - 1) <= 1e-9


def test_two_updates_equal_doubled_kappa():
    s = FilterState(prior())
    twice = update(update(s, LikelihoodSpec.vmf(5.0, Z1)), LikelihoodSpec.vmf(5.0, Z1))
    once = update(s, LikelihoodSpec.vmf(10.0, Z1))
    assert np.abs(twice.density.values - once.density.values).max() <= 1e-12


def test_flat_likelihood_keeps_prior():
    p = prior()
    post = update(FilterState(p), LikelihoodSpec.flat()).density
    assert np.abs(post.values - p.values).max() <= 1e-15
    post = update(FilterState(p), LikelihoodSpec.from_grid(np.full(G.shape, 3.0))).density
    assert np.abs(post.values - p.values).max() <= 1e-15


def test_uniform_prior_posterior_is_likelihood():
    g = Grid(64, 128)
    lik = LikelihoodSpec.vmf(8.0, Z1)
    post = update(FilterState(build_grid(64, 128)), lik).density
    ratio = post.values / lik.on_grid(g)
    assert np.ptp(ratio) <= 1e-12 * ratio.mean()
    j, k = np.unravel_index(np.argmax(post.values), g.shape)
    th, ph = SPHERE.coordinates(Z1)
    assert abs(g.theta[j] - th) <= g.dtheta and abs(g.phi[k] - ph) <= g.dphi
    assert angle_between(mean_direction(post), Z1) < 0.1


def test_degenerate_update():
    p = DensityGrid(G, np.zeros(G.shape))
    with pytest.raises(DegenerateUpdate):
        update(FilterState(p), LikelihoodSpec.vmf(1.0, Z1))
    t, _ = G.mesh()
    cap = DensityGrid(G, np.where(t < 0.2, 1.0, 0.0))
    with pytest.raises(DegenerateUpdate):
        update(FilterState(cap), LikelihoodSpec.vmf(1e4, [0, 0, -1]))


def test_likelihood_validation():
    with pytest.raises(ValueError):
        LikelihoodSpec.vmf(1.0, [0, 0, 0])
    with pytest.raises(ValueError):
        LikelihoodSpec.from_grid(np.ones((4, 4)))(np.array([1.0]), np.array([1.0]), G)


def test_predict_zero_is_identity():
    s = FilterState(prior(), 0.3)
    out = predict(s, GENERIC_ITO, 0.0)
    assert np.array_equal(out.density.values, s.density.values) and out.t == 0.3
    with pytest.raises(ValueError):
        predict(s, GENERIC_ITO, -1.0)


def test_predict_mass_and_entropy_growth():
    s = FilterState(vmf_grid(G, 20.0, Z1).normalized())
    ent = [entropy(s.density)]
    for _ in range(4):
        s = predict(s, brownian_spec("ito"), 0.25)
        assert abs(s.mass - 1) <= 1e-12
        assert abs(s.mass_factors[-1] - 1) <= 1e-9
        ent.append(entropy(s.density))
    assert all(b > a for a, b in zip(ent, ent[1:]))
    assert ent[-1] < np.log(4 * np.pi)
    assert s.t == pytest.approx(1.0)


def rotation(omega, rigid):
    xp = ScalarField.from_expr(f"{omega}*sin(theta)") if rigid else omega
    return SdeSpec("ito", FieldSpec(0.0, xp), ())


def test_rigid_rotation_shifts_phi():
    omega, t_end = 0.7, 1.0
    errs = []
    for n in (16, 32, 64):
        g = Grid(n, 2 * n)
        th, ph = g.mesh()
        f = lambda a, b: 1 + 0.5 * np.sin(a) * np.cos(b) + 0.3 * np.sin(a) ** 2 * np.sin(2 * b)
        s = predict(FilterState(DensityGrid(g, f(th, ph)).normalized()), rotation(omega, True), t_end)
        want = DensityGrid(g, f(th, ph - omega * t_end)).normalized()
        errs.append(l1_distance(s.density, want))
    assert errs[-1] < 1e-3
    assert all(1.8 <= o <= 2.3 for o in observed_order(errs))


def test_frame_rotation_shifts_rows():
    # X = omega E_phi moves row theta by omega t / sin(theta)
    omega, t_end = 0.2, 0.5
    errs = []
    for n in (16, 32, 64):
        g = Grid(n, 2 * n)
        th, ph = g.mesh()
        f = lambda a, b: 1 + 0.5 * np.sin(a) ** 3 * np.cos(b)
        s = predict(FilterState(DensityGrid(g, f(th, ph)).normalized()), rotation(omega, False), t_end)
        want = DensityGrid(g, f(th, ph - omega * t_end / np.sin(th))).normalized()
        errs.append(l1_distance(s.density, want))
    assert errs[-1] < 1e-2
    assert all(o >= 1.8 for o in observed_order(errs))


def test_run_filter_empty_schedule_is_prediction():
    p = prior()
    cfg = SolverConfig(t_final=0.4)
    out = run_filter(p, GENERIC_ITO, [], cfg)
    assert len(out) == 1
    assert np.array_equal(out[0].density.values, predict(FilterState(p), GENERIC_ITO, 0.4, cfg)
                          .density.values)


def test_run_filter_rejects_unordered_schedule():
    lik = LikelihoodSpec.vmf(1.0, Z1)
    with pytest.raises(ValueError):
        run_filter(prior(), GENERIC_ITO, [(0.5, lik), (0.5, lik)])
    with pytest.raises(ValueError):
        run_filter(prior(), GENERIC_ITO, [(0.5, lik), (0.2, lik)])


def test_flat_measurements_equal_prediction():
    p = prior()
    cfg = SolverConfig(t_final=0.6)
    flat = LikelihoodSpec.flat()
    out = run_filter(p, GENERIC_ITO, [(0.3, flat), (0.6, flat)], cfg)
    ref = evolve(evolve(p, GENERIC_ITO, SolverConfig(t_final=0.3)).final, GENERIC_ITO,
                 SolverConfig(t_final=0.3)).final
    assert l1_distance(out[-1].density, ref.normalized()) <= 1e-12


def static_spec(sigma=0.1):
    return sphere_sde("ito", 0.0, 0.0, sigma, sigma)


def five_measurements():
    rng = np.random.default_rng(3)
    truth = SPHERE.embed(1.0, 1.0)
    out = []
    for i in range(5):
        z = truth + 0.05 * rng.standard_normal(3)
        out.append((0.3 * (i + 1), LikelihoodSpec.vmf(10.0, z)))
    return truth, out


def test_resultant_grows_for_static_truth():
    truth, schedule = five_measurements()
    out = run_filter(build_grid(32, 64), static_spec(0.05), schedule)
    r = [resultant_length(s.density) for s in out]
    assert all(b >= a for a, b in zip(r, r[1:]))
    assert angle_between(mean_direction(out[-1].density), truth) < 10


def test_grid_filter_matches_particle_filter():
    g = Grid(64, 128)
    truth, schedule = five_measurements()
    mu = truth
    p0 = vmf_grid(g, 30.0, mu)
    grid_post = run_filter(p0, static_spec(0.15), schedule)
    pf = particle_filter_oracle(100_000, static_spec(0.15), schedule, 4, g, vmf_sampler(30.0, mu))
    assert len(pf) == len(grid_post) == 5
    for a, b in zip(grid_post, pf):
        assert angle_between(mean_direction(a.density), b.mean_direction) < 2.0
        assert abs(b.density.mass - 1) <= 1e-9
    assert pf[-1].ess > 1000


def test_particle_filter_flat_is_simulation():
    flat = LikelihoodSpec.flat()
    init = ChartPoint(1.0, 2.0)
    pf = particle_filter_oracle(2000, GENERIC_ITO, [(0.5, flat)], 9, G, init)
    ens = simulate_ensemble(2000, GENERIC_ITO, 1e-2, 0.5, 9, init)
    assert np.array_equal(pf[0].theta, ens.theta) and np.array_equal(pf[0].phi, ens.phi)
    assert np.allclose(pf[0].density.values, density_from_ensemble(ens, G).values, rtol=1e-12)
    assert pf[0].ess == pytest.approx(2000)


def test_particle_filter_deterministic_spike():
    spec = sphere_sde("ito", 0.0, 0.3)
    pf = particle_filter_oracle(500, spec, [(0.5, LikelihoodSpec.vmf(3.0, Z1))], 0, G,
                                ChartPoint(1.2, 0.4))
    assert np.all(pf[0].theta == pf[0].theta[0]) and np.all(pf[0].phi == pf[0].phi[0])
    assert np.count_nonzero(pf[0].density.values) == 1


def test_particle_filter_weight_collapse():
    with pytest.raises(WeightCollapse):
        particle_filter_oracle(1000, static_spec(0.01), [(0.1, LikelihoodSpec.vmf(5000.0, [0, 0, -1]))],
                               0, G, vmf_sampler(50.0, [0, 0, 1]))


def test_vmf_sampler_moments():
    mu = unit = Z1 / np.linalg.norm(Z1)
    kappa = 8.0
    t, p = sample_vmf(np.random.default_rng(0), 200_000, kappa, unit)
    x = SPHERE.embed(t, p)
    mean_w = 1 / np.tanh(kappa) - 1 / kappa
    assert np.allclose(x.mean(axis=0), mean_w * mu, atol=5e-3)
    t0, _ = sample_vmf(np.random.default_rng(1), 10, kappa, [0, 0, 1])
    assert np.all(t0 < np.pi)


def test_vmf_density_normalized():
    for kappa in (0.0, 1.0, 50.0):
        assert vmf_grid(Grid(128, 256), kappa, Z2).mass == pytest.approx(1, abs=2e-3)


def test_systematic_resample():
    w = np.array([0.0, 0.5, 0.25, 0.25])
    idx = systematic_resample(np.random.default_rng(0), w)
    assert np.bincount(idx, minlength=4).tolist() == [0, 2, 1, 1]
