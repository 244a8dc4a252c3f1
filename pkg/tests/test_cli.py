import json
from pathlib import Path

import numpy as np
import pytest

from manifold_fp.cli import main
from manifold_fp.config import (ExperimentConfig, build_spec, load_config, parse_config,
                                standard_scenario)
from manifold_fp.errors import ConfigError
from manifold_fp.fpe import l1_distance, read_grid_csv
from manifold_fp.generator import Convention

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = {
    "grid": {"n_theta": 16, "n_phi": 32},
    "sde": {"convention": "ito", "drift_theta": 0.3, "drift_phi": "0.2*sin(theta)",
            "sigma_theta": 0.5, "sigma_phi": 0.8},
    "solver": {"t_final": 0.3},
    "initial": {"kind": "vmf", "kappa": 5.0, "mu": [0.0, 0.6, 0.8]},
    "snapshots": [0.1],
    "mc": {"n_particles": 2000, "dt": 0.01, "band": 0.5},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(tmp_path, cmd, cfg, out="out", *extra):
    path = cfg if isinstance(cfg, Path) else write_cfg(tmp_path, cfg)
    return main([cmd, "--config", str(path), "--out", str(tmp_path / out), *extra])


def merged(**sections):
    cfg = json.loads(json.dumps(SMALL))
    cfg.update(sections)
    return cfg


@pytest.mark.parametrize("bad", [
    {"grid": {"n_theta": 4}},
    {"unknown": 1},
    {"sde": {"drift_theta": "cos(theta"}},
    {"filter": {"schedule": [{"t": 1.0, "kappa": 1.0, "z": [0, 0, 1.001]}]}},
    {"filter": {"schedule": [{"t": 1.0, "kappa": 1.0, "z": [0, 0, 1]},
                             {"t": 0.5, "kappa": 1.0, "z": [0, 0, 1]}]}},
    {"initial": {"kind": "vmf", "mu": [0, 0, 2]}},
    {"initial": {"kind": "csv"}},
])
def test_invalid_configs_exit_3(tmp_path, bad):
    with pytest.raises(ConfigError):
        parse_config(bad)
    assert run(tmp_path, "fpe", bad) == 3


def test_unreadable_config_exit_3(tmp_path):
    assert main(["fpe", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["fpe", "--config", str(bad), "--out", str(tmp_path)]) == 3
    assert run(tmp_path, "fpe", SMALL, "o", "--tolerance-scale", "-1") == 3


def test_cfl_violation_exit_3(tmp_path):
    cfg = merged(solver={"t_final": 0.3, "dt": 5.0})
    assert run(tmp_path, "fpe", cfg) == 3
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["status"] == \
        "invalid_config"


def test_build_spec_presets():
    brown = build_spec(ExperimentConfig())
    assert len(brown.sigmas) == 2 and brown.convention is Convention.ITO
    rot = build_spec(parse_config({"sde": {"preset": "rotation", "omega": 2.0}}))
    assert rot.drift.phi(np.pi / 2, 0.0) == pytest.approx(2.0)
    assert rot.drift.phi(np.pi / 6, 0.0) == pytest.approx(1.0)


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.json")):
        load_config(path)
    assert load_config(CONFIGS / "filter_standard.json") == standard_scenario(0)


def test_check_sphere_and_torus(tmp_path):
    assert run(tmp_path, "check", CONFIGS / "check_sphere.json", "s") == 0
    assert run(tmp_path, "check", CONFIGS / "check_torus.json", "t") == 0
    text = (tmp_path / "s" / "checks.csv").read_text()
    assert text.startswith("check,kind,values,orders,status\n")
    assert "fail" not in text


def test_check_tiny_tolerance_fails(tmp_path):
    code = run(tmp_path, "check", CONFIGS / "check_torus.json", "t", "--tolerance-scale", "1e-9")
    assert code == 2
    manifest = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert manifest["status"] == "tolerance_failure"


def test_fpe_outputs_and_manifest(tmp_path):
    assert run(tmp_path, "fpe", SMALL) == 0
    out = tmp_path / "out"
    names = {p.name for p in out.iterdir()}
    assert {"initial.csv", "density_t0.100000.csv", "final.csv", "manifest.json"} <= names
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "ok" and m["command"] == "fpe"
    assert parse_config(m["config"]) == parse_config(SMALL)
    trace = np.array(m["pde"]["mass_trace"])
    assert trace[0, 0] == 0 and trace[-1, 0] == pytest.approx(0.3)
    assert np.ptp(trace[:, 1]) <= 1e-12
    assert "clip_mass_trace" in m["pde"] and m["wall_time_s"] >= 0
    text = (out / "final.csv").read_text()
    assert "\r" not in text and len(text.splitlines()) == 1 + 16 * 32


def test_fpe_t0_output_equals_input(tmp_path):
    assert run(tmp_path, "fpe", merged(solver={"t_final": 0.0}, snapshots=[])) == 0
    out = tmp_path / "out"
    assert (out / "final.csv").read_bytes() == (out / "initial.csv").read_bytes()


def test_fpe_csv_initial_round_trip(tmp_path):
    assert run(tmp_path, "fpe", SMALL, "a") == 0
    cfg = merged(initial={"kind": "csv", "path": str(tmp_path / "a" / "final.csv")},
                 solver={"t_final": 0.0}, snapshots=[])
    assert run(tmp_path, "fpe", cfg, "b") == 0
    assert (tmp_path / "b" / "final.csv").read_bytes() == (tmp_path / "a" / "final.csv").read_bytes()


def test_outputs_are_deterministic(tmp_path):
    for out in ("a", "b"):
        assert run(tmp_path, "compare", SMALL, out, "--seed", "3") == 0
    for name in ("pde_final.csv", "mc_density.csv", "compare.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run(tmp_path, "mc", SMALL, "c", "--seed", "4") == 0
    assert (tmp_path / "c" / "mc_density.csv").read_bytes() != \
        (tmp_path / "a" / "mc_density.csv").read_bytes()
    m = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert m["config"]["seed"] == 4


def test_mc_outputs(tmp_path):
    assert run(tmp_path, "mc", SMALL) == 0
    lines = (tmp_path / "out" / "ensemble.csv").read_text().splitlines()
    assert lines[0] == "particle_id,theta,phi" and len(lines) == 2001
    p = read_grid_csv(tmp_path / "out" / "mc_density.csv")
    assert abs(p.mass - 1) <= 1e-12


def test_compare_static_point_mass(tmp_path):
    cfg = merged(sde={"preset": "none"}, initial={"kind": "point", "theta": 1.0, "phi": 2.0},
                 mc={"n_particles": 100, "dt": 0.1, "band": 1e-12})
    assert run(tmp_path, "compare", cfg) == 0
    report = np.genfromtxt(tmp_path / "out" / "compare.csv", delimiter=",", names=True)
    assert report["l1"] <= 1e-14


def test_compare_band_exit_code(tmp_path):
    cfg = merged(mc={"n_particles": 500, "dt": 0.01, "band": 1e-3})
    assert run(tmp_path, "compare", cfg) == 2


def test_filter_empty_schedule_matches_fpe(tmp_path):
    assert run(tmp_path, "fpe", SMALL, "f") == 0
    assert run(tmp_path, "filter", SMALL, "g") == 0
    a = read_grid_csv(tmp_path / "f" / "final.csv")
    b = read_grid_csv(tmp_path / "g" / "final.csv")
    assert l1_distance(a, b) <= 1e-12


def test_filter_flat_likelihoods_equal_prediction(tmp_path):
    sched = [{"t": 0.1, "kappa": 0.0, "z": [0, 0, 1]}, {"t": 0.3, "kappa": 0.0, "z": [1, 0, 0]}]
    cfg = merged(filter={"schedule": sched, "run_oracle": False})
    assert run(tmp_path, "filter", cfg, "g") == 0
    assert run(tmp_path, "fpe", merged(snapshots=[0.1]), "f") == 0
    pairs = [("posterior_grid_000.csv", "density_t0.100000.csv"),
             ("posterior_grid_001.csv", "final.csv")]
    for g, f in pairs:
        a = read_grid_csv(tmp_path / "g" / g)
        b = read_grid_csv(tmp_path / "f" / f).normalized()
        assert l1_distance(a, b) <= 1e-6
    head = (tmp_path / "g" / "filter.csv").read_text().splitlines()[0]
    assert head == "index,t"


def test_filter_with_oracle_small(tmp_path):
    sched = [{"t": 0.2, "kappa": 5.0, "z": [0, 0.6, 0.8]}]
    cfg = merged(filter={"schedule": sched, "n_particles": 20000, "budget_l1": 2.0,
                         "budget_deg": 10.0}, sde={"sigma_theta": 0.2, "sigma_phi": 0.2})
    assert run(tmp_path, "filter", cfg) == 0
    rows = np.genfromtxt(tmp_path / "out" / "filter.csv", delimiter=",", names=True)
    assert rows["angle_deg"] < 10 and rows["ess"] > 1000
    assert (tmp_path / "out" / "posterior_pf_000.csv").exists()


def test_filter_torus_rejected(tmp_path):
    cfg = {"chart": "torus", "grid": {"n_theta": 16, "n_phi": 16}, "initial": {"kind": "uniform"}}
    assert run(tmp_path, "filter", cfg) == 3


def test_weight_collapse_exit_4(tmp_path):
    sched = [{"t": 0.1, "kappa": 5000.0, "z": [0, 0, -1]}]
    cfg = merged(initial={"kind": "vmf", "kappa": 200.0, "mu": [0, 0, 1]},
                 sde={"sigma_theta": 0.01, "sigma_phi": 0.01},
                 filter={"schedule": sched, "n_particles": 1000})
    assert run(tmp_path, "filter", cfg) == 4


def test_strat_and_ito_configs_agree(tmp_path):
    assert run(tmp_path, "fpe", CONFIGS / "fpe_generic_strat.json", "s") == 0
    assert run(tmp_path, "fpe", CONFIGS / "fpe_generic_ito.json", "i") == 0
    a = read_grid_csv(tmp_path / "s" / "final.csv")
    b = read_grid_csv(tmp_path / "i" / "final.csv")
    assert l1_distance(a, b) <= 5e-4
