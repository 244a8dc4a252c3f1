"""Batch experiment runner: ``manifold-fp {check,fpe,mc,compare,filter}``.

Exit codes: 0 success, 2 tolerance failure, 3 invalid config, 4 numerical blow-up.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import LikelihoodSpec, angle_between, mean_direction, particle_filter_oracle, run_filter
from .checks import format_report, run_identity_suite
from .config import (ExperimentConfig, build_grid_from, build_spec, initial_density,
                     initial_sampler, load_config, solver_config)
from .errors import (CflViolation, ConfigError, DegenerateUpdate, NonFiniteDensity,
                     NonFiniteState, WeightCollapse)
from .fpe import DensityGrid, atomic_write_text, evolve, l1_distance, write_grid_csv
from .sde import density_from_ensemble, simulate_ensemble, write_ensemble_csv

log = logging.getLogger("manifold_fp")

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_BLOWUP = 0, 2, 3, 4
MASS_TRACE_EVERY = 10


class ToleranceFailure(Exception):
    pass


class Run:
    """Output directory plus the manifest accumulated during a command."""

    def __init__(self, command: str, cfg: ExperimentConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.info: dict = {}
        self._t0 = time.perf_counter()

    def grid_csv(self, name: str, p: DensityGrid) -> None:
        write_grid_csv(self.out / name, p)
        self.outputs.append(name)

    def text(self, name: str, text: str) -> None:
        atomic_write_text(self.out / name, text)
        self.outputs.append(name)

    def write_manifest(self, status: str) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            "status": status,
            "config": self.cfg.model_dump(mode="json"),
            "outputs": self.outputs,
            **self.info,
            "wall_time_s": time.perf_counter() - self._t0,
        }
        atomic_write_text(self.out / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in r))
    return "\n".join(lines) + "\n"


def _snapshot_name(prefix: str, t: float) -> str:
    return f"{prefix}_t{t:.6f}.csv"


def _tol(cfg: ExperimentConfig, value: float) -> float:
    return value * cfg.tolerance_scale


# -- commands -----------------------------------------------------------------------

def cmd_check(run: Run) -> None:
    c = run.cfg.check
    rows = run_identity_suite(run.cfg.chart, c.ladder, (c.order_min, c.order_max), c.n_points,
                              run.cfg.tolerance_scale, run.cfg.seed)
    print(format_report(rows))
    table = [[r.name, r.kind, ";".join(_fmt(v) for v in r.values),
              ";".join(_fmt(o) for o in r.orders), "pass" if r.passed else "fail"] for r in rows]
    run.text("checks.csv", _csv(["check", "kind", "values", "orders", "status"], table))
    run.info["checks"] = {r.name: r.passed for r in rows}
    failed = [r.name for r in rows if not r.passed]
    if failed:
        raise ToleranceFailure(f"failed checks: {', '.join(failed)}")


def _run_pde(run: Run):
    cfg = run.cfg
    grid = build_grid_from(cfg)
    spec = build_spec(cfg)
    p0 = initial_density(cfg, grid)
    res = evolve(p0, spec, solver_config(cfg), cfg.snapshots, record_every=MASS_TRACE_EVERY)
    run.info["pde"] = {
        "dt": res.dt,
        "steps": res.stats.steps,
        "clip_events": res.stats.clip_events,
        "mass_trace": [[t, m] for t, m in zip(res.times, res.mass)],
        "clip_mass_trace": [[t, c] for t, c in zip(res.times, res.clipped_mass)],
    }
    return grid, spec, p0, res


def cmd_fpe(run: Run) -> None:
    _, spec, p0, res = _run_pde(run)
    run.grid_csv("initial.csv", p0)
    for t, snap in sorted(res.snapshots.items()):
        run.grid_csv(_snapshot_name("density", t), snap)
    run.grid_csv("final.csv", res.final)
    dev = float(np.max(np.abs(res.final.values - 1 / res.final.grid.total_area)))
    run.info["pde"]["max_dev_from_uniform"] = dev
    print(f"t={run.cfg.solver.t_final:g} steps={res.stats.steps} dt={res.dt:.3e} "
          f"mass={res.final.mass:.15f} max|p-uniform|={dev:.3e}")


def _run_mc(run: Run, grid):
    cfg = run.cfg
    spec = build_spec(cfg)
    ens = simulate_ensemble(cfg.mc.n_particles, spec, cfg.mc.dt, cfg.solver.t_final, cfg.seed,
                            initial_sampler(cfg, grid))
    run.info["mc"] = {"n_particles": ens.n, "reflections": int(ens.reflections.sum()),
                      "subdivided": ens.subdivided}
    return ens


def cmd_mc(run: Run) -> None:
    grid = build_grid_from(run.cfg)
    ens = _run_mc(run, grid)
    write_ensemble_csv(run.out / "ensemble.csv", ens)
    run.outputs.append("ensemble.csv")
    run.grid_csv("mc_density.csv", density_from_ensemble(ens, grid))
    print(f"simulated {ens.n} particles to t={ens.t:g}")


def mc_noise_level(grid, p: DensityGrid, n: int) -> float:
    """Expected L1 between a histogram of ``n`` draws and its cell probabilities."""
    prob = np.clip(p.values * grid.weights, 0, 1)
    return float(np.sum(np.sqrt(2 * prob * (1 - prob) / (np.pi * n))))


def cmd_compare(run: Run) -> None:
    grid, _, _, res = _run_pde(run)
    ens = _run_mc(run, grid)
    mc = density_from_ensemble(ens, grid)
    diff = np.abs(mc.values - res.final.values)
    l1 = l1_distance(mc, res.final)
    report = {"l1": l1, "linf": float(diff.max()), "tv": 0.5 * l1,
              "mc_noise_l1": mc_noise_level(grid, res.final, ens.n),
              "band": _tol(run.cfg, run.cfg.mc.band)}
    run.grid_csv("pde_final.csv", res.final)
    run.grid_csv("mc_density.csv", mc)
    run.text("compare.csv", _csv(list(report), [list(report.values())]))
    run.info["compare"] = report
    print(" ".join(f"{k}={v:.4e}" for k, v in report.items()))
    if l1 > report["band"]:
        raise ToleranceFailure(f"L1 {l1:.4e} exceeds band {report['band']:.4e}")


def cmd_filter(run: Run) -> None:
    cfg = run.cfg
    if cfg.chart != "sphere":
        raise ConfigError("the filter needs the sphere chart")
    grid = build_grid_from(cfg)
    spec = build_spec(cfg)
    p0 = initial_density(cfg, grid)
    schedule = [(m.t, LikelihoodSpec.vmf(m.kappa, m.z)) for m in cfg.filter.schedule]
    solver = solver_config(cfg)
    states = run_filter(p0, spec, schedule, solver)
    run.info["filter"] = {"mass_factors": states[-1].mass_factors}
    if not schedule:
        run.grid_csv("final.csv", states[0].density)
        print(f"empty schedule: predicted to t={states[0].t:g}")
        return
    rows = []
    oracle = None
    if cfg.filter.run_oracle:
        oracle = particle_filter_oracle(cfg.filter.n_particles, spec, schedule, cfg.seed, grid,
                                        initial_sampler(cfg, grid), cfg.filter.dt)
    budget_l1, budget_deg = _tol(cfg, cfg.filter.budget_l1), _tol(cfg, cfg.filter.budget_deg)
    worst = 0.0
    for k, st in enumerate(states):
        run.grid_csv(f"posterior_grid_{k:03d}.csv", st.density)
        row = [k, st.t]
        if oracle is not None:
            snap = oracle[k]
            run.grid_csv(f"posterior_pf_{k:03d}.csv", snap.density)
            l1 = l1_distance(st.density, snap.density)
            ang = angle_between(mean_direction(st.density), snap.mean_direction)
            row += [l1, ang, snap.ess]
            worst = max(worst, l1 / budget_l1, ang / budget_deg)
            print(f"t={st.t:g} L1={l1:.4e} angle={ang:.3f}deg ess={snap.ess:.0f}")
        rows.append(row)
    header = ["index", "t"] + (["l1", "angle_deg", "ess"] if oracle is not None else [])
    run.text("filter.csv", _csv(header, rows))
    if worst > 1:
        raise ToleranceFailure("grid and particle filters disagree beyond budget")


COMMANDS = {"check": cmd_check, "fpe": cmd_fpe, "mc": cmd_mc, "compare": cmd_compare,
            "filter": cmd_filter}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manifold-fp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--tolerance-scale", type=float, default=None,
                       help="override the config tolerance_scale")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.tolerance_scale is not None:
            if args.tolerance_scale <= 0:
                raise ConfigError("tolerance scale must be positive")
            updates["tolerance_scale"] = args.tolerance_scale
        cfg = cfg.model_copy(update=updates)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(args.command, cfg, args.out)
    try:
        COMMANDS[args.command](run)
    except (ConfigError, CflViolation, ValueError) as exc:
        run.write_manifest("invalid_config")
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteDensity, NonFiniteState, DegenerateUpdate, WeightCollapse) as exc:
        run.write_manifest("blow_up")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ToleranceFailure as exc:
        run.write_manifest("tolerance_failure")
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    run.write_manifest("ok")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
