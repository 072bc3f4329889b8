"""``subsearch`` command line.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure,
4 I/O error.  Output goes to ``--out`` (default ``$SUBSEARCH_OUT`` or the
current directory).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from importlib import resources

import numpy as np

from . import _accel
from . import bayesfilter as bf
from . import curvefit, econ, kinematics, planner, probgrid
from ._io import atomic_text
from .config import ConfigError, load_config, mission_setup, override

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class NumericFailure(RuntimeError):
    pass


def _out(args, name):
    return os.path.join(args.out, name)


def _resolve(args):
    cfg = override(load_config(args.scenario), args.set)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _echo(args, cfg, cmd):
    text = f"# subsearch {cmd} backend={_accel.backend_name()}\n" + cfg.to_text()
    print(text, end="")
    atomic_text(_out(args, f"{cmd}_config.txt"), cfg.to_text())


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args):
    cfg = _resolve(args)
    if args.particles:
        cfg = cfg.replace(particles=args.particles)
    _echo(args, cfg, "simulate")
    e = kinematics.run_ensemble(cfg.kinematics(), cfg.particles, cfg.seed,
                                record_dt=args.record_s, threads=args.threads)
    kinematics.write_trajectories_csv(_out(args, "trajectories.csv"), e)
    kinematics.write_landings_csv(_out(args, "landings.csv"), e)
    s = kinematics.ensemble_summary(e, kinematics.summary_grid(e, cfg.summary_gs_m))
    start = cfg.lkp
    print(f"mean final position (m): {np.round(s.mean_final, 3).tolist()}")
    print(f"modal final position (m): {np.round(s.modal_final, 3).tolist()}")
    print(f"modal distance from start (m): {np.hypot(*(s.modal_final[:2] - start[:2])):.3f}")
    print(f"max horizontal offset (m): {s.max_offset:.3f}")
    print(f"grounded: {int(e.final_grounded.sum())}/{e.n}")


def _read_landings(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "x_m" not in rows[0]:
        raise ConfigError(f"{path}: not a landings CSV")
    return np.array([[float(r["x_m"]), float(r["y_m"]), float(r["z_m"])] for r in rows])


def cmd_prior(args):
    cfg = _resolve(args)
    _echo(args, cfg, "prior")
    grid = cfg.grid()
    sched = cfg.schedule()
    t = sched.t0 if args.t_min is None else args.t_min * 60.0
    if args.landings:
        final = _read_landings(args.landings)
    else:
        final = kinematics.run_ensemble(cfg.kinematics(), cfg.particles, cfg.seed,
                                        threads=args.threads).final_positions
    if args.kind in ("poisson", "both"):
        center = int(probgrid.cells_of_points(grid, final[:, :2].mean(axis=0))[0])
        params = probgrid.PoissonPriorParams.from_time(cfg.m_p, t, sched.t0, center,
                                                       cfg.max_radius())
        f = probgrid.build_poisson_prior(grid, params)
        probgrid.write_field_csv(_out(args, "prior_poisson.csv"), f)
        print(f"poisson prior: lambda={params.lam:.6f} center cell={center}")
    if args.kind in ("particles", "both"):
        f = probgrid.field_from_particles(grid, final)
        probgrid.write_field_csv(_out(args, "prior_particles.csv"), f)
        print(f"particle prior: modal cell={f.argmax()}")


def _read_field(path, grid):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "prob" not in rows[0]:
        raise ConfigError(f"{path}: not a field CSV")
    p = np.zeros(grid.n_cells)
    for r in rows:
        cell = int(r["cell"])
        if not 0 <= cell < grid.n_cells:
            raise ConfigError(f"{path}: cell {cell} outside the scenario grid")
        p[cell] = float(r["prob"])
    return probgrid.ProbabilityField.from_weights(grid, p)


def _mission_cfg(args, cfg):
    changes = {}
    if args.sonars:
        changes["sonars"] = args.sonars
    if args.replications:
        changes["replications"] = args.replications
    if args.policy:
        changes["policy"] = args.policy
    if args.target:
        changes["target"] = args.target
    if args.belief:
        changes["belief"] = args.belief
    if args.teleport:
        changes["teleport"] = True
    return cfg.replace(**changes) if changes else cfg


def cmd_plan(args):
    cfg = _mission_cfg(args, _resolve(args))
    _echo(args, cfg, "plan")
    prior = _read_field(args.prior, cfg.grid()) if args.prior else None
    prior, truth, belief = mission_setup(cfg, cfg.seed, args.threads, prior)
    res = planner.simulate_mission(prior, truth, cfg.make_sonars(), cfg.schedule(), cfg.policy,
                                   replications=cfg.replications, seed=cfg.seed,
                                   teleport=cfg.teleport, belief=belief, threads=args.threads)
    planner.write_curve_csv(_out(args, "curve.csv"), res.curve)
    planner.write_interval_csv(_out(args, "intervals.csv"), res.curve)
    planner.write_log_csv(_out(args, "mission_log.csv"), res.log)
    c = res.curve
    peak = int(np.argmax(c.per_interval))
    print(f"final cumulative success: {c.final:.4f} over {c.replications} replications")
    print(f"peak interval success: {c.per_interval[peak]:.4f} "
          f"in [{c.t_starts[peak] / 3600:.2f} h, {c.times[peak] / 3600:.2f} h]")


def cmd_sweep(args):
    cfg = _mission_cfg(args, _resolve(args))
    _echo(args, cfg, "sweep-sonars")
    prior, truth, belief = mission_setup(cfg, cfg.seed, args.threads)
    table = planner.sonar_count_sweep(range(args.k_min, args.k_max + 1), cfg.make_sonars, prior,
                                      truth, cfg.schedule(), cfg.policy,
                                      replications=cfg.replications, seed=cfg.seed,
                                      belief=belief, teleport=cfg.teleport, threads=args.threads)
    planner.write_sweep_csv(_out(args, "sonar_sweep.csv"), table)
    for k, p in table:
        print(f"sonars={k} success={100 * p:.2f}%")


def cmd_filter(args):
    cfg = _resolve(args).replace(target="moving", belief="filter", replications=1)
    if args.sonars:
        cfg = cfg.replace(sonars=args.sonars)
    _echo(args, cfg, "filter")
    prior, truth, belief = mission_setup(cfg, cfg.seed, args.threads)
    res = planner.simulate_mission(prior, truth, cfg.make_sonars(), cfg.schedule(), cfg.policy,
                                   replications=1, seed=cfg.seed, belief=belief,
                                   teleport=cfg.teleport, keep_posteriors=True)
    fields = res.log.posteriors[0]
    bf.write_estimates_csv(_out(args, "filter_estimates.csv"), fields)
    planner.write_log_csv(_out(args, "mission_log.csv"), res.log)
    t_det = res.log.detection_times[0]
    print(f"intervals filtered: {len(fields)}")
    print("target detected at t = " + (f"{t_det:.0f} s" if t_det is not None else "never"))


def _read_xy(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ConfigError(f"{path}: expected a two-column CSV with a header")
        rows = [r for r in reader if r]
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError(f"{path}: no data rows")
    return data[:, 0], data[:, 1]


def cmd_fit(args):
    x, y = _read_xy(args.input)
    if args.x_scale != 1.0:
        x = x * args.x_scale
    if args.budget:
        idx = curvefit.thin_points(x, y, args.budget)
        x, y = x[idx], y[idx]
    rep = curvefit.fit_boltzmann(x, y)
    text = rep.to_text()
    atomic_text(_out(args, "fit_report.txt"), text)
    print(text, end="")
    if args.strict and not rep.converged:
        raise NumericFailure("Boltzmann fit did not converge")


def cmd_econ(args):
    path = args.equipment or str(resources.files("subsearch") / "data" / "equipment_table2.csv")
    recs = econ.load_equipment_csv(path)
    report = econ.evaluate(recs)
    ranking = econ.rank_equipment(report)
    econ.write_report_csv(_out(args, "cer_report.csv"), ranking)
    for role, rows in ranking.items():
        m = report.matrices[role]
        print(f"[{role}] weights " + ", ".join(f"{n}={w:.4f}" for n, w in
                                                zip(econ.INDICATORS, m.weights)))
        for rank, r in enumerate(rows, start=1):
            print(f"  {rank}. {r.name}: E={r.benefit:.4f} C={r.cost_share:.4f} CER={r.cer:.3f}")


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=os.environ.get("SUBSEARCH_OUT", "."),
                        help="output directory (default: $SUBSEARCH_OUT or .)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; results do not depend on it")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", default="paper_default",
                      help="shipped scenario name or path to a key = value file")
    scen.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    scen.add_argument("--set", action="append", metavar="KEY=VALUE",
                      help="override one config key; repeatable")

    mission = argparse.ArgumentParser(add_help=False)
    mission.add_argument("--sonars", type=int, help="number of sonar assets")
    mission.add_argument("--replications", type=int, help="Monte Carlo replications")
    mission.add_argument("--policy", choices=planner.POLICIES, help="cell assignment policy")
    mission.add_argument("--target", choices=("static", "moving"), help="hidden-truth model")
    mission.add_argument("--belief", choices=("grid", "poisson", "filter"),
                         help="planner belief model")
    mission.add_argument("--teleport", action="store_true",
                         help="drop the per-interval travel-radius limit")

    p = argparse.ArgumentParser(prog="subsearch", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", parents=[common, scen], help="Monte Carlo trajectory ensemble")
    s.add_argument("--particles", type=int, help="ensemble size (overrides config)")
    s.add_argument("--record-s", type=float, default=60.0, help="trajectory sample spacing (s)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("prior", parents=[common, scen], help="prior probability fields")
    s.add_argument("--kind", choices=("poisson", "particles", "both"), default="both")
    s.add_argument("--landings", help="landings.csv from simulate (default: rerun ensemble)")
    s.add_argument("--t-min", type=float, help="elapsed minutes for the Poisson intensity")
    s.set_defaults(func=cmd_prior)

    s = sub.add_parser("plan", parents=[common, scen, mission], help="simulate search missions")
    s.add_argument("--prior", help="field CSV to plan on (static grid belief)")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("sweep-sonars", parents=[common, scen, mission],
                       help="success probability against sonar count")
    s.add_argument("--k-min", type=int, default=1)
    s.add_argument("--k-max", type=int, default=5)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("filter", parents=[common, scen],
                       help="one moving-target mission with particle-filter estimates")
    s.add_argument("--sonars", type=int, help="number of sonar assets")
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("fit", parents=[common], help="fit a Boltzmann curve to x,y data")
    s.add_argument("--input", required=True, help="CSV whose first two columns are x,y")
    s.add_argument("--budget", type=int, help="thin to this many points before fitting")
    s.add_argument("--x-scale", type=float, default=1.0, help="multiply x by this (e.g. 1/3600)")
    s.add_argument("--strict", action="store_true", help="exit 3 if the fit does not converge")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("econ", parents=[common], help="entropy-weight CER ranking")
    s.add_argument("--equipment", help="equipment CSV (default: shipped Table 2 data)")
    s.set_defaults(func=cmd_econ)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (ConfigError, probgrid.OutOfDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, probgrid.EmptyFieldError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
