"""Command line entry point: ``stemtune {grid,optimize,replay,cost,select}``.

Exit codes: 0 success, 1 verification mismatch, 2 invalid configuration or
input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import landscape, mobo, pareto, trajectory
from .errors import InvalidArgument, NumericalError, SchemaError

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
DEFAULT_OUT = "runs/latest"


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help=f"output directory (default {DEFAULT_OUT})")
    common.add_argument("--profile", choices=sorted(config_mod.PROFILES),
                        help="latency profile: desk (0 s) or bench (4 s recorded per acquire)")
    common.add_argument("--no-noise", action="store_true", help="disable both noise layers")
    common.add_argument("--space", choices=sorted(config_mod.PRESETS),
                        help="active aberration coefficients")
    common.add_argument("--grid-size", type=int, help="probe/image grid size (power of two)")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="stemtune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", parents=[common], help="evaluate rewards on a coefficient grid")
    p.add_argument("--levels", type=int, help="levels per axis (2-9)")
    p.add_argument("--max-evals", type=int, help="refuse grids larger than this")

    p = sub.add_parser("optimize", parents=[common], help="run MOBO against the virtual scope")
    p.add_argument("--iterations", type=int, help="number of BO iterations")
    p.add_argument("--n-init", type=int, help="initial design size (default 2d+2)")

    for name, text in (("replay", "verify a run directory"), ("cost", "timing breakdown of a run")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("run_dir", nargs="?")

    p = sub.add_parser("select", parents=[common], help="rank Pareto-front members")
    p.add_argument("run_dir", nargs="?")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--weights", help="comma-separated weights over (contrast, fft)")
    group.add_argument("--index", type=int, help="row index in pareto.csv")
    return parser


def resolve_config(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.profile:
        changes["profile"] = args.profile
        changes["latency"] = config_mod.PROFILES[args.profile]
    if args.no_noise:
        changes["noise"] = dataclasses.replace(cfg.noise, enabled=False)
    if args.space:
        changes["space"] = dataclasses.replace(cfg.space, preset=args.space)
    if args.grid_size:
        changes["optics"] = dataclasses.replace(cfg.optics, grid_size=args.grid_size)
    mobo_changes = {}
    if getattr(args, "iterations", None) is not None:
        mobo_changes["n_iterations"] = args.iterations
    if getattr(args, "n_init", None) is not None:
        mobo_changes["n_init"] = args.n_init
    if mobo_changes:
        changes["mobo"] = dataclasses.replace(cfg.mobo, **mobo_changes)
    grid_changes = {}
    if getattr(args, "levels", None) is not None:
        grid_changes["levels"] = args.levels
    if getattr(args, "max_evals", None) is not None:
        grid_changes["max_evaluations"] = args.max_evals
    if grid_changes:
        changes["grid"] = dataclasses.replace(cfg.grid, **grid_changes)
    return dataclasses.replace(cfg, **changes)


def _run_dir(args):
    return Path(getattr(args, "run_dir", None) or args.out or DEFAULT_OUT)


def _fmt(values):
    return " ".join(f"{v:+.4f}" for v in values)


def cmd_grid(args):
    cfg = resolve_config(args)
    out = Path(args.out or DEFAULT_OUT)
    space = cfg.search_space()
    levels = cfg.grid.levels
    landscape.grid_points(space, levels, cfg.grid.max_evaluations)  # refuse before writing
    config_mod.write_snapshot(cfg, out)
    X, Y = landscape.evaluate_grid(
        cfg.scope(), space, levels, noise=cfg.noise.enabled,
        max_evaluations=cfg.grid.max_evaluations,
    )
    front = pareto.pareto_front(Y)
    on_front = np.zeros(len(Y), dtype=bool)
    on_front[front] = True
    with open(out / "landscape.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *space.names, "contrast", "fft"])
        for i, (x, y) in enumerate(zip(X, Y)):
            writer.writerow([i, *(repr(float(v)) for v in x), repr(float(y[0])), repr(float(y[1]))])
    trajectory.write_pareto_csv(out / "pareto.csv", space.names, X, Y, on_front)
    ref = pareto.reference_point(Y)
    print(f"evaluated {len(X)} grid states ({levels} levels x {space.dim} axes: {', '.join(space.names)})")
    print(f"pareto front: {len(front)} states; hypervolume {pareto.hypervolume(Y[front], ref):.6g} "
          f"(reference {ref[0]:.6g}, {ref[1]:.6g})")
    zero = np.flatnonzero(np.all(X == 0.0, axis=1))
    if zero.size:
        i = zero[0]
        print(f"zero state: index {i}, contrast {Y[i, 0]:.6g}, fft {Y[i, 1]:.6g}, "
              f"on front: {bool(on_front[i])}")
    print(f"wrote {out / 'landscape.csv'} and {out / 'pareto.csv'}")
    return EXIT_OK


def cmd_optimize(args):
    cfg = resolve_config(args)
    out = Path(args.out or DEFAULT_OUT)
    if (out / trajectory.LOG_NAME).exists():
        raise InvalidArgument(f"{out / trajectory.LOG_NAME} already exists; choose another --out")
    space = cfg.search_space()
    mcfg = cfg.mobo_config()
    scope = cfg.scope()
    config_mod.write_snapshot(cfg, out)
    records = []
    archive = None
    try:
        with trajectory.TrajectoryWriter(out) as writer:
            archive, records = mobo.run_mobo(scope, space, mcfg, log_writer=writer)
    finally:
        logged = trajectory.read_log(out / trajectory.LOG_NAME)
        trajectory.write_hypervolume_csv(out / "hypervolume.csv", logged)
        if archive is None:
            archive = pareto.ParetoArchive()
            for rec in logged:
                if rec.error is None:
                    archive.add([rec.action[n] for n in rec.active],
                                [rec.rewards["contrast"], rec.rewards["fft"]])
        trajectory.write_pareto_csv(out / "pareto.csv", space.names, archive.X, archive.Y,
                                    archive.on_front())
        trajectory.cost_report(out / trajectory.LOG_NAME)

    print(f"run directory: {out}")
    print(f"{len(records)} evaluations ({mcfg.n_init} initial + {mcfg.n_iterations} BO) "
          f"over {', '.join(space.names)}")
    print(f"final hypervolume {archive.hv:.6g} (reference {archive.ref[0]:.6g}, {archive.ref[1]:.6g})")
    print("pareto front:")
    for i in archive.front:
        print(f"  [{i:3d}] x = {_fmt(archive.X[i])} nm  contrast {archive.Y[i, 0]:.5f}  "
              f"fft {archive.Y[i, 1]:.5f}")
    return EXIT_OK


def _existing_log(args):
    run_dir = _run_dir(args)
    if not (run_dir / trajectory.LOG_NAME).is_file():
        raise InvalidArgument(f"no {trajectory.LOG_NAME} in {run_dir}")
    return run_dir


def cmd_replay(args):
    report = trajectory.replay_verify(_existing_log(args))
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_MISMATCH


def cmd_cost(args):
    run_dir = _existing_log(args)
    report = trajectory.cost_report(run_dir)
    for line in report.summary_lines():
        print(line)
    print(f"wrote {run_dir / 'cost.csv'}")
    return EXIT_OK


def select_front(names, X, Y, on_front, weights=None, index=None):
    """Front members ranked by weighted min-max-normalized objectives.

    Returns a list of (row index, score); with ``index`` only that row.
    """
    if index is not None:
        if not 0 <= index < len(Y):
            raise InvalidArgument(f"index {index} outside 0..{len(Y) - 1}")
        return [(index, float("nan"))]
    weights = np.asarray(weights if weights is not None else (0.5, 0.5), dtype=float)
    if weights.shape != (2,):
        raise InvalidArgument("weights must have exactly two components")
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    norm = (Y - lo) / np.where(hi > lo, hi - lo, 1.0)
    scores = norm @ weights
    members = np.flatnonzero(on_front)
    order = sorted(members, key=lambda i: (-scores[i], i))
    return [(int(i), float(scores[i])) for i in order]


def cmd_select(args):
    run_dir = _run_dir(args)
    path = run_dir / "pareto.csv"
    if not path.exists():
        raise InvalidArgument(f"{path} not found")
    names, X, Y, on_front = trajectory.read_pareto_csv(path)
    if not on_front.any():
        print("empty Pareto front: nothing to select")
        return EXIT_CONFIG
    weights = None
    if args.weights:
        try:
            weights = [float(w) for w in args.weights.split(",")]
        except ValueError as exc:
            raise InvalidArgument(f"bad --weights {args.weights!r}") from exc
    ranked = select_front(names, X, Y, on_front, weights, args.index)
    print(f"{'rank':>4} {'index':>5}  {'score':>7}  {'contrast':>9} {'fft':>9}  " + " ".join(names))
    for rank, (i, score) in enumerate(ranked, 1):
        coeffs = " ".join(f"{v:+.4f}" for v in X[i])
        print(f"{rank:>4} {i:>5}  {score:7.4f}  {Y[i, 0]:9.5f} {Y[i, 1]:9.5f}  {coeffs}")
    return EXIT_OK


COMMANDS = {
    "grid": cmd_grid,
    "optimize": cmd_optimize,
    "replay": cmd_replay,
    "cost": cmd_cost,
    "select": cmd_select,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidArgument, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
