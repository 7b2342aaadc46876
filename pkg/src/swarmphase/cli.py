"""Command-line interface: simulate | classify | sweep | render.

Exit codes form a stable scripting contract: 0 means the behavior was
observed (or the job completed, for sweep/render), 2 means the behavior
was absent, 1 means any error. Flags mirror config-file keys one to one;
an explicit flag always overrides the config file. Angles are degrees at
this boundary and radians internally.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional

from .core import Controller, SimParams
from .dynamics import (
    SimulationDivergedError,
    Trajectory,
    TrajectoryFormatError,
    load_trajectory,
    run,
    save_trajectory,
)
from .macrostate import StructureSet, classify_trajectory
from .markers import marker_series, save_marker_csv
from .phasediag import (
    PALETTES,
    PhaseDiagram,
    export_matrix,
    render,
)
from .sweep import (
    DEFAULT_INIT_SPREAD,
    InfeasibleInitError,
    init_connected,
    load_cells,
    parse_grid_config,
    params_from_config,
    run_grid,
    write_cells,
)

WORKERS_ENV = "SWARMPHASE_WORKERS"

_MASK64 = (1 << 64) - 1


class CliError(Exception):
    """User-facing CLI failure; message names the offending key or file."""


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; this CLI uses 2 for
    behavior-absent, so usage errors must surface as exceptions instead."""

    def error(self, message):
        raise CliError(message)


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise CliError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config: {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise CliError(f"config: {path} must hold a JSON object")
    return obj


def _merged(args, config: dict, key: str, default=None):
    """Effective value of one key: explicit flag, else config file, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in config:
        return config[key]
    return default


def _resolve_workers(args, config: dict) -> int:
    val = _merged(args, config, "workers")
    if val is None:
        env = os.environ.get(WORKERS_ENV)
        if env is not None:
            try:
                val = int(env)
            except ValueError:
                raise CliError(
                    f"workers: {WORKERS_ENV} must be an integer, got {env!r}"
                ) from None
    if val is None:
        return 1
    val = int(val)
    if val < 1:
        raise CliError(f"workers: must be >= 1, got {val}")
    return val


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise CliError(f"seed: must be a u64, got {seed}")
    return seed


def _threshold_overrides(args, config: dict) -> dict:
    overrides = {}
    for key in ("circliness_max", "speed_rel_tol", "nn_variance_max"):
        val = _merged(args, config, key)
        if val is not None:
            overrides[key] = float(val)
    return overrides


def _out_dir(args, config: dict) -> str:
    out = _merged(args, config, "out", ".")
    os.makedirs(out, exist_ok=True)
    return out


_PARAM_KEYS = (
    "controller", "n", "v", "omega_deg", "gamma", "phi_deg",
    "body_radius", "dt", "horizon", "eval_window",
)


def _params_from_args(args, config: dict) -> tuple[SimParams, dict]:
    """Build SimParams from merged flags/config; returns (params, echo)."""
    user: dict = {}
    for key in _PARAM_KEYS:
        val = _merged(args, config, key)
        if val is not None:
            user[key] = val
    params = params_from_config(user)
    return params, user


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    params, echo = _params_from_args(args, config)
    seed = _check_seed(_merged(args, config, "seed", 0))
    spread = float(_merged(args, config, "init_spread", DEFAULT_INIT_SPREAD))
    stride = _merged(args, config, "record_stride")
    overrides = _threshold_overrides(args, config)
    out = _out_dir(args, config)

    echo = dict(echo)
    echo["seed"] = seed
    echo["init_spread"] = spread
    if stride is not None:
        echo["record_stride"] = int(stride)
    echo.update(overrides)

    init = init_connected(params, seed, spread=spread)
    traj = run(params, seed, init,
               record_stride=None if stride is None else int(stride))

    traj_path = os.path.join(out, "trajectory.jsonl")
    save_trajectory(traj, traj_path, config=echo)
    if _merged(args, config, "markers_csv"):
        save_marker_csv(
            marker_series(list(traj.frames)), os.path.join(out, "markers.csv")
        )

    eta = StructureSet(behavior=params.controller, **overrides)
    result = classify_trajectory(traj, eta=eta)
    print(json.dumps(result.to_dict(), sort_keys=True, indent=1))
    print(f"trajectory written to {traj_path}", file=sys.stderr)
    return 0 if result.value == 1 else 2


def cmd_classify(args) -> int:
    config = _load_config(args.config)
    traj_path = _merged(args, config, "trajectory")
    if traj_path is None:
        raise CliError("trajectory: no trajectory file given")
    traj = load_trajectory(traj_path)

    window = _merged(args, config, "eval_window")
    if window is not None:
        params = dataclasses.replace(traj.params, eval_window=float(window))
        traj = Trajectory(params, traj.seed, traj.record_stride, traj.frames)

    behavior_name = _merged(args, config, "behavior")
    behavior = (
        traj.params.controller
        if behavior_name is None
        else Controller(behavior_name)
    )
    eta = StructureSet(
        behavior=behavior, **_threshold_overrides(args, config)
    )
    result = classify_trajectory(traj, eta=eta, v_set=traj.params.speed)
    print(json.dumps(result.to_dict(), sort_keys=True, indent=1))
    return 0 if result.value == 1 else 2


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    grid_path = _merged(args, config, "grid")
    if grid_path is None:
        raise CliError("grid: no grid config file given")
    try:
        with open(grid_path) as fh:
            grid_obj = json.load(fh)
    except OSError as exc:
        raise CliError(f"grid: cannot read {grid_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"grid: {grid_path} is not valid JSON: {exc}") from exc
    if not isinstance(grid_obj, dict):
        raise CliError(f"grid: {grid_path} must hold a JSON object")

    # execution keys may live in the grid file too; they are not part of
    # the grid identity and are excluded from the provenance echo
    grid_obj = dict(grid_obj)
    for key in ("workers", "out"):
        if key in grid_obj and key not in config:
            config[key] = grid_obj.pop(key)
        else:
            grid_obj.pop(key, None)

    grid = parse_grid_config(grid_obj)
    workers = _resolve_workers(args, config)
    out = _out_dir(args, config)
    trials_path = os.path.join(out, "trials.jsonl")
    cells_path = os.path.join(out, "cells.json")

    total_units = len(grid.points()) * grid.trials_per_point
    tick = max(1, total_units // 100)

    def progress(completed: int, total: int) -> None:
        if completed % tick == 0 or completed == total:
            print(f"sweep: {completed}/{total} trials", file=sys.stderr)

    cells = run_grid(
        grid, trials_path, workers=workers, config=grid_obj, progress=progress
    )
    write_cells(cells_path, grid, cells, config=grid_obj)
    print(
        f"sweep complete: {len(cells)} cells -> {cells_path}", file=sys.stderr
    )
    return 0


def cmd_render(args) -> int:
    config = _load_config(args.config)
    cells_path = _merged(args, config, "cells")
    if cells_path is None:
        raise CliError("cells: no cells file given")
    obj = load_cells(cells_path)
    if len(obj["axes"]) != 2:
        raise CliError(
            f"cells: render needs a 2-axis sweep, got {len(obj['axes'])} "
            f"axis; for 1-axis grids use the cells JSON / trials JSONL "
            f"directly instead of an image"
        )
    palette = _merged(args, config, "palette")
    if palette is not None and palette not in PALETTES:
        raise CliError(
            f"palette: unknown palette {palette!r}, expected one of "
            f"{', '.join(sorted(PALETTES))}"
        )
    diagram = PhaseDiagram.from_cells_obj(obj, palette=palette)
    echo = obj.get("config", {})

    out = _out_dir(args, config)
    svg_path = _merged(args, config, "svg") or os.path.join(out, "phase.svg")
    csv_path = _merged(args, config, "csv") or os.path.join(out, "phase.csv")
    render(diagram, svg_path, config=echo)
    export_matrix(diagram, csv_path)
    print(f"wrote {svg_path} and {csv_path}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="swarmphase",
        description=(
            "Deterministic binary-sensor swarm simulator with macrostate "
            "classification and phase-diagram sweeps."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory (default .)")

    def add_thresholds(p):
        p.add_argument("--circliness-max", type=float,
                       help="milling circliness threshold (default 0.01)")
        p.add_argument("--speed-rel-tol", type=float,
                       help="milling relative speed band (default 0.02)")
        p.add_argument("--nn-variance-max", type=float,
                       help="diffusion variance threshold (default 0.005)")

    sim = sub.add_parser("simulate", help="run one simulation and classify it")
    add_shared(sim)
    sim.add_argument("--controller", choices=[c.value for c in Controller])
    sim.add_argument("--n", type=int, help="number of agents")
    sim.add_argument("--v", type=float, help="forward speed, m/s")
    sim.add_argument("--omega-deg", type=float, help="turn rate, deg/s")
    sim.add_argument("--gamma", type=float, help="sensing range, m")
    sim.add_argument("--phi-deg", type=float, help="sensing cone, deg")
    sim.add_argument("--body-radius", type=float, help="agent body radius, m")
    sim.add_argument("--dt", type=float, help="integration step, s")
    sim.add_argument("--horizon", type=float, help="simulated duration, s")
    sim.add_argument("--eval-window", type=float,
                     help="classification window, s")
    sim.add_argument("--seed", type=int, help="RNG seed (default 0)")
    sim.add_argument("--record-stride", type=int,
                     help="steps between recorded frames")
    sim.add_argument("--init-spread", type=float,
                     help=f"initial density factor "
                          f"(default {DEFAULT_INIT_SPREAD})")
    sim.add_argument("--markers-csv", action="store_const", const=True,
                     help="also write the marker time series CSV")
    add_thresholds(sim)
    sim.set_defaults(func=cmd_simulate)

    cla = sub.add_parser("classify", help="classify a recorded trajectory")
    add_shared(cla)
    cla.add_argument("--trajectory", help="trajectory JSONL file")
    cla.add_argument("--behavior", choices=[c.value for c in Controller],
                     help="behavior to test (default: trajectory controller)")
    cla.add_argument("--eval-window", type=float,
                     help="classification window, s")
    add_thresholds(cla)
    cla.set_defaults(func=cmd_classify)

    swp = sub.add_parser("sweep", help="run a parameter grid sweep")
    add_shared(swp)
    swp.add_argument("--grid", help="grid config JSON file")
    swp.add_argument("--workers", type=int,
                     help=f"worker processes (default ${WORKERS_ENV} or 1)")
    swp.set_defaults(func=cmd_sweep)

    ren = sub.add_parser("render", help="render sweep cells to SVG and CSV")
    add_shared(ren)
    ren.add_argument("--cells", help="cells JSON file from sweep")
    ren.add_argument("--svg", help="output SVG path (default OUT/phase.svg)")
    ren.add_argument("--csv", help="output CSV path (default OUT/phase.csv)")
    ren.add_argument("--palette", help="palette name: " +
                     ", ".join(sorted(PALETTES)))
    ren.set_defaults(func=cmd_render)

    return parser


def entry(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrajectoryFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InfeasibleInitError, SimulationDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(entry())


if __name__ == "__main__":
    main()
