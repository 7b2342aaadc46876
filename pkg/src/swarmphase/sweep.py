"""Parameter-space sweeps: grids, connected initial conditions, seeded trials.

A sweep evaluates a grid of parameter points, running several independently
seeded trials per point and classifying each run. Trial seeds derive from
(base_seed, point_index, trial_index) alone, so results are reproducible
regardless of execution order or worker count. Trial records persist to a
JSON Lines file as they complete and finished (point, trial) pairs are
skipped on restart.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Controller, Microstate, SensorSpec, SimParams, r_disk_connected
from .dynamics import SimulationDivergedError, run
from .macrostate import Classification, StructureSet, classify_trajectory

DEG = math.pi / 180.0

# Spread multiplier in the initialization radius R0; sets how densely the
# swarm starts packed relative to the sensing range. 0.35 keeps the group
# interacting from the first seconds; wider spreads mostly fragment before
# any collective structure can form.
DEFAULT_INIT_SPREAD = 0.35

MAX_INIT_ATTEMPTS = 1000

AXIS_NAMES = ("N", "v", "omega", "gamma", "phi")

TRIALS_FORMAT = "swarmphase.trials"
CELLS_FORMAT = "swarmphase.cells"
FORMAT_VERSION = 1

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class InfeasibleInitError(Exception):
    """No valid initial condition found within the attempt budget."""

    def __init__(self, params: SimParams, attempts: int):
        self.params = params
        self.attempts = attempts
        super().__init__(
            f"no connected non-overlapping initialization found in "
            f"{attempts} attempts (n={params.n_agents}, "
            f"gamma={params.sensor.gamma}, body_radius={params.body_radius})"
        )


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def split_seed(base_seed: int, point_index: int, trial_index: int) -> int:
    """Derive one trial's seed from its grid coordinates.

    SplitMix64-style avalanche mixing; distinct (point, trial) pairs give
    distinct seeds over any realistic grid size, independent of the order
    trials actually execute in.
    """
    if base_seed < 0 or point_index < 0 or trial_index < 0:
        raise ValueError("seed components must be non-negative")
    z = (base_seed + _GOLDEN * (point_index + 1)) & _MASK64
    z = _mix64(z)
    z = (z + _GOLDEN * (trial_index + 1)) & _MASK64
    return _mix64(z)


def init_radius(params: SimParams, spread: float = DEFAULT_INIT_SPREAD) -> float:
    """Disk radius for initial placement.

    Base length is the larger of the sensing range and a body-packing
    length 2*body_radius*sqrt(N); the disk then scales with sqrt(N) times
    the spread factor so density stays roughly constant as N grows.
    """
    n = params.n_agents
    base = max(params.sensor.gamma, 2.0 * params.body_radius * math.sqrt(n))
    return base * spread * math.sqrt(n)


def init_connected(
    params: SimParams,
    seed: int,
    spread: float = DEFAULT_INIT_SPREAD,
    max_attempts: int = MAX_INIT_ATTEMPTS,
) -> Microstate:
    """Sample a valid initial microstate, deterministic in the seed.

    Positions are uniform in a disk of radius init_radius, headings uniform
    in [-pi, pi). Candidates are rejected until the r-disk graph at range
    gamma is connected and no two bodies overlap.
    """
    if spread <= 0:
        raise ValueError(f"init_spread: must be > 0, got {spread!r}")
    rng = np.random.default_rng(seed)
    n = params.n_agents
    r0 = init_radius(params, spread)
    for _ in range(max_attempts):
        # uniform over disk area, not radius
        rad = r0 * np.sqrt(rng.random(n))
        ang = rng.uniform(0.0, 2.0 * math.pi, n)
        theta = rng.uniform(-math.pi, math.pi, n)
        poses = np.stack(
            [rad * np.cos(ang), rad * np.sin(ang), theta], axis=1
        )
        state = Microstate(poses, 0.0)
        if n > 1 and params.body_radius > 0:
            pos = state.positions
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.hypot(diff[..., 0], diff[..., 1])
            np.fill_diagonal(dist, np.inf)
            if dist.min() < 2.0 * params.body_radius:
                continue
        if r_disk_connected(state, params.sensor.gamma):
            return state
    raise InfeasibleInitError(params, max_attempts)


@dataclass(frozen=True)
class ParamGrid:
    """A swept slice of parameter space.

    axes holds 1 or 2 (name, values) pairs with names drawn from
    N, v, omega, gamma, phi. Axis values are in user units: degrees for
    omega and phi, meters and m/s elsewhere. They are converted when the
    per-point SimParams is built.
    """

    base: SimParams
    axes: tuple
    trials_per_point: int = 10
    base_seed: int = 0
    init_spread: float = DEFAULT_INIT_SPREAD

    def __post_init__(self) -> None:
        if not 1 <= len(self.axes) <= 2:
            raise ValueError(f"axes: need 1 or 2 axes, got {len(self.axes)}")
        names = [name for name, _ in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"axes: duplicate axis names {names}")
        norm_axes = []
        for name, values in self.axes:
            if name not in AXIS_NAMES:
                raise ValueError(
                    f"axes: unknown axis {name!r}, expected one of "
                    f"{', '.join(AXIS_NAMES)}"
                )
            values = tuple(values)
            if not values:
                raise ValueError(f"axes: axis {name!r} has no values")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(
                    f"axes: axis {name!r} values must be strictly increasing"
                )
            norm_axes.append((name, values))
        object.__setattr__(self, "axes", tuple(norm_axes))
        if self.trials_per_point < 1:
            raise ValueError(
                f"trials: must be >= 1, got {self.trials_per_point}"
            )
        if not 0 <= self.base_seed <= _MASK64:
            raise ValueError(f"base_seed: out of u64 range: {self.base_seed}")
        if self.init_spread <= 0:
            raise ValueError(
                f"init_spread: must be > 0, got {self.init_spread!r}"
            )
        # surface invalid axis values now, not mid-sweep
        for coords in self.points():
            apply_point(self.base, coords)

    def points(self) -> list[dict]:
        """Grid points in canonical order: later axes vary fastest."""
        names = [name for name, _ in self.axes]
        value_lists = [values for _, values in self.axes]
        return [
            dict(zip(names, combo))
            for combo in itertools.product(*value_lists)
        ]

    def to_dict(self) -> dict:
        return {
            "base_params": self.base.to_dict(),
            "axes": [
                {"name": name, "values": list(values)}
                for name, values in self.axes
            ],
            "trials": self.trials_per_point,
            "base_seed": self.base_seed,
            "init_spread": self.init_spread,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def apply_point(base: SimParams, coords: dict) -> SimParams:
    """Build the SimParams for one grid point from user-unit coordinates."""
    updates: dict = {}
    sensor_updates: dict = {}
    for name, value in coords.items():
        if name == "N":
            if value != int(value):
                raise ValueError(f"axes: N value {value!r} is not an integer")
            updates["n_agents"] = int(value)
        elif name == "v":
            updates["speed"] = float(value)
        elif name == "omega":
            updates["turn_rate"] = float(value) * DEG
        elif name == "gamma":
            sensor_updates["gamma"] = float(value)
        elif name == "phi":
            sensor_updates["phi"] = float(value) * DEG
        else:
            raise ValueError(f"axes: unknown axis {name!r}")
    if sensor_updates:
        updates["sensor"] = dataclasses.replace(base.sensor, **sensor_updates)
    return dataclasses.replace(base, **updates)


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of a single seeded trial at one grid point."""

    point_index: int
    point_coords: dict
    trial_index: int
    seed: int
    classification: Classification
    wall_time: float
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "point_index": self.point_index,
            "point_coords": dict(self.point_coords),
            "trial_index": self.trial_index,
            "seed": self.seed,
            "classification": self.classification.to_dict(),
            "wall_time": self.wall_time,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrialRecord":
        return cls(
            point_index=int(obj["point_index"]),
            point_coords=dict(obj["point_coords"]),
            trial_index=int(obj["trial_index"]),
            seed=int(obj["seed"]),
            classification=Classification.from_dict(obj["classification"]),
            wall_time=float(obj["wall_time"]),
            error=obj.get("error"),
        )


@dataclass(frozen=True)
class PhaseCell:
    """Aggregated outcome of all trials at one grid point."""

    point_index: int
    point_coords: dict
    trials: int
    successes: int

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.trials:
            raise ValueError(
                f"successes {self.successes} outside [0, {self.trials}]"
            )

    def to_dict(self) -> dict:
        return {
            "point_index": self.point_index,
            "point_coords": dict(self.point_coords),
            "trials": self.trials,
            "successes": self.successes,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PhaseCell":
        return cls(
            point_index=int(obj["point_index"]),
            point_coords=dict(obj["point_coords"]),
            trials=int(obj["trials"]),
            successes=int(obj["successes"]),
        )


def run_trial(
    params: SimParams, seed: int, init_spread: float = DEFAULT_INIT_SPREAD
) -> tuple[Classification, Optional[str]]:
    """Run and classify one seeded trial.

    Anticipated per-trial failures (infeasible initialization, numerical
    divergence) come back as value 0 with an error string instead of
    raising, so sweeps cover hostile parameter corners without aborting.
    """
    try:
        init = init_connected(params, seed, spread=init_spread)
        traj = run(params, seed, init)
        return classify_trajectory(traj), None
    except (InfeasibleInitError, SimulationDivergedError) as exc:
        absent = Classification(
            behavior=params.controller,
            value=0,
            markers=None,
            thresholds=StructureSet(behavior=params.controller),
        )
        return absent, f"{type(exc).__name__}: {exc}"


def _run_unit(payload):
    """Worker-side execution of one (point, trial) unit."""
    point_index, trial_index, point_coords, params, seed, init_spread = payload
    start = time.perf_counter()
    classification, error = run_trial(params, seed, init_spread)
    return TrialRecord(
        point_index=point_index,
        point_coords=point_coords,
        trial_index=trial_index,
        seed=seed,
        classification=classification,
        wall_time=time.perf_counter() - start,
        error=error,
    )


def run_point(
    params: SimParams,
    trials: int,
    base_seed: int = 0,
    point_index: int = 0,
    point_coords: Optional[dict] = None,
    init_spread: float = DEFAULT_INIT_SPREAD,
) -> list[TrialRecord]:
    """Run all trials of a single parameter point, sequentially."""
    if trials < 1:
        raise ValueError(f"trials: must be >= 1, got {trials}")
    coords = dict(point_coords) if point_coords else {}
    records = []
    for trial_index in range(trials):
        seed = split_seed(base_seed, point_index, trial_index)
        records.append(
            _run_unit(
                (point_index, trial_index, coords, params, seed, init_spread)
            )
        )
    return records


def _write_trials_header(fh, grid: ParamGrid, config: Optional[dict]) -> None:
    header = {
        "format": TRIALS_FORMAT,
        "version": FORMAT_VERSION,
        "grid_sha": grid.fingerprint(),
        "config": config if config is not None else grid.to_dict(),
    }
    fh.write(json.dumps(header, sort_keys=True) + "\n")


def _read_trials_resume(path, grid: ParamGrid):
    """Parse an existing trials file for resumption.

    Returns (records, truncate_offset). A corrupt final line (interrupted
    write) is dropped by truncation; corruption anywhere else is an error.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.split(b"\n")
    offsets = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line) + 1
    try:
        header = json.loads(lines[0].decode())
        if header.get("format") != TRIALS_FORMAT:
            raise ValueError(f"not a {TRIALS_FORMAT} file")
    except ValueError as exc:
        raise ValueError(f"{path}: line 1: bad trials header: {exc}") from exc
    if header.get("grid_sha") != grid.fingerprint():
        raise ValueError(
            f"{path}: existing trials file was produced by a different grid "
            f"configuration; refusing to resume into it"
        )
    records = []
    truncate_offset = None
    body = [
        (idx, line) for idx, line in enumerate(lines[1:], start=2)
        if line.strip()
    ]
    for seq, (line_no, line) in enumerate(body):
        try:
            records.append(TrialRecord.from_dict(json.loads(line.decode())))
        except (ValueError, KeyError, TypeError) as exc:
            if seq == len(body) - 1:
                truncate_offset = offsets[line_no - 1]
                break
            raise ValueError(
                f"{path}: line {line_no}: corrupt trial record: {exc}"
            ) from exc
    return records, truncate_offset


def aggregate_cells(grid: ParamGrid, records: list[TrialRecord]) -> list[PhaseCell]:
    """Collapse trial records into one PhaseCell per grid point."""
    points = grid.points()
    by_point: dict[int, list[TrialRecord]] = {}
    for rec in records:
        by_point.setdefault(rec.point_index, []).append(rec)
    cells = []
    for point_index, coords in enumerate(points):
        recs = by_point.get(point_index, [])
        seen = {rec.trial_index for rec in recs}
        if seen != set(range(grid.trials_per_point)):
            raise ValueError(
                f"point {point_index}: incomplete trials {sorted(seen)}"
            )
        successes = sum(
            rec.classification.value == 1 for rec in recs
        )
        cells.append(
            PhaseCell(
                point_index=point_index,
                point_coords=coords,
                trials=grid.trials_per_point,
                successes=successes,
            )
        )
    return cells


def run_grid(
    grid: ParamGrid,
    trials_path,
    workers: int = 1,
    config: Optional[dict] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> list[PhaseCell]:
    """Evaluate every grid point, persisting trial records as they finish.

    Records are flushed to trials_path in canonical (point, trial) order no
    matter which worker finishes first, so the output file is identical for
    any worker count. Restarting with the same grid and path skips pairs
    already on disk.
    """
    if workers < 1:
        raise ValueError(f"workers: must be >= 1, got {workers}")
    points = grid.points()
    units = []
    for point_index, coords in enumerate(points):
        params = apply_point(grid.base, coords)
        for trial_index in range(grid.trials_per_point):
            seed = split_seed(grid.base_seed, point_index, trial_index)
            units.append(
                (point_index, trial_index, coords, params, seed,
                 grid.init_spread)
            )

    done: dict[tuple[int, int], TrialRecord] = {}
    fresh = not (os.path.exists(trials_path) and os.path.getsize(trials_path))
    if not fresh:
        records, truncate_offset = _read_trials_resume(trials_path, grid)
        if truncate_offset is not None:
            with open(trials_path, "r+b") as fh:
                fh.truncate(truncate_offset)
        done = {(r.point_index, r.trial_index): r for r in records}

    pending = [u for u in units if (u[0], u[1]) not in done]
    total = len(units)
    completed = total - len(pending)

    with open(trials_path, "a") as fh:
        if fresh:
            _write_trials_header(fh, grid, config)
            fh.flush()

        def emit(record: TrialRecord) -> None:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            fh.flush()

        if workers == 1 or not pending:
            for unit in pending:
                record = _run_unit(unit)
                done[(record.point_index, record.trial_index)] = record
                emit(record)
                completed += 1
                if progress:
                    progress(completed, total)
        else:
            # Flush strictly in canonical order: buffer out-of-order
            # completions until their predecessors are written.
            buffered: dict[tuple[int, int], TrialRecord] = {}
            queue = [(u[0], u[1]) for u in pending]
            cursor = 0
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(_run_unit, u) for u in pending}
                while futures:
                    finished, futures = wait(
                        futures, return_when=FIRST_COMPLETED
                    )
                    for fut in finished:
                        record = fut.result()
                        key = (record.point_index, record.trial_index)
                        buffered[key] = record
                        done[key] = record
                        completed += 1
                        if progress:
                            progress(completed, total)
                    while cursor < len(queue) and queue[cursor] in buffered:
                        emit(buffered.pop(queue[cursor]))
                        cursor += 1

    return aggregate_cells(grid, [done[(u[0], u[1])] for u in units])


def write_cells(
    path, grid: ParamGrid, cells: list[PhaseCell],
    config: Optional[dict] = None,
) -> None:
    """Persist aggregated phase cells with enough context to render them."""
    obj = {
        "format": CELLS_FORMAT,
        "version": FORMAT_VERSION,
        "behavior": grid.base.controller.value,
        "axes": [
            {"name": name, "values": list(values)}
            for name, values in grid.axes
        ],
        "trials_per_point": grid.trials_per_point,
        "base_seed": grid.base_seed,
        "init_spread": grid.init_spread,
        "base_params": grid.base.to_dict(),
        "config": config if config is not None else grid.to_dict(),
        "cells": [cell.to_dict() for cell in cells],
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_cells(path) -> dict:
    """Read and validate a cells JSON file."""
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("format") != CELLS_FORMAT:
        raise ValueError(f"{path}: not a {CELLS_FORMAT} file")
    for key in ("behavior", "axes", "trials_per_point", "cells"):
        if key not in obj:
            raise ValueError(f"{path}: missing key {key!r}")
    return obj


def parse_grid_config(obj: dict) -> ParamGrid:
    """Build a ParamGrid from a parsed JSON grid configuration.

    Expected shape: {base_params, axes, trials, base_seed, init_spread}
    with axes entries either {name, values} or {name, min, max, steps}.
    Angles in the config are degrees; conversion happens at this boundary.
    """
    if not isinstance(obj, dict):
        raise ValueError("grid config must be a JSON object")
    known = {"base_params", "axes", "trials", "base_seed", "init_spread"}
    for key in obj:
        if key not in known:
            raise ValueError(f"grid config: unknown key {key!r}")
    if "base_params" not in obj:
        raise ValueError("grid config: missing base_params")
    if "axes" not in obj or not obj["axes"]:
        raise ValueError("axes: grid config needs at least one axis")
    base = params_from_config(obj["base_params"])
    axes = []
    for entry in obj["axes"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ValueError(f"axes: bad axis entry {entry!r}")
        name = entry["name"]
        if "values" in entry:
            values = tuple(entry["values"])
        elif {"min", "max", "steps"} <= set(entry):
            steps = int(entry["steps"])
            if steps < 2:
                raise ValueError(
                    f"axes: axis {name!r} needs steps >= 2, got {steps}"
                )
            lo, hi = float(entry["min"]), float(entry["max"])
            values = tuple(
                lo + i * (hi - lo) / (steps - 1) for i in range(steps)
            )
        else:
            raise ValueError(
                f"axes: axis {name!r} needs either values or min/max/steps"
            )
        axes.append((name, values))
    return ParamGrid(
        base=base,
        axes=tuple(axes),
        trials_per_point=int(obj.get("trials", 10)),
        base_seed=int(obj.get("base_seed", 0)),
        init_spread=float(obj.get("init_spread", DEFAULT_INIT_SPREAD)),
    )


_PARAM_KEYS = {
    "controller", "n", "v", "omega_deg", "gamma", "phi_deg",
    "body_radius", "dt", "horizon", "eval_window",
}


def params_from_config(obj: dict) -> SimParams:
    """Build SimParams from a user-unit mapping (angles in degrees)."""
    if not isinstance(obj, dict):
        raise ValueError("base_params must be a JSON object")
    for key in obj:
        if key not in _PARAM_KEYS:
            raise ValueError(f"base_params: unknown key {key!r}")
    for key in ("controller", "n", "v", "omega_deg", "gamma", "phi_deg"):
        if key not in obj:
            raise ValueError(f"{key}: required parameter missing")
    try:
        controller = Controller(obj["controller"])
    except ValueError:
        raise ValueError(
            f"controller: expected milling or diffusion, "
            f"got {obj['controller']!r}"
        ) from None
    kwargs = {}
    for key, target in (
        ("body_radius", "body_radius"), ("dt", "dt"),
        ("horizon", "horizon"), ("eval_window", "eval_window"),
    ):
        if key in obj:
            kwargs[target] = float(obj[key])
    return SimParams(
        n_agents=int(obj["n"]),
        speed=float(obj["v"]),
        turn_rate=float(obj["omega_deg"]) * DEG,
        sensor=SensorSpec(
            gamma=float(obj["gamma"]), phi=float(obj["phi_deg"]) * DEG
        ),
        controller=controller,
        **kwargs,
    )
