"""Deterministic binary-sensor swarm simulator and phase-diagram toolkit.

Unicycle agents with a single cone-of-view proximity bit, two reactive
controllers (milling and diffusion), information markers measurable by an
external observer, macrostate classification, seeded parameter sweeps, and
frequency-colored phase diagrams.
"""

from .core import (
    AgentState,
    Controller,
    Microstate,
    SensorSpec,
    SimParams,
    in_fov,
    normalize_angle,
    r_disk_connected,
    sense,
    sense_all,
)
from .dynamics import (
    ControlInput,
    SimulationDivergedError,
    Trajectory,
    TrajectoryFormatError,
    diffusion_control,
    load_trajectory,
    milling_control,
    resolve_collisions,
    run,
    save_trajectory,
    step,
)
from .markers import (
    MarkerSample,
    MarkerVector,
    aggregate,
    avg_speed,
    centroid,
    circliness,
    marker_series,
    nn_variance,
)
from .macrostate import (
    Classification,
    StructureSet,
    classify_diffusion,
    classify_milling,
    classify_trajectory,
)
from .sweep import (
    InfeasibleInitError,
    ParamGrid,
    PhaseCell,
    TrialRecord,
    init_connected,
    parse_grid_config,
    run_grid,
    run_point,
    split_seed,
)
from .phasediag import (
    ColorRule,
    PALETTES,
    PhaseDiagram,
    color_for,
    export_matrix,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "Classification",
    "ColorRule",
    "ControlInput",
    "Controller",
    "InfeasibleInitError",
    "MarkerSample",
    "MarkerVector",
    "Microstate",
    "PALETTES",
    "ParamGrid",
    "PhaseCell",
    "PhaseDiagram",
    "SensorSpec",
    "SimParams",
    "SimulationDivergedError",
    "StructureSet",
    "Trajectory",
    "TrajectoryFormatError",
    "TrialRecord",
    "aggregate",
    "avg_speed",
    "centroid",
    "circliness",
    "classify_diffusion",
    "classify_milling",
    "classify_trajectory",
    "color_for",
    "diffusion_control",
    "export_matrix",
    "in_fov",
    "init_connected",
    "load_trajectory",
    "marker_series",
    "milling_control",
    "nn_variance",
    "normalize_angle",
    "parse_grid_config",
    "r_disk_connected",
    "render",
    "resolve_collisions",
    "run",
    "run_grid",
    "run_point",
    "save_trajectory",
    "sense",
    "sense_all",
    "split_seed",
    "step",
    "__version__",
]
