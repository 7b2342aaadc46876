"""Macrostate classification: decides whether a marker vector shows a behavior.

Each behavior has a structure set, a region in marker space. A run counts
as producing the behavior (value 1) when its window-averaged markers fall
inside the region and the defining per-frame criterion holds for at least
90% of the frames in the window, so a single lucky frame never counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .core import Controller
from .markers import (
    MarkerVector,
    WINDOW_TIME_TOL,
    aggregate,
    circliness,
    marker_series,
    nn_variance,
)

DEFAULT_CIRCLINESS_MAX = 0.01
DEFAULT_NN_VARIANCE_MAX = 0.005
DEFAULT_SPEED_REL_TOL = 0.02

# Fraction of window frames that must individually satisfy the defining
# marker criterion for membership to count as sustained.
SUSTAINED_FRACTION = 0.9


@dataclass(frozen=True)
class StructureSet:
    """Thresholds defining one behavior's region in marker space.

    Milling uses circliness_max plus a relative speed band around the set
    speed (the strict equality v_bar = v is unattainable under chord-based
    speed estimates). Diffusion uses nn_variance_max alone. All comparisons
    against *_max thresholds are strict.
    """

    behavior: Controller
    circliness_max: float = DEFAULT_CIRCLINESS_MAX
    speed_rel_tol: float = DEFAULT_SPEED_REL_TOL
    nn_variance_max: float = DEFAULT_NN_VARIANCE_MAX

    def __post_init__(self) -> None:
        for name in ("circliness_max", "speed_rel_tol", "nn_variance_max"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name}: must be > 0, got {val!r}")

    def to_dict(self) -> dict:
        if self.behavior is Controller.MILLING:
            return {
                "circliness_max": self.circliness_max,
                "speed_rel_tol": self.speed_rel_tol,
            }
        return {"nn_variance_max": self.nn_variance_max}

    @classmethod
    def for_behavior(cls, behavior: Controller, **overrides) -> "StructureSet":
        return cls(behavior=behavior, **overrides)


@dataclass(frozen=True)
class Classification:
    """Outcome of one classification, carrying the evidence used.

    markers is None only for trials that never produced a trajectory
    (infeasible initialization in a sweep); those always have value 0.
    """

    behavior: Controller
    value: int
    markers: Optional[MarkerVector]
    thresholds: StructureSet

    def __post_init__(self) -> None:
        if self.value not in (0, 1):
            raise ValueError(f"value must be 0 or 1, got {self.value!r}")
        if self.value == 1 and self.markers is None:
            raise ValueError("value 1 requires marker evidence")

    def to_dict(self) -> dict:
        obj = {
            "behavior": self.behavior.value,
            "value": self.value,
            "markers": None,
            "window": None,
            "thresholds": self.thresholds.to_dict(),
        }
        if self.markers is not None:
            obj["markers"] = {
                "v_bar": self.markers.v_bar,
                "c_bar": self.markers.c_bar,
                "delta_bar": self.markers.delta_bar,
            }
            obj["window"] = [self.markers.window[0], self.markers.window[1]]
        return obj

    @classmethod
    def from_dict(cls, obj: dict) -> "Classification":
        behavior = Controller(obj["behavior"])
        thresholds = StructureSet(behavior=behavior, **{
            key: float(val) for key, val in obj["thresholds"].items()
        })
        markers = None
        if obj.get("markers") is not None:
            markers = MarkerVector(
                window=(float(obj["window"][0]), float(obj["window"][1])),
                v_bar=float(obj["markers"]["v_bar"]),
                c_bar=float(obj["markers"]["c_bar"]),
                delta_bar=float(obj["markers"]["delta_bar"]),
            )
        return cls(
            behavior=behavior,
            value=int(obj["value"]),
            markers=markers,
            thresholds=thresholds,
        )


def classify_milling(
    m: MarkerVector, eta: StructureSet, v_set: float
) -> Classification:
    """Milling membership: c_bar below threshold, v_bar inside the speed band."""
    if eta.behavior is not Controller.MILLING:
        raise ValueError("eta.behavior must be milling")
    if not (math.isfinite(v_set) and v_set > 0):
        raise ValueError(f"v: set speed must be > 0, got {v_set!r}")
    inside = (
        m.c_bar < eta.circliness_max
        and abs(m.v_bar - v_set) <= eta.speed_rel_tol * v_set
    )
    return Classification(
        behavior=Controller.MILLING,
        value=int(inside),
        markers=m,
        thresholds=eta,
    )


def classify_diffusion(m: MarkerVector, eta: StructureSet) -> Classification:
    """Diffusion membership: delta_bar below threshold."""
    if eta.behavior is not Controller.DIFFUSION:
        raise ValueError("eta.behavior must be diffusion")
    inside = m.delta_bar < eta.nn_variance_max
    return Classification(
        behavior=Controller.DIFFUSION,
        value=int(inside),
        markers=m,
        thresholds=eta,
    )


def classify_trajectory(
    traj,
    eta: Optional[StructureSet] = None,
    v_set: Optional[float] = None,
) -> Classification:
    """Classify a recorded trajectory over its final evaluation window.

    Markers are averaged over [T - W, T] where T is the last frame time and
    W the trajectory's eval_window. On top of window-mean membership, the
    per-frame criterion (circliness for milling, nn_variance for diffusion)
    must hold on at least 90% of window frames.
    """
    params = traj.params
    if eta is None:
        eta = StructureSet(behavior=params.controller)
    if v_set is None:
        v_set = params.speed

    frames = traj.frames
    if len(frames) < 2:
        raise ValueError("trajectory too short: needs >= 2 frames")
    t_end = frames[-1].time
    window_len = params.eval_window
    if t_end - frames[0].time < window_len - WINDOW_TIME_TOL:
        raise ValueError(
            f"trajectory spans {t_end - frames[0].time:.3f} s, "
            f"shorter than the {window_len:.3f} s evaluation window"
        )
    t_start = t_end - window_len

    samples = marker_series(frames)
    m = aggregate(samples, (t_start, t_end))

    if eta.behavior is Controller.MILLING:
        base = classify_milling(m, eta, v_set)
        frame_ok = [
            circliness(f) < eta.circliness_max
            for f in frames
            if f.time >= t_start - WINDOW_TIME_TOL
        ]
    else:
        base = classify_diffusion(m, eta)
        frame_ok = [
            nn_variance(f) < eta.nn_variance_max
            for f in frames
            if f.time >= t_start - WINDOW_TIME_TOL
        ]
    sustained = (
        sum(frame_ok) >= SUSTAINED_FRACTION * len(frame_ok) - WINDOW_TIME_TOL
    )
    value = base.value if sustained else 0
    return Classification(
        behavior=eta.behavior, value=value, markers=m, thresholds=eta
    )
