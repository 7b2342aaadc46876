"""Information markers: per-frame swarm observables and windowed aggregation.

Three markers are computed from recorded positions only, the way an external
observer tracking the swarm would measure them: average positional speed,
circliness (radial spread about the centroid), and nearest-neighbor variance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import Microstate

# Radii below this count as centroid-coincident and poison circliness.
DEGENERACY_EPS = 1e-9

# Slack when testing whether a frame time falls inside a window, so that
# accumulated float error in frame timestamps cannot drop a boundary frame.
WINDOW_TIME_TOL = 1e-9


@dataclass(frozen=True)
class MarkerSample:
    """Markers evaluated at one recorded frame.

    avg_speed is a backward finite difference, so a sample exists for every
    frame except the first. circliness and nn_variance may be +inf for
    degenerate frames (agents collapsed onto the centroid, or a single
    agent with no neighbor); such frames always classify as
    behavior-absent downstream.
    """

    time: float
    avg_speed: float
    circliness: float
    nn_variance: float

    def __post_init__(self) -> None:
        for name in ("time", "avg_speed"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val!r}")
        if math.isnan(self.circliness) or math.isnan(self.nn_variance):
            raise ValueError("markers must not be NaN")
        if self.avg_speed < 0 or self.circliness < 0 or self.nn_variance < 0:
            raise ValueError("markers must be non-negative")


@dataclass(frozen=True)
class MarkerVector:
    """Window-aggregated markers: the reduced-order description of one run."""

    window: tuple[float, float]
    v_bar: float
    c_bar: float
    delta_bar: float

    def __post_init__(self) -> None:
        t0, t1 = self.window
        if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
            raise ValueError(f"bad aggregation window {self.window!r}")

    def to_dict(self) -> dict:
        return {
            "window": [self.window[0], self.window[1]],
            "v_bar": self.v_bar,
            "c_bar": self.c_bar,
            "delta_bar": self.delta_bar,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MarkerVector":
        return cls(
            window=(float(obj["window"][0]), float(obj["window"][1])),
            v_bar=float(obj["v_bar"]),
            c_bar=float(obj["c_bar"]),
            delta_bar=float(obj["delta_bar"]),
        )


def centroid(state: Microstate) -> tuple[float, float]:
    """Arithmetic mean of agent positions."""
    pos = state.positions
    mu = pos.mean(axis=0)
    return float(mu[0]), float(mu[1])


def circliness(state: Microstate) -> float:
    """Radial spread about the centroid: (r_max - r_min) / r_min.

    0 means every agent sits exactly on one circle around the centroid.
    Returns +inf when the smallest radius falls below DEGENERACY_EPS
    (agents collapsed onto the centroid, including the single-agent case);
    the sentinel classifies as non-milling rather than raising, so sweeps
    survive pathological configurations.
    """
    pos = state.positions
    mu = pos.mean(axis=0)
    radii = np.hypot(pos[:, 0] - mu[0], pos[:, 1] - mu[1])
    r_min = float(radii.min())
    if r_min < DEGENERACY_EPS:
        return math.inf
    return (float(radii.max()) - r_min) / r_min


def avg_speed(prev: Microstate, next_state: Microstate) -> float:
    """Mean positional speed between two frames, by finite differences.

    Chord-based: on an arc of turn rate omega it underestimates the true
    speed by a factor sinc(omega*dt/2), which is why milling classification
    uses a relative speed band instead of exact equality.
    """
    if next_state.n != prev.n:
        raise ValueError(
            f"frame agent counts differ: {prev.n} vs {next_state.n}"
        )
    gap = next_state.time - prev.time
    if gap <= 0:
        raise ValueError(f"non-positive frame time gap {gap!r}")
    dp = next_state.positions - prev.positions
    return float(np.hypot(dp[:, 0], dp[:, 1]).mean()) / gap


def nn_variance(state: Microstate) -> float:
    """Population variance of per-agent nearest-neighbor distances.

    Divides by N (population convention). Uniform spacing gives 0. A single
    agent has no neighbor; returns +inf so classification rejects it rather
    than aborting a sweep.
    """
    if state.n < 2:
        return math.inf
    pos = state.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    nn = dist.min(axis=1)
    return float(np.mean((nn - nn.mean()) ** 2))


def marker_series(frames: list[Microstate]) -> list[MarkerSample]:
    """Per-frame marker samples for a recorded trajectory.

    One sample per frame after the first; each sample's avg_speed is the
    backward difference from the preceding frame.
    """
    if len(frames) < 2:
        raise ValueError("marker series needs at least 2 frames")
    samples = []
    for prev, cur in zip(frames, frames[1:]):
        samples.append(
            MarkerSample(
                time=cur.time,
                avg_speed=avg_speed(prev, cur),
                circliness=circliness(cur),
                nn_variance=nn_variance(cur),
            )
        )
    return samples


def aggregate(
    samples: list[MarkerSample], window: tuple[float, float]
) -> MarkerVector:
    """Arithmetic mean of each marker over samples inside the window.

    Window bounds are inclusive (with a 1e-9 slack against timestamp
    rounding). Requires at least 2 samples inside the window.
    """
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty aggregation window {window!r}")
    inside = [
        s
        for s in samples
        if t0 - WINDOW_TIME_TOL <= s.time <= t1 + WINDOW_TIME_TOL
    ]
    if len(inside) < 2:
        raise ValueError(
            f"window {window!r} contains {len(inside)} samples, need >= 2"
        )
    return MarkerVector(
        window=(t0, t1),
        v_bar=float(np.mean([s.avg_speed for s in inside])),
        c_bar=float(np.mean([s.circliness for s in inside])),
        delta_bar=float(np.mean([s.nn_variance for s in inside])),
    )


def save_marker_csv(samples: list[MarkerSample], path) -> None:
    """Write the marker time series as CSV with a fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "avg_speed", "circliness", "nn_variance"])
        for s in samples:
            writer.writerow(
                [repr(s.time), repr(s.avg_speed), repr(s.circliness),
                 repr(s.nn_variance)]
            )
