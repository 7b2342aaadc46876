"""Domain types, planar geometry and the binary conical field-of-view sensor.

Everything here is an immutable value type or a pure function; angles are
radians internally ([-pi, pi) convention), degrees appear only at the CLI
and config boundaries.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class Controller(enum.Enum):
    """Which binary sensor-to-action rule drives the swarm."""

    MILLING = "milling"
    DIFFUSION = "diffusion"


def normalize_angle(theta: float) -> float:
    """Map an angle to the canonical range [-pi, pi).

    Raises ValueError on non-finite input.
    """
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    if -math.pi <= theta < math.pi:
        # already canonical; returning unchanged makes wrapping idempotent
        return theta
    wrapped = (theta + math.pi) % TWO_PI - math.pi
    # float remainder cannot reach 2*pi, so wrapped < pi strictly
    return wrapped


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized twin of normalize_angle; same formula, same bits."""
    wrapped = (theta + math.pi) % TWO_PI - math.pi
    return np.where((theta >= -math.pi) & (theta < math.pi), theta, wrapped)


@dataclass(frozen=True)
class AgentState:
    """Observable state of one agent: position (m) and heading (rad).

    The heading is normalized to [-pi, pi) at construction, so the
    invariant holds for the lifetime of the (frozen) value.
    """

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"position must be finite, got ({self.x!r}, {self.y!r})")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class SensorSpec:
    """Forward cone sensor: range gamma (m) and opening angle phi (rad)."""

    gamma: float
    phi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValueError(f"gamma: must be > 0, got {self.gamma!r}")
        if not (math.isfinite(self.phi) and 0.0 < self.phi <= TWO_PI):
            raise ValueError(f"phi: must be in (0, 2*pi], got {self.phi!r}")


@dataclass(frozen=True)
class SimParams:
    """One point of the system parameter space.

    N, v, omega, gamma, phi are the swept quantities; dt, horizon,
    eval_window and body_radius are simulation plumbing with defaults
    chosen so that classification is insensitive to halving dt.
    """

    n_agents: int
    speed: float
    turn_rate: float
    sensor: SensorSpec
    controller: Controller
    body_radius: float = 0.08
    dt: float = 0.01
    horizon: float = 120.0
    eval_window: float = 10.0

    def __post_init__(self) -> None:
        if not (isinstance(self.n_agents, int) and self.n_agents >= 1):
            raise ValueError(f"n: must be an integer >= 1, got {self.n_agents!r}")
        if not (math.isfinite(self.speed) and self.speed > 0.0):
            raise ValueError(f"v: must be > 0, got {self.speed!r}")
        if not (math.isfinite(self.turn_rate) and self.turn_rate > 0.0):
            raise ValueError(f"omega: must be > 0, got {self.turn_rate!r}")
        if not isinstance(self.controller, Controller):
            raise ValueError(f"controller: must be a Controller, got {self.controller!r}")
        if not (math.isfinite(self.body_radius) and self.body_radius >= 0.0):
            raise ValueError(f"body_radius: must be >= 0, got {self.body_radius!r}")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt: must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise ValueError(f"horizon: must be > 0, got {self.horizon!r}")
        if not (math.isfinite(self.eval_window) and 0.0 < self.eval_window <= self.horizon):
            raise ValueError(
                f"window: must satisfy 0 < window <= horizon, got {self.eval_window!r}"
            )

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "speed": self.speed,
            "turn_rate": self.turn_rate,
            "gamma": self.sensor.gamma,
            "phi": self.sensor.phi,
            "controller": self.controller.value,
            "body_radius": self.body_radius,
            "dt": self.dt,
            "horizon": self.horizon,
            "eval_window": self.eval_window,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        return cls(
            n_agents=int(d["n_agents"]),
            speed=float(d["speed"]),
            turn_rate=float(d["turn_rate"]),
            sensor=SensorSpec(gamma=float(d["gamma"]), phi=float(d["phi"])),
            controller=Controller(d["controller"]),
            body_radius=float(d.get("body_radius", 0.08)),
            dt=float(d.get("dt", 0.01)),
            horizon=float(d.get("horizon", 120.0)),
            eval_window=float(d.get("eval_window", 10.0)),
        )


class Microstate:
    """Ordered collection of all N agent states at one instant.

    Backed by a read-only (N, 3) float64 array of [x, y, theta] rows;
    agent identity is the row index and never changes.
    """

    __slots__ = ("poses", "time")

    def __init__(self, poses: np.ndarray, time: float = 0.0):
        poses = np.array(poses, dtype=np.float64, copy=True)
        if poses.ndim != 2 or poses.shape[1] != 3 or poses.shape[0] < 1:
            raise ValueError(f"poses must have shape (N, 3) with N >= 1, got {poses.shape}")
        if not float(time) >= 0.0:
            raise ValueError(f"time must be >= 0, got {time!r}")
        poses[:, 2] = wrap_angles(poses[:, 2])
        poses.setflags(write=False)
        self.poses = poses
        self.time = float(time)

    @classmethod
    def from_agents(cls, agents: Iterable[AgentState], time: float = 0.0) -> "Microstate":
        rows = [(a.x, a.y, a.theta) for a in agents]
        return cls(np.asarray(rows, dtype=np.float64), time)

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.poses[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.poses[:, 1]

    @property
    def theta(self) -> np.ndarray:
        return self.poses[:, 2]

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :2]

    def agent(self, i: int) -> AgentState:
        x, y, th = self.poses[i]
        return AgentState(float(x), float(y), float(th))

    @property
    def agents(self) -> tuple[AgentState, ...]:
        return tuple(self.agent(i) for i in range(self.n))

    def __repr__(self) -> str:
        return f"Microstate(n={self.n}, time={self.time})"


def in_fov(observer: AgentState, target_point: Sequence[float], sensor: SensorSpec) -> bool:
    """Binary cone membership: is target_point inside the observer's FOV?

    True iff the distance is in (0, gamma] and the bearing offset from the
    observer's heading is within +/- phi/2 (both boundaries inclusive). A
    point coincident with the observer is never detected.
    """
    dx = float(target_point[0]) - observer.x
    dy = float(target_point[1]) - observer.y
    dist = math.hypot(dx, dy)
    if dist <= 0.0 or dist > sensor.gamma:
        return False
    bearing = math.atan2(dy, dx)
    offset = (bearing - observer.theta + math.pi) % TWO_PI - math.pi
    return abs(offset) <= 0.5 * sensor.phi


def sense_all(poses: np.ndarray, sensor: SensorSpec) -> np.ndarray:
    """Boolean sensor output h_i for every agent at once.

    Mirrors in_fov arithmetic step for step so the two stay consistent.
    """
    px, py, th = poses[:, 0], poses[:, 1], poses[:, 2]
    dx = px[None, :] - px[:, None]
    dy = py[None, :] - py[:, None]
    dist = np.hypot(dx, dy)
    bearing = np.arctan2(dy, dx)
    offset = (bearing - th[:, None] + math.pi) % TWO_PI - math.pi
    # dist > 0 excludes self (diagonal) and coincident pairs
    visible = (dist > 0.0) & (dist <= sensor.gamma) & (np.abs(offset) <= 0.5 * sensor.phi)
    return visible.any(axis=1)


def sense(i: int, state: Microstate, sensor: SensorSpec) -> int:
    """Binary sensor output of agent i: 1 iff some other agent is in its FOV."""
    if not 0 <= i < state.n:
        raise IndexError(f"agent index {i} out of range for N={state.n}")
    return int(sense_all(state.poses, sensor)[i])


def r_disk_connected(state: Microstate, radius: float) -> bool:
    """Is the r-disk graph (edges at pairwise distance <= radius) connected?"""
    if not radius > 0.0:
        raise ValueError(f"radius must be > 0, got {radius!r}")
    n = state.n
    if n == 1:
        return True
    pos = state.positions
    diff = pos[None, :, :] - pos[:, None, :]
    adj = (diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2) <= radius * radius
    # BFS from node 0
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nbrs = adj[frontier].any(axis=0) & ~seen
        frontier = np.nonzero(nbrs)[0].tolist()
        seen |= nbrs
    return bool(seen.all())
