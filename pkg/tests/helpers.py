"""Shared test utilities: random state factories and naive oracles.

The oracles deliberately reimplement production formulas with plain Python
loops so that agreement is evidence, not tautology.
"""

from __future__ import annotations

import math

import numpy as np

from swarmphase.core import Controller, Microstate, SensorSpec, SimParams


def random_microstate(rng: np.random.Generator, n: int, box: float = 3.0,
                      time: float = 0.0) -> Microstate:
    poses = np.column_stack([
        rng.uniform(-box, box, n),
        rng.uniform(-box, box, n),
        rng.uniform(-math.pi, math.pi, n),
    ])
    return Microstate(poses, time)


def small_params(controller=Controller.MILLING, **overrides) -> SimParams:
    """Cheap-to-simulate parameters for plumbing tests."""
    defaults = dict(
        n_agents=3,
        speed=0.25,
        turn_rate=math.radians(45.0),
        sensor=SensorSpec(gamma=1.0, phi=math.radians(50.0)),
        controller=controller,
        horizon=2.0,
        eval_window=1.0,
    )
    defaults.update(overrides)
    return SimParams(**defaults)


def milling_star_params(**overrides) -> SimParams:
    """The headline milling parameter point."""
    defaults = dict(
        n_agents=6,
        speed=0.25,
        turn_rate=math.radians(45.0),
        sensor=SensorSpec(gamma=1.0, phi=math.radians(50.0)),
        controller=Controller.MILLING,
    )
    defaults.update(overrides)
    return SimParams(**defaults)


def diffusion_star_params(**overrides) -> SimParams:
    """The headline diffusion parameter point."""
    defaults = dict(
        n_agents=8,
        speed=0.3,
        turn_rate=math.radians(150.0),
        sensor=SensorSpec(gamma=1.0, phi=math.radians(50.0)),
        controller=Controller.DIFFUSION,
    )
    defaults.update(overrides)
    return SimParams(**defaults)


# --- naive marker oracles (pure Python, no numpy vector tricks) ---

def oracle_centroid(state: Microstate) -> tuple[float, float]:
    xs = [float(v) for v in state.x]
    ys = [float(v) for v in state.y]
    return sum(xs) / len(xs), sum(ys) / len(ys)


def oracle_circliness(state: Microstate) -> float:
    mx, my = oracle_centroid(state)
    radii = [
        math.hypot(float(x) - mx, float(y) - my)
        for x, y in zip(state.x, state.y)
    ]
    r_min, r_max = min(radii), max(radii)
    if r_min < 1e-9:
        return math.inf
    return (r_max - r_min) / r_min


def oracle_avg_speed(prev: Microstate, nxt: Microstate) -> float:
    gap = nxt.time - prev.time
    total = 0.0
    for i in range(prev.n):
        total += math.hypot(
            float(nxt.x[i]) - float(prev.x[i]),
            float(nxt.y[i]) - float(prev.y[i]),
        )
    return total / prev.n / gap


def oracle_nn_variance(state: Microstate) -> float:
    if state.n < 2:
        return math.inf
    nn = []
    for i in range(state.n):
        best = math.inf
        for j in range(state.n):
            if j == i:
                continue
            d = math.hypot(
                float(state.x[i]) - float(state.x[j]),
                float(state.y[i]) - float(state.y[j]),
            )
            best = min(best, d)
        nn.append(best)
    mean = sum(nn) / len(nn)
    return sum((d - mean) ** 2 for d in nn) / len(nn)


def oracle_in_fov(observer, target, sensor: SensorSpec) -> bool:
    """Dot-product visibility oracle, no atan2."""
    dx = target[0] - observer.x
    dy = target[1] - observer.y
    dist = math.hypot(dx, dy)
    if dist <= 0.0 or dist > sensor.gamma:
        return False
    hx, hy = math.cos(observer.theta), math.sin(observer.theta)
    cos_off = (dx * hx + dy * hy) / dist
    cos_off = max(-1.0, min(1.0, cos_off))
    return math.acos(cos_off) <= sensor.phi / 2.0 + 1e-15


def oracle_connected(state: Microstate, radius: float) -> bool:
    """Union-find connectivity oracle."""
    n = state.n
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(
                float(state.x[i]) - float(state.x[j]),
                float(state.y[i]) - float(state.y[j]),
            )
            if d <= radius:
                parent[find(i)] = find(j)
    return len({find(i) for i in range(n)}) == 1


def rk4_unicycle(x: float, y: float, theta: float, u1: float, u2: float,
                 dt: float, substeps: int = 1000):
    """Reference integrator for one control interval of the unicycle ODE."""
    h = dt / substeps

    def deriv(state):
        _, _, th = state
        return (u1 * math.cos(th), u1 * math.sin(th), u2)

    state = (x, y, theta)
    for _ in range(substeps):
        k1 = deriv(state)
        s2 = tuple(state[m] + 0.5 * h * k1[m] for m in range(3))
        k2 = deriv(s2)
        s3 = tuple(state[m] + 0.5 * h * k2[m] for m in range(3))
        k3 = deriv(s3)
        s4 = tuple(state[m] + h * k3[m] for m in range(3))
        k4 = deriv(s4)
        state = tuple(
            state[m] + h / 6.0 * (k1[m] + 2 * k2[m] + 2 * k3[m] + k4[m])
            for m in range(3)
        )
    return state


def record_key_fields(record) -> dict:
    """TrialRecord content with execution-time metadata stripped."""
    obj = record.to_dict()
    obj.pop("wall_time", None)
    return obj
