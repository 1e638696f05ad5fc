"""Degree-constrained opening dynamics: one clock-order sweep yields the whole trajectory.

Whether an edge opens depends only on strictly earlier clocks, so a single
sweep at horizon 1 determines the configuration at every time; querying a
time is then a cheap mask. Windows have free boundary: edges to unsimulated
vertices simply do not exist.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Callable

import numpy as np

from . import _kernels
from .environment import EnvironmentField
from .lattice import Edge, MarginError


class EdgeOutcome(IntEnum):
    BLOCKED = 0
    OPENED = 1
    UNATTEMPTED = 2


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-edge outcome of one run of the dynamics up to ``horizon``."""

    env: EnvironmentField
    horizon: float
    opened: np.ndarray  # (E,) bool
    attempted: np.ndarray  # (E,) bool, clock <= horizon
    degrees: np.ndarray  # (V,) uint8, final degrees at the horizon

    @property
    def clocks(self) -> np.ndarray:
        return self.env.U

    def outcome(self, e: Edge) -> EdgeOutcome:
        k = self.env.index.edge_index.get(e)
        if k is None:
            raise MarginError(f"edge {e} outside the simulated window")
        if self.opened[k]:
            return EdgeOutcome.OPENED
        if self.attempted[k]:
            return EdgeOutcome.BLOCKED
        return EdgeOutcome.UNATTEMPTED


@dataclass(frozen=True, eq=False)
class Configuration:
    """The open-edge set at one time, as a view of a trajectory."""

    trajectory: Trajectory
    time: float
    open_mask: np.ndarray  # (E,) bool

    @property
    def index(self):
        return self.trajectory.env.index

    def is_open(self, e: Edge) -> bool:
        k = self.index.edge_index.get(e)
        if k is None:
            raise MarginError(f"edge {e} outside the simulated window")
        return bool(self.open_mask[k])

    def open_edges(self) -> list[Edge]:
        edges = self.index.edges
        return [edges[k] for k in np.flatnonzero(self.open_mask)]

    @cached_property
    def degrees(self) -> np.ndarray:
        idx = self.index
        endpoints = np.concatenate(
            [idx.edge_u[self.open_mask], idx.edge_v[self.open_mask]]
        )
        return np.bincount(endpoints, minlength=idx.n_vertices).astype(np.int64)


def sweep_order(env: EnvironmentField) -> np.ndarray:
    """Edge processing order: increasing clock, ties by canonical edge order."""
    idx = env.index
    keys = [idx.edge_axis]
    for k in reversed(range(idx.dimension)):
        keys.append(idx.edge_base[:, k])
    keys.append(env.U)
    return np.lexsort(tuple(keys))


def evolve(env: EnvironmentField, horizon: float = 1.0) -> Trajectory:
    """Run the dynamics on a sampled window up to the horizon."""
    if not 0.0 <= horizon <= 1.0:
        raise ValueError("horizon must lie in [0, 1]")
    idx = env.index
    order = sweep_order(env)
    attempted = env.U <= horizon
    order = order[attempted[order]]
    opened = np.zeros(idx.n_edges, dtype=bool)
    degrees = np.zeros(idx.n_vertices, dtype=np.uint8)
    _kernels.evolve_sweep(order, idx.edge_u, idx.edge_v, env.kappa, opened, degrees)
    return Trajectory(env=env, horizon=horizon, opened=opened, attempted=attempted, degrees=degrees)


def config_at(traj: Trajectory, t: float) -> Configuration:
    """Configuration at time t: an edge is open iff it opened and its clock is <= t."""
    if not 0.0 <= t <= traj.horizon:
        raise ValueError(f"time {t} outside the evolved horizon {traj.horizon}")
    return Configuration(traj, t, traj.opened & (traj.clocks <= t))


def edge_open_event(e: Edge) -> Callable[[Configuration], bool]:
    """Indicator of one edge being open; lives on that edge."""

    def event(config: Configuration) -> bool:
        return config.is_open(e)

    return event
