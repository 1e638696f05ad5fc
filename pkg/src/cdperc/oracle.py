"""Exact event probabilities on tiny graphs, the trust anchor for the Monte Carlo engine.

The final state of the dynamics depends only on which clocks ring before the
evaluation time and on their relative order. Enumerating every full clock
ordering once and scoring every attempt prefix therefore gives the exact law:
the count of orderings whose k-attempt prefix realizes an event is an integer,
and the probability is a polynomial in t with those integer coefficients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from . import _kernels
from .environment import (
    TINY_EDGE_STREAM,
    TINY_VERTEX_STREAM,
    ConstraintLaw,
    SeedSpec,
    _absorb,
    _absorb_int,
    _finalize,
    _mix64_int,
    _GOLD,
    field_with_constraints,
    window_index,
)
from .lattice import Region

MAX_EDGES = 9
MAX_VERTICES = 10
MAX_EXACT_EDGES = 6

EventPredicate = Callable[[tuple], bool]


@dataclass(frozen=True)
class TinyGraph:
    """A simple graph small enough for exhaustive enumeration (<= 9 edges, <= 10 vertices)."""

    vertices: tuple[Hashable, ...]
    edges: tuple[tuple[Hashable, Hashable], ...]

    def __post_init__(self):
        if len(self.vertices) > MAX_VERTICES:
            raise ValueError(f"at most {MAX_VERTICES} vertices supported")
        if len(self.edges) > MAX_EDGES:
            raise ValueError(f"at most {MAX_EDGES} edges supported")
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertices")
        vset = set(self.vertices)
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError("self loops not allowed")
            if u not in vset or v not in vset:
                raise ValueError(f"edge ({u}, {v}) references unknown vertex")
            key = frozenset((u, v))
            if key in seen:
                raise ValueError("duplicate edge")
            seen.add(key)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def vertex_position(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    def endpoint_indices(self) -> tuple[np.ndarray, np.ndarray]:
        pos = self.vertex_position
        eu = np.array([pos[u] for u, _ in self.edges], dtype=np.int64)
        ev = np.array([pos[v] for _, v in self.edges], dtype=np.int64)
        return eu, ev

    @classmethod
    def from_region(cls, region: Region) -> "TinyGraph":
        """Tiny graph over a lattice window, edge order matching the engine's window index."""
        idx = window_index(region)
        return cls(
            vertices=idx.points,
            edges=tuple((e.base, e.head) for e in idx.edges),
        )

    @classmethod
    def path(cls, n_edges: int) -> "TinyGraph":
        verts = tuple(range(n_edges + 1))
        return cls(verts, tuple((i, i + 1) for i in range(n_edges)))

    @classmethod
    def star(cls, leaves: int) -> "TinyGraph":
        verts = tuple(range(leaves + 1))
        return cls(verts, tuple((0, i + 1) for i in range(leaves)))

    @classmethod
    def cycle(cls, n_edges: int) -> "TinyGraph":
        verts = tuple(range(n_edges))
        return cls(verts, tuple((i, (i + 1) % n_edges) for i in range(n_edges)))


def _constraint_list(g: TinyGraph, constraints: Mapping[Hashable, int]) -> list[int]:
    missing = [v for v in g.vertices if v not in constraints]
    if missing:
        raise ValueError(f"constraints missing for vertices {missing}")
    return [int(constraints[v]) for v in g.vertices]


def prefix_event_counts(
    g: TinyGraph, constraints: Mapping[Hashable, int], event: EventPredicate
) -> list[int]:
    """For each k, the number of full clock orderings whose first-k-attempt state realizes the event."""
    m = g.n_edges
    pos = g.vertex_position
    ends = [(pos[u], pos[v]) for u, v in g.edges]
    kappa = _constraint_list(g, constraints)
    counts = [0] * (m + 1)
    base_state = [False] * m
    if event(tuple(base_state)):
        counts[0] = math.factorial(m)
    for perm in itertools.permutations(range(m)):
        deg = [0] * len(g.vertices)
        state = list(base_state)
        for k, e in enumerate(perm, start=1):
            u, v = ends[e]
            if deg[u] < kappa[u] and deg[v] < kappa[v]:
                state[e] = True
                deg[u] += 1
                deg[v] += 1
            if event(tuple(state)):
                counts[k] += 1
    return counts


def probability_from_counts(counts: Sequence[int], t, exact: bool = False):
    """Assemble P(event at time t) from prefix counts: sum_k counts[k] t^k (1-t)^(m-k) / (k! (m-k)!)."""
    m = len(counts) - 1
    if exact:
        tq = Fraction(t)
        total = Fraction(0)
        for k, c in enumerate(counts):
            total += (
                Fraction(c, math.factorial(k) * math.factorial(m - k))
                * tq**k
                * (1 - tq) ** (m - k)
            )
        return total
    total = 0.0
    for k, c in enumerate(counts):
        total += (
            c / (math.factorial(k) * math.factorial(m - k)) * t**k * (1.0 - t) ** (m - k)
        )
    return total


def exact_event_probability(
    g: TinyGraph,
    constraints: Mapping[Hashable, int],
    t,
    event: EventPredicate,
    exact: bool = False,
):
    """Exact probability that the event holds at time t under fixed constraints.

    With ``exact`` the arithmetic is rational (t must be rational, at most
    6 edges); otherwise double precision.
    """
    if not 0 <= t <= 1:
        raise ValueError("time outside [0, 1]")
    if exact and g.n_edges > MAX_EXACT_EDGES:
        raise ValueError(f"rational mode supports at most {MAX_EXACT_EDGES} edges")
    counts = prefix_event_counts(g, constraints, event)
    return probability_from_counts(counts, t, exact=exact)


def exact_probability_over_constraints(
    g: TinyGraph,
    laws: ConstraintLaw | Mapping[Hashable, ConstraintLaw],
    t,
    event: EventPredicate,
    exact: bool = False,
):
    """Exact probability with constraints drawn per vertex from a law (or per-vertex laws).

    Cost grows with the product of the law supports; zero-probability
    constraint values are skipped.
    """
    if isinstance(laws, ConstraintLaw):
        laws = {v: laws for v in g.vertices}
    supports = []
    for v in g.vertices:
        law = laws[v]
        support = [(j, p) for j, p in enumerate(law.rho) if p > 0]
        supports.append(support)
    total = Fraction(0) if exact else 0.0
    for combo in itertools.product(*supports):
        weight = Fraction(1) if exact else 1.0
        assignment = {}
        for v, (j, p) in zip(g.vertices, combo):
            weight *= Fraction(p) if exact else p
            assignment[v] = j
        total += weight * exact_event_probability(g, assignment, t, event, exact=exact)
    return total


# ---------------------------------------------------------------------------
# Monte Carlo companions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    successes: int
    n: int

    @property
    def p_hat(self) -> float:
        return self.successes / self.n

    @property
    def se(self) -> float:
        p = self.p_hat
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.n)


def _tiny_prefix(master_seed: int, stream: int, count: int) -> np.ndarray:
    h0 = _absorb_int(_mix64_int(master_seed ^ _GOLD), stream)
    h = np.full(count, h0, dtype=np.uint64)
    return _absorb(h, np.arange(count, dtype=np.int64).view(np.uint64))


def _tiny_uniform_matrix(
    master_seed: int, stream: int, count: int, rep_lo: int, rep_hi: int
) -> np.ndarray:
    prefix = _tiny_prefix(master_seed, stream, count)
    reps = np.arange(rep_lo, rep_hi, dtype=np.int64).view(np.uint64)
    h = _absorb(prefix[None, :], reps[:, None])
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def monte_carlo_event_probability(
    g: TinyGraph,
    constraints_or_law: Mapping[Hashable, int] | ConstraintLaw,
    t: float,
    event: EventPredicate,
    seed: SeedSpec,
    n: int,
) -> MonteCarloEstimate:
    """Monte Carlo estimate of the event probability via the batched sweep kernel."""
    m = g.n_edges
    eu, ev = g.endpoint_indices()
    n_vertices = len(g.vertices)
    clocks = _tiny_uniform_matrix(
        seed.master_seed, TINY_EDGE_STREAM, m, seed.replicate, seed.replicate + n
    )
    orders = np.argsort(clocks, axis=1, kind="stable").astype(np.int64)
    if isinstance(constraints_or_law, ConstraintLaw):
        xs = _tiny_uniform_matrix(
            seed.master_seed,
            TINY_VERTEX_STREAM,
            n_vertices,
            seed.replicate,
            seed.replicate + n,
        )
        kappas = constraints_or_law.constraints_from_uniforms(xs.ravel()).reshape(
            n, n_vertices
        )
    else:
        row = np.array(_constraint_list(g, constraints_or_law), dtype=np.uint8)
        kappas = np.tile(row, (n, 1))
    opened_all = np.zeros((n, m), dtype=bool)
    _kernels.tiny_evolve_batch(orders, eu, ev, kappas, opened_all)
    attempted = clocks <= t
    opened = opened_all & attempted
    successes = sum(1 for row in opened if event(tuple(bool(b) for b in row)))
    return MonteCarloEstimate(successes=successes, n=n)


def monte_carlo_region_event(
    region: Region,
    constraints: Mapping,
    t: float,
    event: EventPredicate,
    seed: SeedSpec,
    n: int,
) -> MonteCarloEstimate:
    """Monte Carlo estimate through the full window engine (sampling + sweep).

    Edge indices seen by the event match ``TinyGraph.from_region``.
    """
    from .dynamics import config_at, evolve

    successes = 0
    for r in range(n):
        fld = field_with_constraints(seed.shifted(r), region, constraints)
        config = config_at(evolve(fld), t)
        if event(tuple(bool(b) for b in config.open_mask)):
            successes += 1
    return MonteCarloEstimate(successes=successes, n=n)


# ---------------------------------------------------------------------------
# Event helpers and the built-in verification graphs
# ---------------------------------------------------------------------------


def edge_open(k: int) -> EventPredicate:
    return lambda state: state[k]


def all_open() -> EventPredicate:
    return lambda state: all(state)


def any_open() -> EventPredicate:
    return lambda state: any(state)


def open_count_at_least(k: int) -> EventPredicate:
    return lambda state: sum(state) >= k
