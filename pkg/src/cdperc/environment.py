"""Random environment sampling: constraint laws, per-entity uniforms, and window geometry.

Randomness is counter based: the uniform attached to a vertex or an edge is a
pure hash of (master seed, stream tag, entity coordinates, replicate id).
Regenerating a field on a different window, in a different order, or next to
freshly resampled surroundings therefore reproduces bit-identical values on
the shared entities, which the locality and padding diagnostics rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .lattice import (
    Edge,
    MarginError,
    Point,
    Region,
    contains_ball,
    translate,
    unit,
)

_MASK = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_V_MIX1 = np.uint64(_MIX1)
_V_MIX2 = np.uint64(_MIX2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_INV53 = float(2.0**-53)

VERTEX_STREAM = 0x5645
EDGE_STREAM = 0x4547
TINY_EDGE_STREAM = 0x5445
TINY_VERTEX_STREAM = 0x5456


def _mix64_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _absorb_int(h: int, word: int) -> int:
    return _mix64_int(h ^ (word & _MASK))


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U30)) * _V_MIX1
    z = (z ^ (z >> _U27)) * _V_MIX2
    return z ^ (z >> _U31)


def _absorb(h: np.ndarray, word: np.ndarray) -> np.ndarray:
    return _mix64(h ^ word)


def _as_words(values: np.ndarray) -> np.ndarray:
    # two's complement view of signed coordinates
    return np.asarray(values, dtype=np.int64).view(np.uint64)


def _to_uniform(h: np.ndarray) -> np.ndarray:
    return (h >> _U11).astype(np.float64) * _INV53


def _scalar_uniform(master_seed: int, stream: int, words: Sequence[int], replicate: int) -> float:
    h = _absorb_int(_mix64_int(master_seed ^ _GOLD), stream)
    for w in words:
        h = _absorb_int(h, w)
    h = _absorb_int(h, replicate)
    return (h >> 11) * _INV53


@dataclass(frozen=True)
class SeedSpec:
    """Addresses one replicate of the environment.

    ``replicate`` is the base replicate id; estimators running ``n`` replicates
    use ids ``replicate .. replicate + n - 1``.
    """

    master_seed: int
    replicate: int = 0
    vertex_stream: int = VERTEX_STREAM
    edge_stream: int = EDGE_STREAM

    def __post_init__(self):
        if self.replicate < 0:
            raise ValueError("replicate id must be nonnegative")

    def with_replicate(self, replicate: int) -> "SeedSpec":
        return replace(self, replicate=replicate)

    def shifted(self, offset: int) -> "SeedSpec":
        return replace(self, replicate=self.replicate + offset)

    def fresh_streams(self, tag: int) -> "SeedSpec":
        """Independent streams for resampling experiments; tag 0 is already fresh."""
        shift = (tag + 1) * 0x10000
        return replace(
            self,
            vertex_stream=self.vertex_stream + shift,
            edge_stream=self.edge_stream + shift,
        )


@dataclass(frozen=True)
class ConstraintLaw:
    """Probability vector over per-vertex degree constraints 0 .. 2d-1.

    With ``validation_mode`` the vector has one extra cell for the sentinel
    constraint 2d ("never blocks"), used only to check that the dynamics then
    degenerates to plain Bernoulli percolation.
    """

    rho: tuple[float, ...]
    validation_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rho", tuple(float(p) for p in self.rho))
        n = len(self.rho)
        expected_parity = 1 if self.validation_mode else 0
        if n < 2 or n % 2 != expected_parity:
            raise ValueError(
                f"law of length {n} invalid (validation_mode={self.validation_mode})"
            )
        if any(p < 0 for p in self.rho):
            raise ValueError("negative probability in constraint law")
        if abs(sum(self.rho) - 1.0) > 1e-12:
            raise ValueError("constraint law does not sum to 1")

    @property
    def dimension(self) -> int:
        return len(self.rho) // 2

    @classmethod
    def unconstrained(cls, d: int) -> "ConstraintLaw":
        return cls((0.0,) * (2 * d) + (1.0,), validation_mode=True)

    @classmethod
    def fixed(cls, d: int, value: int) -> "ConstraintLaw":
        if not 0 <= value < 2 * d:
            raise ValueError("fixed constraint must lie in [0, 2d)")
        rho = [0.0] * (2 * d)
        rho[value] = 1.0
        return cls(tuple(rho))

    @property
    def cumulative(self) -> tuple[float, ...]:
        out = []
        acc = 0.0
        for p in self.rho:
            acc += p
            out.append(acc)
        return tuple(out)

    @property
    def _cum_array(self) -> np.ndarray:
        return np.asarray(self.cumulative)

    @property
    def max_supported(self) -> int:
        return max(j for j, p in enumerate(self.rho) if p > 0)

    def constraint_from_uniform(self, x: float) -> int:
        """Constraint value coupled to a uniform: half-open cells ``[cum_{j-1}, cum_j)``.

        ``x = 1`` maps to the largest constraint with positive mass.
        """
        if not 0.0 <= x <= 1.0:
            raise ValueError("uniform value outside [0, 1]")
        for j, c in enumerate(self.cumulative):
            if x < c:
                return j
        return self.max_supported

    def constraints_from_uniforms(self, xs: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cum_array, xs, side="right")
        return np.minimum(idx, self.max_supported).astype(np.uint8)


def constraint_from_uniform(x: float, law: ConstraintLaw) -> int:
    """Module-level convenience wrapper around :meth:`ConstraintLaw.constraint_from_uniform`."""
    return law.constraint_from_uniform(x)


# ---------------------------------------------------------------------------
# Window geometry cache
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WindowIndex:
    """Immutable arrays describing one finite window: vertices, induced edges, adjacency."""

    region: Region
    points: tuple[Point, ...]
    point_index: dict
    coords: np.ndarray  # (V, d) int64
    edges: tuple[Edge, ...]
    edge_index: dict
    edge_base: np.ndarray  # (E, d) int64
    edge_axis: np.ndarray  # (E,) int64
    edge_u: np.ndarray  # (E,) int64, index of base endpoint
    edge_v: np.ndarray  # (E,) int64
    indptr: np.ndarray  # CSR adjacency over vertices
    nbr_vertex: np.ndarray
    nbr_edge: np.ndarray
    boundary: np.ndarray  # (V,) bool: has a lattice neighbor outside the window

    @property
    def dimension(self) -> int:
        return self.coords.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@lru_cache(maxsize=32)
def window_index(region: Region) -> WindowIndex:
    points = tuple(sorted(region.vertices()))
    pset = set(points)
    d = len(points[0])
    point_index = {p: i for i, p in enumerate(points)}
    coords = np.array(points, dtype=np.int64).reshape(len(points), d)

    edges: list[Edge] = []
    edge_u: list[int] = []
    edge_v: list[int] = []
    boundary = np.zeros(len(points), dtype=bool)
    units = [unit(a, d) for a in range(d)]
    for i, p in enumerate(points):
        for axis in range(d):
            q = translate(p, units[axis])
            j = point_index.get(q)
            if j is None:
                boundary[i] = True
            else:
                edges.append(Edge(p, axis))
                edge_u.append(i)
                edge_v.append(j)
            back = tuple(c - s for c, s in zip(p, units[axis]))
            if back not in pset:
                boundary[i] = True

    edge_tuple = tuple(edges)
    edge_index = {e: k for k, e in enumerate(edge_tuple)}
    edge_base = np.array([e.base for e in edge_tuple], dtype=np.int64).reshape(
        len(edge_tuple), d
    )
    edge_axis = np.array([e.axis for e in edge_tuple], dtype=np.int64)
    eu = np.array(edge_u, dtype=np.int64)
    ev = np.array(edge_v, dtype=np.int64)

    deg = np.zeros(len(points), dtype=np.int64)
    np.add.at(deg, eu, 1)
    np.add.at(deg, ev, 1)
    indptr = np.zeros(len(points) + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    nbr_vertex = np.zeros(indptr[-1], dtype=np.int64)
    nbr_edge = np.zeros(indptr[-1], dtype=np.int64)
    cursor = indptr[:-1].copy()
    for k in range(len(edge_tuple)):
        a, b = eu[k], ev[k]
        nbr_vertex[cursor[a]] = b
        nbr_edge[cursor[a]] = k
        cursor[a] += 1
        nbr_vertex[cursor[b]] = a
        nbr_edge[cursor[b]] = k
        cursor[b] += 1

    return WindowIndex(
        region=region,
        points=points,
        point_index=point_index,
        coords=coords,
        edges=edge_tuple,
        edge_index=edge_index,
        edge_base=edge_base,
        edge_axis=edge_axis,
        edge_u=eu,
        edge_v=ev,
        indptr=indptr,
        nbr_vertex=nbr_vertex,
        nbr_edge=nbr_edge,
        boundary=boundary,
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _vertex_prefix(index: WindowIndex, master_seed: int, stream: int) -> np.ndarray:
    h0 = _absorb_int(_mix64_int(master_seed ^ _GOLD), stream)
    h = np.full(index.n_vertices, h0, dtype=np.uint64)
    for k in range(index.dimension):
        h = _absorb(h, _as_words(index.coords[:, k]))
    return h


@lru_cache(maxsize=32)
def _edge_prefix(index: WindowIndex, master_seed: int, stream: int) -> np.ndarray:
    h0 = _absorb_int(_mix64_int(master_seed ^ _GOLD), stream)
    h = np.full(index.n_edges, h0, dtype=np.uint64)
    for k in range(index.dimension):
        h = _absorb(h, _as_words(index.edge_base[:, k]))
    return _absorb(h, _as_words(index.edge_axis))


def _finalize(prefix: np.ndarray, replicate: int) -> np.ndarray:
    return _to_uniform(_absorb(prefix, np.uint64(replicate)))


def vertex_uniform(seed: SeedSpec, p: Point) -> float:
    """The uniform attached to one vertex (scalar path, bit-identical to sampling)."""
    return _scalar_uniform(seed.master_seed, seed.vertex_stream, p, seed.replicate)


def edge_clock(seed: SeedSpec, e: Edge) -> float:
    """The clock attached to one edge (scalar path, bit-identical to sampling)."""
    return _scalar_uniform(
        seed.master_seed, seed.edge_stream, (*e.base, e.axis), seed.replicate
    )


@dataclass(frozen=True, eq=False)
class EnvironmentField:
    """Sampled constraints and clocks on one window.

    Immutable after sampling; the arrays are indexed by the window's
    :class:`WindowIndex`. Clock ties (probability ~0 in 53-bit uniforms) are
    not perturbed; the dynamics resolves them by canonical edge order.
    """

    window: Region
    index: WindowIndex
    law: ConstraintLaw | None
    seed: SeedSpec
    X: np.ndarray
    kappa: np.ndarray
    U: np.ndarray

    @property
    def dimension(self) -> int:
        return self.index.dimension

    def window_contains(self, p: Point) -> bool:
        return p in self.index.point_index

    def clock(self, e: Edge) -> float:
        k = self.index.edge_index.get(e)
        if k is None:
            raise MarginError(f"edge {e} outside the sampled window")
        return float(self.U[k])

    def constraint(self, p: Point) -> int:
        i = self.index.point_index.get(p)
        if i is None:
            raise MarginError(f"vertex {p} outside the sampled window")
        return int(self.kappa[i])

    def vertex_value(self, p: Point) -> float:
        i = self.index.point_index.get(p)
        if i is None:
            raise MarginError(f"vertex {p} outside the sampled window")
        return float(self.X[i])


def sample_environment(seed: SeedSpec, window: Region, law: ConstraintLaw) -> EnvironmentField:
    """Draw constraints and clocks on a finite window, deterministically in the seed."""
    index = window_index(window)
    if law.dimension != index.dimension:
        raise ValueError(
            f"law dimension {law.dimension} does not match window dimension {index.dimension}"
        )
    X = _finalize(_vertex_prefix(index, seed.master_seed, seed.vertex_stream), seed.replicate)
    U = _finalize(_edge_prefix(index, seed.master_seed, seed.edge_stream), seed.replicate)
    kappa = law.constraints_from_uniforms(X)
    return EnvironmentField(window, index, law, seed, X, kappa, U)


def field_with_constraints(
    seed: SeedSpec, window: Region, constraints: dict
) -> EnvironmentField:
    """Sample clocks only, with constraints fixed per vertex (for oracle comparisons)."""
    index = window_index(window)
    U = _finalize(_edge_prefix(index, seed.master_seed, seed.edge_stream), seed.replicate)
    kappa = np.array([constraints[p] for p in index.points], dtype=np.uint8)
    X = np.zeros(index.n_vertices)
    return EnvironmentField(window, index, None, seed, X, kappa, U)


def resample_outside(
    fld: EnvironmentField,
    keep_vertices: Iterable[Point],
    keep_edges: Iterable[Edge],
    tag: int = 0,
) -> EnvironmentField:
    """Fresh constraints and clocks everywhere except the kept entities (exact on those)."""
    if fld.law is None:
        raise ValueError("resampling requires a law-sampled field")
    fresh = sample_environment(fld.seed.fresh_streams(tag), fld.window, fld.law)
    idx = fld.index
    vmask = np.zeros(idx.n_vertices, dtype=bool)
    for p in keep_vertices:
        vmask[idx.point_index[p]] = True
    emask = np.zeros(idx.n_edges, dtype=bool)
    for e in keep_edges:
        emask[idx.edge_index[e]] = True
    X = np.where(vmask, fld.X, fresh.X)
    U = np.where(emask, fld.U, fresh.U)
    kappa = np.where(vmask, fld.kappa, fresh.kappa).astype(np.uint8)
    return EnvironmentField(fld.window, idx, fld.law, fld.seed, X, kappa, U)


@dataclass(eq=False)
class LazyClockField:
    """Clocks computed on demand from the seed; used where windows would be wastefully large."""

    seed: SeedSpec
    window: Region
    _cache: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.window.dimension

    def window_contains(self, p: Point) -> bool:
        return p in self.window

    def clock(self, e: Edge) -> float:
        u = self._cache.get(e)
        if u is None:
            if e.base not in self.window or e.head not in self.window:
                raise MarginError(f"edge {e} outside the declared window")
            u = edge_clock(self.seed, e)
            self._cache[e] = u
        return u


# ---------------------------------------------------------------------------
# Shared-uniform grid experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoupledGridResult:
    cells: tuple[tuple[ConstraintLaw, float], ...]
    n: int
    means: tuple[float, ...]
    flip_rates: tuple[float, ...]  # between consecutive cells

    def standard_errors(self) -> tuple[float, ...]:
        return tuple(
            float(np.sqrt(max(p * (1.0 - p), 0.0) / self.n)) for p in self.means
        )


def coupled_event_grid(
    seed: SeedSpec,
    window: Region,
    cells: Sequence[tuple[ConstraintLaw, float]],
    event: Callable,
    support: Iterable[Edge],
    n: int,
    margin: int = 0,
) -> CoupledGridResult:
    """Empirical event probabilities over a (law, time) grid with shared randomness.

    One draw of vertex uniforms and clocks per replicate is reused across all
    grid cells; only the coupled constraints and the evaluation time differ.
    The flip rate between consecutive cells measures how often the shared draw
    gives different indicator values, which is the mechanism behind continuity
    of local event probabilities.
    """
    from .dynamics import config_at, evolve

    index = window_index(window)
    support = list(support)
    if not support:
        raise ValueError("empty event support")
    for e in support:
        if e not in index.edge_index:
            raise MarginError(f"support edge {e} outside window")
    support_vertices = {p for e in support for p in e.endpoints()}
    if margin > 0 and not contains_ball(window, support_vertices, margin):
        raise MarginError("event support too close to the window boundary")
    for law, t in cells:
        if law.dimension != index.dimension:
            raise ValueError("cell law dimension mismatch")
        if not 0.0 <= t <= 1.0:
            raise ValueError("cell time outside [0, 1]")

    counts = np.zeros(len(cells), dtype=np.int64)
    flips = np.zeros(max(len(cells) - 1, 0), dtype=np.int64)
    for r in range(n):
        rep = seed.shifted(r)
        X = _finalize(_vertex_prefix(index, rep.master_seed, rep.vertex_stream), rep.replicate)
        U = _finalize(_edge_prefix(index, rep.master_seed, rep.edge_stream), rep.replicate)
        prev = None
        for c, (law, t) in enumerate(cells):
            kappa = law.constraints_from_uniforms(X)
            fld = EnvironmentField(window, index, law, rep, X, kappa, U)
            value = bool(event(config_at(evolve(fld), t)))
            counts[c] += value
            if prev is not None and value != prev:
                flips[c - 1] += 1
            prev = value
    return CoupledGridResult(
        cells=tuple(cells),
        n=n,
        means=tuple(float(c) / n for c in counts),
        flip_rates=tuple(float(c) / n for c in flips),
    )
