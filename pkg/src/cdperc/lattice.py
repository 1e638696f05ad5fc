"""Hypercubic lattice geometry: points, canonical edges, regions, boundaries, and the planar dual.

Everything here is pure and immutable, so it is safe to share across workers.
Coordinates are plain integer tuples; no floating point enters the geometry.
Dual-lattice vertices are encoded by the integer pair ``(a, b)`` standing for
the half-integer point ``(a + 1/2, b + 1/2)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple

Point = tuple[int, ...]
DualVertex = tuple[int, int]


class MarginError(ValueError):
    """A computation needed lattice data outside the configured window."""


def unit(axis: int, d: int) -> Point:
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for dimension {d}")
    return tuple(1 if k == axis else 0 for k in range(d))


def translate(p: Point, step: Point) -> Point:
    return tuple(a + b for a, b in zip(p, step))


def l1_distance(u: Point, v: Point) -> int:
    """Graph (Manhattan) distance between two lattice points."""
    if len(u) != len(v):
        raise ValueError("dimension mismatch")
    return sum(abs(a - b) for a, b in zip(u, v))


def l1_point_to_set(p: Point, pts: Iterable[Point]) -> int:
    return min(l1_distance(p, q) for q in pts)


def l1_set_distance(a: Iterable[Point], b: Iterable[Point]) -> int:
    """Minimum graph distance between two nonempty point sets."""
    bl = list(b)
    return min(l1_point_to_set(p, bl) for p in a)


def linf_distance(u: Point, v: Point) -> int:
    if len(u) != len(v):
        raise ValueError("dimension mismatch")
    return max(abs(a - b) for a, b in zip(u, v))


def neighbors(p: Point) -> list[Point]:
    """The 2d lattice neighbors of a point."""
    out = []
    for axis in range(len(p)):
        for sign in (1, -1):
            out.append(tuple(c + (sign if k == axis else 0) for k, c in enumerate(p)))
    return out


class Edge(NamedTuple):
    """Undirected lattice edge in canonical form: joins ``base`` and ``base + unit(axis)``."""

    base: Point
    axis: int

    @property
    def head(self) -> Point:
        return translate(self.base, unit(self.axis, len(self.base)))

    def endpoints(self) -> tuple[Point, Point]:
        return self.base, self.head


def edge_between(u: Point, v: Point) -> Edge:
    """Canonical edge joining two adjacent points."""
    if l1_distance(u, v) != 1:
        raise ValueError(f"{u} and {v} are not lattice neighbors")
    for axis, (a, b) in enumerate(zip(u, v)):
        if a != b:
            return Edge(u if a < b else v, axis)
    raise AssertionError("unreachable")


def incident_edges(p: Point) -> list[Edge]:
    """The 2d canonical edges touching a point."""
    d = len(p)
    out = []
    for axis in range(d):
        out.append(Edge(p, axis))
        out.append(Edge(translate(p, tuple(-1 if k == axis else 0 for k in range(d))), axis))
    return out


def edge_set(gamma: Iterable[Point]) -> set[Edge]:
    """All edges with both endpoints in the given vertex set."""
    pts = set(gamma)
    out: set[Edge] = set()
    for p in pts:
        d = len(p)
        for axis in range(d):
            if translate(p, unit(axis, d)) in pts:
                out.add(Edge(p, axis))
    return out


def boundaries(gamma: Iterable[Point]) -> tuple[set[Point], set[Point], set[Edge]]:
    """Vertex boundary, external vertex boundary, and external edge boundary of a finite set."""
    pts = set(gamma)
    if not pts:
        raise ValueError("boundaries of an empty set are undefined")
    inner: set[Point] = set()
    outer: set[Point] = set()
    out_edges: set[Edge] = set()
    for p in pts:
        for q in neighbors(p):
            if q not in pts:
                inner.add(p)
                outer.add(q)
                out_edges.add(edge_between(p, q))
    return inner, outer, out_edges


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of lattice points with inclusive corners."""

    lo: Point
    hi: Point

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("corner dimension mismatch")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("empty box")

    @property
    def dimension(self) -> int:
        return len(self.lo)

    def __contains__(self, p: Point) -> bool:
        return len(p) == self.dimension and all(
            a <= c <= b for a, c, b in zip(self.lo, p, self.hi)
        )

    @cached_property
    def _vertices(self) -> tuple[Point, ...]:
        ranges = [range(a, b + 1) for a, b in zip(self.lo, self.hi)]
        return tuple(itertools.product(*ranges))

    def vertices(self) -> tuple[Point, ...]:
        """All member points in lexicographic order."""
        return self._vertices

    @cached_property
    def vertex_set(self) -> frozenset[Point]:
        return frozenset(self._vertices)

    def bounding_box(self) -> Box:
        return self


@dataclass(frozen=True)
class LInfBox:
    """The box ``[center - radius, center + radius]^d`` in every coordinate."""

    center: Point
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def dimension(self) -> int:
        return len(self.center)

    def __contains__(self, p: Point) -> bool:
        return len(p) == self.dimension and linf_distance(p, self.center) <= self.radius

    def bounding_box(self) -> Box:
        r = self.radius
        return Box(tuple(c - r for c in self.center), tuple(c + r for c in self.center))

    def vertices(self) -> tuple[Point, ...]:
        return self.bounding_box().vertices()

    @cached_property
    def vertex_set(self) -> frozenset[Point]:
        return self.bounding_box().vertex_set


@dataclass(frozen=True)
class L1Ball:
    """All points within graph distance ``radius`` of a finite seed set."""

    centers: frozenset[Point]
    radius: int

    def __post_init__(self):
        if not self.centers:
            raise ValueError("seed set must be nonempty")
        dims = {len(p) for p in self.centers}
        if len(dims) != 1:
            raise ValueError("seed points of mixed dimension")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @classmethod
    def around(cls, seeds: Iterable[Point] | Point, radius: int) -> "L1Ball":
        if isinstance(seeds, tuple) and seeds and isinstance(seeds[0], int):
            seeds = [seeds]
        return cls(frozenset(seeds), radius)

    @property
    def dimension(self) -> int:
        return len(next(iter(self.centers)))

    @cached_property
    def vertex_set(self) -> frozenset[Point]:
        current = set(self.centers)
        frontier = set(self.centers)
        for _ in range(self.radius):
            frontier = {
                q for p in frontier for q in neighbors(p) if q not in current
            }
            current |= frontier
        return frozenset(current)

    def vertices(self) -> tuple[Point, ...]:
        return tuple(sorted(self.vertex_set))

    def __contains__(self, p: Point) -> bool:
        return p in self.vertex_set

    def bounding_box(self) -> Box:
        lo = tuple(
            min(c[k] for c in self.centers) - self.radius for k in range(self.dimension)
        )
        hi = tuple(
            max(c[k] for c in self.centers) + self.radius for k in range(self.dimension)
        )
        return Box(lo, hi)


Region = Box | LInfBox | L1Ball


def contains_ball(region: Region, seeds: Iterable[Point], radius: int) -> bool:
    """Whether the graph-distance ball of the given radius around the seeds fits in the region."""
    ball = L1Ball(frozenset(seeds), radius)
    return all(p in region for p in ball.vertex_set)


# ---------------------------------------------------------------------------
# Planar dual (dimension 2 only)
# ---------------------------------------------------------------------------


class DualEdge(NamedTuple):
    """Edge of the half-integer dual lattice, canonical like ``Edge``."""

    base: DualVertex
    axis: int

    @property
    def head(self) -> DualVertex:
        a, b = self.base
        return (a + 1, b) if self.axis == 0 else (a, b + 1)

    def endpoints(self) -> tuple[DualVertex, DualVertex]:
        return self.base, self.head


def dual_of(e: Edge) -> DualEdge:
    """The unique dual edge crossing a primal edge.

    Convention: the primal edge {(a,b),(a+1,b)} maps to the dual edge between
    the encoded dual vertices (a,b-1) and (a,b); the primal edge
    {(a,b),(a,b+1)} maps to the dual edge between (a-1,b) and (a,b).
    """
    if len(e.base) != 2:
        raise ValueError("the dual lattice is defined in dimension 2 only")
    a, b = e.base
    if e.axis == 0:
        return DualEdge((a, b - 1), 1)
    return DualEdge((a - 1, b), 0)


def primal_of(de: DualEdge) -> Edge:
    """Inverse of :func:`dual_of`."""
    p, q = de.base
    if de.axis == 1:
        return Edge((p, q + 1), 0)
    return Edge((p + 1, q), 1)
