"""Clock-interval clusters, influence sets, locality verification, radius tails, and covariance decay.

The influence set of a vertex set is built by composing connectivity closures
over successive clock intervals of length 1/2d, innermost interval first.
Everything outside it cannot affect the configuration on the seed set, which
is checked here as an executable statement (resample outside, re-run, compare).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Protocol

import numpy as np

from . import bounds
from .dynamics import Configuration, config_at, evolve
from .environment import ConstraintLaw, LazyClockField, SeedSpec, sample_environment, resample_outside
from .lattice import (
    Edge,
    L1Ball,
    LInfBox,
    MarginError,
    Point,
    Region,
    boundaries,
    contains_ball,
    edge_between,
    edge_set,
    l1_point_to_set,
    l1_set_distance,
    neighbors,
)


class ClockSource(Protocol):
    def clock(self, e: Edge) -> float: ...

    def window_contains(self, p: Point) -> bool: ...

    @property
    def dimension(self) -> int: ...


def interval_cluster(
    clocks: ClockSource,
    seeds: Iterable[Point],
    a: float,
    b: float,
    restriction: Iterable[Point] | None = None,
) -> frozenset[Point]:
    """Connectivity closure of the seeds through edges whose clocks lie in (a, b].

    With a restriction, only edges with both endpoints inside it are used.
    Reaching for a clock outside the window is a hard error: the true cluster
    could then differ from the windowed one.
    """
    if not 0.0 <= a <= b <= 1.0:
        raise ValueError("need 0 <= a <= b <= 1")
    seed_set = frozenset(seeds)
    for p in seed_set:
        if not clocks.window_contains(p):
            raise MarginError(f"seed {p} outside window")
    if a == b:
        return seed_set
    restrict = None if restriction is None else frozenset(restriction)
    result = set(seed_set)
    queue = deque(seed_set)
    while queue:
        p = queue.popleft()
        if restrict is not None and p not in restrict:
            continue
        for q in neighbors(p):
            if q in result:
                continue
            if restrict is not None and q not in restrict:
                continue
            u = clocks.clock(edge_between(p, q))
            if a < u <= b:
                result.add(q)
                queue.append(q)
    return frozenset(result)


def _grow_capped(
    clocks: ClockSource,
    seeds: frozenset[Point],
    a: float,
    b: float,
    within: Callable[[Point], bool],
) -> tuple[frozenset[Point], bool]:
    """Like interval_cluster, but stops expanding past the cap; reports whether it escaped."""
    if a == b:
        return seeds, False
    result = set(seeds)
    queue = deque(seeds)
    escaped = False
    while queue:
        p = queue.popleft()
        for q in neighbors(p):
            if q in result:
                continue
            u = clocks.clock(edge_between(p, q))
            if a < u <= b:
                result.add(q)
                if within(q):
                    queue.append(q)
                else:
                    escaped = True
    return frozenset(result), escaped


def _interval_ladder(t: float, d: int) -> list[tuple[float, float]]:
    """Intervals ((j-1)/2d, min(t, j/2d)] for j = m down to 1, with m = ceil(2d t)."""
    m = math.ceil(2 * d * t)
    out = []
    for j in range(m, 0, -1):
        lo = (j - 1) / (2 * d)
        hi = t if j == m else j / (2 * d)
        out.append((lo, hi))
    return out


@dataclass(frozen=True)
class InfluenceSet:
    """Layered closure outside which randomness cannot affect the seed set's configuration."""

    base: frozenset[Point]
    time: float
    layers: tuple[frozenset[Point], ...]  # innermost first; each contains the previous
    union: frozenset[Point]
    radius: int  # max graph distance from the union to the seed set


def influence_set(clocks: ClockSource, lam: Iterable[Point], t: float) -> InfluenceSet:
    """The layered influence set of a vertex set at time t (t = 0 gives the set itself)."""
    base = frozenset(lam)
    if not base:
        raise ValueError("empty seed set")
    if not 0.0 <= t <= 1.0:
        raise ValueError("time outside [0, 1]")
    d = len(next(iter(base)))
    current = base
    layers: list[frozenset[Point]] = []
    for a, b in _interval_ladder(t, d):
        current = interval_cluster(clocks, current, a, b)
        layers.append(current)
    radius = max((l1_point_to_set(p, base) for p in current), default=0)
    return InfluenceSet(base=base, time=t, layers=tuple(layers), union=current, radius=radius)


def influence_confined(clocks: ClockSource, lam: Iterable[Point], t: float, r: int) -> bool:
    """Whether the influence set stays inside the graph-distance ball of radius r.

    Needs the ball of radius r + 1 inside the window; aborts early once any
    layer escapes.
    """
    base = frozenset(lam)
    if not 0.0 <= t <= 1.0:
        raise ValueError("time outside [0, 1]")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    for p in L1Ball(base, r + 1).vertex_set:
        if not clocks.window_contains(p):
            raise MarginError("confinement ball exceeds the window")
    d = len(next(iter(base)))
    within = lambda q: l1_point_to_set(q, base) <= r
    current = base
    for a, b in _interval_ladder(t, d):
        current, escaped = _grow_capped(clocks, current, a, b, within)
        if escaped:
            return False
    return True


def influence_radius(
    clocks: ClockSource, v: Point, cap: int, t: float = 1.0
) -> tuple[int, int]:
    """(radius, size) of the influence set of one vertex, censored at cap.

    A returned radius of cap + 1 means "greater than cap"; the size is then a
    partial count and should be discarded.
    """
    base = frozenset([v])
    d = len(v)
    within = lambda q: l1_point_to_set(q, base) <= cap
    current = base
    for a, b in _interval_ladder(t, d):
        current, escaped = _grow_capped(clocks, current, a, b, within)
        if escaped:
            return cap + 1, len(current)
    radius = max((l1_point_to_set(p, base) for p in current), default=0)
    return radius, len(current)


# ---------------------------------------------------------------------------
# Locality as an executable statement
# ---------------------------------------------------------------------------


class LocalityOutcome(Enum):
    NOT_APPLICABLE = "not_applicable"
    PASS = "pass"
    FAIL = "FAIL"


def locality_check(
    seed: SeedSpec,
    lam: Iterable[Point],
    t: float,
    r: int,
    window: Region,
    law: ConstraintLaw,
    resample_tag: int = 0,
) -> LocalityOutcome:
    """Resample everything outside the confinement ball and compare the seed-set configuration.

    Applicable only when the influence set is confined to radius r; then a
    changed bit on the seed set's edges is an implementation bug, never noise.
    """
    base = frozenset(lam)
    if not contains_ball(window, base, max(3 * r, r + 2)):
        raise MarginError("window margin below three times the confinement radius")
    fld = sample_environment(seed, window, law)
    if not influence_confined(fld, base, t, r):
        return LocalityOutcome.NOT_APPLICABLE
    keep_vertices = L1Ball(base, r + 1).vertex_set
    keep_edges = edge_set(keep_vertices)
    fld2 = resample_outside(fld, keep_vertices, keep_edges, tag=resample_tag)
    lam_edges = sorted(edge_set(base))
    idx = fld.index
    cols = [idx.edge_index[e] for e in lam_edges]
    open1 = config_at(evolve(fld), t).open_mask
    open2 = config_at(evolve(fld2), t).open_mask
    if all(open1[c] == open2[c] for c in cols):
        return LocalityOutcome.PASS
    return LocalityOutcome.FAIL


def locality_batch(
    seed: SeedSpec,
    lam: Iterable[Point],
    t: float,
    r: int,
    window: Region,
    law: ConstraintLaw,
    n: int,
) -> tuple[int, int, int]:
    """(applicable, passes, fails) over n replicates."""
    applicable = passes = fails = 0
    for i in range(n):
        outcome = locality_check(seed.shifted(i), lam, t, r, window, law)
        if outcome is LocalityOutcome.NOT_APPLICABLE:
            continue
        applicable += 1
        if outcome is LocalityOutcome.PASS:
            passes += 1
        else:
            fails += 1
    return applicable, passes, fails


# ---------------------------------------------------------------------------
# Radius tail
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadiusTailReport:
    vertex: Point
    n: int
    max_radius: int
    exceed_counts: tuple[int, ...]  # index r: samples with radius > r
    censored: int
    mean_size: float  # over uncensored samples
    slope: float | None
    intercept: float | None
    fit_radii: tuple[int, ...]
    decay_rate: float
    tail_prefactor: float

    def survival(self) -> tuple[float, ...]:
        return tuple(c / self.n for c in self.exceed_counts)

    def bound(self) -> tuple[float, ...]:
        return tuple(
            self.tail_prefactor * math.exp(-4.0 * self.decay_rate * r)
            for r in range(self.max_radius + 1)
        )


def radius_samples(
    seed: SeedSpec, v: Point, r_max: int, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Influence radii and sizes of one vertex over n replicates, censored at r_max.

    A radius of r_max + 1 means "greater than r_max"; the matching size entry
    is then -1. Works on a materialized window of radius r_max + 1; the
    counter-based clocks make this identical to growing lazily on any larger
    window.
    """
    from .environment import _edge_prefix, _finalize, window_index

    window = LInfBox(v, r_max + 1)
    idx = window_index(window)
    indptr = idx.indptr.tolist()
    nbr_v = idx.nbr_vertex.tolist()
    nbr_e = idx.nbr_edge.tolist()
    dist = np.abs(idx.coords - np.asarray(v, dtype=np.int64)).sum(axis=1).tolist()
    start = idx.point_index[v]
    ladder = _interval_ladder(1.0, idx.dimension)
    prefix = _edge_prefix(idx, seed.master_seed, seed.edge_stream)

    radii = np.empty(n, dtype=np.int64)
    sizes = np.empty(n, dtype=np.int64)
    for i in range(n):
        clocks = _finalize(prefix, seed.replicate + i).tolist()
        member = bytearray(idx.n_vertices)
        member[start] = 1
        members = [start]
        escaped = False
        for a, b in ladder:
            qi = 0
            queue = list(members)
            while qi < len(queue):
                p = queue[qi]
                qi += 1
                for k in range(indptr[p], indptr[p + 1]):
                    j = nbr_v[k]
                    if member[j]:
                        continue
                    u = clocks[nbr_e[k]]
                    if a < u <= b:
                        if dist[j] > r_max:
                            escaped = True
                            break
                        member[j] = 1
                        members.append(j)
                        queue.append(j)
                if escaped:
                    break
            if escaped:
                break
        if escaped:
            radii[i] = r_max + 1
            sizes[i] = -1
        else:
            radii[i] = max(dist[m] for m in members)
            sizes[i] = len(members)
    return radii, sizes


def radius_tail(
    seed: SeedSpec,
    v: Point,
    r_max: int,
    n: int,
    min_fit_survivors: int = 50,
    samples: tuple[np.ndarray, np.ndarray] | None = None,
) -> RadiusTailReport:
    """Empirical survival of the influence radius with a log-linear fit and the closed-form bound."""
    if samples is None:
        samples = radius_samples(seed, v, r_max, n)
    radii, size_arr = samples
    n = radii.size
    sizes = size_arr[size_arr >= 0]
    exceed = np.array(
        [(radii > r).sum() for r in range(r_max + 1)], dtype=np.int64
    )
    censored = int((radii > r_max).sum())
    fit_radii = [r for r in range(r_max + 1) if exceed[r] >= min_fit_survivors]
    slope = intercept = None
    if len(fit_radii) >= 2:
        ys = np.log(exceed[fit_radii] / n)
        coeffs = np.polyfit(np.array(fit_radii, dtype=float), ys, 1)
        slope, intercept = float(coeffs[0]), float(coeffs[1])
    table = bounds.constants(len(v))
    return RadiusTailReport(
        vertex=v,
        n=int(n),
        max_radius=r_max,
        exceed_counts=tuple(int(c) for c in exceed),
        censored=censored,
        mean_size=float(sizes.mean()) if sizes.size else math.nan,
        slope=slope,
        intercept=intercept,
        fit_radii=tuple(fit_radii),
        decay_rate=table.decay_rate,
        tail_prefactor=table.radius_tail_prefactor,
    )


def mean_influence_size(seed: SeedSpec, v: Point, r_max: int, n: int) -> float:
    """Empirical mean influence-set size of one vertex (uncensored samples)."""
    _, sizes = radius_samples(seed, v, r_max, n)
    kept = sizes[sizes >= 0]
    return float(kept.mean()) if kept.size else math.nan


# ---------------------------------------------------------------------------
# Covariance decay between distant regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecouplingReport:
    lam1: frozenset[Point]
    lam2: frozenset[Point]
    separation: int
    n: int
    p1: float
    p2: float
    p12: float
    cov_hat: float
    se: float
    bound: float


def decoupling_samples(
    seed: SeedSpec,
    law: ConstraintLaw,
    t: float,
    window: Region,
    event1: Callable[[Configuration], bool],
    event2: Callable[[Configuration], bool],
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Joint indicator samples of two events from the same replicates."""
    xs = np.zeros(n, dtype=bool)
    ys = np.zeros(n, dtype=bool)
    for i in range(n):
        fld = sample_environment(seed.shifted(i), window, law)
        config = config_at(evolve(fld), t)
        xs[i] = event1(config)
        ys[i] = event2(config)
    return xs, ys


def decoupling_window(lam1: Iterable[Point], lam2: Iterable[Point], pad: int) -> Region:
    from .lattice import Box

    pts = list(lam1) + list(lam2)
    d = len(pts[0])
    lo = tuple(min(p[k] for p in pts) - pad for k in range(d))
    hi = tuple(max(p[k] for p in pts) + pad for k in range(d))
    return Box(lo, hi)


def decoupling_estimate(
    seed: SeedSpec,
    law: ConstraintLaw,
    t: float,
    lam1: Iterable[Point],
    lam2: Iterable[Point],
    event1: Callable[[Configuration], bool],
    event2: Callable[[Configuration], bool],
    n: int,
    pad: int = 12,
    samples: tuple[np.ndarray, np.ndarray] | None = None,
) -> DecouplingReport:
    """Covariance estimate for events on two disjoint regions, with the closed-form bound.

    Joint and marginal estimates come from the same replicates; the reported
    standard error is for the covariance itself.
    """
    set1, set2 = frozenset(lam1), frozenset(lam2)
    if set1 & set2:
        raise ValueError("regions overlap")
    delta = l1_set_distance(set1, set2)
    if delta < 1:
        raise ValueError("regions must be disjoint")
    if samples is None:
        window = decoupling_window(set1, set2, pad)
        samples = decoupling_samples(seed, law, t, window, event1, event2, n)
    xs, ys = samples
    n = xs.size
    p1 = float(xs.mean())
    p2 = float(ys.mean())
    p12 = float((xs & ys).mean())
    cov = p12 - p1 * p2
    prods = (xs.astype(float) - p1) * (ys.astype(float) - p2)
    se = float(prods.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    table = bounds.constants(len(next(iter(set1))))
    b1 = len(boundaries(set1)[0])
    b2 = len(boundaries(set2)[0])
    bound = table.covariance_prefactor * (b1 + b2) * math.exp(-table.decay_rate * delta)
    return DecouplingReport(
        lam1=set1,
        lam2=set2,
        separation=delta,
        n=n,
        p1=p1,
        p2=p2,
        p12=p12,
        cov_hat=cov,
        se=se,
        bound=bound,
    )
