"""Closed-form constants and combinatorial bounds behind the decay and coarse-graining analysis.

All binomials and geometric series are evaluated through log-gamma in log
space; nothing here needs big integers, and quantities like base**L for
L ~ 1e10 are kept as logs to avoid underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

# Fourth power of the per-side weight entering the closed-path counting.
SIDE_PAIR_BASE = 439.0 / 18144.0


def log_binomial(a: int, b: int) -> float:
    """log C(a, b); -inf outside the support."""
    if b < 0 or a < 0 or b > a:
        return -math.inf
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def side_pair_factor() -> float:
    return SIDE_PAIR_BASE**0.25


def side_weight() -> float:
    """The per-side weight of the closed-path series: 9/2 times the squared pair factor."""
    return 4.5 * math.sqrt(SIDE_PAIR_BASE)


def series_base() -> float:
    """Geometric base of the path series, strictly between 1/2 and 1."""
    return 1.0 / 3.0 + (2.0 / 3.0) * math.sqrt(side_weight() + 0.25) + 0.001


@dataclass(frozen=True)
class BoundConstants:
    """Every closed-form constant used by the decay estimates and the scale ladder.

    The series prefactor is not pinned by any closed form; by default it is
    calibrated empirically as the supremum of the bounded ratio over
    n <= 100000 and must be treated as non-rigorous.
    """

    dimension: int
    decay_rate: float  # exponential rate in the radius and covariance tails
    mean_influence_bound: float  # [4d(1+d)]^(2d)
    radius_tail_prefactor: float  # 16 d^4 / (2d-1) times the mean-influence bound
    covariance_prefactor: float  # twice the radius-tail prefactor
    side_pair_factor: float  # (439/18144)^(1/4), square lattice path counting
    side_weight: float  # 9/2 times the squared side pair factor
    series_base: float  # in (1/2, 1)
    series_prefactor: float
    series_prefactor_source: str
    annulus_prefactor: float  # 8 p / (1-base)^2 * (1 + 7/base + 12/base^2)


def decay_rate(d: int) -> float:
    """The rate in exp(-4 * rate * r) radius tails: -(1/8d) log((2d-1)/2d)."""
    return -math.log1p(-1.0 / (2 * d)) / (8 * d)


def mean_influence_bound(d: int) -> int:
    return (4 * d * (1 + d)) ** (2 * d)


@lru_cache(maxsize=8)
def calibrate_series_prefactor(n_max: int = 100_000) -> tuple[float, int]:
    """Empirical sup over path lengths of the ratio bounded by the geometric series.

    Returns (value, argmax length). Non-rigorous: a scan, not a proof.
    """
    s = side_weight()
    log_s = math.log(s)
    log_23 = math.log(2.0 / 3.0)
    log_base = math.log(series_base())
    best = -math.inf
    best_n = 0
    for n in range(4, n_max + 1):
        r = predicted_argmax(n)
        log_ratio = (
            n * log_23 + log_binomial(n - r - 1, r - 1) + r * log_s - n * log_base
        )
        if log_ratio > best:
            best = log_ratio
            best_n = n
    return math.exp(best), best_n


def constants(d: int = 2, series_prefactor: float | None = None) -> BoundConstants:
    """Populate the full constants table for dimension d.

    The path-counting constants (side factors, series base, annulus prefactor)
    are square-lattice quantities and are reported unchanged for every d.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    c1 = mean_influence_bound(d)
    c2 = 16.0 * d**4 * c1 / (2 * d - 1)
    if series_prefactor is None:
        prefactor, argmax_n = calibrate_series_prefactor()
        source = f"calibrated (scan of path lengths <= 100000, peak at {argmax_n})"
    else:
        if series_prefactor <= 0:
            raise ValueError("series prefactor must be positive")
        prefactor = float(series_prefactor)
        source = "user supplied"
    base = series_base()
    annulus_pref = (
        8.0 * prefactor / (1.0 - base) ** 2 * (1.0 + 7.0 / base + 12.0 / base**2)
    )
    return BoundConstants(
        dimension=d,
        decay_rate=decay_rate(d),
        mean_influence_bound=float(c1),
        radius_tail_prefactor=c2,
        covariance_prefactor=2.0 * c2,
        side_pair_factor=side_pair_factor(),
        side_weight=side_weight(),
        series_base=base,
        series_prefactor=prefactor,
        series_prefactor_source=source,
        annulus_prefactor=annulus_pref,
    )


# ---------------------------------------------------------------------------
# Side-count profile of the closed-path series
# ---------------------------------------------------------------------------


def predicted_argmax(n: int) -> int:
    """Closed-form location of the maximum of the side-count weight profile."""
    if n < 4:
        raise ValueError("profile needs path length >= 4")
    s = side_weight()
    disc = (4.0 * s + 1.0) * n * (n - 2.0) + (2.0 * s + 1.0) ** 2
    r = math.ceil(n / 2.0 - (2.0 * s + 1.0 + math.sqrt(disc)) / (8.0 * s + 2.0))
    return int(r)


def log_side_weight_value(n: int, r: int) -> float:
    """log of s^r * C(n-r-1, r-1), the weight of paths with r sides."""
    return r * math.log(side_weight()) + log_binomial(n - r - 1, r - 1)


@dataclass(frozen=True)
class SideProfile:
    n: int
    log_values: tuple[float, ...]  # index r-1 holds the weight of r sides
    brute_argmax: int
    predicted: int


def side_profile(n: int) -> SideProfile:
    """Weight profile over the side count r in [1, n/2], with both argmax routes."""
    if n < 4:
        raise ValueError("profile needs path length >= 4")
    r_hi = n // 2
    log_values = tuple(log_side_weight_value(n, r) for r in range(1, r_hi + 1))
    brute = 1 + max(range(r_hi), key=log_values.__getitem__)
    return SideProfile(
        n=n, log_values=log_values, brute_argmax=brute, predicted=predicted_argmax(n)
    )


def dominant_root(n: int) -> float:
    """n-th root of the dominant profile term; converges to the closed-form limit."""
    if n < 10:
        raise ValueError("root evaluation needs n >= 10")
    r = predicted_argmax(n)
    return math.exp(log_side_weight_value(n, r) / n)


def dominant_root_limit(weight: float | None = None) -> float:
    """Closed-form limit 1/2 + sqrt(weight + 1/4) of the dominant-term root."""
    s = side_weight() if weight is None else weight
    return 0.5 + math.sqrt(s + 0.25)


# ---------------------------------------------------------------------------
# Geometric tail sums and the annulus bound
# ---------------------------------------------------------------------------


def tail_weighted_sum_closed(base: float, start: int) -> float:
    """Closed form of sum_{n >= start} n * base^n."""
    if not 0.0 < base < 1.0:
        raise ValueError("base must lie in (0, 1)")
    return base**start * (start * (1.0 - base) + base) / (1.0 - base) ** 2


def tail_weighted_sum_direct(base: float, start: int, rel_tol: float = 1e-16) -> float:
    """Direct summation of sum_{n >= start} n * base^n, for cross-checking."""
    if not 0.0 < base < 1.0:
        raise ValueError("base must lie in (0, 1)")
    total = 0.0
    term_pow = base**start
    n = start
    while True:
        term = n * term_pow
        total += term
        if term < rel_tol * total and n > start:
            return total
        n += 1
        term_pow *= base


@dataclass(frozen=True)
class AnnulusBound:
    scale: int
    value: float
    log_value: float
    prefactor: float  # the 8N union-bound factor
    side_terms: tuple[float, float, float]  # zero, one, and two unit-length sides
    assembled: float  # prefactor times the summed side terms; <= value


def annulus_bound(scale: int, table: BoundConstants) -> AnnulusBound:
    """The closed-dual annulus-crossing bound prefactor * scale^2 * base^scale, with its pieces."""
    if scale < 1:
        raise ValueError("scale must be positive")
    base = table.series_base
    log_value = (
        math.log(table.annulus_prefactor) + 2.0 * math.log(scale) + scale * math.log(base)
    )
    series_piece = table.series_prefactor / (1.0 - base) ** 2
    t0 = series_piece * scale * base**scale
    t1 = 7.0 * series_piece * max(scale - 1, 0) * base ** (scale - 1)
    t2 = 12.0 * series_piece * max(scale - 2, 0) * base ** (scale - 2)
    return AnnulusBound(
        scale=scale,
        value=math.exp(log_value),
        log_value=log_value,
        prefactor=8.0 * scale,
        side_terms=(t0, t1, t2),
        assembled=8.0 * scale * (t0 + t1 + t2),
    )
