import math
import random

import numpy as np
import pytest

from cdperc import bounds
from cdperc.dynamics import edge_open_event
from cdperc.environment import ConstraintLaw, LazyClockField, SeedSpec, sample_environment
from cdperc.influence import (
    LocalityOutcome,
    decoupling_estimate,
    influence_confined,
    influence_radius,
    influence_set,
    interval_cluster,
    locality_batch,
    locality_check,
    mean_influence_size,
    radius_samples,
    radius_tail,
)
from cdperc.lattice import Box, Edge, LInfBox, MarginError
from tests.test_dynamics import make_field

LAW = ConstraintLaw((0.1, 0.2, 0.3, 0.4))


def test_interval_cluster_degenerate():
    fld = sample_environment(SeedSpec(1), LInfBox((0, 0), 5), LAW)
    assert interval_cluster(fld, [(0, 0)], 0.3, 0.3) == frozenset({(0, 0)})
    # clocks all above b: nothing joins
    hi = make_field(LInfBox((0, 0), 3), 3, {}, default_clock=0.95)
    assert interval_cluster(hi, [(0, 0)], 0.0, 0.5) == frozenset({(0, 0)})


def test_interval_cluster_hand_trace():
    window = LInfBox((0, 0), 4)
    clocks = {Edge((0, 0), 0): 0.3, Edge((1, 0), 0): 0.3}
    fld = make_field(window, 3, clocks, default_clock=0.9)
    got = interval_cluster(fld, [(0, 0)], 0.25, 0.5)
    assert got == frozenset({(0, 0), (1, 0), (2, 0)})


def test_interval_cluster_restriction():
    window = LInfBox((0, 0), 4)
    clocks = {Edge((0, 0), 0): 0.3, Edge((1, 0), 0): 0.3}
    fld = make_field(window, 3, clocks, default_clock=0.9)
    got = interval_cluster(fld, [(0, 0)], 0.25, 0.5, restriction={(0, 0), (1, 0)})
    assert got == frozenset({(0, 0), (1, 0)})


def test_interval_cluster_margin_error():
    fld = make_field(LInfBox((0, 0), 2), 3, {}, default_clock=0.4)
    # every edge qualifies, so the closure runs into the window edge
    with pytest.raises(MarginError):
        interval_cluster(fld, [(0, 0)], 0.3, 0.5)


def test_influence_set_time_zero_and_quiet_clocks():
    fld = sample_environment(SeedSpec(2), LInfBox((0, 0), 6), LAW)
    s = influence_set(fld, [(0, 0)], 0.0)
    assert s.union == frozenset({(0, 0)}) and s.radius == 0 and s.layers == ()
    quiet = make_field(LInfBox((0, 0), 6), 3, {}, default_clock=0.9)
    s2 = influence_set(quiet, [(0, 0)], 0.5)
    # two layers (1/4, 1/2] and (0, 1/4]; no clock in either
    assert len(s2.layers) == 2
    assert s2.union == frozenset({(0, 0)})


def test_influence_layer_count_interval_edges():
    # clock 0.0 lies in no half-open interval, so nothing ever joins
    quiet = make_field(LInfBox((0, 0), 6), 3, {}, default_clock=0.0)
    # t exactly at an interval boundary belongs to the lower cell count
    assert len(influence_set(quiet, [(0, 0)], 0.25).layers) == 1
    assert len(influence_set(quiet, [(0, 0)], 0.2500001).layers) == 2
    assert len(influence_set(quiet, [(0, 0)], 1.0).layers) == 4
    assert influence_set(quiet, [(0, 0)], 1.0).union == frozenset({(0, 0)})


def test_influence_nesting_in_time_pathwise():
    for rep in range(60):
        fld = sample_environment(SeedSpec(77, replicate=rep), LInfBox((0, 0), 14), LAW)
        t = (rep % 9 + 1) / 10
        try:
            st = influence_set(fld, [(0, 0)], t)
            s1 = influence_set(fld, [(0, 0)], 1.0)
        except MarginError:
            continue
        assert st.union <= s1.union
        assert all(a <= b for a, b in zip(s1.layers, s1.layers[1:]))
        assert frozenset({(0, 0)}) <= st.union


def test_influence_monotone_in_seed_set():
    for rep in range(40):
        fld = sample_environment(SeedSpec(78, replicate=rep), LInfBox((0, 0), 14), LAW)
        try:
            small = influence_set(fld, [(0, 0)], 0.6)
            big = influence_set(fld, [(0, 0), (1, 0)], 0.6)
        except MarginError:
            continue
        assert small.union <= big.union


def test_confined_basics():
    fld = sample_environment(SeedSpec(3), LInfBox((0, 0), 8), LAW)
    assert influence_confined(fld, [(0, 0)], 0.0, 0) is True
    quiet = make_field(LInfBox((0, 0), 5), 3, {}, default_clock=0.9)
    assert influence_confined(quiet, [(0, 0)], 0.5, 0) is True


def test_confined_escape_on_fast_path():
    window = LInfBox((0, 0), 8)
    clocks = {Edge((i, 0), 0): 0.1 for i in range(6)}
    fld = make_field(window, 3, clocks, default_clock=0.0)
    # a straight ray of early clocks escapes any small ball at t = 1
    assert influence_confined(fld, [(0, 0)], 1.0, 2) is False
    assert influence_confined(fld, [(0, 0)], 1.0, 6) is True


def test_confined_agrees_with_full_influence():
    for rep in range(40):
        fld = sample_environment(SeedSpec(79, replicate=rep), LInfBox((0, 0), 16), LAW)
        try:
            full = influence_set(fld, [(0, 0)], 0.7)
        except MarginError:
            continue
        for r in (1, 2, 4, 8):
            assert influence_confined(fld, [(0, 0)], 0.7, r) == (full.radius <= r)


def test_influence_radius_matches_influence_set():
    for rep in range(30):
        fld = sample_environment(SeedSpec(80, replicate=rep), LInfBox((0, 0), 16), LAW)
        try:
            full = influence_set(fld, [(0, 0)], 1.0)
        except MarginError:
            continue
        rad, size = influence_radius(fld, (0, 0), cap=14)
        if rad <= 14:
            assert rad == full.radius and size == len(full.union)


def test_locality_trivial_at_time_zero():
    out = locality_check(SeedSpec(4), [(0, 0)], 0.0, 1, LInfBox((0, 0), 6), LAW)
    assert out is LocalityOutcome.PASS


def test_locality_margin_enforced():
    with pytest.raises(MarginError):
        locality_check(SeedSpec(4), [(0, 0)], 0.5, 4, LInfBox((0, 0), 6), LAW)


def test_locality_batch_never_fails():
    applicable, passes, fails = locality_batch(
        SeedSpec(90), [(0, 0)], 0.8, 6, LInfBox((0, 0), 25), LAW, 150
    )
    assert fails == 0
    assert passes == applicable > 0


def test_locality_detects_tampering():
    # sanity that the comparison would catch a real dependence: resample INSIDE too
    from cdperc.dynamics import config_at, evolve
    from cdperc.environment import resample_outside
    from cdperc.lattice import edge_set

    seed = SeedSpec(91)
    window = LInfBox((0, 0), 10)
    hits = 0
    for rep in range(40):
        fld = sample_environment(seed.with_replicate(rep), window, LAW)
        fld2 = resample_outside(fld, [], [], tag=3)  # fresh everything
        e = Edge((0, 0), 0)
        a = config_at(evolve(fld), 0.8).is_open(e)
        b = config_at(evolve(fld2), 0.8).is_open(e)
        hits += a != b
    assert hits > 0


def test_radius_samples_match_lazy_reference():
    seed = SeedSpec(5)
    r_max = 10
    radii, sizes = radius_samples(seed, (0, 0), r_max, 60)
    for i in range(60):
        clocks = LazyClockField(seed.with_replicate(i), LInfBox((0, 0), 2 * r_max))
        rad, size = influence_radius(clocks, (0, 0), cap=r_max)
        assert rad == radii[i]
        if rad <= r_max:
            assert size == sizes[i]


def test_radius_tail_report():
    report = radius_tail(SeedSpec(6), (0, 0), 15, 4000)
    surv = report.survival()
    # row 0 equals the fraction of samples with a nontrivial influence set
    assert surv[0] == pytest.approx(1.0)  # the ball of radius 1 always joins at t = 1
    assert all(a >= b for a, b in zip(surv, surv[1:]))
    assert report.slope is not None and report.slope < 0
    bound = report.bound()
    assert all(s <= b for s, b in zip(surv, bound))
    assert report.mean_size > 5
    assert report.tail_prefactor == pytest.approx(28311552.0)


def test_mean_influence_size_below_closed_form_bound():
    mean = mean_influence_size(SeedSpec(7), (0, 0), 25, 2000)
    assert mean < bounds.constants(2).mean_influence_bound


def test_decoupling_constant_event_zero_cov():
    report = decoupling_estimate(
        SeedSpec(8), LAW, 0.7,
        [(0, 0), (1, 0)], [(8, 0), (9, 0)],
        lambda c: True, edge_open_event(Edge((8, 0), 0)),
        2000, pad=6,
    )
    assert report.cov_hat == pytest.approx(0.0, abs=1e-15)
    assert report.p1 == 1.0


def test_decoupling_overlap_rejected():
    with pytest.raises(ValueError):
        decoupling_estimate(
            SeedSpec(8), LAW, 0.7, [(0, 0)], [(0, 0), (1, 0)],
            lambda c: True, lambda c: True, 10,
        )


def test_decoupling_far_translate_within_noise():
    e1 = Edge((0, 0), 0)
    e2 = Edge((21, 0), 0)
    report = decoupling_estimate(
        SeedSpec(9), ConstraintLaw((0, 0, 0.5, 0.5)), 0.75,
        [(0, 0), (1, 0)], [(21, 0), (22, 0)],
        edge_open_event(e1), edge_open_event(e2),
        20_000, pad=10,
    )
    assert report.separation == 20
    assert abs(report.cov_hat) <= 3 * report.se
    assert abs(report.cov_hat) <= report.bound
    # the closed-form bound uses the covariance prefactor and both vertex boundaries
    expected = 2 * 28311552.0 * 4 * math.exp(-bounds.decay_rate(2) * 20)
    assert report.bound == pytest.approx(expected)
