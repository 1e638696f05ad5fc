import math

import numpy as np
import pytest

from cdperc.dynamics import Configuration, config_at, evolve
from cdperc.environment import ConstraintLaw, SeedSpec, sample_environment, window_index
from cdperc.lattice import Box, Edge, LInfBox, MarginError, dual_of
from cdperc.renorm import (
    CertificateOutcome,
    DualConfiguration,
    annulus_dual_crossing,
    annulus_window,
    crossing_curve,
    crossing_probability,
    crossing_times,
    curve_intersection,
    estimate_annulus_crossing,
    next_scale,
    next_scale_bound,
    peierls_certificate,
    scale_plan,
)
from cdperc import bounds
from tests.test_dynamics import make_field

LAW = ConstraintLaw((0.1, 0.2, 0.3, 0.4))


def forced_config(window, open_edges=None, all_open=False) -> Configuration:
    """A configuration with a hand-picked open set."""
    fld = make_field(window, 3, {}, default_clock=0.0)
    traj = evolve(fld)
    idx = fld.index
    mask = np.zeros(idx.n_edges, dtype=bool)
    if all_open:
        mask[:] = True
    if open_edges:
        for e in open_edges:
            mask[idx.edge_index[e]] = True
    return Configuration(traj, 1.0, mask)


def test_dual_view_bijection():
    fld = sample_environment(SeedSpec(1), LInfBox((0, 0), 4), LAW)
    config = config_at(evolve(fld), 0.8)
    dual = DualConfiguration(config)
    for e in fld.index.edges:
        assert dual.is_open(dual_of(e)) == config.is_open(e)
    # flipping one primal edge flips exactly its dual
    flipped = Configuration(config.trajectory, config.time, config.open_mask.copy())
    k = 7
    flipped.open_mask[k] = ~flipped.open_mask[k]
    dual2 = DualConfiguration(flipped)
    changed = [
        e for e in fld.index.edges if dual2.is_open(dual_of(e)) != dual.is_open(dual_of(e))
    ]
    assert changed == [fld.index.edges[k]]


def test_annulus_all_open_false_all_closed_true():
    N = 3
    window = annulus_window(N, 4)
    assert annulus_dual_crossing(forced_config(window, all_open=True), (0, 0), N) is False
    for n in (1, 2, 3):
        assert annulus_dual_crossing(forced_config(window), (0, 0), n) is True


def test_annulus_single_closed_ray():
    # all primal edges open except the ray that closes one straight dual path
    N = 3
    window = annulus_window(N, 4)
    idx = window_index(window)
    ray = {Edge((a + 1, 0), 1) for a in range(N, 2 * N)}
    mask_edges = [e for e in idx.edges if e not in ray]
    config = forced_config(window, open_edges=mask_edges)
    assert annulus_dual_crossing(config, (0, 0), N) is True
    # closing the ray's last edge breaks the only closed path
    config2 = forced_config(window, open_edges=idx.edges)
    assert annulus_dual_crossing(config2, (0, 0), N) is False


def test_annulus_window_too_small():
    window = LInfBox((0, 0), 3)
    config = forced_config(window)
    with pytest.raises(MarginError):
        annulus_dual_crossing(config, (0, 0), 2)


def test_estimate_annulus_time_zero_certain():
    est = estimate_annulus_crossing(SeedSpec(2), LAW, 0.0, 4, pad=4, n=50)
    assert est.estimate.p_hat == 1.0


def test_estimate_annulus_validation_matches_bernoulli_reference():
    # with the sentinel law the dynamics is Bernoulli, so a direct closed-edge
    # BFS on the same clocks must agree replicate by replicate
    law = ConstraintLaw.unconstrained(2)
    N, pad, t, n = 4, 4, 0.45, 120
    window = annulus_window(N, pad)
    seed = SeedSpec(3)
    from cdperc.renorm import _annulus_graph
    from cdperc import _kernels

    for rep in range(n):
        fld = sample_environment(seed.with_replicate(rep), window, law)
        config = config_at(evolve(fld), t)
        got = annulus_dual_crossing(config, (0, 0), N)
        indptr, nbrs, entry_edge, seeds, targets = _annulus_graph(fld.index, (0, 0), N)
        entry_ok = fld.U[entry_edge] > t  # closed iff the clock has not rung
        reached = np.zeros(targets.size, dtype=bool)
        _kernels.csr_reach(indptr, nbrs, entry_ok, seeds, reached)
        assert got == bool((reached & targets).any())


def test_estimate_annulus_pad_check_small_shift():
    est = estimate_annulus_crossing(
        SeedSpec(4), ConstraintLaw((0, 0, 0, 1.0)), 1.0, 4, pad=4, n=600
    )
    tol = 3 * max(est.pad_shift_se, est.estimate.se)
    assert abs(est.pad_shift) <= max(tol, 0.05)


def test_crossing_time_zero_and_validation_one():
    times = crossing_times(SeedSpec(5), LAW, 8, 60)
    assert crossing_probability(SeedSpec(5), LAW, 0.0, 8, 60, times=times).p_hat == 0.0
    law = ConstraintLaw.unconstrained(2)
    times_u = crossing_times(SeedSpec(5), law, 8, 60)
    assert crossing_probability(SeedSpec(5), law, 1.0, 8, 60, times=times_u).p_hat == 1.0


def test_crossing_times_match_explicit_bfs():
    # the union-find sweep and an explicit configuration check agree
    law = ConstraintLaw((0, 0, 0.5, 0.5))
    side = 10
    window = Box((0, 0), (side - 1, side - 1))
    idx = window_index(window)
    times = crossing_times(SeedSpec(6), law, side, 30)
    from cdperc import _kernels

    for rep in range(30):
        fld = sample_environment(SeedSpec(6, replicate=rep), window, law)
        traj = evolve(fld)
        for t in (0.5, 0.72, 0.9):
            config = config_at(traj, t)
            reached = np.zeros(idx.n_vertices, dtype=bool)
            left = np.flatnonzero(idx.coords[:, 0] == 0).astype(np.int64)
            entry_ok = config.open_mask[idx.nbr_edge]
            _kernels.csr_reach(idx.indptr, idx.nbr_vertex, entry_ok, left, reached)
            crossed = bool(reached[idx.coords[:, 0] == side - 1].any())
            assert crossed == (times[rep] <= t)


def test_crossing_curve_monotone():
    law = ConstraintLaw((0, 0, 0.5, 0.5))
    times = crossing_times(SeedSpec(7), law, 16, 300)
    ts = np.linspace(0, 1, 21)
    curve = crossing_curve(times, ts)
    assert (np.diff(curve) >= 0).all()
    assert curve[0] == 0.0


def test_curve_intersection_helper():
    ts = np.linspace(0, 1, 101)
    pa = ts.copy()
    pb = np.clip(2 * ts - 0.5, 0, 1)
    # lines cross at t = 0.5
    assert curve_intersection(ts, pa, pb) == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        curve_intersection(ts, pa, pa + 0.2)


def test_peierls_time_zero_bare_segment():
    window = LInfBox((5, 0), 12)
    config = forced_config(window)  # everything closed
    cert = peierls_certificate(config, 10)
    assert cert.outcome is CertificateOutcome.FINITE_WITH_CIRCUIT
    assert cert.cluster_size == 11
    assert cert.circuit_length == 2 * (11 + 1)  # contour of a 1 x 11 strip


def test_peierls_all_open_touches():
    window = LInfBox((5, 0), 12)
    config = forced_config(window, all_open=True)
    cert = peierls_certificate(config, 10)
    assert cert.outcome is CertificateOutcome.TOUCHES_BOUNDARY


def test_peierls_cluster_with_hole():
    # a ring cluster: the certificate must use the outer contour only
    window = LInfBox((2, 0), 10)
    ring_vertices = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
    ring_edges = [
        Edge((0, 0), 0), Edge((1, 0), 0), Edge((2, 0), 1), Edge((2, 1), 1),
        Edge((1, 2), 0), Edge((0, 2), 0), Edge((0, 1), 1), Edge((0, 0), 1),
    ]
    config = forced_config(window, open_edges=ring_edges)
    cert = peierls_certificate(config, 2)
    assert cert.outcome is CertificateOutcome.FINITE_WITH_CIRCUIT
    assert cert.cluster_size == 8
    # the hole is filled, so the contour is the 3 x 3 footprint's: 2 (3 + 3) dual edges
    assert cert.circuit_length == 12


def test_peierls_margin_error():
    window = LInfBox((0, 0), 4)
    config = forced_config(window)
    with pytest.raises(MarginError):
        peierls_certificate(config, 4)


def test_peierls_random_batch():
    law = ConstraintLaw((0, 0, 1.0, 0))
    window = LInfBox((5, 0), 35)
    certified = touching = 0
    for rep in range(80):
        fld = sample_environment(SeedSpec(8, replicate=rep), window, law)
        cert = peierls_certificate(config_at(evolve(fld), 1.0), 10)
        if cert.outcome is CertificateOutcome.FINITE_WITH_CIRCUIT:
            certified += 1
        else:
            touching += 1
    assert certified > 0 and certified + touching == 80


def test_scale_sequence_exact():
    plan = scale_plan(25, 4)
    assert plan.scales == (25, 125, 1375, 50875)
    assert next_scale(25) == 125 and next_scale(125) == 1375 and next_scale(1375) == 50875
    with pytest.raises(ValueError):
        scale_plan(24, 3)


def test_scale_conditions_and_minima():
    plan = scale_plan(25, 4)
    assert plan.minimal_prefactor_small == 36238786592  # ceil(32 (20 c + 1)) exactly
    assert plan.minimal_exp_beats_poly is not None
    assert 4000 <= plan.minimal_exp_beats_poly <= 4500
    assert plan.minimal_seed_bound is not None
    assert plan.desk_feasible is False
    # condition booleans at the listed scales
    assert [r.exp_beats_poly for r in plan.rows] == [False, False, False, True]
    assert all(r.prefactor_small is False for r in plan.rows)


def test_next_scale_bound_cases():
    table = bounds.constants(2)
    zero = next_scale_bound(100, 0.0, 0.0, table.decay_rate)
    assert zero.bound == 0.0 and zero.target_met
    # monotone in the crossing bound
    prev = -math.inf
    for b in (1e-12, 1e-8, 1e-4, 1e-2):
        step = next_scale_bound(200, b, table.covariance_prefactor, table.decay_rate)
        assert step.log_bound >= prev
        prev = step.log_bound
    # at the prefactor-condition threshold the induction target is met
    L = 36238786592
    step = next_scale_bound(L, L**-4.0, table.covariance_prefactor, table.decay_rate)
    assert step.target_met


def test_next_scale_bound_against_direct_evaluation():
    table = bounds.constants(2)
    L = 1375
    b = 1e-3
    step = next_scale_bound(L, b, table.covariance_prefactor, table.decay_rate)
    nxt = next_scale(L)
    direct = (
        32.0
        * (nxt / L) ** 2
        * (b**2 + 20.0 * table.covariance_prefactor * L * math.exp(-table.decay_rate * (nxt - 4 * L)))
    )
    assert step.bound == pytest.approx(direct, rel=1e-9)
