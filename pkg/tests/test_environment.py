import random

import numpy as np
import pytest

from cdperc.environment import (
    ConstraintLaw,
    SeedSpec,
    _scalar_uniform,
    constraint_from_uniform,
    coupled_event_grid,
    edge_clock,
    resample_outside,
    sample_environment,
    vertex_uniform,
    window_index,
)
from cdperc.lattice import Box, Edge, L1Ball, LInfBox, MarginError
from cdperc.oracle import TinyGraph, exact_event_probability, edge_open

SEED = SeedSpec(20240)
LAW = ConstraintLaw((0.1, 0.2, 0.3, 0.4))


def test_law_validation():
    with pytest.raises(ValueError):
        ConstraintLaw((0.5, 0.6, 0.0, 0.0))  # does not sum to 1
    with pytest.raises(ValueError):
        ConstraintLaw((0.5, -0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        ConstraintLaw((0.5, 0.25, 0.25))  # odd length needs validation mode
    law = ConstraintLaw.unconstrained(2)
    assert law.validation_mode and law.dimension == 2
    assert law.constraint_from_uniform(0.37) == 4


def test_constraint_from_uniform_examples():
    assert constraint_from_uniform(0.999, ConstraintLaw((0, 0, 0, 1.0))) == 3
    law = ConstraintLaw((0.5, 0.5, 0, 0))
    assert constraint_from_uniform(0.25, law) == 0
    # boundary belongs to the upper half-open cell
    assert constraint_from_uniform(0.5, law) == 1
    # x = 1 maps to the largest supported value
    assert constraint_from_uniform(1.0, law) == 1
    assert constraint_from_uniform(1.0, ConstraintLaw((0.5, 0.25, 0.25, 0.0))) == 2


def test_constraint_from_uniform_monotone():
    law = ConstraintLaw((0.2, 0.0, 0.5, 0.3))
    xs = [i / 1000 for i in range(1001)]
    values = [law.constraint_from_uniform(x) for x in xs]
    assert values == sorted(values)


def test_vector_scalar_constraint_agreement():
    law = ConstraintLaw((0.2, 0.0, 0.5, 0.3))
    xs = np.linspace(0, 1, 257)
    vec = law.constraints_from_uniforms(xs)
    for x, v in zip(xs, vec):
        assert law.constraint_from_uniform(float(x)) == int(v)


def test_scalar_hash_matches_vector_path():
    fld = sample_environment(SEED, LInfBox((2, -3), 4), LAW)
    for p, i in fld.index.point_index.items():
        assert vertex_uniform(SEED, p) == fld.X[i]
    for e, k in fld.index.edge_index.items():
        assert edge_clock(SEED, e) == fld.U[k]


def test_determinism_and_window_nesting():
    a = sample_environment(SEED, LInfBox((0, 0), 5), LAW)
    b = sample_environment(SEED, LInfBox((0, 0), 5), LAW)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.U, b.U)
    big = sample_environment(SEED, LInfBox((1, 1), 9), LAW)
    for p, i in a.index.point_index.items():
        j = big.index.point_index.get(p)
        if j is not None:
            assert a.X[i] == big.X[j] and a.kappa[i] == big.kappa[j]
    for e, k in a.index.edge_index.items():
        m = big.index.edge_index.get(e)
        if m is not None:
            assert a.U[k] == big.U[m]


def test_replicates_differ_and_streams_differ():
    a = sample_environment(SEED, LInfBox((0, 0), 3), LAW)
    b = sample_environment(SEED.with_replicate(1), LInfBox((0, 0), 3), LAW)
    assert not np.array_equal(a.U, b.U)
    c = sample_environment(SEED.fresh_streams(0), LInfBox((0, 0), 3), LAW)
    assert not np.array_equal(a.U, c.U) and not np.array_equal(a.X, c.X)


def test_kappa_empirical_mean():
    # law of large numbers at rho = (0, 0, 1/2, 1/2): mean 2.5 +- 0.01
    law = ConstraintLaw((0, 0, 0.5, 0.5))
    fld = sample_environment(SeedSpec(7), Box((0, 0), (399, 249)), law)  # 100k vertices
    assert fld.kappa.size == 100_000
    assert abs(fld.kappa.mean() - 2.5) < 0.01


def test_uniformity_of_clocks():
    fld = sample_environment(SeedSpec(11), Box((0, 0), (199, 199)), LAW)
    u = fld.U
    assert 0.0 <= u.min() and u.max() < 1.0
    # mean 1/2 within 5 sigma, variance 1/12 within 5%
    assert abs(u.mean() - 0.5) < 5 * (1 / 12) ** 0.5 / len(u) ** 0.5
    assert abs(u.var() - 1 / 12) < 0.05 / 12


def test_resample_outside_keeps_inside_exactly():
    window = LInfBox((0, 0), 8)
    fld = sample_environment(SEED, window, LAW)
    keep_vertices = L1Ball(frozenset({(0, 0)}), 3).vertex_set
    from cdperc.lattice import edge_set

    keep_edges = edge_set(keep_vertices)
    fld2 = resample_outside(fld, keep_vertices, keep_edges)
    idx = fld.index
    for p, i in idx.point_index.items():
        if p in keep_vertices:
            assert fld2.X[i] == fld.X[i] and fld2.kappa[i] == fld.kappa[i]
    changed = 0
    for e, k in idx.edge_index.items():
        if e in keep_edges:
            assert fld2.U[k] == fld.U[k]
        else:
            changed += fld2.U[k] != fld.U[k]
    assert changed > 0


def test_window_index_shapes():
    idx = window_index(Box((0, 0), (2, 2)))
    assert idx.n_vertices == 9 and idx.n_edges == 12
    assert idx.boundary.sum() == 8  # all but the center of a 3x3 box touch the outside
    idx2 = window_index(LInfBox((0, 0), 2))
    assert int(idx2.boundary.sum()) == 16


def test_field_accessors_raise_outside():
    fld = sample_environment(SEED, LInfBox((0, 0), 2), LAW)
    with pytest.raises(MarginError):
        fld.clock(Edge((5, 5), 0))
    with pytest.raises(MarginError):
        fld.constraint((9, 9))


def test_coupled_grid_single_cell_matches_plain_mc():
    # a single-cell coupled grid is an ordinary Monte Carlo estimator
    law = ConstraintLaw((0, 0, 0.5, 0.5))
    window = LInfBox((0, 0), 6)
    probe = Edge((0, 0), 0)
    res = coupled_event_grid(
        SeedSpec(5), window, [(law, 0.7)], lambda c: c.is_open(probe), [probe], 1500
    )
    from cdperc.dynamics import config_at, evolve

    hits = 0
    for r in range(1500):
        fld = sample_environment(SeedSpec(5, replicate=r), window, law)
        hits += config_at(evolve(fld), 0.7).is_open(probe)
    assert res.means[0] == hits / 1500  # same replicates, same draw: exact equality


def test_coupled_grid_identical_cells_fliprate_zero():
    law = ConstraintLaw((0, 0, 0.5, 0.5))
    probe = Edge((0, 0), 0)
    res = coupled_event_grid(
        SeedSpec(5), LInfBox((0, 0), 5), [(law, 0.7), (law, 0.7)],
        lambda c: c.is_open(probe), [probe], 400,
    )
    assert res.flip_rates == (0.0,)


def test_coupled_grid_isolated_edge_endpoints():
    # two-vertex window: with constraint 3 at both ends the edge always opens by time 1
    law = ConstraintLaw((0, 0, 0, 1.0))
    window = L1Ball(frozenset({(0, 0), (1, 0)}), 0)
    probe = Edge((0, 0), 0)
    res = coupled_event_grid(
        SeedSpec(3), window, [(law, 1.0), (law, 0.0)],
        lambda c: c.is_open(probe), [probe], 2000,
    )
    assert res.means == (1.0, 0.0)
    g = TinyGraph.from_region(window)
    exact1 = exact_event_probability(g, {(0, 0): 3, (1, 0): 3}, 1.0, edge_open(0))
    exact0 = exact_event_probability(g, {(0, 0): 3, (1, 0): 3}, 0.0, edge_open(0))
    assert (exact1, exact0) == (1.0, 0.0)


def test_coupled_grid_margin_enforced():
    law = ConstraintLaw((0, 0, 0.5, 0.5))
    probe = Edge((4, 0), 0)  # head at (5, 0) on the boundary of radius-5 window
    with pytest.raises(MarginError):
        coupled_event_grid(
            SeedSpec(1), LInfBox((0, 0), 5), [(law, 0.5)],
            lambda c: c.is_open(probe), [probe], 10, margin=2,
        )


def test_coupled_grid_flip_rate_shrinks_with_cell_gap():
    # statistical: the flip rate between nearby cells drops as the gap shrinks
    law = ConstraintLaw((0, 0, 0.5, 0.5))
    probe = Edge((0, 0), 0)
    big = coupled_event_grid(
        SeedSpec(8), LInfBox((0, 0), 7), [(law, 0.55), (law, 0.80)],
        lambda c: c.is_open(probe), [probe], 1200,
    )
    small = coupled_event_grid(
        SeedSpec(8), LInfBox((0, 0), 7), [(law, 0.55), (law, 0.60)],
        lambda c: c.is_open(probe), [probe], 1200,
    )
    assert small.flip_rates[0] < big.flip_rates[0]


def test_scalar_uniform_range():
    rng = random.Random(4)
    for _ in range(500):
        u = _scalar_uniform(
            rng.getrandbits(63), rng.getrandbits(16),
            (rng.randint(-50, 50), rng.randint(-50, 50)), rng.randint(0, 9),
        )
        assert 0.0 <= u < 1.0
