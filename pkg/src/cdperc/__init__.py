"""Degree-constrained bond percolation in a random environment: engine, oracle, and diagnostics."""

from .bounds import BoundConstants, constants
from .dynamics import Configuration, EdgeOutcome, Trajectory, config_at, evolve
from .environment import (
    ConstraintLaw,
    EnvironmentField,
    LazyClockField,
    SeedSpec,
    constraint_from_uniform,
    coupled_event_grid,
    sample_environment,
)
from .influence import (
    DecouplingReport,
    InfluenceSet,
    LocalityOutcome,
    RadiusTailReport,
    decoupling_estimate,
    influence_confined,
    influence_set,
    interval_cluster,
    locality_check,
    radius_tail,
)
from .lattice import Box, DualEdge, Edge, L1Ball, LInfBox, MarginError, Point, dual_of, primal_of
from .oracle import (
    TinyGraph,
    exact_event_probability,
    exact_probability_over_constraints,
    monte_carlo_event_probability,
)
from .renorm import (
    CertificateOutcome,
    DualConfiguration,
    ScalePlan,
    annulus_dual_crossing,
    crossing_probability,
    estimate_annulus_crossing,
    next_scale_bound,
    peierls_certificate,
    scale_plan,
)

__version__ = "0.1.0"
