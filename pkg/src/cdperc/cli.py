"""Reproducible experiment driver.

Every subcommand emits CSV (or JSON for ``constants``) whose rows carry the
full seed and configuration, so any output file can be regenerated bit for
bit from its own header. Replicate outcomes depend only on the replicate id,
so the worker count never changes results, only wall time.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import bounds
from .dynamics import config_at, edge_open_event, evolve
from .environment import ConstraintLaw, SeedSpec, coupled_event_grid
from .influence import (
    decoupling_estimate,
    decoupling_samples,
    decoupling_window,
    locality_batch,
    radius_samples,
    radius_tail,
)
from .lattice import Edge, LInfBox
from .oracle import (
    TinyGraph,
    edge_open,
    exact_event_probability,
    monte_carlo_event_probability,
    monte_carlo_region_event,
)
from .renorm import (
    annulus_outcomes,
    crossing_times,
    estimate_annulus_crossing,
    next_scale_bound,
    scale_plan,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    pass


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse float list {text!r}") from exc


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list {text!r}") from exc


def _law(rho) -> ConstraintLaw:
    rho = tuple(float(x) for x in rho)
    if len(rho) != 4:
        raise ConfigError("rho needs exactly 4 probabilities (square lattice)")
    if any(p < 0 for p in rho) or abs(sum(rho) - 1.0) > 1e-9:
        raise ConfigError("rho must be nonnegative and sum to 1")
    total = sum(rho)
    return ConstraintLaw(tuple(p / total for p in rho))


def _write_output(path, lines: list[str]) -> None:
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _csv_lines(
    subcommand: str,
    config: dict,
    header: list[str],
    rows: list[list],
    timestamp: bool,
) -> list[str]:
    lines = []
    if timestamp:
        stamp = datetime.now(timezone.utc).isoformat()
        lines.append(f"# cdperc {subcommand} generated={stamp}")
    lines.append(f"# config: {json.dumps(config, sort_keys=True)}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return lines


def _chunk_ranges(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n))
    size = (n + workers - 1) // workers
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _run_chunked(worker, static: tuple, n: int, workers: int) -> list:
    ranges = _chunk_ranges(n, workers)
    tasks = [(static, lo, hi) for lo, hi in ranges]
    if workers <= 1 or len(tasks) == 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, tasks))


# ---------------------------------------------------------------------------
# chunk workers (top level so they survive pickling)
# ---------------------------------------------------------------------------


def _crossing_chunk(task):
    (master, rho, unconstrained, side), lo, hi = task
    law = ConstraintLaw.unconstrained(2) if unconstrained else _law(rho)
    times = crossing_times(SeedSpec(master, replicate=lo), law, side, hi - lo)
    return times.tolist()


def _annulus_chunk(task):
    (master, rho, unconstrained, t, scale, pad), lo, hi = task
    law = ConstraintLaw.unconstrained(2) if unconstrained else _law(rho)
    out = annulus_outcomes(SeedSpec(master, replicate=lo), law, t, scale, pad, hi - lo)
    return out.tolist()


def _decouple_chunk(task):
    (master, rho, t, separation, pad), lo, hi = task
    law = _law(rho)
    lam1, lam2, e1, e2 = _decouple_geometry(separation)
    window = decoupling_window(lam1, lam2, pad)
    xs, ys = decoupling_samples(
        SeedSpec(master, replicate=lo),
        law,
        t,
        window,
        edge_open_event(e1),
        edge_open_event(e2),
        hi - lo,
    )
    return xs.tolist(), ys.tolist()


def _radius_chunk(task):
    (master, vertex, r_max), lo, hi = task
    radii, sizes = radius_samples(SeedSpec(master, replicate=lo), vertex, r_max, hi - lo)
    return radii.tolist(), sizes.tolist()


def _locality_chunk(task):
    (master, t, r, window_radius, rho), lo, hi = task
    law = _law(rho)
    return locality_batch(
        SeedSpec(master, replicate=lo),
        [(0, 0)],
        t,
        r,
        LInfBox((0, 0), window_radius),
        law,
        hi - lo,
    )


def _decouple_geometry(separation: int):
    lam1 = frozenset({(0, 0), (1, 0)})
    lam2 = frozenset({(1 + separation, 0), (2 + separation, 0)})
    return lam1, lam2, Edge((0, 0), 0), Edge((1 + separation, 0), 0)


# ---------------------------------------------------------------------------
# built-in oracle verification graphs
# ---------------------------------------------------------------------------


def builtin_oracle_cases():
    """(name, graph, constraints, event, engine_region) for the exact-vs-Monte-Carlo table.

    Constraint values span 0..3; a few cases run through the full window
    engine instead of the batched small-graph path.
    """
    cases = []
    single = TinyGraph.path(1)
    cases.append(("edge_k11", single, {0: 1, 1: 1}, edge_open(0), None))
    cases.append(("edge_k33", single, {0: 3, 1: 3}, edge_open(0), None))
    cases.append(("edge_k03", single, {0: 0, 1: 3}, edge_open(0), None))
    path2 = TinyGraph.path(2)
    cases.append(("path2_mid1", path2, {0: 3, 1: 1, 2: 3}, edge_open(0), None))
    cases.append(("path2_mid2", path2, {0: 3, 1: 2, 2: 3}, edge_open(0), None))
    star4 = TinyGraph.star(4)
    cases.append(("star4_hub2", star4, {0: 2, 1: 3, 2: 3, 3: 3, 4: 3}, edge_open(0), None))
    cases.append(("star4_hub3_all", star4, {0: 3, 1: 3, 2: 3, 3: 3, 4: 3}, lambda s: all(s), None))
    cycle3 = TinyGraph.cycle(3)
    cases.append(("cycle3_k222", cycle3, {0: 2, 1: 2, 2: 2}, lambda s: all(s), None))
    cases.append(("cycle3_k112", cycle3, {0: 1, 1: 1, 2: 2}, edge_open(0), None))
    path5 = TinyGraph.path(5)
    cases.append(
        ("path5_mixed", path5, {0: 3, 1: 1, 2: 2, 3: 1, 4: 2, 5: 3}, edge_open(2), None)
    )
    path8 = TinyGraph.path(8)
    kappa8 = {i: (1 if i % 2 else 2) for i in range(9)}
    cases.append(("path8_alternating", path8, kappa8, edge_open(4), None))
    from .lattice import Box as LatticeBox

    square = LatticeBox((0, 0), (1, 1))  # 2x2 window, 4 edges in a cycle
    gsq = TinyGraph.from_region(square)
    ksq = {p: k for p, k in zip(gsq.vertices, (3, 1, 2, 3))}
    cases.append(("square_window", gsq, ksq, edge_open(0), square))
    strip = LatticeBox((0, 0), (2, 1))  # 3x2 window, 7 edges
    gst = TinyGraph.from_region(strip)
    kst = {p: 2 for p in gst.vertices}
    cases.append(("strip_window_k2", gst, kst, lambda s: s[0] and s[1], strip))
    return cases


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------


def run_constants(cfg: dict) -> int:
    table = bounds.constants(cfg["d"], cfg.get("c5"))
    payload = {
        "dimension": table.dimension,
        "decay_rate": table.decay_rate,
        "mean_influence_bound": table.mean_influence_bound,
        "radius_tail_prefactor": table.radius_tail_prefactor,
        "covariance_prefactor": table.covariance_prefactor,
        "side_pair_factor": table.side_pair_factor,
        "side_weight": table.side_weight,
        "series_base": table.series_base,
        "series_prefactor": table.series_prefactor,
        "series_prefactor_source": table.series_prefactor_source,
        "annulus_prefactor": table.annulus_prefactor,
    }
    _write_output(cfg.get("out"), [json.dumps(payload, indent=2, sort_keys=True)])
    return EXIT_OK


def run_oracle(cfg: dict) -> int:
    seed = SeedSpec(cfg["seed"])
    n = cfg["n"]
    rows = []
    for t in cfg["t_grid"]:
        for name, graph, constraints, event, region in builtin_oracle_cases():
            exact = exact_event_probability(graph, constraints, t, event)
            if region is not None:
                mc = monte_carlo_region_event(region, constraints, t, event, seed, n)
                path = "engine"
            else:
                mc = monte_carlo_event_probability(graph, constraints, t, event, seed, n)
                path = "batch"
            z = (mc.p_hat - exact) / mc.se if mc.se > 0 else 0.0
            rows.append(
                [cfg["seed"], name, path, graph.n_edges, t, n, exact, mc.p_hat, mc.se, z]
            )
    header = ["master_seed", "graph", "path", "edges", "t", "n", "exact", "p_hat", "se", "z"]
    _write_output(
        cfg.get("out"),
        _csv_lines("oracle", cfg, header, rows, cfg["timestamp"]),
    )
    return EXIT_OK


def run_crossing(cfg: dict) -> int:
    rows = []
    for side in cfg["sides"]:
        static = (cfg["seed"], cfg["rho"], cfg["unconstrained"], side)
        chunks = _run_chunked(_crossing_chunk, static, cfg["n"], cfg["workers"])
        times = np.array([t for chunk in chunks for t in chunk])
        for t in cfg["t_grid"]:
            successes = int((times <= t).sum())
            p = successes / cfg["n"]
            se = math.sqrt(max(p * (1 - p), 0.0) / cfg["n"])
            rows.append([cfg["seed"], *cfg["rho"], t, side, cfg["n"], successes, p, se])
    header = [
        "master_seed", "rho0", "rho1", "rho2", "rho3", "t", "side", "n",
        "successes", "p_hat", "se",
    ]
    _write_output(
        cfg.get("out"), _csv_lines("crossing", cfg, header, rows, cfg["timestamp"])
    )
    return EXIT_OK


def run_dualscan(cfg: dict) -> int:
    seed = SeedSpec(cfg["seed"])
    law = ConstraintLaw.unconstrained(2) if cfg["unconstrained"] else _law(cfg["rho"])
    rows = []
    for scale in cfg["scales"]:
        pad = cfg["pad"] if cfg["pad"] is not None else max(16, scale // 2)
        static = (cfg["seed"], cfg["rho"], cfg["unconstrained"], cfg["t"], scale, pad)
        chunks = _run_chunked(_annulus_chunk, static, cfg["n"], cfg["workers"])
        outcomes = np.array([b for chunk in chunks for b in chunk], dtype=bool)
        est = estimate_annulus_crossing(
            seed, law, cfg["t"], scale, pad, cfg["n"], outcomes=outcomes
        )
        rows.append(
            [
                cfg["seed"], *cfg["rho"], cfg["t"], scale, pad, cfg["n"],
                est.estimate.successes, est.estimate.p_hat, est.estimate.se,
                est.pad_check_n, est.pad_shift, est.pad_flips,
            ]
        )
    header = [
        "master_seed", "rho0", "rho1", "rho2", "rho3", "t", "scale", "pad", "n",
        "successes", "p_hat", "se", "pad_check_n", "pad_shift", "pad_flips",
    ]
    _write_output(
        cfg.get("out"), _csv_lines("dualscan", cfg, header, rows, cfg["timestamp"])
    )
    return EXIT_OK


def run_influence(cfg: dict) -> int:
    vertex = tuple(cfg["vertex"])
    static = (cfg["seed"], vertex, cfg["r_max"])
    chunks = _run_chunked(_radius_chunk, static, cfg["n"], cfg["workers"])
    radii = np.array([r for chunk in chunks for r in chunk[0]], dtype=np.int64)
    sizes = np.array([s for chunk in chunks for s in chunk[1]], dtype=np.int64)
    report = radius_tail(
        SeedSpec(cfg["seed"]), vertex, cfg["r_max"], cfg["n"], samples=(radii, sizes)
    )
    rows = []
    survival = report.survival()
    bound = report.bound()
    for r in range(cfg["r_max"] + 1):
        rows.append(
            [
                cfg["seed"], vertex[0], vertex[1], cfg["r_max"], cfg["n"], r,
                report.exceed_counts[r], survival[r], bound[r],
            ]
        )
    header = [
        "master_seed", "vx", "vy", "r_max", "n", "r", "exceed", "survival", "bound",
    ]
    _write_output(
        cfg.get("out"), _csv_lines("influence", cfg, header, rows, cfg["timestamp"])
    )
    summary = {
        "slope": report.slope,
        "intercept": report.intercept,
        "fit_radii": [int(r) for r in report.fit_radii],
        "mean_size": report.mean_size,
        "censored": report.censored,
        "decay_rate": report.decay_rate,
        "tail_prefactor": report.tail_prefactor,
    }
    if cfg.get("out") is not None:
        sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


def run_locality(cfg: dict) -> int:
    window_radius = cfg["window_radius"] or 4 * cfg["r"] + 1
    static = (cfg["seed"], cfg["t"], cfg["r"], window_radius, cfg["rho"])
    chunks = _run_chunked(_locality_chunk, static, cfg["n"], cfg["workers"])
    applicable = sum(c[0] for c in chunks)
    passes = sum(c[1] for c in chunks)
    fails = sum(c[2] for c in chunks)
    header = [
        "master_seed", "t", "r", "window_radius", "rho0", "rho1", "rho2", "rho3",
        "n", "applicable", "passes", "fails",
    ]
    rows = [
        [
            cfg["seed"], cfg["t"], cfg["r"], window_radius, *cfg["rho"], cfg["n"],
            applicable, passes, fails,
        ]
    ]
    _write_output(
        cfg.get("out"), _csv_lines("locality", cfg, header, rows, cfg["timestamp"])
    )
    return EXIT_RUNTIME if fails else EXIT_OK


def run_decouple(cfg: dict) -> int:
    rows = []
    for separation in cfg["separations"]:
        static = (cfg["seed"], cfg["rho"], cfg["t"], separation, cfg["pad"])
        chunks = _run_chunked(_decouple_chunk, static, cfg["n"], cfg["workers"])
        xs = np.array([b for chunk in chunks for b in chunk[0]], dtype=bool)
        ys = np.array([b for chunk in chunks for b in chunk[1]], dtype=bool)
        lam1, lam2, e1, e2 = _decouple_geometry(separation)
        report = decoupling_estimate(
            SeedSpec(cfg["seed"]), _law(cfg["rho"]), cfg["t"], lam1, lam2,
            edge_open_event(e1), edge_open_event(e2), cfg["n"], pad=cfg["pad"],
            samples=(xs, ys),
        )
        rows.append(
            [
                cfg["seed"], *cfg["rho"], cfg["t"], separation, cfg["pad"], cfg["n"],
                report.p1, report.p2, report.p12, report.cov_hat, report.se,
                report.bound,
            ]
        )
    header = [
        "master_seed", "rho0", "rho1", "rho2", "rho3", "t", "separation", "pad", "n",
        "p1", "p2", "p12", "cov_hat", "se", "bound",
    ]
    _write_output(
        cfg.get("out"), _csv_lines("decouple", cfg, header, rows, cfg["timestamp"])
    )
    return EXIT_OK


def run_continuity(cfg: dict) -> int:
    base = _law(cfg["rho"])
    if cfg["t_grid"] is not None and cfg["rho3_grid"] is not None:
        raise ConfigError("give either a time grid or a rho3 grid, not both")
    cells = []
    if cfg["rho3_grid"] is not None:
        head = base.rho[0] + base.rho[1]
        for rho3 in cfg["rho3_grid"]:
            rho2 = 1.0 - head - rho3
            if rho2 < -1e-12:
                raise ConfigError(f"rho3={rho3} leaves a negative rho2")
            cells.append((_law((base.rho[0], base.rho[1], max(rho2, 0.0), rho3)), cfg["t"]))
    else:
        grid = cfg["t_grid"] if cfg["t_grid"] is not None else (cfg["t"],)
        cells = [(base, t) for t in grid]
    window = LInfBox((0, 0), cfg["window_radius"])
    probe = Edge((0, 0), 0)
    result = coupled_event_grid(
        SeedSpec(cfg["seed"]), window, cells, edge_open_event(probe), [probe],
        cfg["n"], margin=cfg["margin"],
    )
    rows = []
    ses = result.standard_errors()
    for c, ((law, t), mean) in enumerate(zip(result.cells, result.means)):
        flip = result.flip_rates[c] if c < len(result.flip_rates) else ""
        rows.append([cfg["seed"], c, *law.rho, t, cfg["n"], mean, ses[c], flip])
    header = [
        "master_seed", "cell", "rho0", "rho1", "rho2", "rho3", "t", "n", "mean",
        "se", "flip_to_next",
    ]
    _write_output(
        cfg.get("out"), _csv_lines("continuity", cfg, header, rows, cfg["timestamp"])
    )
    return EXIT_OK


def run_scales(cfg: dict) -> int:
    plan = scale_plan(cfg["base"], cfg["count"], cfg.get("c5"))
    rows = []
    for row in plan.rows:
        step = next_scale_bound(
            row.scale,
            row.scale**-4.0,
            plan.table.covariance_prefactor,
            plan.table.decay_rate,
        )
        rows.append(
            [
                cfg["base"], cfg["count"], row.k, row.scale, row.exp_beats_poly,
                row.prefactor_small, row.seed_bound, step.log_bound, step.log_target,
                step.target_met,
            ]
        )
    header = [
        "base", "count", "k", "scale", "exp_beats_poly", "prefactor_small",
        "seed_bound", "log_next_bound", "log_target", "target_met",
    ]
    _write_output(
        cfg.get("out"), _csv_lines("scales", cfg, header, rows, cfg["timestamp"])
    )
    summary = {
        "minimal_exp_beats_poly": plan.minimal_exp_beats_poly,
        "minimal_prefactor_small": plan.minimal_prefactor_small,
        "minimal_seed_bound": plan.minimal_seed_bound,
        "desk_feasible": plan.desk_feasible,
        "note": plan.note,
    }
    if cfg.get("out") is not None:
        sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdperc",
        description="Monte Carlo laboratory for degree-constrained percolation in a random environment",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with defaults for any flag")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--n", type=int, default=None, help="replicate count")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument(
            "--no-header-timestamp",
            action="store_const",
            const=True,
            default=None,
            dest="no_header_timestamp",
        )

    p = sub.add_parser("constants", help="dump the closed-form constants table as JSON")
    p.add_argument("--config", default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--c5", type=float, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("oracle", help="exact vs Monte Carlo table on built-in tiny graphs")
    common(p)
    p.add_argument("--t", dest="t_grid", default=None, help="comma-separated times")

    p = sub.add_parser("crossing", help="open left-right box crossing probabilities")
    common(p)
    p.add_argument("--rho", default=None, help="rho0,rho1,rho2,rho3")
    p.add_argument("--t", dest="t_grid", default=None, help="comma-separated times")
    p.add_argument("--side", dest="sides", default=None, help="comma-separated box sides")
    p.add_argument("--unconstrained", action="store_const", const=True, default=None)

    p = sub.add_parser("dualscan", help="closed dual annulus crossing estimates over scales")
    common(p)
    p.add_argument("--rho", default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--scale", dest="scales", default=None, help="comma-separated scales")
    p.add_argument("--pad", type=int, default=None)
    p.add_argument("--unconstrained", action="store_const", const=True, default=None)

    p = sub.add_parser("influence", help="influence radius survival curve and fit")
    common(p)
    p.add_argument("--vertex", default=None, help="x,y")
    p.add_argument("--r-max", dest="r_max", type=int, default=None)

    p = sub.add_parser("locality", help="batch of exterior-resampling locality checks")
    common(p)
    p.add_argument("--rho", default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--window-radius", dest="window_radius", type=int, default=None)

    p = sub.add_parser("decouple", help="covariance decay of distant edge events")
    common(p)
    p.add_argument("--rho", default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument(
        "--separation", dest="separations", default=None, help="comma-separated distances"
    )
    p.add_argument("--pad", type=int, default=None)

    p = sub.add_parser("continuity", help="shared-uniform grid over laws or times")
    common(p)
    p.add_argument("--rho", default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--t-grid", dest="t_grid", default=None)
    p.add_argument("--rho3-grid", dest="rho3_grid", default=None)
    p.add_argument("--window-radius", dest="window_radius", type=int, default=None)
    p.add_argument("--margin", type=int, default=None)

    p = sub.add_parser("scales", help="the sqrt-floor scale ladder and its conditions")
    p.add_argument("--config", default=None)
    p.add_argument("--base", type=int, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--c5", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument(
        "--no-header-timestamp",
        action="store_const",
        const=True,
        default=None,
        dest="no_header_timestamp",
    )

    return parser


_DEFAULTS = {
    "constants": {"d": 2, "c5": None},
    "oracle": {"seed": 1, "n": 100_000, "t_grid": "0.25,0.5,0.9", "workers": 1},
    "crossing": {
        "seed": 1, "n": 2000, "rho": "0,0,0.5,0.5", "t_grid": "0.728",
        "sides": "32,64", "workers": 1, "unconstrained": False,
    },
    "dualscan": {
        "seed": 1, "n": 1000, "rho": "0,0,0,1", "t": 1.0, "scales": "8,16",
        "pad": None, "workers": 1, "unconstrained": False,
    },
    "influence": {"seed": 1, "n": 20_000, "vertex": "0,0", "r_max": 30, "workers": 1},
    "locality": {
        "seed": 1, "n": 500, "rho": "0.1,0.2,0.3,0.4", "t": 0.8, "r": 6,
        "window_radius": None, "workers": 1,
    },
    "decouple": {
        "seed": 1, "n": 20_000, "rho": "0,0,0.5,0.5", "t": 0.75,
        "separations": "5,10,20", "pad": 12, "workers": 1,
    },
    "continuity": {
        "seed": 1, "n": 2000, "rho": "0,0,0.5,0.5", "t": 0.7, "t_grid": None,
        "rho3_grid": None, "window_radius": 8, "margin": 0, "workers": 1,
    },
    "scales": {"base": 25, "count": 4, "c5": None},
}

_RUNNERS = {
    "constants": run_constants,
    "oracle": run_oracle,
    "crossing": run_crossing,
    "dualscan": run_dualscan,
    "influence": run_influence,
    "locality": run_locality,
    "decouple": run_decouple,
    "continuity": run_continuity,
    "scales": run_scales,
}


def _resolve_config(ns: argparse.Namespace) -> dict:
    sub = ns.subcommand
    cfg = dict(_DEFAULTS[sub])
    cfg["timestamp"] = True
    file_values = {}
    if getattr(ns, "config", None):
        try:
            with open(ns.config, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {ns.config}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, value in file_values.items():
        if key == "subcommand":
            continue
        if key not in cfg and key not in ("out", "no_header_timestamp"):
            raise ConfigError(f"unknown config key {key!r} for subcommand {sub}")
        cfg[key] = value
    for key, value in vars(ns).items():
        if key in ("subcommand", "config"):
            continue
        if value is not None:
            cfg[key] = value
    if cfg.pop("no_header_timestamp", None):
        cfg["timestamp"] = False

    # normalize list-ish fields
    if "rho" in cfg and isinstance(cfg["rho"], str):
        cfg["rho"] = _parse_floats(cfg["rho"])
    if cfg.get("t_grid") is not None and isinstance(cfg["t_grid"], str):
        cfg["t_grid"] = _parse_floats(cfg["t_grid"])
    if cfg.get("rho3_grid") is not None and isinstance(cfg["rho3_grid"], str):
        cfg["rho3_grid"] = _parse_floats(cfg["rho3_grid"])
    for key in ("sides", "scales", "separations"):
        if cfg.get(key) is not None and isinstance(cfg[key], str):
            cfg[key] = _parse_ints(cfg[key])
    if "vertex" in cfg and isinstance(cfg["vertex"], str):
        cfg["vertex"] = _parse_ints(cfg["vertex"])
    for key in ("n", "workers", "seed"):
        if key in cfg and cfg[key] is not None:
            cfg[key] = int(cfg[key])
            if key != "seed" and cfg[key] < 1:
                raise ConfigError(f"{key} must be positive")
    if "t" in cfg and cfg["t"] is not None and not 0.0 <= float(cfg["t"]) <= 1.0:
        raise ConfigError("t must lie in [0, 1]")
    if cfg.get("t_grid") is not None and any(not 0.0 <= t <= 1.0 for t in cfg["t_grid"]):
        raise ConfigError("every grid time must lie in [0, 1]")
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = _resolve_config(ns)
        return _RUNNERS[ns.subcommand](cfg)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (ValueError, OSError, RuntimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
