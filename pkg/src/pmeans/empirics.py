"""Empirical p-mean experiments: the running-mean process and a statistical
probe of almost-everywhere uniqueness.

Uniqueness is operationalized as a positive gap between the best and the
second-best objective basin at grid resolution.  Genuine measure-zero ties
(hand-built symmetric configurations) measure a gap below the resolution
threshold and are flagged, never silently broken; near-ties caused by the
grid alone disappear under refinement.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .costs import h_cost, h_field_values
from .errors import ConfigError
from .landscape import evaluate_field, minimizers
from .manifolds import Circle, FlatTorus, Sphere
from .measures import DiscreteMeasure, SmoothedMeasure, uniform_empirical

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def tie_threshold(manifold, resolution: int) -> float:
    """Gap below which two basins are indistinguishable at this resolution.

    Basin minima sampled on a grid of spacing delta are off by O(delta^2)
    times the local curvature; 20 delta^2 covers that with margin while
    staying far below generic configuration gaps.
    """
    if isinstance(manifold, Sphere):
        n = 2
        while 10 * 4**n + 2 < resolution:
            n += 1
        spacing = math.sqrt(1.0 / (10 * 4**n + 2))
    else:
        spacing = 1.0 / resolution
    return 20.0 * spacing**2


def _golden_min(f, a: float, b: float, xtol: float) -> float:
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _grid_spacing(m, resolution: int) -> float:
    if isinstance(m, Sphere):
        n = 2
        while 10 * 4**n + 2 < resolution:
            n += 1
        return 1.3 * math.sqrt(1.0 / (10 * 4**n + 2))
    return 1.0 / resolution


def _refine(m, measure: DiscreteMeasure, p: float, start, spacing: float, refine_tol: float):
    """Local minimization of H from `start` within about one grid cell.

    Golden section on the circle; cyclic coordinate descent along tangent
    directions on the torus and sphere.
    """
    if isinstance(m, Circle):
        x0 = float(start[0])
        val = _golden_min(
            lambda u: h_cost(m, measure, p, np.array([u])), x0 - spacing, x0 + spacing, refine_tol
        )
        return m.canonical(np.array([val]))

    x = np.asarray(start, dtype=float).copy()
    for _ in range(60):
        moved = 0.0
        if isinstance(m, FlatTorus):
            dirs = np.eye(m.dim)
        else:
            e1 = m._antipodal_direction(x)
            e2 = np.cross(x / m.radius, e1)
            dirs = np.stack([e1, e2])
        for e in dirs:
            def along(u, e=e, x=x):
                return h_cost(m, measure, p, m.exp(x, u * e))

            u_best = _golden_min(along, -spacing, spacing, refine_tol)
            x_new = m.canonical(m.exp(x, u_best * e))
            moved += m.distance(x, x_new)
            x = x_new
        spacing = max(2.0 * moved, 8.0 * refine_tol)
        if moved < refine_tol:
            break
    return x


@dataclass
class EmpiricalMean:
    """Result of a global p-mean search: minimizer, objective, gap, basin label."""

    point: np.ndarray
    h_value: float
    gap: float
    ambiguous: bool
    basin_node: int  # grid index of the containing basin's minimum


def empirical_p_mean(
    manifold,
    points,
    p: float,
    resolution: int = 4096,
    refine_tol: float = 1e-8,
    gap_tol: float | None = None,
) -> EmpiricalMean:
    """Global grid sweep of H followed by local refinement.

    Returns the refined minimizer and the uniqueness gap between the best
    and second-best basin.  A gap at or below the resolution threshold sets
    the `ambiguous` flag (the measure-zero tie case), which is not an error.
    """
    measure = uniform_empirical([manifold.canonical(np.atleast_1d(q)) for q in points])
    if gap_tol is None:
        gap_tol = tie_threshold(manifold, resolution)
    field = evaluate_field(
        lambda nodes: h_field_values(manifold, measure, p, nodes),
        manifold,
        resolution,
        batch=True,
    )
    report = minimizers(field, gap_tol)
    start = field.nodes[report.argmin]
    refined = _refine(manifold, measure, p, start, _grid_spacing(manifold, resolution), refine_tol)
    h_ref = h_cost(manifold, measure, p, refined)
    h_grid = float(field.values[report.argmin])
    if h_ref > h_grid:
        refined, h_ref = start.copy(), h_grid
    return EmpiricalMean(
        point=refined,
        h_value=h_ref,
        gap=report.gap,
        ambiguous=report.gap <= tie_threshold(manifold, resolution),
        basin_node=report.argmin,
    )


@dataclass
class MeanProcessRecord:
    n: int
    point: np.ndarray
    h_value: float
    gap: float
    basin_node: int
    method: str


def mean_process(
    manifold,
    sample_stream,
    p: float,
    n_max: int,
    resolution: int = 1024,
    refine_tol: float = 1e-8,
) -> list[MeanProcessRecord]:
    """Empirical p-means e_{p,n} along a growing i.i.d. sample.

    Each step warm-starts a local refinement at e_{p,n-1} and also performs
    the full grid sweep, keeping whichever lands lower; the sweep is what
    catches jumps between basins as the sample tilts the objective.
    """
    records: list[MeanProcessRecord] = []
    pts: list[np.ndarray] = []
    prev: np.ndarray | None = None
    stream = iter(sample_stream)
    spacing = _grid_spacing(manifold, resolution)
    for n in range(1, n_max + 1):
        try:
            pts.append(manifold.canonical(np.atleast_1d(next(stream))))
        except StopIteration:
            break
        cold = empirical_p_mean(manifold, pts, p, resolution, refine_tol)
        point, h_val, method = cold.point, cold.h_value, "grid+refine"
        if prev is not None:
            measure = uniform_empirical(pts)
            warm = _refine(manifold, measure, p, prev, spacing, refine_tol)
            h_warm = h_cost(manifold, measure, p, warm)
            if h_warm < h_val:
                point, h_val, method = warm, h_warm, "warm"
        records.append(
            MeanProcessRecord(
                n=n,
                point=point,
                h_value=h_val,
                gap=cold.gap,
                basin_node=cold.basin_node,
                method=method,
            )
        )
        prev = point
    return records


def mean_process_to_csv(records: list[MeanProcessRecord], path) -> None:
    if not records:
        raise ConfigError("mean_process: no records to write")
    cdim = len(records[0].point)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"e_{i}" for i in range(cdim)] + ["H_value", "gap", "basin_id", "method"])
        for r in records:
            w.writerow(
                [r.n]
                + [f"{c:.17g}" for c in r.point]
                + [f"{r.h_value:.17g}", f"{r.gap:.17g}", r.basin_node, r.method]
            )


@dataclass
class ProbeReport:
    """Uniqueness-gap statistics over random atom configurations."""

    n_trials: int
    n_points: int
    p: float
    resolution: int
    gaps: np.ndarray              # finite gaps only
    n_single_basin: int           # trials with no competing basin at all
    tie_trials: list[int]
    ties_resolved: int            # flagged ties that vanish at 4x resolution
    hypothesis_ok: bool

    def histogram(self, bins: int = 20):
        if len(self.gaps) == 0:
            return np.zeros(bins), np.linspace(0.0, 1.0, bins + 1)
        return np.histogram(self.gaps, bins=bins)

    def to_json(self) -> dict:
        counts, edges = self.histogram()
        return {
            "n_trials": self.n_trials,
            "n_points": self.n_points,
            "p": self.p,
            "resolution": self.resolution,
            "tie_count": len(self.tie_trials),
            "ties_resolved_at_4x": self.ties_resolved,
            "n_single_basin": self.n_single_basin,
            "hypothesis_ok": self.hypothesis_ok,
            "histogram_counts": [int(c) for c in counts],
            "histogram_edges": [float(e) for e in edges],
            "min_gap": float(np.min(self.gaps)) if len(self.gaps) else None,
        }


def uniqueness_probe(
    manifold,
    n_points: int,
    p: float,
    law,
    trials: int,
    resolution: int,
    rng,
    refine_ties: bool = True,
) -> ProbeReport:
    """Sample atom configurations and measure their uniqueness gaps.

    `law` is either the string "uniform" or a SmoothedMeasure (both are
    absolutely continuous).  Outside the hypothesis p > 1 or (dim > 1 and
    N > 2) the almost-everywhere uniqueness theorem does not apply and a
    warning is emitted; the probe still runs.
    """
    hypothesis_ok = p > 1.0 or (manifold.dim > 1 and n_points > 2)
    if not hypothesis_ok:
        warnings.warn(
            f"uniqueness probe outside the guaranteed regime: need p > 1 or "
            f"(dim > 1 and N > 2), got p={p}, dim={manifold.dim}, N={n_points}",
            stacklevel=2,
        )
    if isinstance(law, str):
        if law != "uniform":
            raise ConfigError(f'law: expected "uniform" or a SmoothedMeasure, got "{law}"')
        draw = lambda: manifold.random_point(rng)  # noqa: E731
    elif isinstance(law, SmoothedMeasure):
        draw = lambda: law.sample(rng)  # noqa: E731
    else:
        raise ConfigError(f"law: expected 'uniform' or a SmoothedMeasure, got {type(law)!r}")

    tau = tie_threshold(manifold, resolution)
    gaps = []
    n_single = 0
    tie_trials = []
    ties_resolved = 0
    for trial in range(trials):
        pts = [draw() for _ in range(n_points)]
        res = empirical_p_mean(manifold, pts, p, resolution)
        if math.isinf(res.gap):
            n_single += 1
        else:
            gaps.append(res.gap)
        if res.gap <= tau:
            tie_trials.append(trial)
            if refine_ties:
                fine = empirical_p_mean(manifold, pts, p, 4 * resolution)
                if fine.gap > tie_threshold(manifold, 4 * resolution):
                    ties_resolved += 1
    return ProbeReport(
        n_trials=trials,
        n_points=n_points,
        p=p,
        resolution=resolution,
        gaps=np.array(gaps),
        n_single_basin=n_single,
        tie_trials=tie_trials,
        ties_resolved=ties_resolved,
        hypothesis_ok=hypothesis_ok,
    )
