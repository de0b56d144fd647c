"""Data-generating processes, replication runner and classification metrics
for benchmarking break detectors on synthetic panels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .alasso import AlassoConfig, alasso_detect
from .inference import compute_pips, select_breaks
from .panel import MIN_START, BreakCandidate, PanelData, build_design
from .sampler import PriorConfig, SamplerConfig, run_chain

__all__ = [
    "SimDesign",
    "StudyConfig",
    "ReplicationScore",
    "MetricAggregate",
    "MetricsReport",
    "generate",
    "score",
    "aggregate_scores",
    "run_study",
    "METRIC_NAMES",
    "METHODS",
]

METRIC_NAMES = ("tpr", "fpr", "precision", "f1", "near_miss")

# Dense layouts keep breaks within a unit at least this many periods apart,
# otherwise "two breaks" is ill-defined on a short horizon.
MIN_BREAK_SPACING = 3


@dataclass
class SimDesign:
    """One cell of the simulation grid.

    ``layout`` is "sparse" (40% of units get exactly one break), "dense"
    (80% of units get breaks, half of those two breaks each) or an explicit
    list of (unit, start, size) triples with 1-based positions and sizes in
    noise-standard-deviation units. Named layouts place breaks of size
    ``break_size`` (in sigma units) at uniformly drawn admissible starts.
    """

    n_units: int = 10
    n_periods: int = 30
    sigma2: float = 1.0
    break_size: float = 3.0
    layout: str | Sequence[tuple[int, int, float]] = "sparse"
    n_reps: int = 20
    seed: int = 0
    fe: bool = True

    def __post_init__(self) -> None:
        if self.n_units < 2 or self.n_periods < 5:
            raise ValueError("simulation panel must have N >= 2 and T >= 5")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.n_reps < 1:
            raise ValueError("n_reps must be positive")
        if isinstance(self.layout, str):
            if self.layout not in ("sparse", "dense"):
                raise ValueError("layout must be 'sparse', 'dense' or a break list")
        else:
            self.layout = [(int(u), int(s), float(g)) for u, s, g in self.layout]
            for u, s, _ in self.layout:
                if not (1 <= u <= self.n_units):
                    raise ValueError("infeasible layout: unit out of range")
                if not (MIN_START <= s <= self.n_periods - 1):
                    raise ValueError("infeasible layout: start out of range")
            per_unit: dict[int, list[int]] = {}
            for u, s, _ in self.layout:
                per_unit.setdefault(u, []).append(s)
            for starts in per_unit.values():
                if len(starts) != len(set(starts)):
                    raise ValueError("infeasible layout: colliding starts within a unit")


def _spaced_starts(
    rng: np.random.Generator, n_breaks: int, t: int, spacing: int
) -> list[int]:
    """Draw ``n_breaks`` admissible starts at least ``spacing`` apart."""
    admissible = np.arange(MIN_START, t)
    if admissible.size < (n_breaks - 1) * spacing + 1:
        raise ValueError("infeasible layout: horizon too short for requested breaks")
    for _ in range(1000):
        starts = np.sort(rng.choice(admissible, size=n_breaks, replace=False))
        if n_breaks == 1 or np.all(np.diff(starts) >= spacing):
            return [int(s) for s in starts]
    raise ValueError("infeasible layout: could not satisfy break spacing")


def _draw_layout(
    design: SimDesign, rng: np.random.Generator
) -> list[tuple[int, int, float]]:
    """Materialize the break layout of one replication."""
    if not isinstance(design.layout, str):
        return list(design.layout)
    n, t = design.n_units, design.n_periods
    size = design.break_size
    breaks: list[tuple[int, int, float]] = []
    if design.layout == "sparse":
        units = rng.choice(n, size=max(1, round(0.4 * n)), replace=False)
        for u in units:
            (s,) = _spaced_starts(rng, 1, t, MIN_BREAK_SPACING)
            breaks.append((int(u) + 1, s, size))
    else:
        n_break_units = max(2, round(0.8 * n))
        units = rng.choice(n, size=n_break_units, replace=False)
        n_double = n_break_units // 2
        for i, u in enumerate(units):
            k = 2 if i < n_double else 1
            for s in _spaced_starts(rng, k, t, MIN_BREAK_SPACING):
                breaks.append((int(u) + 1, s, size))
    return breaks


def generate(
    design: SimDesign, rep_index: int
) -> tuple[PanelData, list[BreakCandidate]]:
    """Simulate one panel: fixed effects + step breaks + Gaussian noise.

    Unit and time effects are drawn N(0, 1) once per replication; noise is
    N(0, sigma2). The replication stream is derived from (seed, rep_index),
    so identical arguments reproduce the panel bit for bit. Breaks of size
    zero are dropped from the returned truth list.
    """
    rng = np.random.default_rng([design.seed, rep_index])
    n, t = design.n_units, design.n_periods
    sigma = math.sqrt(design.sigma2)
    breaks = _draw_layout(design, rng)
    y = np.zeros((n, t))
    if design.fe:
        alpha = rng.standard_normal(n)
        lam = rng.standard_normal(t)
        y += alpha[:, None] + lam[None, :]
    for u, s, g in breaks:
        y[u - 1, s - 1 :] += g * sigma
    y += rng.normal(0.0, sigma, size=(n, t))
    panel = PanelData(
        units=list(range(1, n + 1)),
        times=list(range(1, t + 1)),
        y=y,
        include_unit_fe=design.fe,
        include_time_fe=design.fe,
        include_intercept=True,
    )
    truth = sorted(BreakCandidate(u, s) for u, s, g in breaks if g != 0.0)
    return panel, truth


@dataclass
class ReplicationScore:
    """Classification metrics of one replication (None where undefined)."""

    tpr: float | None
    fpr: float | None
    precision: float | None
    f1: float | None
    near_miss: float | None
    n_true: int = 0
    n_detected: int = 0
    n_missed: int = 0
    n_near_missed: int = 0

    def as_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def score(
    detected: Sequence[BreakCandidate],
    truth: Sequence[BreakCandidate],
    q: int,
) -> ReplicationScore:
    """Score a detected break set against the truth over q candidates.

    True positives require an exact (unit, start) match. A near miss is a
    missed true break with a detection in an adjacent period of the same
    unit, where that detection is not itself a true positive; the rate is
    relative to the number of missed breaks and undefined when nothing was
    missed.
    """
    det = set(detected)
    tru = set(truth)
    if len(det) != len(detected) or len(tru) != len(truth):
        raise ValueError("break lists must not contain duplicates")
    if q < len(tru):
        raise ValueError("candidate count smaller than the truth set")
    tp = len(det & tru)
    fp = len(det - tru)
    missed = tru - det
    tpr = tp / len(tru) if tru else None
    fpr = fp / (q - len(tru)) if q > len(tru) else None
    precision = tp / len(det) if det else None
    if precision is None or tpr is None:
        f1 = None
    elif precision + tpr == 0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * tpr / (precision + tpr)
    false_dets = det - tru
    near = sum(
        1
        for m in missed
        if any(d.unit == m.unit and abs(d.start - m.start) == 1 for d in false_dets)
    )
    near_miss = near / len(missed) if missed else None
    return ReplicationScore(
        tpr=tpr,
        fpr=fpr,
        precision=precision,
        f1=f1,
        near_miss=near_miss,
        n_true=len(tru),
        n_detected=len(det),
        n_missed=len(missed),
        n_near_missed=near,
    )


@dataclass
class MetricAggregate:
    """Across-replication mean and standard error of one metric."""

    mean: float | None
    se: float | None
    n: int


@dataclass
class MetricsReport:
    """Aggregated metrics for one (method, layout, size) cell."""

    metrics: dict[str, MetricAggregate]
    n_reps: int
    n_failed: int
    pooled_near_miss: float | None = None


def aggregate_scores(scores: Sequence[ReplicationScore], n_failed: int = 0) -> MetricsReport:
    """Mean/SE per metric over the replications where it is defined."""
    metrics: dict[str, MetricAggregate] = {}
    for name in METRIC_NAMES:
        vals = [getattr(s, name) for s in scores if getattr(s, name) is not None]
        if not vals:
            metrics[name] = MetricAggregate(None, None, 0)
            continue
        arr = np.asarray(vals, dtype=float)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else None
        metrics[name] = MetricAggregate(float(arr.mean()), se, arr.size)
    total_missed = sum(s.n_missed for s in scores)
    pooled = (
        sum(s.n_near_missed for s in scores) / total_missed if total_missed else None
    )
    return MetricsReport(
        metrics=metrics, n_reps=len(scores), n_failed=n_failed, pooled_near_miss=pooled
    )


@dataclass
class StudyConfig:
    """How each method is run inside the study."""

    prior: PriorConfig = field(default_factory=PriorConfig)
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(n_burn=500, n_draw=1500, grid_points=160))
    alasso: AlassoConfig = field(default_factory=AlassoConfig)
    pip_threshold: float = 0.5
    strict_threshold: bool = False


def _fit_bisam(panel: PanelData, cfg: StudyConfig, seed: int) -> list[BreakCandidate]:
    draws = run_chain(panel, cfg.prior, replace(cfg.sampler, seed=seed))
    pips = compute_pips(draws)
    return select_breaks(
        pips, draws.candidates, cfg.pip_threshold, strict=cfg.strict_threshold
    )


def _fit_alasso(panel: PanelData, cfg: StudyConfig, seed: int) -> list[BreakCandidate]:
    detected, _ = alasso_detect(panel, build_design(panel), cfg.alasso)
    return detected


METHODS: dict[str, Callable[[PanelData, StudyConfig, int], list[BreakCandidate]]] = {
    "bisam": _fit_bisam,
    "alasso": _fit_alasso,
}


def _method_seed(master_seed: int, size: float, rep_index: int) -> int:
    ss = np.random.SeedSequence([master_seed, rep_index, int(round(size * 1000))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_study(
    design: SimDesign,
    sizes: Sequence[float],
    methods: Sequence[str],
    cfg: StudyConfig,
) -> dict[tuple[str, float], MetricsReport]:
    """Run the replication study over a grid of break sizes.

    Every replication is a pure function of (design.seed, rep_index), so
    replications are independent and could run in parallel; they are
    executed in order here and aggregation is order-independent.
    Per-replication failures are caught, counted in the cell's report and
    excluded from the averages.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    results: dict[tuple[str, float], MetricsReport] = {}
    for size in sizes:
        d = replace(design, break_size=float(size))
        panels = [generate(d, r) for r in range(d.n_reps)]
        q = d.n_units * (d.n_periods - MIN_START)
        for method in methods:
            fit = METHODS[method]
            scores: list[ReplicationScore] = []
            failed = 0
            for r, (panel, truth) in enumerate(panels):
                try:
                    detected = fit(panel, cfg, _method_seed(d.seed, size, r))
                    scores.append(score(detected, truth, q))
                except Exception:
                    failed += 1
            results[(method, float(size))] = aggregate_scores(scores, n_failed=failed)
    return results


def report_rows(
    results: dict[tuple[str, float], MetricsReport], layout: str
) -> list[dict]:
    """Flatten study results into long-format rows for the metrics table."""
    rows = []
    for (method, size), rep in sorted(results.items()):
        for name in METRIC_NAMES:
            agg = rep.metrics[name]
            rows.append(
                {
                    "method": method,
                    "layout": layout,
                    "size": size,
                    "metric": name,
                    "mean": agg.mean,
                    "se": agg.se,
                }
            )
        rows.append(
            {
                "method": method,
                "layout": layout,
                "size": size,
                "metric": "failed_reps",
                "mean": float(rep.n_failed),
                "se": None,
            }
        )
    return rows
