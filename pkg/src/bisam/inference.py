"""Posterior post-processing: inclusion probabilities, break selection,
window-aggregated break timing, and break-size summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import MIN_START, BreakCandidate, SaturatedDesign
from .sampler import PosteriorDraws

__all__ = [
    "GammaSummary",
    "BreakReport",
    "compute_pips",
    "select_breaks",
    "window_break_prob",
    "summarize_breaks",
    "fitted_mean_path",
    "build_report",
    "WINDOW_WIDTHS",
]

WINDOW_WIDTHS = (1, 2, 3)


@dataclass
class GammaSummary:
    """Conditional-on-inclusion posterior summary of one break size.

    When the candidate never entered the model, ``n_included`` is 0 and the
    numeric fields are None ("no conditional draws").
    """

    candidate: BreakCandidate
    n_included: int
    mean: float | None
    median: float | None
    lo90: float | None
    hi90: float | None

    @property
    def no_conditional_draws(self) -> bool:
        return self.n_included == 0


@dataclass
class BreakReport:
    """Break decisions derived from one posterior sample.

    ``window_prob[c, w-1]`` is the probability that at least one break
    starts within ``w`` periods of candidate ``c``'s start (a joint
    draw-level event, not a sum of marginal probabilities); NaN where the
    window would leave the admissible start range.
    """

    candidates: list[BreakCandidate]
    pip: np.ndarray
    selected: list[BreakCandidate]
    gamma_summary: list[GammaSummary]
    window_prob: np.ndarray
    outlier_prob: np.ndarray
    fitted: np.ndarray
    threshold: float
    strict: bool
    units: list
    times: list


def compute_pips(draws: PosteriorDraws) -> np.ndarray:
    """Posterior inclusion probability of every candidate."""
    if draws.n_records == 0:
        raise ValueError("no posterior sample")
    return draws.delta_gamma.mean(axis=0)


def select_breaks(
    pips: np.ndarray,
    candidates: list[BreakCandidate],
    threshold: float = 0.5,
    *,
    strict: bool = False,
) -> list[BreakCandidate]:
    """Candidates whose inclusion probability clears the threshold.

    The comparison is inclusive (>=) by default, matching the
    at-least-even-odds selection rule; pass ``strict=True`` for the strict
    median-probability-model reading. Output is sorted by unit then start
    regardless of input order.
    """
    pips = np.asarray(pips, dtype=float)
    if pips.shape[0] != len(candidates):
        raise ValueError("pips and candidates must align")
    keep = pips > threshold if strict else pips >= threshold
    return sorted(c for c, k in zip(candidates, keep) if k)


def window_break_prob(draws: PosteriorDraws, unit: int, start: int, width: int) -> float:
    """Probability that at least one break starts in [start, start+width-1].

    ``unit`` and ``start`` are 1-based; the whole window must lie inside
    the admissible start range {3, ..., T-1}. The event is evaluated
    jointly per draw, so the result never exceeds 1.
    """
    t = draws.n_periods
    if width < 1 or start < MIN_START or start + width - 1 > t - 1:
        raise ValueError("invalid window")
    cols = [
        i
        for i, c in enumerate(draws.candidates)
        if c.unit == unit and start <= c.start <= start + width - 1
    ]
    if not cols:
        raise ValueError("invalid window")
    return float((draws.delta_gamma[:, cols].sum(axis=1) >= 1).mean())


def summarize_breaks(
    draws: PosteriorDraws, selected: list[BreakCandidate]
) -> list[GammaSummary]:
    """Conditional-on-inclusion mean, median and central 90% interval."""
    if not selected:
        raise ValueError("selected break list is empty")
    index = {c: i for i, c in enumerate(draws.candidates)}
    out = []
    for cand in selected:
        col = index[cand]
        vals = draws.gamma[draws.delta_gamma[:, col] != 0, col]
        if vals.size == 0:
            out.append(GammaSummary(cand, 0, None, None, None, None))
            continue
        lo, med, hi = np.quantile(vals, [0.05, 0.5, 0.95])
        out.append(
            GammaSummary(cand, int(vals.size), float(vals.mean()), float(med), float(lo), float(hi))
        )
    return out


def fitted_mean_path(draws: PosteriorDraws, design: SaturatedDesign) -> np.ndarray:
    """Fitted values (N, T) at the posterior-mean parameters."""
    n, t = draws.n_units, draws.n_periods
    fit = np.zeros(n * t)
    if design.p_full:
        fit += design.Z @ draws.beta.mean(axis=0)
    fit += design.D @ draws.gamma.mean(axis=0)
    return fit.reshape(n, t)


def build_report(
    draws: PosteriorDraws,
    design: SaturatedDesign,
    threshold: float = 0.5,
    *,
    strict: bool = False,
) -> BreakReport:
    """Assemble the full break report from a posterior sample."""
    pips = compute_pips(draws)
    selected = select_breaks(pips, draws.candidates, threshold, strict=strict)
    summaries = summarize_breaks(draws, selected) if selected else []
    t = draws.n_periods
    window = np.full((len(draws.candidates), len(WINDOW_WIDTHS)), np.nan)
    for i, cand in enumerate(draws.candidates):
        for k, w in enumerate(WINDOW_WIDTHS):
            if cand.start + w - 1 <= t - 1:
                window[i, k] = window_break_prob(draws, cand.unit, cand.start, w)
    return BreakReport(
        candidates=list(draws.candidates),
        pip=pips,
        selected=selected,
        gamma_summary=summaries,
        window_prob=window,
        outlier_prob=draws.delta_eps.mean(axis=0),
        fitted=fitted_mean_path(draws, design),
        threshold=threshold,
        strict=strict,
        units=list(draws.units),
        times=list(draws.times),
    )
