"""Balanced-panel data model and saturated step-shift design construction.

A candidate break is a level shift of one unit from some period onward.
The saturated design holds one binary column per admissible (unit, start)
pair next to the mean-function block (intercept, fixed effects, covariates),
so break detection becomes variable selection over the step columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "PanelData",
    "BreakCandidate",
    "SaturatedDesign",
    "build_design",
    "restrict_candidates",
]

MIN_START = 3


@dataclass(frozen=True, order=True)
class BreakCandidate:
    """A candidate step shift: unit ``unit`` shifts level from period ``start`` on.

    Both fields are 1-based positions: ``unit`` in 1..N, ``start`` in 3..T-1.
    Starts 1 and 2 are excluded because those steps are indistinguishable from
    the unit effect (possibly up to a single impulse at the sample edge), and
    start T is itself a single-observation impulse rather than a step.
    """

    unit: int
    start: int


@dataclass
class PanelData:
    """Balanced N x T panel of responses with optional covariates.

    Parameters
    ----------
    units : sequence
        N distinct unit labels, in the order the rows of ``y`` are stored.
    times : sequence
        T strictly increasing period labels.
    y : ndarray of shape (N, T)
        Response values; every cell must be finite.
    X : ndarray of shape (N, T, p)
        Covariate values (p may be 0).
    include_unit_fe, include_time_fe : bool
        Whether the mean function carries unit / period dummies.
    include_intercept : bool
        Whether the mean function carries a constant column. Turning all
        three flags off (with p = 0) yields an empty mean block.
    """

    units: Sequence
    times: Sequence
    y: np.ndarray
    X: np.ndarray | None = None
    include_unit_fe: bool = True
    include_time_fe: bool = True
    include_intercept: bool = True

    def __post_init__(self) -> None:
        self.units = list(self.units)
        self.times = list(self.times)
        self.y = np.asarray(self.y, dtype=float)
        n, t = len(self.units), len(self.times)
        if self.X is None:
            self.X = np.zeros((n, t, 0))
        self.X = np.asarray(self.X, dtype=float)
        if n < 2:
            raise ValueError("panel needs at least 2 units")
        if t < 5:
            raise ValueError(
                "degenerate horizon: need T >= 5 so the candidate start set "
                "{3, ..., T-1} is nonempty and fixed effects are identifiable"
            )
        if len(set(self.units)) != n:
            raise ValueError("unit labels must be distinct")
        if any(not a < b for a, b in zip(self.times, self.times[1:])):
            raise ValueError("time labels must be strictly increasing")
        if self.y.shape != (n, t):
            raise ValueError(f"y must have shape ({n}, {t}), got {self.y.shape}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("panel is not balanced: y contains non-finite cells")
        if self.X.ndim != 3 or self.X.shape[:2] != (n, t):
            raise ValueError(f"X must have shape ({n}, {t}, p), got {self.X.shape}")
        if self.X.size and not np.all(np.isfinite(self.X)):
            raise ValueError("covariates contain non-finite cells")

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.times)

    @property
    def n_covariates(self) -> int:
        return self.X.shape[2]


@dataclass
class SaturatedDesign:
    """Expanded regression design for one panel.

    Attributes
    ----------
    Z : ndarray of shape (N*T, p_full)
        Mean-function block after identification constraints (reference
        categories dropped so Z has full column rank).
    D : ndarray of shape (N*T, q)
        Binary step-shift columns, one per candidate, q = N*(T-3) for the
        full candidate set.
    candidates : list of BreakCandidate
        Column order of ``D``: sorted by unit, then start.
    row_index : list of (unit_position, period_position)
        1-based (i, t) pair for every row; rows are unit-major, time-minor.
    units, times : list
        Panel labels, carried along for reporting.
    """

    Z: np.ndarray
    D: np.ndarray
    candidates: list[BreakCandidate]
    row_index: list[tuple[int, int]]
    units: list = field(default_factory=list)
    times: list = field(default_factory=list)

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.times)

    @property
    def n_candidates(self) -> int:
        return self.D.shape[1]

    @property
    def p_full(self) -> int:
        return self.Z.shape[1]

    def candidate_rows(self, c: int) -> slice:
        """Row slice carrying the ones of candidate column ``c``."""
        cand = self.candidates[c]
        t = self.n_periods
        base = (cand.unit - 1) * t
        return slice(base + cand.start - 1, base + t)


def _mean_block(panel: PanelData) -> np.ndarray:
    """Assemble the mean-function block with reference-category coding.

    A constant direction may enter the span at most once: the first of
    intercept / unit dummies / time dummies keeps its full set, later
    blocks drop their first category.
    """
    n, t = panel.n_units, panel.n_periods
    cols: list[np.ndarray] = []
    constant_spanned = False
    if panel.include_intercept:
        cols.append(np.ones((n * t, 1)))
        constant_spanned = True
    if panel.include_unit_fe:
        dummies = np.kron(np.eye(n), np.ones((t, 1)))
        cols.append(dummies[:, 1:] if constant_spanned else dummies)
        constant_spanned = True
    if panel.include_time_fe:
        dummies = np.kron(np.ones((n, 1)), np.eye(t))
        cols.append(dummies[:, 1:] if constant_spanned else dummies)
        constant_spanned = True
    if panel.n_covariates:
        cols.append(panel.X.reshape(n * t, panel.n_covariates))
    if not cols:
        return np.zeros((n * t, 0))
    return np.hstack(cols)


def build_design(panel: PanelData) -> SaturatedDesign:
    """Construct the saturated step-shift design for a balanced panel.

    Rows are unit-major, time-minor; candidate columns are ordered by unit
    then start, so the output is deterministic for a given panel.

    Raises
    ------
    ValueError
        If T < 5 ("degenerate horizon", enforced by ``PanelData``) or the
        mean block is rank deficient after constraint handling
        ("collinear mean design").
    """
    n, t = panel.n_units, panel.n_periods
    Z = _mean_block(panel)
    if Z.shape[1] and np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise ValueError("collinear mean design")

    q = n * (t - MIN_START)
    D = np.zeros((n * t, q))
    candidates: list[BreakCandidate] = []
    c = 0
    for j in range(n):
        for s in range(MIN_START, t):
            D[j * t + s - 1 : (j + 1) * t, c] = 1.0
            candidates.append(BreakCandidate(unit=j + 1, start=s))
            c += 1

    row_index = [(j + 1, s + 1) for j in range(n) for s in range(t)]
    return SaturatedDesign(
        Z=Z,
        D=D,
        candidates=candidates,
        row_index=row_index,
        units=list(panel.units),
        times=list(panel.times),
    )


def restrict_candidates(
    design: SaturatedDesign, keep: Sequence[int] | Sequence[BreakCandidate]
) -> SaturatedDesign:
    """Return a design whose step columns are the given subset of candidates.

    ``keep`` may hold column indices or BreakCandidate objects; order is
    preserved from the original design regardless of the order of ``keep``.
    """
    if len(keep) == 0:
        raise ValueError("candidate subset must be nonempty")
    if isinstance(keep[0], BreakCandidate):
        index = {cand: i for i, cand in enumerate(design.candidates)}
        try:
            idx = sorted(index[c] for c in keep)
        except KeyError as err:
            raise ValueError(f"unknown candidate {err.args[0]}") from None
    else:
        idx = sorted(int(i) for i in keep)
        if idx and (idx[0] < 0 or idx[-1] >= design.n_candidates):
            raise ValueError("candidate index out of range")
    return SaturatedDesign(
        Z=design.Z,
        D=design.D[:, idx],
        candidates=[design.candidates[i] for i in idx],
        row_index=list(design.row_index),
        units=list(design.units),
        times=list(design.times),
    )
