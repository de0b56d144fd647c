"""Single-site Gibbs sampler for step-shift selection in balanced panels.

Model: y = Z beta + D gamma + eps, with unit-level noise variances, a
Dirac-spike / inverse-moment-slab prior on each step coefficient, a
Bernoulli inclusion flag per candidate (optionally with a Beta hyperprior
on the inclusion probability), and an optional two-component error mixture
that flags and downweights outlying observations.

The slab scale of every candidate is anchored at a fixed empirical-Bayes
reference variance for its unit (estimated once from the no-break fit), so
the unit-variance update stays exactly conjugate. Spike-vs-slab odds are
computed by deterministic trapezoid quadrature of the scalar slab marginal
on a window that covers both the likelihood peak and the prior body; no
Laplace approximation is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import expit, gammaln

from .panel import PanelData, SaturatedDesign, build_design, restrict_candidates

__all__ = [
    "PriorConfig",
    "SamplerConfig",
    "SamplerState",
    "PosteriorDraws",
    "EmpiricalBayes",
    "empirical_bayes_init",
    "resolve_priors",
    "beta_full_conditional",
    "update_beta",
    "sigma2_full_conditional",
    "update_sigma2",
    "update_outliers",
    "update_omega",
    "update_break",
    "gibbs_step",
    "run_chain",
]

SIGMA2_FLOOR = 1e-12
_LGAMMA_HALF = gammaln(0.5)
_LGAMMA_3HALF = gammaln(1.5)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PriorConfig:
    """Hyperparameters of the break-selection model.

    ``omega`` is the prior inclusion probability of each step candidate;
    set ``omega_hyper = (a, b)`` to learn it under a Beta(a, b) hyperprior
    instead. ``m0``/``n0`` are the inverse-gamma hyperparameters of the
    unit variances; left as None they are calibrated from the no-break
    baseline fit (prior mean equal to the per-unit reference variance with
    prior weight worth about five observations). ``beta_prior_var`` is the
    variance of the independent zero-mean normal prior on the mean-function
    coefficients (None: 1e4 times the mean reference variance).

    ``eta`` and ``tau_eps`` parameterize the outlier mixture: each
    observation is flagged with prior probability ``eta`` and flagged rows
    are downweighted by 1/sqrt(2*tau_eps).
    """

    tau: float = 3.32
    omega: float = 0.01
    omega_hyper: tuple[float, float] | None = None
    m0: float | None = None
    n0: float | None = None
    beta_prior_var: float | None = None
    eta: float = 0.01
    tau_eps: float = 10.0
    outliers_enabled: bool = True

    def __post_init__(self) -> None:
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive")
        # omega = 0 is allowed as the degenerate never-include prior.
        if not 0.0 <= self.omega < 1.0:
            raise ValueError("omega must lie in [0, 1)")
        if self.omega_hyper is not None:
            a, b = self.omega_hyper
            if not (a > 0 and b > 0):
                raise ValueError("omega hyperprior parameters must be positive")
        if self.m0 is not None and not self.m0 > 0:
            raise ValueError("m0 must be positive")
        if self.n0 is not None and not self.n0 > 0:
            raise ValueError("n0 must be positive")
        if self.beta_prior_var is not None and not self.beta_prior_var > 0:
            raise ValueError("beta_prior_var must be positive")
        # eta = 0 is allowed and turns the mixture off.
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if not self.tau_eps > 1.0:
            raise ValueError("tau_eps must exceed 1")


@dataclass
class SamplerConfig:
    """Chain-length, seeding and quadrature settings."""

    n_burn: int = 2000
    n_draw: int = 5000
    thin: int = 1
    seed: int = 0
    grid_points: int = 400

    def __post_init__(self) -> None:
        if self.n_burn <= 0 or self.n_draw <= 0 or self.thin <= 0:
            raise ValueError("n_burn, n_draw and thin must be positive")
        if self.grid_points < 16:
            raise ValueError("grid_points must be at least 16")
        if self.n_draw % self.thin:
            raise ValueError("n_draw must be a multiple of thin")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit non-negative integer")


@dataclass
class SamplerState:
    """Mutable Gibbs state.

    The Dirac spike is exact: gamma[c] is identically 0 whenever
    delta_gamma[c] is 0. ``sigma2_ref`` holds the fixed empirical-Bayes
    reference variances that anchor the slab and outlier scales.
    """

    beta: np.ndarray
    gamma: np.ndarray
    delta_gamma: np.ndarray
    sigma2: np.ndarray
    delta_eps: np.ndarray
    omega: float
    sigma2_ref: np.ndarray


def validate_state(state: SamplerState) -> None:
    """Raise if the state violates its structural invariants."""
    if np.any((state.gamma != 0) != (state.delta_gamma != 0)):
        raise ValueError("Dirac spike violated: gamma nonzero without inclusion flag")
    if np.any(state.sigma2 <= 0) or not np.all(np.isfinite(state.sigma2)):
        raise ValueError("unit variances must be positive and finite")
    if not 0.0 <= state.omega <= 1.0:
        raise ValueError("omega out of range")


@dataclass
class PosteriorDraws:
    """Recorded post-burn-in chain states plus diagnostic counters."""

    beta: np.ndarray
    gamma: np.ndarray
    delta_gamma: np.ndarray
    sigma2: np.ndarray
    delta_eps: np.ndarray
    omega: np.ndarray
    counters: dict
    candidates: list
    units: list
    times: list
    prior: PriorConfig
    sampler: SamplerConfig

    @property
    def n_records(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.gamma.shape[1]

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# empirical-Bayes initialization


@dataclass
class EmpiricalBayes:
    """No-break baseline fit: reference variances and prior defaults."""

    sigma2_ref: np.ndarray
    m0: float
    n0: np.ndarray
    beta0: np.ndarray


def empirical_bayes_init(design: SaturatedDesign, y: np.ndarray) -> EmpiricalBayes:
    """Fit the no-break model by least squares and calibrate variance priors.

    The per-unit residual variance of the baseline fit becomes the
    reference variance; the inverse-gamma prior is centered there with
    prior weight worth about five observations (shape 2.5). The residual
    degrees of freedom are allocated evenly across units; fewer than two
    per unit is an error.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n, t = design.n_units, design.n_periods
    p = design.p_full
    df_unit = t - p / n
    if df_unit < 2:
        raise ValueError("insufficient data for empirical Bayes")
    if p:
        beta0, *_ = np.linalg.lstsq(design.Z, y, rcond=None)
        resid = y - design.Z @ beta0
    else:
        beta0 = np.zeros(0)
        resid = y.copy()
    ssr = (resid.reshape(n, t) ** 2).sum(axis=1)
    sigma2_ref = np.maximum(ssr / df_unit, SIGMA2_FLOOR)
    m0 = 2.5
    n0 = (m0 - 1.0) * sigma2_ref
    return EmpiricalBayes(sigma2_ref=sigma2_ref, m0=m0, n0=n0, beta0=beta0)


@dataclass
class _ResolvedPriors:
    """PriorConfig with every default made concrete for a given panel."""

    tau: float
    omega: float
    omega_hyper: tuple[float, float] | None
    m0: float
    n0: np.ndarray
    beta_prior_var: float
    eta: float
    tau_eps: float
    outliers_enabled: bool
    slab_scale: np.ndarray
    slab_log_const: np.ndarray
    outlier_scale: np.ndarray


def resolve_priors(priors: PriorConfig, sigma2_ref: np.ndarray) -> _ResolvedPriors:
    """Fill data-dependent defaults and precompute per-unit slab constants."""
    sigma2_ref = np.asarray(sigma2_ref, dtype=float)
    n = sigma2_ref.shape[0]
    m0 = priors.m0 if priors.m0 is not None else 2.5
    if priors.n0 is not None:
        n0 = np.full(n, float(priors.n0))
    else:
        n0 = (m0 - 1.0) * sigma2_ref if m0 > 1 else 1.5 * sigma2_ref
    v0 = (
        priors.beta_prior_var
        if priors.beta_prior_var is not None
        else 1e4 * float(sigma2_ref.mean())
    )
    slab_scale = priors.tau * sigma2_ref
    # normalizing constant of the order-1, shape-1 slab: sqrt(s)/Gamma(1/2)
    slab_log_const = 0.5 * np.log(slab_scale) - _LGAMMA_HALF
    return _ResolvedPriors(
        tau=priors.tau,
        omega=priors.omega,
        omega_hyper=priors.omega_hyper,
        m0=m0,
        n0=n0,
        beta_prior_var=v0,
        eta=priors.eta,
        tau_eps=priors.tau_eps,
        outliers_enabled=priors.outliers_enabled,
        slab_scale=slab_scale,
        slab_log_const=slab_log_const,
        outlier_scale=priors.tau_eps * sigma2_ref,
    )


# ---------------------------------------------------------------------------
# row weights from outlier flags


def _row_weights(delta_eps: np.ndarray, tau_eps: float) -> np.ndarray:
    """Per-row precision multiplier: 1 normally, 1/(2*tau_eps) when flagged."""
    return np.where(delta_eps.reshape(-1) != 0, 1.0 / (2.0 * tau_eps), 1.0)


# ---------------------------------------------------------------------------
# mean-function coefficients


def beta_full_conditional(
    state: SamplerState,
    design: SaturatedDesign,
    y_working: np.ndarray,
    priors: PriorConfig | _ResolvedPriors,
):
    """Mean and precision of the Gaussian full conditional of beta.

    ``y_working`` must be the response net of the current break
    contribution (y - D gamma); outlier downweighting is applied here from
    the state's flags.
    """
    rp = priors if isinstance(priors, _ResolvedPriors) else resolve_priors(priors, state.sigma2_ref)
    p = design.p_full
    if p == 0:
        return np.zeros(0), np.zeros((0, 0))
    t = design.n_periods
    winv = _row_weights(state.delta_eps, rp.tau_eps)
    wv = winv / np.repeat(state.sigma2, t)
    A = (design.Z * wv[:, None]).T @ design.Z
    A[np.diag_indices_from(A)] += 1.0 / rp.beta_prior_var
    rhs = (wv * np.asarray(y_working, dtype=float).reshape(-1)) @ design.Z
    mean = cho_solve(cho_factor(A, lower=True), rhs)
    return mean, A


def _draw_gaussian_from_precision(
    mean: np.ndarray, precision: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as err:
        raise RuntimeError("numerical failure in beta update") from err
    z = rng.standard_normal(mean.shape[0])
    draw = mean + solve_triangular(chol.T, z, lower=False)
    if not np.all(np.isfinite(draw)):
        raise RuntimeError("numerical failure in beta update")
    return draw


def update_beta(
    state: SamplerState,
    design: SaturatedDesign,
    y_working: np.ndarray,
    priors: PriorConfig | _ResolvedPriors,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw beta from its Gaussian full conditional (no-op when p_full = 0)."""
    if design.p_full == 0:
        return np.zeros(0)
    mean, precision = beta_full_conditional(state, design, y_working, priors)
    if not np.all(np.isfinite(precision)):
        raise RuntimeError("numerical failure in beta update")
    return _draw_gaussian_from_precision(mean, precision, rng)


# ---------------------------------------------------------------------------
# unit variances


def sigma2_full_conditional(
    unit_index: int,
    state: SamplerState,
    design: SaturatedDesign,
    y: np.ndarray,
    priors: PriorConfig | _ResolvedPriors,
) -> tuple[float, float]:
    """(shape, rate) of the inverse-gamma full conditional of one unit variance.

    ``unit_index`` is 0-based. Residuals are taken at the current (beta,
    gamma) and rescaled where flagged, so the update is exactly conjugate:
    shape = m0 + T/2, rate = n0 + sum of squared rescaled residuals / 2.
    """
    rp = priors if isinstance(priors, _ResolvedPriors) else resolve_priors(priors, state.sigma2_ref)
    t = design.n_periods
    rows = slice(unit_index * t, (unit_index + 1) * t)
    y = np.asarray(y, dtype=float).reshape(-1)
    resid = y[rows].copy()
    if design.p_full:
        resid -= design.Z[rows] @ state.beta
    for c in np.nonzero(state.gamma)[0]:
        if design.candidates[c].unit - 1 != unit_index:
            continue
        sl = design.candidate_rows(int(c))
        resid[sl.start - rows.start : sl.stop - rows.start] -= state.gamma[c]
    winv = _row_weights(state.delta_eps, rp.tau_eps)[rows]
    shape = rp.m0 + t / 2.0
    rate = rp.n0[unit_index] + 0.5 * float((resid * resid) @ winv)
    return shape, rate


def update_sigma2(
    unit_index: int,
    state: SamplerState,
    design: SaturatedDesign,
    y: np.ndarray,
    priors: PriorConfig | _ResolvedPriors,
    rng: np.random.Generator,
) -> float:
    """Draw one unit variance from its inverse-gamma full conditional."""
    shape, rate = sigma2_full_conditional(unit_index, state, design, y, priors)
    return rate / rng.gamma(shape)


# ---------------------------------------------------------------------------
# outlier augmentation


def _outlier_log_odds(
    resid: np.ndarray, sigma2_rows: np.ndarray, scale_rows: np.ndarray, eta: float
) -> np.ndarray:
    """Log posterior odds that each residual comes from the heavy component.

    The heavy component is the inverse-moment density with order 1 and
    shape 3 (so its variance, 2 * scale, exists); the light component is
    the unit's Gaussian. A zero residual has zero heavy density, hence
    odds of -inf.
    """
    with np.errstate(divide="ignore", over="ignore"):
        e2 = np.maximum(resid * resid, 1e-300)
        log_heavy = (
            1.5 * np.log(scale_rows)
            - _LGAMMA_3HALF
            - 2.0 * np.log(e2)
            - scale_rows / e2
        )
        log_light = -0.5 * (np.log(2.0 * np.pi * sigma2_rows) + e2 / sigma2_rows)
        logit_eta = math.log(eta) - math.log1p(-eta) if eta > 0 else -np.inf
        out = logit_eta + log_heavy - log_light
        return np.where(resid == 0.0, -np.inf, out)


def update_outliers(
    state: SamplerState,
    design: SaturatedDesign,
    y: np.ndarray,
    priors: PriorConfig | _ResolvedPriors,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Redraw all outlier flags; returns (flags (N, T), row weights (N*T,)).

    Flagged rows contribute residuals rescaled by 1/sqrt(2*tau_eps) to
    every likelihood computation of the rest of the iteration.
    """
    rp = priors if isinstance(priors, _ResolvedPriors) else resolve_priors(priors, state.sigma2_ref)
    n, t = design.n_units, design.n_periods
    if not rp.outliers_enabled or rp.eta == 0.0:
        flags = np.zeros((n, t), dtype=np.uint8)
        return flags, np.ones(n * t)
    y = np.asarray(y, dtype=float).reshape(-1)
    resid = y.copy()
    if design.p_full:
        resid -= design.Z @ state.beta
    if np.any(state.gamma):
        resid -= design.D @ state.gamma
    log_odds = _outlier_log_odds(
        resid,
        np.repeat(state.sigma2, t),
        np.repeat(rp.outlier_scale, t),
        rp.eta,
    )
    prob = expit(log_odds)
    flags = (rng.random(n * t) < prob).astype(np.uint8).reshape(n, t)
    return flags, _row_weights(flags, rp.tau_eps)


# ---------------------------------------------------------------------------
# inclusion-probability hyperparameter


def update_omega(
    state: SamplerState,
    priors: PriorConfig | _ResolvedPriors,
    rng: np.random.Generator,
) -> float:
    """Conjugate Beta draw of omega, or the configured value in fixed mode."""
    hyper = priors.omega_hyper
    if hyper is None:
        return priors.omega
    a, b = hyper
    q = state.delta_gamma.shape[0]
    k = int(state.delta_gamma.sum())
    return float(rng.beta(a + k, b + q - k))


# ---------------------------------------------------------------------------
# spike-vs-slab coordinate update

_GRID_CACHE: dict[int, np.ndarray] = {}


def _grid01(n: int) -> np.ndarray:
    out = _GRID_CACHE.get(n)
    if out is None:
        out = np.linspace(0.0, 1.0, n)
        _GRID_CACHE[n] = out
    return out


class _SlabWork:
    """Reusable buffers for the scalar slab quadrature."""

    __slots__ = ("grid01", "grid", "g2", "u", "t1", "n")

    def __init__(self, n: int):
        self.n = n
        self.grid01 = _grid01(n)
        self.grid = np.empty(n)
        self.g2 = np.empty(n)
        self.u = np.empty(n)
        self.t1 = np.empty(n)


def _spike_slab_step(
    a: float,
    b: float,
    slab_scale: float,
    slab_log_const: float,
    log_prior_odds: float,
    work: _SlabWork,
    rng: np.random.Generator,
) -> tuple[int, float, float, bool]:
    """One Dirac-spike vs slab decision for a scalar coordinate.

    The log likelihood ratio against the spike is a*g - b*g^2/2, so the
    slab marginal is the integral of exp(a*g - b*g^2/2) against the slab
    density, evaluated by trapezoid quadrature on a window covering ten
    likelihood standard deviations around the peak and three prior scale
    units around zero. Returns (flag, draw, log Bayes factor, ok); on
    numerical failure the spike is kept and ok is False. Exactly one
    uniform is consumed for the decision plus one more when the slab wins.
    """
    sd = 1.0 / math.sqrt(b)
    mu = a / b
    prior_half = 3.0 * math.sqrt(slab_scale)
    lo = min(mu - 10.0 * sd, -prior_half)
    hi = max(mu + 10.0 * sd, prior_half)
    h = (hi - lo) / (work.n - 1)

    grid, g2, u, t1 = work.grid, work.g2, work.u, work.t1
    np.multiply(work.grid01, hi - lo, out=grid)
    grid += lo
    np.multiply(grid, grid, out=g2)
    np.maximum(g2, 1e-300, out=g2)
    np.multiply(grid, a, out=u)
    np.multiply(g2, 0.5 * b, out=t1)
    u -= t1
    np.divide(slab_scale, g2, out=t1)
    u -= t1
    m = u.max()
    ok = math.isfinite(m)
    if ok:
        u -= m
        np.exp(u, out=u)
        u /= g2
        total = float(u.sum())
        interior = total - 0.5 * (u[0] + u[-1])
        ok = interior > 0 and math.isfinite(total)
    if not ok:
        rng.random()
        return 0, 0.0, math.nan, False
    log_slab = m + math.log(interior * h) + slab_log_const
    log_odds = log_prior_odds + log_slab
    if log_odds > 36.0:
        p_include = 1.0
    elif log_odds < -36.0:
        p_include = 0.0
    else:
        p_include = 1.0 / (1.0 + math.exp(-log_odds))
    if rng.random() >= p_include:
        return 0, 0.0, log_slab, True
    # midpoint-aligned inverse CDF: node k's mass spreads half left, half
    # right, otherwise every draw shifts low by half a grid cell
    cdf = np.cumsum(u, out=t1)
    cdf -= 0.5 * u
    draw = float(np.interp(rng.random() * total, cdf, grid))
    if draw == 0.0:
        return 0, 0.0, log_slab, True
    return 1, draw, log_slab, True


def update_break(
    candidate_index: int,
    state: SamplerState,
    design: SaturatedDesign,
    y: np.ndarray,
    priors: PriorConfig | _ResolvedPriors,
    rng: np.random.Generator,
    *,
    grid_points: int = 400,
) -> tuple[int, float]:
    """Spike-vs-slab draw for one candidate, all else held at current values.

    Returns the new (inclusion flag, coefficient); the caller applies them
    to the state. The partial residual removes every break contribution
    except this candidate's own.
    """
    rp = priors if isinstance(priors, _ResolvedPriors) else resolve_priors(priors, state.sigma2_ref)
    cand = design.candidates[candidate_index]
    j = cand.unit - 1
    y = np.asarray(y, dtype=float).reshape(-1)
    e = y.copy()
    if design.p_full:
        e -= design.Z @ state.beta
    if np.any(state.gamma):
        e -= design.D @ state.gamma
    sl = design.candidate_rows(candidate_index)
    winv = _row_weights(state.delta_eps, rp.tau_eps)
    r = e[sl] + state.gamma[candidate_index]
    a = float((r * winv[sl]).sum() / state.sigma2[j])
    b = float(winv[sl].sum() / state.sigma2[j])
    omega = state.omega
    log_prior_odds = (
        math.log(omega) - math.log1p(-omega) if omega > 0 else -math.inf
    )
    work = _SlabWork(grid_points)
    with np.errstate(divide="ignore", over="ignore"):
        delta, gamma, _, _ = _spike_slab_step(
            a, b, rp.slab_scale[j], rp.slab_log_const[j], log_prior_odds, work, rng
        )
    return delta, gamma


# ---------------------------------------------------------------------------
# full iteration and chain driver


class _Workspace:
    """Precomputed layout and reusable buffers for one chain."""

    def __init__(self, design: SaturatedDesign, grid_points: int):
        n, t, q = design.n_units, design.n_periods, design.n_candidates
        self.n, self.t, self.q = n, t, q
        self.Z = design.Z
        self.p = design.p_full
        self.cand_unit = np.array([c.unit - 1 for c in design.candidates], dtype=np.intp)
        self.cand_start = np.array([c.start for c in design.candidates], dtype=np.intp)
        self.cand_lo = np.array(
            [(c.unit - 1) * t + c.start - 1 for c in design.candidates], dtype=np.intp
        )
        self.cand_hi = np.array([(c.unit - 1 + 1) * t for c in design.candidates], dtype=np.intp)
        # index of the candidate one period later / earlier in the same unit,
        # -1 where that neighbor is not part of the design
        index = {(c.unit, c.start): i for i, c in enumerate(design.candidates)}
        self.cand_next = np.array(
            [index.get((c.unit, c.start + 1), -1) for c in design.candidates], dtype=np.intp
        )
        self.cand_prev = np.array(
            [index.get((c.unit, c.start - 1), -1) for c in design.candidates], dtype=np.intp
        )
        self.e = np.empty(n * t)
        self.ywork = np.empty(n * t)
        self.zb = np.zeros(n * t)
        self.winv = np.ones(n * t)
        self.wsuf = np.empty(n * t)
        self.slab = _SlabWork(grid_points)


def _subtract_breaks(gamma: np.ndarray, ws: _Workspace, out: np.ndarray) -> None:
    for c in np.nonzero(gamma)[0]:
        out[ws.cand_lo[c] : ws.cand_hi[c]] -= gamma[c]


def _suffix_sums(winv: np.ndarray, n: int, t: int, out: np.ndarray) -> None:
    """Per-unit reverse cumulative sums of the row weights."""
    v = winv.reshape(n, t)
    out.reshape(n, t)[:, :] = np.cumsum(v[:, ::-1], axis=1)[:, ::-1]


def _relocate_breaks(
    state: SamplerState,
    ws: _Workspace,
    e: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """Metropolis move shifting each included break one period left or right.

    Single-site flag updates cannot slide the timing of a large included
    break (excluding it first is astronomically unlikely), so each active
    candidate proposes swapping with its one-period neighbor, carrying its
    coefficient along. The proposal is symmetric and only one observation
    changes fitted coverage, so the acceptance ratio is that cell's
    likelihood ratio; slab density and inclusion-count prior terms cancel.
    Returns the number of accepted moves.
    """
    active = np.nonzero(state.delta_gamma)[0]
    if active.size == 0:
        return 0
    t = ws.t
    accepted = 0
    for c in rng.permutation(active):
        step_right = rng.random() < 0.5
        target = ws.cand_next[c] if step_right else ws.cand_prev[c]
        u = rng.random()
        if target < 0 or state.delta_gamma[target]:
            continue
        g = state.gamma[c]
        j = ws.cand_unit[c]
        s = ws.cand_start[c]
        # moving right uncovers cell (j, s); moving left covers cell (j, s-1)
        idx = j * t + (s - 1 if step_right else s - 2)
        e_new = e[idx] + g if step_right else e[idx] - g
        scale = ws.winv[idx] / state.sigma2[j]
        log_alpha = -0.5 * (e_new * e_new - e[idx] * e[idx]) * scale
        if log_alpha >= 0.0 or u < math.exp(log_alpha):
            e[idx] = e_new
            state.delta_gamma[c] = 0
            state.gamma[c] = 0.0
            state.delta_gamma[target] = 1
            state.gamma[target] = g
            accepted += 1
    return accepted


def gibbs_step(
    state: SamplerState,
    design: SaturatedDesign,
    y: np.ndarray,
    rp: _ResolvedPriors,
    rng: np.random.Generator,
    ws: _Workspace,
) -> tuple[int, int]:
    """One full Gibbs iteration, mutating ``state`` in place.

    Update order: outlier flags (from residuals at the incoming state),
    mean coefficients, a sweep over all candidates in freshly randomized
    order, a timing-relocation pass over the included breaks, unit
    variances, then the inclusion probability. Returns (quadrature
    fallbacks in the sweep, accepted relocation moves).
    """
    n, t, q, p = ws.n, ws.t, ws.q, ws.p
    e = ws.e
    np.copyto(e, y)
    if p:
        np.dot(ws.Z, state.beta, out=ws.zb)
        e -= ws.zb
    _subtract_breaks(state.gamma, ws, e)

    # outlier flags and row weights
    if rp.outliers_enabled and rp.eta > 0:
        log_odds = _outlier_log_odds(
            e, np.repeat(state.sigma2, t), np.repeat(rp.outlier_scale, t), rp.eta
        )
        prob = expit(log_odds)
        flags = rng.random(n * t) < prob
        state.delta_eps[:, :] = flags.astype(np.uint8).reshape(n, t)
        ws.winv[:] = np.where(flags, 1.0 / (2.0 * rp.tau_eps), 1.0)
    else:
        state.delta_eps[:, :] = 0
        ws.winv[:] = 1.0
    _suffix_sums(ws.winv, n, t, ws.wsuf)

    # mean coefficients
    if p:
        np.add(e, ws.zb, out=ws.ywork)
        mean, precision = beta_full_conditional(state, design, ws.ywork, rp)
        state.beta[:] = _draw_gaussian_from_precision(mean, precision, rng)
        np.dot(ws.Z, state.beta, out=ws.zb)
        np.subtract(ws.ywork, ws.zb, out=e)

    # candidate sweep in random order
    omega = state.omega
    log_prior_odds = math.log(omega) - math.log1p(-omega) if omega > 0 else -math.inf
    gamma, dg = state.gamma, state.delta_gamma
    sig2 = state.sigma2
    winv, wsuf = ws.winv, ws.wsuf
    cand_unit, cand_lo, cand_hi = ws.cand_unit, ws.cand_lo, ws.cand_hi
    slab_scale, slab_logc = rp.slab_scale, rp.slab_log_const
    fallbacks = 0
    order = rng.permutation(q)
    with np.errstate(divide="ignore", over="ignore"):
        for c in order:
            j = cand_unit[c]
            lo, hi = cand_lo[c], cand_hi[c]
            esl = e[lo:hi]
            g_old = gamma[c]
            s2 = sig2[j]
            wc = wsuf[lo]
            a = (float(esl @ winv[lo:hi]) + g_old * wc) / s2
            b = wc / s2
            delta, g_new, _, ok = _spike_slab_step(
                a, b, slab_scale[j], slab_logc[j], log_prior_odds, ws.slab, rng
            )
            if not ok:
                fallbacks += 1
            if g_new != g_old:
                esl += g_old - g_new
            gamma[c] = g_new
            dg[c] = delta

    # timing moves for the included breaks
    relocations = _relocate_breaks(state, ws, e, rng)

    # unit variances (slab scale is fixed, so this stays conjugate)
    half_t = t / 2.0
    for j in range(n):
        esl = e[j * t : (j + 1) * t]
        ssr_w = float((esl * esl) @ winv[j * t : (j + 1) * t])
        rate = rp.n0[j] + 0.5 * ssr_w
        sig2[j] = rate / rng.gamma(rp.m0 + half_t)

    # inclusion probability
    if rp.omega_hyper is not None:
        a_w, b_w = rp.omega_hyper
        k = int(dg.sum())
        state.omega = float(rng.beta(a_w + k, b_w + q - k))

    return fallbacks, relocations


def run_chain(
    panel: PanelData,
    priors: PriorConfig,
    cfg: SamplerConfig,
    *,
    candidate_subset=None,
) -> PosteriorDraws:
    """Run the full Gibbs sampler on a panel and record post-burn-in draws.

    The chain starts at the null model: no breaks, mean coefficients from
    the no-break least-squares fit, unit variances at their empirical-Bayes
    references. Identical (seed, inputs) give bitwise-identical draws.
    ``candidate_subset`` optionally restricts the step columns (indices or
    BreakCandidate objects), which is mainly useful for exact small-model
    validation.
    """
    design = build_design(panel)
    if candidate_subset is not None:
        design = restrict_candidates(design, candidate_subset)
    y = panel.y.reshape(-1)
    eb = empirical_bayes_init(design, y)
    rp = resolve_priors(priors, eb.sigma2_ref)
    n, t, q, p = design.n_units, design.n_periods, design.n_candidates, design.p_full

    rng = np.random.default_rng(cfg.seed)
    state = SamplerState(
        beta=eb.beta0.copy(),
        gamma=np.zeros(q),
        delta_gamma=np.zeros(q, dtype=np.uint8),
        sigma2=eb.sigma2_ref.copy(),
        delta_eps=np.zeros((n, t), dtype=np.uint8),
        omega=(
            priors.omega
            if priors.omega_hyper is None
            else priors.omega_hyper[0] / sum(priors.omega_hyper)
        ),
        sigma2_ref=eb.sigma2_ref,
    )
    ws = _Workspace(design, cfg.grid_points)

    n_records = cfg.n_draw // cfg.thin
    out = PosteriorDraws(
        beta=np.empty((n_records, p)),
        gamma=np.empty((n_records, q)),
        delta_gamma=np.empty((n_records, q), dtype=np.uint8),
        sigma2=np.empty((n_records, n)),
        delta_eps=np.empty((n_records, n, t), dtype=np.uint8),
        omega=np.empty(n_records),
        counters={"slab_fallbacks": 0, "relocation_accepts": 0},
        candidates=list(design.candidates),
        units=list(design.units),
        times=list(design.times),
        prior=replace(priors),
        sampler=replace(cfg),
    )

    rec = 0
    for it in range(cfg.n_burn + cfg.n_draw):
        fallbacks, relocations = gibbs_step(state, design, y, rp, rng, ws)
        out.counters["slab_fallbacks"] += fallbacks
        out.counters["relocation_accepts"] += relocations
        if not (
            math.isfinite(float(state.sigma2.sum()))
            and math.isfinite(float(state.beta.sum()) if p else 0.0)
            and math.isfinite(state.omega)
        ):
            raise RuntimeError(f"non-finite sampler state at iteration {it}")
        k = it - cfg.n_burn + 1
        if k >= 1 and k % cfg.thin == 0:
            out.beta[rec] = state.beta
            out.gamma[rec] = state.gamma
            out.delta_gamma[rec] = state.delta_gamma
            out.sigma2[rec] = state.sigma2
            out.delta_eps[rec] = state.delta_eps
            out.omega[rec] = state.omega
            rec += 1
    return out
