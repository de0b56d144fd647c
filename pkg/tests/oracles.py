"""Independent oracles used by the test suite.

Everything here deliberately avoids the package's own quadrature and
sampling shortcuts: marginal likelihoods come from scipy adaptive
quadrature over explicit densities, and model posteriors from exhaustive
enumeration. These stay independent of the code paths they check.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from bisam.imom import IMomParams, imom_log_density


def sigma2_integrated_loglik(yvec: np.ndarray, mu: np.ndarray, m0: float, n0: float) -> float:
    """Log marginal of a Gaussian sample with inverse-gamma variance prior."""
    ssr = float(((yvec - mu) ** 2).sum())
    t = yvec.size
    return float(
        m0 * math.log(n0)
        + gammaln(m0 + t / 2.0)
        - gammaln(m0)
        - (t / 2.0) * math.log(2.0 * math.pi)
        - (m0 + t / 2.0) * math.log(n0 + ssr / 2.0)
    )


def slab_log_marginal_quad(a: float, b: float, scale: float) -> float:
    """log integral of exp(a*g - b*g^2/2) iMOM(g; order=shape=1, scale).

    Computed in a shifted log scale with scipy adaptive quadrature; used to
    cross-check the sampler's trapezoid slab marginal.
    """
    params = IMomParams(scale=scale)
    peak = a * a / (2.0 * b)

    def f(g: float) -> float:
        lg = a * g - 0.5 * b * g * g - peak + imom_log_density(g, params)
        return math.exp(lg) if lg > -700.0 else 0.0

    mu, sd = a / b, b**-0.5
    half = 3.0 * math.sqrt(scale)
    pts = sorted({0.0, mu - 8.0 * sd, mu + 8.0 * sd, -half, half})
    val, _ = integrate.quad(f, min(pts) - 12.0 * sd, max(pts) + 12.0 * sd, points=pts, limit=400)
    return math.log(val) + peak


def _model_log_marginal(
    y_unit: np.ndarray,
    step_cols: list[np.ndarray],
    support: tuple[int, ...],
    slab_scale: float,
    m0: float,
    n0: float,
    grid_half_width: float = 40.0,
    grid_points: int = 4001,
) -> float:
    """Marginal likelihood of one inclusion pattern by brute-force quadrature."""
    params = IMomParams(scale=slab_scale)
    active = [step_cols[i] for i, flag in enumerate(support) if flag]
    if not active:
        return sigma2_integrated_loglik(y_unit, np.zeros_like(y_unit), m0, n0)
    g = np.linspace(-grid_half_width, grid_half_width, grid_points)
    dg = g[1] - g[0]
    log_dens = imom_log_density(g, params)
    if len(active) == 1:
        vals = np.array(
            [sigma2_integrated_loglik(y_unit, gg * active[0], m0, n0) for gg in g]
        )
        tot = vals + log_dens
        m = tot.max()
        return float(m + math.log(np.exp(tot - m).sum() * dg))
    if len(active) == 2:
        g2 = np.linspace(-grid_half_width, grid_half_width, 1201)
        dg2 = g2[1] - g2[0]
        ld2 = imom_log_density(g2, params)
        vals = np.empty((g2.size, g2.size))
        for i, aa in enumerate(g2):
            mu = aa * active[0]
            for j, bb in enumerate(g2):
                vals[i, j] = sigma2_integrated_loglik(y_unit, mu + bb * active[1], m0, n0)
        tot = vals + ld2[:, None] + ld2[None, :]
        m = tot.max()
        return float(m + math.log(np.exp(tot - m).sum() * dg2 * dg2))
    raise ValueError("enumeration oracle handles at most two candidates")


def enumerate_pips(
    y_unit: np.ndarray,
    step_cols: list[np.ndarray],
    slab_scale: float,
    m0: float,
    n0: float,
    omega: float,
) -> np.ndarray:
    """Exact PIPs for up to two candidates by model enumeration.

    All candidates must live in the same unit whose data is ``y_unit``;
    other units' likelihood factors cancel across models.
    """
    k = len(step_cols)
    assert k in (1, 2)
    patterns = [(0,), (1,)] if k == 1 else [(0, 0), (1, 0), (0, 1), (1, 1)]
    logpost = {}
    for pat in patterns:
        lm = _model_log_marginal(y_unit, step_cols, pat, slab_scale, m0, n0)
        lp = sum(pat) * math.log(omega) + (k - sum(pat)) * math.log(1.0 - omega)
        logpost[pat] = lm + lp
    mx = max(logpost.values())
    wts = {p: math.exp(v - mx) for p, v in logpost.items()}
    z = sum(wts.values())
    return np.array(
        [sum(w for p, w in wts.items() if p[i]) / z for i in range(k)]
    )
