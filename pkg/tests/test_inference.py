import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bisam.inference import (
    build_report,
    compute_pips,
    fitted_mean_path,
    select_breaks,
    summarize_breaks,
    window_break_prob,
)
from bisam.panel import BreakCandidate, PanelData, build_design
from bisam.sampler import PosteriorDraws, PriorConfig, SamplerConfig, run_chain


def synthetic_draws(delta, gamma=None, n=2, t=8, beta=None, sigma2=None, eps=None):
    """Wrap handmade delta/gamma matrices into a PosteriorDraws object."""
    delta = np.asarray(delta, dtype=np.uint8)
    r, q = delta.shape
    candidates = [BreakCandidate(u + 1, s) for u in range(n) for s in range(3, t)][:q]
    assert len(candidates) == q
    gamma = np.zeros((r, q)) if gamma is None else np.asarray(gamma, dtype=float)
    return PosteriorDraws(
        beta=np.zeros((r, 0)) if beta is None else beta,
        gamma=gamma,
        delta_gamma=delta,
        sigma2=np.ones((r, n)) if sigma2 is None else sigma2,
        delta_eps=np.zeros((r, n, t), dtype=np.uint8) if eps is None else eps,
        omega=np.full(r, 0.1),
        counters={},
        candidates=candidates,
        units=list(range(1, n + 1)),
        times=list(range(1, t + 1)),
        prior=PriorConfig(),
        sampler=SamplerConfig(n_burn=1, n_draw=max(r, 1), seed=0),
    )


def test_pips_basic():
    delta = np.zeros((4, 3), dtype=np.uint8)
    delta[:, 0] = 1
    delta[:2, 1] = 1
    draws = synthetic_draws(delta, n=1, t=6)
    pips = compute_pips(draws)
    assert np.allclose(pips, [1.0, 0.5, 0.0])


def test_pips_empty_error():
    draws = synthetic_draws(np.zeros((0, 3), dtype=np.uint8), n=1, t=6)
    with pytest.raises(ValueError, match="no posterior sample"):
        compute_pips(draws)


def test_select_breaks_threshold_rules():
    cands = [BreakCandidate(1, 3), BreakCandidate(1, 4)]
    pips = np.array([0.49, 0.51])
    assert select_breaks(pips, cands, 0.5) == [cands[1]]
    assert select_breaks(pips, cands, 0.5, strict=True) == [cands[1]]
    # inclusive rule keeps an exact tie, strict drops it
    pips = np.array([0.5, 0.2])
    assert select_breaks(pips, cands, 0.5) == [cands[0]]
    assert select_breaks(pips, cands, 0.5, strict=True) == []


def test_select_breaks_sorted_and_order_invariant():
    cands = [BreakCandidate(2, 5), BreakCandidate(1, 4), BreakCandidate(1, 3)]
    pips = np.array([0.9, 0.8, 0.7])
    out = select_breaks(pips, cands, 0.5)
    assert out == sorted(out)
    perm = [2, 0, 1]
    out2 = select_breaks(pips[perm], [cands[i] for i in perm], 0.5)
    assert out2 == out


def test_window_prob_width_one_equals_pip():
    delta = np.zeros((10, 5), dtype=np.uint8)
    delta[:3, 0] = 1
    draws = synthetic_draws(delta, n=1, t=8)
    assert window_break_prob(draws, 1, 3, 1) == pytest.approx(0.3)


def test_window_prob_joint_events():
    # mutually exclusive inclusions: probabilities add
    delta = np.zeros((10, 5), dtype=np.uint8)
    delta[:3, 0] = 1
    delta[3:7, 1] = 1
    draws = synthetic_draws(delta, n=1, t=8)
    assert window_break_prob(draws, 1, 3, 2) == pytest.approx(0.7)
    # perfectly coincident inclusions: probability does not double count
    delta = np.zeros((10, 5), dtype=np.uint8)
    delta[:4, 0] = 1
    delta[:4, 1] = 1
    draws = synthetic_draws(delta, n=1, t=8)
    assert window_break_prob(draws, 1, 3, 2) == pytest.approx(0.4)


def test_window_prob_invalid():
    draws = synthetic_draws(np.zeros((5, 5), dtype=np.uint8), n=1, t=8)
    with pytest.raises(ValueError, match="invalid window"):
        window_break_prob(draws, 1, 2, 1)
    with pytest.raises(ValueError, match="invalid window"):
        window_break_prob(draws, 1, 6, 3)  # start+width-1 = 8 > T-1


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_window_prob_bounds_property(data):
    r, q = 40, 5
    delta = data.draw(
        st.lists(st.lists(st.integers(0, 1), min_size=q, max_size=q),
                 min_size=r, max_size=r)
    )
    draws = synthetic_draws(np.array(delta, dtype=np.uint8), n=1, t=8)
    pips = compute_pips(draws)
    for start in (3, 4, 5):
        for width in (1, 2, 3):
            if start + width - 1 > 7:
                continue
            p = window_break_prob(draws, 1, start, width)
            subs = [pips[start - 3 + k] for k in range(width)]
            assert p >= max(subs) - 1e-12
            assert p <= min(1.0, sum(subs)) + 1e-12
            if width > 1:
                assert p >= window_break_prob(draws, 1, start, width - 1) - 1e-12


def test_summaries_constant_draws():
    delta = np.ones((6, 2), dtype=np.uint8)
    gamma = np.full((6, 2), 2.0)
    draws = synthetic_draws(delta, gamma, n=1, t=6)
    out = summarize_breaks(draws, [draws.candidates[0]])
    s = out[0]
    assert (s.mean, s.median, s.lo90, s.hi90) == (2.0, 2.0, 2.0, 2.0)
    assert not s.no_conditional_draws


def test_summaries_never_included():
    delta = np.zeros((6, 2), dtype=np.uint8)
    draws = synthetic_draws(delta, n=1, t=6)
    out = summarize_breaks(draws, [draws.candidates[1]])
    assert out[0].no_conditional_draws
    assert out[0].mean is None


def test_summarize_requires_selection():
    draws = synthetic_draws(np.zeros((6, 2), dtype=np.uint8), n=1, t=6)
    with pytest.raises(ValueError, match="empty"):
        summarize_breaks(draws, [])


def test_conditional_size_recovery_at_strong_signal():
    """Strong breaks are recovered with intervals excluding zero and
    conditional means unbiased in aggregate (individual estimates carry the
    usual least-squares spread, which grows as the panel shrinks)."""
    from bisam.simlab import SimDesign, generate

    deviations = []
    for seed in range(4):
        panel, truth = generate(
            SimDesign(layout="sparse", break_size=6.0, seed=900 + seed), 0
        )
        cfg = SamplerConfig(n_burn=400, n_draw=1000, seed=seed, grid_points=160)
        draws = run_chain(panel, PriorConfig(outliers_enabled=False), cfg)
        sel = select_breaks(compute_pips(draws), draws.candidates, 0.5)
        assert set(truth) <= set(sel)
        summaries = summarize_breaks(draws, truth)
        assert all(s.lo90 > 0 for s in summaries)
        deviations += [s.mean - 6.0 for s in summaries]
    assert abs(np.mean(deviations)) < 0.3
    assert max(abs(d) for d in deviations) < 2.0


def test_report_and_fitted_path_end_to_end():
    rng = np.random.default_rng(3)
    t = 16
    y = rng.standard_normal((3, t)) * 0.5
    y[1, 7:] += 6.0
    panel = PanelData(units=["a", "b", "c"], times=list(range(1, t + 1)), y=y)
    prior = PriorConfig(omega=0.02, outliers_enabled=False)
    cfg = SamplerConfig(n_burn=300, n_draw=600, seed=2, grid_points=160)
    draws = run_chain(panel, prior, cfg)
    design = build_design(panel)
    report = build_report(draws, design, 0.5)
    assert BreakCandidate(2, 8) in report.selected
    # fitted path tracks the level shift
    fit = fitted_mean_path(draws, design)
    assert fit.shape == (3, t)
    assert fit[1, 8:].mean() - fit[1, :6].mean() == pytest.approx(6.0, abs=0.7)
    # window probabilities monotone in width where defined
    w = report.window_prob
    defined = ~np.isnan(w[:, 1])
    assert np.all(w[defined, 1] >= w[defined, 0] - 1e-12)
    # conditional interval for the selected break excludes zero
    summ = {s.candidate: s for s in report.gamma_summary}
    s = summ[BreakCandidate(2, 8)]
    assert s.lo90 > 0 or s.hi90 < 0
    assert report.outlier_prob.shape == (3, t)
