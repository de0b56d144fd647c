import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bisam.panel import BreakCandidate, PanelData, build_design, restrict_candidates


def make_panel(n, t, rng=None, **flags):
    rng = rng or np.random.default_rng(0)
    return PanelData(
        units=list(range(1, n + 1)),
        times=list(range(1, t + 1)),
        y=rng.standard_normal((n, t)),
        **flags,
    )


def test_candidate_count_small():
    design = build_design(make_panel(3, 5))
    assert design.n_candidates == 3 * (5 - 3) == 6
    assert [(c.unit, c.start) for c in design.candidates] == [
        (1, 3), (1, 4), (2, 3), (2, 4), (3, 3), (3, 4),
    ]


def test_candidate_count_paper_design():
    design = build_design(make_panel(10, 30))
    assert design.n_candidates == 270


def test_step_column_pattern():
    design = build_design(make_panel(3, 5))
    col = design.D[:, 0].reshape(3, 5)
    expected = np.zeros((3, 5))
    expected[0, 2:] = 1.0
    assert np.array_equal(col, expected)
    # every column has T - s + 1 ones, confined to its unit block
    for c, cand in enumerate(design.candidates):
        col = design.D[:, c].reshape(3, 5)
        assert col.sum() == 5 - cand.start + 1
        for other in range(3):
            if other != cand.unit - 1:
                assert not col[other].any()


def test_row_order_unit_major():
    design = build_design(make_panel(2, 5))
    assert design.row_index[:5] == [(1, 1), (1, 2), (1, 3), (1, 4), (1, 5)]
    assert design.row_index[5] == (2, 1)


def test_mean_block_reference_coding():
    design = build_design(make_panel(4, 6))
    # intercept + (N-1) unit dummies + (T-1) time dummies
    assert design.p_full == 1 + 3 + 5
    assert np.linalg.matrix_rank(design.Z) == design.p_full


def test_degenerate_horizon():
    with pytest.raises(ValueError, match="degenerate horizon"):
        make_panel(3, 4)


def test_too_few_units():
    with pytest.raises(ValueError, match="at least 2 units"):
        make_panel(1, 8)


def test_unbalanced_cells_rejected():
    y = np.ones((2, 6))
    y[0, 3] = np.nan
    with pytest.raises(ValueError, match="balanced"):
        PanelData(units=[1, 2], times=list(range(6)), y=y)


def test_time_order_enforced():
    with pytest.raises(ValueError, match="strictly increasing"):
        PanelData(units=[1, 2], times=[1, 3, 2, 4, 5], y=np.ones((2, 5)))


def test_collinear_mean_design():
    # constant covariate duplicates the intercept
    panel = make_panel(3, 6, include_unit_fe=False, include_time_fe=False)
    panel.X = np.ones((3, 6, 1))
    with pytest.raises(ValueError, match="collinear mean design"):
        build_design(panel)


def test_empty_mean_block():
    panel = make_panel(2, 6, include_unit_fe=False, include_time_fe=False,
                       include_intercept=False)
    design = build_design(panel)
    assert design.p_full == 0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 6), t=st.integers(5, 12))
def test_unit_restriction_property(n, t):
    design = build_design(make_panel(n, t))
    for c, cand in enumerate(design.candidates):
        col = design.D[:, c].reshape(n, t)
        others = np.delete(np.arange(n), cand.unit - 1)
        assert not col[others].any()


def test_least_squares_recovery_machine_precision():
    rng = np.random.default_rng(11)
    panel = make_panel(4, 8, rng=rng)
    design = build_design(panel)
    true_beta = rng.standard_normal(design.p_full)
    support = [2, 11]
    true_gamma = np.array([1.5, -2.0])
    y = design.Z @ true_beta + design.D[:, support] @ true_gamma
    M = np.hstack([design.Z, design.D[:, support]])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    assert np.allclose(coef[: design.p_full], true_beta, atol=1e-9)
    assert np.allclose(coef[design.p_full :], true_gamma, atol=1e-9)


def test_candidates_independent_of_mean_block():
    design = build_design(make_panel(3, 7))
    for c in range(design.n_candidates):
        M = np.column_stack([design.Z, design.D[:, c]])
        assert np.linalg.matrix_rank(M) == design.p_full + 1


def test_excluded_starts_would_be_collinear():
    """Starts 1, 2 and T are excluded: a start-1 step is the unit effect, a
    start-2 step only adds a single-observation impulse on top of it, and a
    start-T step is itself a single impulse."""
    n, t = 3, 6
    design = build_design(make_panel(n, t))
    Z = design.Z

    def step(unit, start):
        col = np.zeros(n * t)
        col[(unit - 1) * t + start - 1 : unit * t] = 1.0
        return col

    # s = 1: already in the span of the mean block
    s1 = step(2, 1)
    assert np.linalg.matrix_rank(np.column_stack([Z, s1])) == np.linalg.matrix_rank(Z)

    # s = 2: together with the mean block it spans the (unit, 1) impulse
    s2 = step(2, 2)
    impulse = np.zeros(n * t)
    impulse[(2 - 1) * t] = 1.0
    base = np.column_stack([Z, s2])
    assert np.linalg.matrix_rank(np.column_stack([base, impulse])) == np.linalg.matrix_rank(base)

    # s = T: a single-observation impulse, not a step
    sT = step(2, t)
    assert sT.sum() == 1


def test_restrict_candidates():
    design = build_design(make_panel(3, 6))
    sub = restrict_candidates(design, [4, 1])
    assert sub.n_candidates == 2
    assert sub.candidates == [design.candidates[1], design.candidates[4]]
    assert np.array_equal(sub.D[:, 0], design.D[:, 1])
    by_obj = restrict_candidates(design, [BreakCandidate(2, 3)])
    assert by_obj.candidates == [BreakCandidate(2, 3)]
    with pytest.raises(ValueError, match="nonempty"):
        restrict_candidates(design, [])
    with pytest.raises(ValueError, match="unknown candidate"):
        restrict_candidates(design, [BreakCandidate(9, 3)])
