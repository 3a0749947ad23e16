import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelloop.calibration import fit_isotonic, fitted_values


def best_monotone_grid_error(scores, labels, step=0.01):
    """Oracle: exact best squared error over non-decreasing fits whose values
    live on a fixed grid. Ties in score are grouped (a monotone *function* of
    the score must give them one value); DP over (group, grid value).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    order = np.argsort(scores, kind="stable")
    uniq, inverse = np.unique(scores[order], return_inverse=True)
    weights = np.bincount(inverse).astype(float)
    sums = np.bincount(inverse, weights=labels[order])
    means = sums / weights
    sq = np.bincount(inverse, weights=labels[order] ** 2)
    const = float((sq - weights * means**2).sum())  # within-group variance

    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
    best = np.zeros(len(grid))
    for mean, weight in zip(means, weights):
        cost = weight * (grid - mean) ** 2
        best = np.minimum.accumulate(best + cost)
    return float(best.min()) + const


def pav_squared_error(scores, labels):
    fitted = fitted_values(scores, labels)
    return float(((fitted - np.asarray(labels, dtype=float)) ** 2).sum())


def test_worked_example():
    scores = [0.1, 0.3, 0.4, 0.6]
    labels = [0, 1, 0, 1]
    np.testing.assert_allclose(fitted_values(scores, labels), [0.0, 0.5, 0.5, 1.0])
    # and PAV is no worse than the exhaustive grid fit
    assert pav_squared_error(scores, labels) <= best_monotone_grid_error(scores, labels) + 1e-6


def test_monotone_labels_reproduced():
    scores = [0.1, 0.2, 0.7, 0.9]
    labels = [0, 0, 1, 1]
    np.testing.assert_allclose(fitted_values(scores, labels), labels)


def test_values_clipped_to_label_range():
    rng = np.random.default_rng(3)
    scores = rng.uniform(size=40)
    labels = rng.integers(0, 2, size=40)
    fitted = fitted_values(scores, labels)
    assert fitted.min() >= 0.0 and fitted.max() <= 1.0


def test_score_ties_preaveraged():
    fitted = fitted_values([0.5, 0.5], [0, 1])
    np.testing.assert_allclose(fitted, [0.5, 0.5])


def test_single_class_constant_map():
    cal = fit_isotonic([0.2, 0.9, 0.4], [1, 1, 1])
    assert cal.apply(0.0) == 1.0 and cal.apply(1.0) == 1.0
    cal = fit_isotonic([0.2, 0.9], [0, 0])
    assert cal.apply(0.5) == 0.0


def test_needs_two_points():
    with pytest.raises(ValueError):
        fit_isotonic([0.5], [1])


def test_step_function_right_continuous():
    cal = fit_isotonic([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert cal.apply(0.8) == 1.0  # jumps exactly at the breakpoint
    assert cal.apply(0.79999) == 0.0
    assert cal.apply(0.0) == 0.0  # below the first breakpoint: first value
    assert cal.apply(1.0) == 1.0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(0, 1, allow_nan=False), st.integers(0, 1)),
        min_size=2,
        max_size=6,
    )
)
def test_pav_matches_or_beats_grid_oracle(points):
    scores = [s for s, _ in points]
    labels = [y for _, y in points]
    fitted = fitted_values(scores, labels)
    assert np.all(np.diff(fitted[np.argsort(scores, kind="stable")]) >= -1e-12)
    assert pav_squared_error(scores, labels) <= best_monotone_grid_error(scores, labels) + 1e-6
