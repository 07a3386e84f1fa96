import itertools

import numpy as np
import pytest

from dodgekit.logic.intrinsic_dim import (
    IntrinsicDimError,
    IntrinsicDimReport,
    Recommendation,
    correlation_sum,
    intrinsic_dimension,
    mean_dimension_by_group,
    minmax_normalize,
    moving_average,
    recommend,
)
from dodgekit.logic.synthetic import embedded_segment, redundant_classification, uniform_cube


def brute_force_sum(rows: np.ndarray, r: float) -> float:
    pairs = list(itertools.combinations(range(len(rows)), 2))
    close = sum(np.abs(rows[i] - rows[j]).sum() < r for i, j in pairs)
    return close / len(pairs)


class TestCorrelationSum:
    """Tests for the pair-counting correlation sum."""

    def test_two_points_wide_radius(self):
        assert correlation_sum(np.array([[0.0], [1.0]]), 2.0) == 1.0

    def test_two_points_narrow_radius(self):
        assert correlation_sum(np.array([[0.0], [1.0]]), 0.5) == 0.0

    def test_three_points(self):
        assert correlation_sum(np.array([[0.0], [1.0], [2.0]]), 1.5) == pytest.approx(2 / 3)

    def test_distance_equal_to_radius_excluded(self):
        assert correlation_sum(np.array([[0.0], [1.0]]), 1.0) == 0.0

    @pytest.mark.parametrize("r", [0.1, 0.4, 0.9, 1.7])
    def test_matches_brute_force(self, r):
        rows = np.random.default_rng(12).uniform(size=(40, 3))

        assert correlation_sum(rows, r) == pytest.approx(brute_force_sum(rows, r))

    def test_matches_brute_force_on_many_sets(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            rows = rng.uniform(size=(int(rng.integers(2, 51)), int(rng.integers(1, 6))))
            r = float(rng.uniform(0.05, 2.0))

            assert correlation_sum(rows, r) == pytest.approx(brute_force_sum(rows, r), abs=1e-12)

    def test_bad_radius(self):
        with pytest.raises(IntrinsicDimError, match="radius"):
            correlation_sum(np.array([[0.0], [1.0]]), 0.0)

    def test_needs_two_rows(self):
        with pytest.raises(IntrinsicDimError, match=">= 2 rows"):
            correlation_sum(np.array([[0.0]]), 1.0)


class TestHelpers:
    """Tests for normalization and smoothing helpers."""

    def test_minmax_normalize_constant_column(self):
        rows = np.array([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]])

        np.testing.assert_allclose(minmax_normalize(rows), [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])

    def test_moving_average(self):
        np.testing.assert_allclose(moving_average(np.array([1.0, 2.0, 3.0, 4.0]), 3), [2.0, 3.0])

    def test_moving_average_short_sequence(self):
        np.testing.assert_allclose(moving_average(np.array([1.0, 3.0]), 3), [2.0])

    @pytest.mark.parametrize("dimension,expected", [
        (1.0, Recommendation.RECOMMENDED),
        (4.0, Recommendation.RECOMMENDED),
        (6.0, Recommendation.INCONCLUSIVE),
        (8.0, Recommendation.INCONCLUSIVE),
        (10.3, Recommendation.NOT_RECOMMENDED),
    ])
    def test_recommend_bands(self, dimension, expected):
        assert recommend(dimension) is expected

    def test_recommendation_messages(self):
        assert Recommendation.RECOMMENDED.message == "simple optimizer (DODGE) recommended"
        assert Recommendation.NOT_RECOMMENDED.message == "simple optimizer not recommended"
        assert Recommendation.INCONCLUSIVE.message == "inconclusive"

    def test_group_means(self):
        means = mean_dimension_by_group({"se": [2.0, 4.0], "other": [9.0]})

        assert means == {"se": 3.0, "other": 9.0}

    def test_empty_group(self):
        with pytest.raises(IntrinsicDimError, match="no estimates"):
            mean_dimension_by_group({"se": []})


class TestIntrinsicDimension:
    """Tests for the correlation-dimension estimate."""

    def test_segment_in_many_columns_is_one_dimensional(self):
        report = intrinsic_dimension(embedded_segment(500, 10, seed=0))

        assert 0.5 <= report.dimension <= 2.0
        assert recommend(report.dimension) is Recommendation.RECOMMENDED

    def test_identical_rows_are_degenerate(self):
        report = intrinsic_dimension(np.ones((20, 4)))

        assert report.degenerate is True
        assert report.dimension == 0.0

    def test_too_few_rows(self):
        with pytest.raises(IntrinsicDimError):
            intrinsic_dimension(np.zeros((1, 3)))

    def test_bad_steps(self):
        with pytest.raises(IntrinsicDimError, match="steps"):
            intrinsic_dimension(uniform_cube(50, 2, seed=0), steps=1)

    def test_subsample_cap(self):
        report = intrinsic_dimension(uniform_cube(300, 2, seed=1), subsample_cap=100)

        assert report.n_used == 100
        assert report.n_rows == 300

    def test_deterministic(self):
        rows = uniform_cube(400, 3, seed=2)

        a = intrinsic_dimension(rows, subsample_cap=200, seed=5)
        b = intrinsic_dimension(rows, subsample_cap=200, seed=5)

        assert a == b

    def test_accepts_dataset(self):
        data = redundant_classification(n_rows=200, n_informative=2, n_copies=6, seed=0)

        report = intrinsic_dimension(data)

        assert report.n_rows == 200
        assert report.dimension > 0.0

    def test_report_shape(self):
        report = intrinsic_dimension(uniform_cube(200, 2, seed=3), steps=12)

        assert len(report.radii) == 12
        assert len(report.loglog_table()) == sum(report.used)
        assert len(report.raw_slopes) == sum(report.used) - 1
        assert IntrinsicDimReport.from_dict(report.to_dict()) == report

    def test_radii_increase(self):
        report = intrinsic_dimension(uniform_cube(200, 3, seed=4))

        assert all(a < b for a, b in zip(report.radii, report.radii[1:]))
        assert all(a <= b for a, b in zip(report.corr_sums, report.corr_sums[1:]))

    @pytest.mark.parametrize("seed", range(5))
    def test_duplicated_column_keeps_estimate(self, seed):
        rows = uniform_cube(5000, 3, seed=seed)
        doubled = np.hstack([rows, rows[:, :1]])

        plain = intrinsic_dimension(rows)
        copied = intrinsic_dimension(doubled)

        assert abs(copied.dimension - plain.dimension) < 0.5

    def test_sparse_radii_left_out(self):
        report = intrinsic_dimension(uniform_cube(1000, 3, seed=8))

        counts = np.rint(np.array(report.corr_sums) * (1000 * 999 // 2))
        assert all(used == (count >= 100) for used, count in zip(report.used, counts))

    def test_pair_floor_shrinks_on_small_data(self):
        report = intrinsic_dimension(uniform_cube(12, 2, seed=9))

        assert sum(report.used) >= 2
        assert not report.degenerate

    @pytest.mark.slow
    @pytest.mark.parametrize("columns,lo,hi", [(5, 4.3, 7.5), (10, 8.0, 13.0), (20, 13.0, 19.0)])
    def test_uniform_calibration(self, columns, lo, hi):
        report = intrinsic_dimension(uniform_cube(10000, columns, seed=0), subsample_cap=1000)

        assert lo <= report.dimension <= hi
