import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from ac_forecast.ensemble.ensemble import ForecastEnsemble, TimeSeries
from ac_forecast.ensemble.weights import build_weight_schedule
from ac_forecast.errors import (
    AcForecastError,
    DimensionMismatchError,
    EnsembleIndexError,
    StabilityUndefinedError,
    WeightScheduleError,
)
from ac_forecast.metrics.scores import (
    ScoreConfig,
    ac_score,
    accuracy_score,
    crps_empirical,
    energy_distance_empirical,
    energy_score_empirical,
    expected_ac_score,
    gaussian_crps,
    stability_score,
    stability_subweights,
)


class TestEnergyScore:
    """Test cases for energy_score_empirical."""

    def test_identity_forecast(self):
        """Test a point forecast equal to the outcome scores zero."""
        assert energy_score_empirical([[1.0, 2.0]], [1.0, 2.0], [0.5, 0.5]) == 0.0

    def test_point_forecast(self):
        """Test the weighted distance of a single path."""
        score = energy_score_empirical([[3.0, 1.0]], [1.0, 1.0], [0.5, 0.5])
        assert score == pytest.approx(math.sqrt(2.0), abs=1e-15)

    def test_two_samples(self):
        """Test the spread term cancels the misfit for symmetric samples."""
        assert energy_score_empirical([[1.0], [3.0]], [2.0], [1.0]) == pytest.approx(0.0, abs=1e-15)

    def test_permutation_invariance(self):
        """Test reordering samples does not change the score."""
        rng = np.random.default_rng(3)
        samples = rng.normal(size=(6, 4))
        actuals = rng.normal(size=4)
        weights = build_weight_schedule("hyperbolic", 4, beta=1.0)
        base = energy_score_empirical(samples, actuals, weights)
        shuffled = energy_score_empirical(samples[rng.permutation(6)], actuals, weights)
        assert shuffled == pytest.approx(base, abs=1e-12)

    def test_dimension_mismatch(self):
        """Test inconsistent shapes are rejected."""
        with pytest.raises(DimensionMismatchError):
            energy_score_empirical([[1.0, 2.0]], [1.0], [1.0])

    def test_no_samples(self):
        """Test k = 0 is rejected."""
        with pytest.raises(DimensionMismatchError):
            energy_score_empirical(np.zeros((0, 2)), [1.0, 2.0], [0.5, 0.5])


class TestEnergyDistance:
    """Test cases for energy_distance_empirical."""

    def test_identical_point_blocks(self):
        """Test an unrevised point forecast has zero distance."""
        assert energy_distance_empirical([[1.0, 4.0, 2.0]], [[1.0, 4.0, 2.0]], [0.2, 0.3, 0.5]) == 0.0

    def test_identical_blocks_subtract_spread(self):
        """Test matched identical samples leave only the spread terms."""
        rng = np.random.default_rng(5)
        block = rng.normal(size=(8, 3))
        weights = np.array([0.2, 0.3, 0.5])
        spread = pdist(block * np.sqrt(weights)).sum() / (8 * 7)
        assert energy_distance_empirical(block, block, weights) == pytest.approx(-2 * spread, abs=1e-12)

    def test_point_case(self):
        """Test the point-forecast revision distance."""
        assert energy_distance_empirical([[5.0]], [[8.0]], [1.0]) == pytest.approx(3.0)

    def test_negative_estimate_small_k(self):
        """Test the estimator can be negative with two samples."""
        assert energy_distance_empirical([[0.0], [2.0]], [[0.0], [2.0]], [1.0]) == pytest.approx(-2.0)

    def test_no_overlap(self):
        """Test zero-width blocks are rejected."""
        with pytest.raises(DimensionMismatchError):
            energy_distance_empirical(np.zeros((2, 0)), np.zeros((2, 0)), [])

    @pytest.mark.slow
    def test_nonnegative_in_expectation(self):
        """Test the Monte Carlo mean over i.i.d. blocks is not significantly negative."""
        rng = np.random.default_rng(11)
        values = np.array(
            [
                energy_distance_empirical(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), [0.5, 0.5])
                for _ in range(1000)
            ],
        )
        stderr = values.std(ddof=1) / math.sqrt(len(values))
        assert values.mean() > -3 * stderr


class TestCrps:
    """Test cases for crps_empirical and gaussian_crps."""

    def test_point_forecast(self):
        """Test the CRPS of a point forecast is the absolute error."""
        assert crps_empirical([2.5], 1.0) == pytest.approx(1.5)

    def test_zero_samples_zero_outcome(self):
        """Test a degenerate forecast at the outcome scores zero."""
        assert crps_empirical(np.zeros(10), 0.0) == 0.0

    def test_matches_energy_score(self):
        """Test CRPS equals the one-dimensional unit-weight energy score."""
        rng = np.random.default_rng(2)
        samples = rng.normal(size=50)
        assert crps_empirical(samples, 0.3) == energy_score_empirical(samples[:, np.newaxis], [0.3], [1.0])

    def test_gaussian_closed_form(self):
        """Test the closed-form standard normal CRPS at zero."""
        assert gaussian_crps(0.0, 1.0, 0.0) == pytest.approx(0.23370, abs=1e-5)

    def test_empty(self):
        """Test an empty sample is rejected."""
        with pytest.raises(DimensionMismatchError):
            crps_empirical([], 0.0)

    @pytest.mark.slow
    def test_empirical_converges_to_closed_form(self):
        """Test 10000 Gaussian samples match the closed form within 2% on average over 20 seeds."""
        oracle = gaussian_crps(0.0, 1.0, 0.0)
        estimates = [crps_empirical(np.random.default_rng(seed).normal(size=10000), 0.0) for seed in range(20)]
        assert abs(np.mean(estimates) - oracle) / oracle < 0.02
        assert max(abs(e - oracle) for e in estimates) / oracle < 0.06

    def test_error_shrinks_with_samples(self):
        """Test the average error at k=10000 is below the error at k=10."""
        oracle = gaussian_crps(0.0, 1.0, 0.0)

        def mean_error(k):
            return np.mean(
                [abs(crps_empirical(np.random.default_rng(s).normal(size=k), 0.0) - oracle) for s in range(30)],
            )

        assert mean_error(10000) < mean_error(10)


class TestAccuracyAndStability:
    """Test cases for accuracy_score, stability_score and ac_score."""

    def test_perfect_forecasts(self):
        """Test forecasts equal to the truth have zero accuracy score."""
        series = TimeSeries("s", np.arange(8.0))
        values = np.array([[o + 1.0, o + 2.0] for o in range(5)])
        ensemble = ForecastEnsemble(values, origin_offset=0)
        mean, per_origin = accuracy_score(ensemble, series, [0.5, 0.5])
        assert mean == 0.0
        np.testing.assert_array_equal(per_origin, np.zeros(5))

    def test_mean_of_origins(self):
        """Test the accuracy score averages per-origin energy scores."""
        series = TimeSeries("s", [0.0, 0.0, 0.0, 0.0])
        ensemble = ForecastEnsemble(np.array([[1.0], [3.0]]), origin_offset=0)
        mean, per_origin = accuracy_score(ensemble, series, [1.0])
        np.testing.assert_allclose(per_origin, [1.0, 3.0])
        assert mean == pytest.approx(2.0)

    def test_point_case_identity(self):
        """Test k=1 accuracy equals the mean weighted Euclidean error on random instances."""
        rng = np.random.default_rng(17)
        for _ in range(100):
            n, m = rng.integers(1, 6), rng.integers(1, 5)
            offset = int(rng.integers(0, 3))
            series = TimeSeries("s", rng.normal(size=offset + n + m + 2))
            forecasts = rng.normal(size=(n, m))
            weights = build_weight_schedule("exponential", int(m), alpha=0.4)
            ensemble = ForecastEnsemble(forecasts, origin_offset=offset)
            errors = []
            for r in range(n):
                actual = series.values[offset + r + 1 : offset + r + 1 + m]
                errors.append(math.sqrt(np.sum(weights.weights * (forecasts[r] - actual) ** 2)))
            direct = np.mean(errors)
            assert abs(accuracy_score(ensemble, series, weights)[0] - direct) < 1e-12

    def test_targets_beyond_series(self):
        """Test an ensemble reaching past the series end is rejected."""
        ensemble = ForecastEnsemble(np.zeros((3, 2)), origin_offset=0)
        with pytest.raises(EnsembleIndexError):
            accuracy_score(ensemble, TimeSeries("s", np.zeros(4)), [0.5, 0.5])

    def test_constant_forecaster_stability(self):
        """Test a constant forecaster has zero stability score."""
        ensemble = ForecastEnsemble(np.full((4, 3), 2.0))
        mean, per_pair = stability_score(ensemble, build_weight_schedule("uniform", 3))
        assert mean == 0.0
        assert len(per_pair) == 3

    def test_stability_pairs(self, small_ensemble):
        """Test the stability score averages the revision of each successive pair."""
        mean, per_pair = stability_score(small_ensemble, build_weight_schedule("uniform", 2))
        np.testing.assert_allclose(per_pair, [9.0, 9.0])
        assert mean == pytest.approx(9.0)

    def test_stability_single_horizon(self):
        """Test m = 1 has no overlapping horizons."""
        with pytest.raises(StabilityUndefinedError):
            stability_score(ForecastEnsemble(np.zeros((3, 1))), [1.0])

    def test_stability_single_origin(self):
        """Test one origin has no successive pair."""
        with pytest.raises(StabilityUndefinedError):
            stability_score(ForecastEnsemble(np.zeros((1, 3))), build_weight_schedule("uniform", 3))

    def test_subweights_renormalized(self):
        """Test stability weights drop horizon 1 and renormalize."""
        np.testing.assert_allclose(stability_subweights([0.5, 0.25, 0.25]), [0.5, 0.5])

    def test_subweights_all_zero(self):
        """Test weights concentrated on horizon 1 fall back to uniform revision weights."""
        np.testing.assert_array_equal(stability_subweights([1.0, 0.0, 0.0]), [0.5, 0.5])

    def test_subweights_linear_two_horizons(self):
        """Test linear weights at m = 2 still weight the single overlapping horizon."""
        np.testing.assert_array_equal(stability_subweights(build_weight_schedule("linear", 2)), [1.0])

    def test_subweights_negative(self):
        """Test a negative revision weight is still rejected."""
        with pytest.raises(WeightScheduleError):
            stability_subweights([0.5, 1.0, -0.5])

    def test_ac_score_linear_two_horizons(self):
        """Test a perfect m = 2 forecaster scores zero under linear weights."""
        series = TimeSeries("s", np.arange(1.0, 7.0))
        ensemble = ForecastEnsemble(np.array([[[3.0], [4.0]], [[4.0], [5.0]]]), origin_offset=1)
        report = ac_score(ensemble, series, ScoreConfig(build_weight_schedule("linear", 2), lam=0.5))
        assert report.ac_score == pytest.approx(0.0, abs=1e-12)
        assert len(report.per_pair_energy_distances) == 1

    def test_ac_score_combination(self, small_ensemble):
        """Test ac_score adds lambda times stability to accuracy."""
        series = TimeSeries("s", np.arange(7.0))
        config = ScoreConfig(build_weight_schedule("uniform", 2), lam=0.5)
        report = ac_score(small_ensemble, series, config)
        assert report.ac_score == report.accuracy + 0.5 * report.stability
        assert report.stability == pytest.approx(9.0)

    def test_ac_score_lambda_zero(self, small_ensemble):
        """Test lambda = 0 gives the accuracy score exactly."""
        series = TimeSeries("s", np.arange(7.0))
        report = ac_score(small_ensemble, series, ScoreConfig(build_weight_schedule("uniform", 2), lam=0.0))
        assert report.ac_score == report.accuracy

    def test_lambda_zero_single_horizon(self):
        """Test lambda = 0 tolerates an undefined stability score."""
        series = TimeSeries("s", np.zeros(5))
        report = ac_score(ForecastEnsemble(np.zeros((3, 1))), series, ScoreConfig(build_weight_schedule("uniform", 1), lam=0.0))
        assert report.stability == 0.0
        assert len(report.per_pair_energy_distances) == 0

    def test_lambda_positive_single_horizon(self):
        """Test lambda > 0 needs a defined stability score."""
        series = TimeSeries("s", np.zeros(5))
        with pytest.raises(StabilityUndefinedError):
            ac_score(ForecastEnsemble(np.zeros((3, 1))), series, ScoreConfig(build_weight_schedule("uniform", 1), lam=0.5))

    def test_perfect_constant(self):
        """Test a constant-truth forecaster on a constant series scores zero."""
        series = TimeSeries("s", np.full(10, 4.0))
        report = ac_score(
            ForecastEnsemble(np.full((5, 3), 4.0)),
            series,
            ScoreConfig(build_weight_schedule("uniform", 3)),
        )
        assert (report.accuracy, report.stability, report.ac_score) == (0.0, 0.0, 0.0)

    def test_affine_in_lambda(self, small_ensemble):
        """Test the AC score is affine in lambda."""
        series = TimeSeries("s", np.arange(7.0))
        schedule = build_weight_schedule("uniform", 2)
        scores = [ac_score(small_ensemble, series, ScoreConfig(schedule, lam=lam)) for lam in (0.0, 1.0, 2.5)]
        assert scores[2].ac_score == pytest.approx(scores[0].accuracy + 2.5 * scores[1].stability)

    def test_horizon_mismatch(self, small_ensemble):
        """Test weights must match the ensemble horizon."""
        with pytest.raises(DimensionMismatchError):
            ac_score(small_ensemble, TimeSeries("s", np.arange(7.0)), ScoreConfig(build_weight_schedule("uniform", 3)))

    def test_negative_lambda(self):
        """Test negative lambda is rejected."""
        with pytest.raises(WeightScheduleError):
            ScoreConfig(build_weight_schedule("uniform", 2), lam=-0.1)

    def test_report_to_dict(self, small_ensemble):
        """Test the report serializes to flat snake_case keys."""
        report = ac_score(small_ensemble, TimeSeries("s", np.arange(7.0)), ScoreConfig(build_weight_schedule("uniform", 2)))
        data = report.to_dict()
        assert set(data) == {
            "accuracy",
            "stability",
            "ac_score",
            "lambda",
            "per_origin_energy_scores",
            "per_pair_energy_distances",
        }
        assert len(data["per_origin_energy_scores"]) == 3

    def test_config_round_trip(self):
        """Test ScoreConfig rebuilds from its dictionary form."""
        config = ScoreConfig(build_weight_schedule("linear", 4), build_weight_schedule("uniform", 4), lam=0.25)
        rebuilt = ScoreConfig.from_dict(config.to_dict())
        assert rebuilt.lam == 0.25
        assert rebuilt.stability_weights.kind == "uniform"


class TestExpectedAcScore:
    """Test cases for expected_ac_score."""

    @pytest.fixture
    def config(self):
        return ScoreConfig(build_weight_schedule("uniform", 2), lam=0.5)

    @staticmethod
    def noisy_dgp(rng):
        return TimeSeries("r", rng.normal(size=8))

    @staticmethod
    def zero_forecaster(series):
        return ForecastEnsemble(np.zeros((4, 2)))

    def test_degenerate_dgp(self, config, small_ensemble):
        """Test a fixed realization gives its own score with zero standard error."""
        series = TimeSeries("s", np.arange(7.0))
        result = expected_ac_score(lambda rng: series, lambda s: small_ensemble, config, r=3, seed=0)
        assert result.mean == pytest.approx(ac_score(small_ensemble, series, config).ac_score)
        assert result.stderr == 0.0

    def test_mean_of_replications(self, config):
        """Test the mean averages the per-replication scores."""
        result = expected_ac_score(self.noisy_dgp, self.zero_forecaster, config, r=2, seed=1)
        assert result.mean == pytest.approx((result.scores[0] + result.scores[1]) / 2)

    def test_deterministic(self, config):
        """Test the same seed reproduces the same estimate."""
        first = expected_ac_score(self.noisy_dgp, self.zero_forecaster, config, r=5, seed=9)
        second = expected_ac_score(self.noisy_dgp, self.zero_forecaster, config, r=5, seed=9)
        np.testing.assert_array_equal(first.scores, second.scores)
        assert first.mean == second.mean

    def test_too_few_replications(self, config):
        """Test r < 2 is rejected."""
        with pytest.raises(AcForecastError):
            expected_ac_score(self.noisy_dgp, self.zero_forecaster, config, r=1, seed=0)

    def test_forecaster_failure(self, config):
        """Test a failing forecaster is reported with its replication."""

        def broken(series):
            raise RuntimeError("boom")

        with pytest.raises(AcForecastError, match="replication 0"):
            expected_ac_score(self.noisy_dgp, broken, config, r=2, seed=0)
