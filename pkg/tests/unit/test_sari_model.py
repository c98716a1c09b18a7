import numpy as np
import pytest

from ac_forecast.errors import (
    DataFormatError,
    DimensionMismatchError,
    SeriesTooShortError,
    StationarityError,
)
from ac_forecast.sari.model import (
    SariParams,
    SariSpec,
    ar_lag_coefficients,
    difference,
    differencing_polynomial,
    forecast_recursive,
    integrate,
    model_from_dict,
    model_to_dict,
    simulate,
    stationarity_check,
)


def expanded_polynomial(spec, params):
    """Full lag polynomial ``Phi(L^s) phi(L) (1 - L^s)^D (1 - L)^d``."""
    phi_poly = np.concatenate([[1.0], -params.phi])
    seasonal = np.zeros(spec.s * spec.P + 1)
    seasonal[0] = 1.0
    for k, value in enumerate(params.Phi):
        seasonal[spec.s * (k + 1)] = -value
    return np.convolve(
        np.convolve(phi_poly, seasonal),
        differencing_polynomial(spec.d, spec.D, spec.s),
    )


def brute_force_forecast(spec, params, history, horizon):
    """Iterate the expanded polynomial on the original scale."""
    poly = expanded_polynomial(spec, params)
    y = list(history)
    for _ in range(horizon):
        y.append(-sum(poly[a] * y[-a] for a in range(1, len(poly))))
    return np.array(y[len(history) :])


class TestSariSpec:
    """Test cases for SariSpec."""

    def test_derived_sizes(self):
        """Test lag and history sizes of a seasonal model."""
        spec = SariSpec(p=2, d=1, P=1, D=1, s=24)
        assert spec.max_lag == 26
        assert spec.differencing_order == 25
        assert spec.required_history == 51
        assert spec.parameter_count == 3
        assert spec.label() == "SARI(2,1,0)x(1,1,0,24)"

    @pytest.mark.parametrize(
        "orders",
        [
            {"p": -1},
            {"P": 1, "s": 1},
            {"s": 0},
            {"p": 1.5},
            {"d": True},
        ],
    )
    def test_invalid_orders(self, orders):
        """Test invalid orders are rejected."""
        with pytest.raises(DataFormatError):
            SariSpec(**orders)


class TestSariParams:
    """Test cases for SariParams."""

    def test_vector_round_trip(self):
        """Test parameters stack and unstack as [phi, Phi]."""
        spec = SariSpec(p=2, P=1, s=4)
        params = SariParams.from_vector(spec, [0.1, 0.2, 0.3], sigma=1.0)
        np.testing.assert_array_equal(params.phi, [0.1, 0.2])
        np.testing.assert_array_equal(params.Phi, [0.3])
        np.testing.assert_array_equal(params.vector(), [0.1, 0.2, 0.3])

    def test_non_finite(self):
        """Test NaN coefficients are rejected."""
        with pytest.raises(DataFormatError):
            SariParams(phi=[np.nan])

    def test_negative_sigma(self):
        """Test a negative innovation scale is rejected."""
        with pytest.raises(DataFormatError):
            SariParams(sigma=-1.0)

    def test_check_counts(self):
        """Test coefficient counts must match the orders."""
        with pytest.raises(DimensionMismatchError):
            SariParams(phi=[0.5]).check(SariSpec(p=2))


class TestModelSerialization:
    """Test cases for model_to_dict and model_from_dict."""

    def test_round_trip(self, seasonal_model):
        """Test a model rebuilds from its dictionary form."""
        spec, params = seasonal_model
        data = model_to_dict(spec, params)
        assert data["q"] == 0
        assert data["Q"] == 0
        rebuilt_spec, rebuilt_params = model_from_dict(data)
        assert rebuilt_spec == spec
        np.testing.assert_array_equal(rebuilt_params.vector(), params.vector())
        assert rebuilt_params.sigma == 1.0

    def test_moving_average_rejected(self, seasonal_model):
        """Test nonzero moving-average orders are rejected."""
        data = model_to_dict(*seasonal_model)
        data["q"] = 1
        with pytest.raises(DataFormatError):
            model_from_dict(data)

    def test_missing_key(self):
        """Test a description without orders is rejected."""
        with pytest.raises(DataFormatError):
            model_from_dict({"p": 1})

    def test_coefficient_mismatch(self):
        """Test coefficients must match the declared orders."""
        with pytest.raises(DimensionMismatchError):
            model_from_dict({"p": 2, "d": 0, "P": 0, "D": 0, "s": 1, "phi": [0.1]})


class TestDifferencing:
    """Test cases for difference and integrate."""

    def test_first_difference(self):
        """Test the first difference of squares."""
        diffs, state = difference([1.0, 4.0, 9.0, 16.0], 1, 0, 1)
        np.testing.assert_array_equal(diffs, [3.0, 5.0, 7.0])
        np.testing.assert_array_equal(state.anchors, [1.0])

    def test_seasonal_difference(self):
        """Test a lag-2 seasonal difference."""
        diffs, _ = difference([1.0, 2.0, 4.0, 8.0], 0, 1, 2)
        np.testing.assert_array_equal(diffs, [3.0, 6.0])

    def test_polynomial(self):
        """Test (1 - L)(1 - L^2) = 1 - L - L^2 + L^3."""
        np.testing.assert_array_equal(differencing_polynomial(1, 1, 2), [1.0, -1.0, -1.0, 1.0])

    @pytest.mark.parametrize(("d", "D", "s"), [(0, 0, 1), (1, 0, 1), (2, 0, 1), (0, 1, 4), (1, 1, 4), (1, 2, 3)])
    def test_integrate_inverts_difference(self, d, D, s):
        """Test integrating the differences restores the series."""
        y = np.random.default_rng(d * 10 + D + s).normal(size=60).cumsum()
        diffs, state = difference(y, d, D, s)
        order = d + s * D
        np.testing.assert_allclose(integrate(diffs, state), y[order:], rtol=1e-10, atol=1e-9)

    def test_too_short(self):
        """Test a series no longer than the order cannot be differenced."""
        with pytest.raises(SeriesTooShortError):
            difference([1.0, 2.0], 0, 1, 2)


class TestLagCoefficients:
    """Test cases for ar_lag_coefficients."""

    def test_multiplicative_expansion(self):
        """Test phi, Phi and their cross term land on lags 1, s and s+1."""
        lags, coefs = ar_lag_coefficients(SariSpec(p=1, P=1, s=4), [0.5], [0.6])
        assert lags == [1, 4, 5]
        np.testing.assert_allclose(coefs, [0.5, 0.6, -0.3])

    def test_overlapping_lags_summed(self):
        """Test coefficients sharing a lag are added."""
        lags, coefs = ar_lag_coefficients(SariSpec(p=2, P=1, s=2), [0.1, 0.2], [0.5])
        assert lags == [1, 2, 3, 4]
        np.testing.assert_allclose(coefs, [0.1, 0.2 + 0.5, -0.05, -0.1])


class TestForecastRecursive:
    """Test cases for forecast_recursive."""

    def test_ar1_decay(self):
        """Test the AR(1) forecast halves every step."""
        spec = SariSpec(p=1)
        out = forecast_recursive(spec, SariParams(phi=[0.5]), [1.0, 4.0], 3)
        np.testing.assert_allclose(out, [[2.0, 1.0, 0.5]])

    def test_random_walk(self):
        """Test a pure first difference repeats the last value."""
        out = forecast_recursive(SariSpec(d=1), SariParams(), [3.0, 7.0], 4)
        np.testing.assert_array_equal(out, [[7.0, 7.0, 7.0, 7.0]])

    def test_pure_differencing_minimal_history(self):
        """Test SARI(0,1,0) forecasts from a single observation."""
        out = forecast_recursive(SariSpec(d=1), SariParams(), [5.0], 3)
        np.testing.assert_array_equal(out, [[5.0, 5.0, 5.0]])

    def test_pure_seasonal_differencing_minimal_history(self):
        """Test seasonal differencing alone repeats the last season."""
        out = forecast_recursive(SariSpec(D=1, s=3), SariParams(), [1.0, 2.0, 3.0], 5)
        np.testing.assert_array_equal(out, [[1.0, 2.0, 3.0, 1.0, 2.0]])

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_expanded_recursion(self, seed):
        """Test the differenced recursion matches iterating the full polynomial."""
        rng = np.random.default_rng(500 + seed)
        spec = SariSpec(
            p=int(rng.integers(0, 3)),
            d=int(rng.integers(0, 2)),
            P=int(rng.integers(0, 3)),
            D=int(rng.integers(0, 2)),
            s=int(rng.integers(2, 6)),
        )
        params = SariParams(
            phi=rng.uniform(-0.4, 0.4, size=spec.p),
            Phi=rng.uniform(-0.4, 0.4, size=spec.P),
        )
        history = rng.normal(size=max(spec.required_history, 1) + int(rng.integers(0, 6))).cumsum()
        expected = brute_force_forecast(spec, params, history, 12)
        np.testing.assert_allclose(forecast_recursive(spec, params, history, 12)[0], expected, rtol=1e-9, atol=1e-9)

    def test_short_history(self):
        """Test too little history is rejected."""
        with pytest.raises(SeriesTooShortError):
            forecast_recursive(SariSpec(p=1, P=1, s=4), SariParams(phi=[0.1], Phi=[0.1]), np.zeros(4), 2)

    def test_degenerate_sampling(self):
        """Test several paths with zero sigma and no seed are rejected."""
        with pytest.raises(StationarityError):
            forecast_recursive(SariSpec(p=1), SariParams(phi=[0.5]), [1.0], 2, k=3)

    def test_seeded_samples(self):
        """Test seeded sample paths are reproducible and distinct."""
        spec, params = SariSpec(p=1), SariParams(phi=[0.5], sigma=1.0)
        first = forecast_recursive(spec, params, [1.0, 2.0], 5, k=4, noise_seed=3)
        second = forecast_recursive(spec, params, [1.0, 2.0], 5, k=4, noise_seed=3)
        assert first.shape == (4, 5)
        np.testing.assert_array_equal(first, second)
        assert not np.allclose(first[0], first[1])

    def test_invalid_horizon(self):
        """Test a zero horizon is rejected."""
        with pytest.raises(DimensionMismatchError):
            forecast_recursive(SariSpec(p=1), SariParams(phi=[0.5]), [1.0], 0)


class TestStationarity:
    """Test cases for stationarity_check."""

    def test_ar1_root(self):
        """Test AR(1) with phi = 0.5 has its root at 2."""
        report = stationarity_check(SariSpec(p=1), SariParams(phi=[0.5]))
        assert report.min_modulus == pytest.approx(2.0)
        assert report.stationary

    def test_unit_root(self):
        """Test phi = 1 is not stationary."""
        assert not stationarity_check(SariSpec(p=1), SariParams(phi=[1.0])).stationary

    def test_seasonal_root_modulus(self, seasonal_model):
        """Test the seasonal factor's roots have modulus 0.6 ** (-1/24)."""
        report = stationarity_check(*seasonal_model)
        assert report.min_modulus == pytest.approx(0.6 ** (-1 / 24), rel=1e-6)
        assert report.stationary

    def test_no_coefficients(self):
        """Test a model without AR terms is stationary with no roots."""
        report = stationarity_check(SariSpec(d=1), SariParams())
        assert report.stationary
        assert report.to_dict() == {"min_modulus": None, "stationary": True}

    @pytest.mark.parametrize("phi", [0.3, 0.8, 0.94])
    def test_stationary_paths_stay_bounded(self, phi):
        """Test simulated stationary paths do not explode."""
        spec, params = SariSpec(p=1), SariParams(phi=[phi], sigma=1.0)
        assert stationarity_check(spec, params).min_modulus > 1.05
        path = simulate(spec, params, 2000, np.random.default_rng(0))
        assert np.max(np.abs(path)) < 50.0

    @pytest.mark.parametrize("phi", [1.06, 1.5])
    def test_explosive_rejected(self, phi):
        """Test simulation refuses explosive coefficients."""
        spec, params = SariSpec(p=1), SariParams(phi=[phi], sigma=1.0)
        assert stationarity_check(spec, params).min_modulus < 1.0 - 0.05 + 1e-9
        with pytest.raises(StationarityError):
            simulate(spec, params, 100, np.random.default_rng(0))


class TestSimulate:
    """Test cases for simulate."""

    def test_zero_sigma_is_zero(self, seasonal_model):
        """Test a noiseless simulation from zero stays at zero."""
        spec, params = seasonal_model
        quiet = SariParams(phi=params.phi, Phi=params.Phi, sigma=0.0)
        path = simulate(spec, quiet, 100, np.random.default_rng(0))
        np.testing.assert_array_equal(path, np.zeros(100))

    def test_length_and_anchors(self):
        """Test an integrated simulation starts from zero anchors."""
        spec = SariSpec(p=1, d=1)
        path = simulate(spec, SariParams(phi=[0.3], sigma=1.0), 50, np.random.default_rng(1))
        assert len(path) == 50
        assert path[0] == 0.0

    def test_reproducible(self, seasonal_model):
        """Test the same generator seed reproduces the path."""
        first = simulate(*seasonal_model, 200, np.random.default_rng(5))
        second = simulate(*seasonal_model, 200, np.random.default_rng(5))
        np.testing.assert_array_equal(first, second)

    def test_too_short(self):
        """Test the length must exceed the differencing order."""
        with pytest.raises(SeriesTooShortError):
            simulate(SariSpec(d=1, D=1, s=4), SariParams(), 5, np.random.default_rng(0))
