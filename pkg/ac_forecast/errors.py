"""Exception types raised across the ac_forecast package."""


class AcForecastError(Exception):
    """Base class for all errors raised by ac_forecast."""


class WeightScheduleError(AcForecastError, ValueError):
    """Invalid weight kind, horizon or shape parameter."""


class EnsembleIndexError(AcForecastError, IndexError):
    """Origin, horizon or target outside the ensemble's coverage."""


class DimensionMismatchError(AcForecastError, ValueError):
    """Array shapes do not agree."""


class SeriesTooShortError(AcForecastError, ValueError):
    """Series is too short for the requested split, differencing or model."""


class StabilityUndefinedError(AcForecastError, ValueError):
    """Stability needs at least two origins and two horizons."""


class DifferentiationError(AcForecastError, ArithmeticError):
    """Invalid arithmetic on the autodiff tape."""


class NonFiniteGradientError(AcForecastError, ArithmeticError):
    """A gradient or loss value is NaN or infinite."""


class NoValidOriginError(AcForecastError, ValueError):
    """No forecast origin has both full history and a full target window."""


class OrderSelectionError(AcForecastError, ValueError):
    """No candidate in the order grid could be fitted."""


class StationarityError(AcForecastError, ValueError):
    """Parameters are not stationary where stationarity is required."""


class DataFormatError(AcForecastError, ValueError):
    """Malformed CSV or JSON input."""


class SeriesTimeoutError(AcForecastError, TimeoutError):
    """A per-series fit ran past its deadline."""
