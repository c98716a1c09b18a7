"""Seasonal autoregressive integrated models, SARI(p,d,0)x(P,D,0,s).

The model is ``Phi(L^s) phi(L) (1 - L^s)^D (1 - L)^d y_t = e_t`` with
``phi(x) = 1 - phi_1 x - ... - phi_p x^p`` and
``Phi(x) = 1 - Phi_1 x - ... - Phi_P x^P``. There is no intercept.

Forecasting helpers work on plain floats or on autodiff nodes, so the
trainer differentiates through exactly the recursion used at evaluation
time.
"""

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ac_forecast.autodiff.tape import add, linear_combination, mul, value_of
from ac_forecast.errors import (
    DataFormatError,
    DimensionMismatchError,
    SeriesTooShortError,
    StationarityError,
)

logger = logging.getLogger(__name__)

ROOT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SariSpec:
    """Model orders."""

    p: int = 0
    d: int = 0
    P: int = 0
    D: int = 0
    s: int = 1

    def __post_init__(self):
        for name in ("p", "d", "P", "D"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                raise DataFormatError(f"Order {name} must be a nonnegative integer, got {value!r}")
        if isinstance(self.s, bool) or not isinstance(self.s, (int, np.integer)) or self.s < 1:
            raise DataFormatError(f"Seasonal period must be >= 1, got {self.s!r}")
        if (self.P > 0 or self.D > 0) and self.s < 2:
            raise DataFormatError("Seasonal terms need a period s > 1")

    @property
    def max_lag(self) -> int:
        """Largest AR lag on the differenced scale."""
        return self.p + self.s * self.P

    @property
    def differencing_order(self) -> int:
        """Number of leading values consumed by differencing."""
        return self.d + self.s * self.D

    @property
    def required_history(self) -> int:
        return self.differencing_order + self.max_lag

    @property
    def parameter_count(self) -> int:
        return self.p + self.P

    def label(self) -> str:
        return f"SARI({self.p},{self.d},0)x({self.P},{self.D},0,{self.s})"


@dataclass(frozen=True)
class SariParams:
    """AR and seasonal AR coefficients plus innovation scale."""

    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma: float = 0.0

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float).reshape(-1)
        Phi = np.array(self.Phi, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(Phi))):
            raise DataFormatError("AR coefficients must be finite")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise DataFormatError(f"sigma must be finite and nonnegative, got {self.sigma}")
        phi.setflags(write=False)
        Phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "sigma", float(self.sigma))

    def check(self, spec: SariSpec) -> None:
        if len(self.phi) != spec.p or len(self.Phi) != spec.P:
            raise DimensionMismatchError(
                f"{spec.label()} needs {spec.p} phi and {spec.P} Phi coefficients, "
                f"got {len(self.phi)} and {len(self.Phi)}",
            )

    def vector(self) -> np.ndarray:
        """Coefficients stacked as ``[phi..., Phi...]``."""
        return np.concatenate([self.phi, self.Phi])

    @classmethod
    def from_vector(cls, spec: SariSpec, vector, sigma: float = 0.0) -> "SariParams":
        vector = np.asarray(vector, dtype=float)
        return cls(phi=vector[: spec.p], Phi=vector[spec.p : spec.p + spec.P], sigma=sigma)


def model_to_dict(spec: SariSpec, params: SariParams) -> dict[str, Any]:
    """JSON layout ``{p, d, q, P, D, Q, s, phi, Phi, sigma}``."""
    return {
        "p": spec.p,
        "d": spec.d,
        "q": 0,
        "P": spec.P,
        "D": spec.D,
        "Q": 0,
        "s": spec.s,
        "phi": [float(v) for v in params.phi],
        "Phi": [float(v) for v in params.Phi],
        "sigma": params.sigma,
    }


def model_from_dict(data: dict[str, Any]) -> tuple[SariSpec, SariParams]:
    """Inverse of ``model_to_dict``.

    Raises:
        DataFormatError: On missing keys or nonzero moving-average orders.

    """
    try:
        if int(data.get("q", 0)) != 0 or int(data.get("Q", 0)) != 0:
            raise DataFormatError("Moving-average orders are not supported")
        spec = SariSpec(
            p=int(data["p"]),
            d=int(data["d"]),
            P=int(data["P"]),
            D=int(data["D"]),
            s=int(data["s"]),
        )
        params = SariParams(
            phi=data.get("phi", []),
            Phi=data.get("Phi", []),
            sigma=float(data.get("sigma", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"Invalid model description: {exc}") from exc
    params.check(spec)
    return spec, params


@dataclass(frozen=True)
class RestorationState:
    """What ``integrate`` needs to undo ``difference``."""

    anchors: np.ndarray
    d: int
    D: int
    s: int


def differencing_polynomial(d: int, D: int, s: int) -> np.ndarray:
    """Coefficients of ``(1 - L)^d (1 - L^s)^D`` in ascending powers of L."""
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(s + 1)
    seasonal[0], seasonal[s] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seasonal)
    return poly


def difference(values, d: int, D: int, s: int) -> tuple[np.ndarray, RestorationState]:
    """Apply ``(1 - L)^d`` then ``(1 - L^s)^D``.

    Returns the differenced series (shorter by ``d + s*D``) and the leading
    values needed to rebuild the original.

    Raises:
        SeriesTooShortError: If nothing would remain after differencing.

    """
    values = np.asarray(values, dtype=float)
    order = d + s * D
    if len(values) <= order:
        raise SeriesTooShortError(
            f"Need more than {order} values to difference with d={d}, D={D}, s={s}; "
            f"got {len(values)}",
        )
    out = values
    for _ in range(d):
        out = np.diff(out)
    for _ in range(D):
        out = out[s:] - out[:-s]
    return out, RestorationState(anchors=values[:order].copy(), d=d, D=D, s=s)


def integrate(differenced, state: RestorationState) -> np.ndarray:
    """Invert ``difference``, continuing forward from ``state.anchors``.

    Returns the values following the anchors, so
    ``concatenate([state.anchors, integrate(*difference(y, ...))[...]])``
    reproduces ``y``.

    Raises:
        DimensionMismatchError: If the anchors do not match the orders.

    """
    order = state.d + state.s * state.D
    if len(state.anchors) != order:
        raise DimensionMismatchError(
            f"Restoration state holds {len(state.anchors)} anchors, "
            f"orders d={state.d}, D={state.D}, s={state.s} need {order}",
        )
    poly = differencing_polynomial(state.d, state.D, state.s)
    restored = integrate_path(list(np.asarray(differenced, dtype=float)), state.anchors, poly)
    return np.asarray(restored, dtype=float)


def integrate_path(differenced: list, anchors, poly: np.ndarray) -> list:
    """Undo differencing for a path that may hold autodiff nodes.

    Uses ``y_t = x_t - sum_{a>=1} poly[a] * y_{t-a}`` seeded with ``anchors``,
    the most recent original-scale values.
    """
    order = len(poly) - 1
    if order == 0:
        return list(differenced)
    lags = [a for a in range(1, order + 1) if poly[a] != 0.0]
    coefs = [1.0] + [-poly[a] for a in lags]
    history = [float(v) for v in anchors]
    restored = []
    for x in differenced:
        y = linear_combination(coefs, [x] + [history[-a] for a in lags])
        history.append(y)
        restored.append(y)
    return restored


def ar_lag_coefficients(spec: SariSpec, phi, Phi) -> tuple[list[int], list]:
    """Expand ``1 - phi(L) Phi(L^s)`` into per-lag recursion coefficients.

    Returns ``(lags, coefs)`` with ``x_t = sum coefs[i] * x_{t - lags[i]}``.
    Entries of ``phi`` and ``Phi`` may be numbers or autodiff nodes.
    """
    terms: dict[int, Any] = {}

    def accumulate(lag, coef):
        terms[lag] = coef if lag not in terms else add(terms[lag], coef)

    for i in range(spec.p):
        accumulate(i + 1, phi[i])
    for k in range(spec.P):
        accumulate(spec.s * (k + 1), Phi[k])
    for i in range(spec.p):
        for k in range(spec.P):
            accumulate(i + 1 + spec.s * (k + 1), mul(-1.0, mul(phi[i], Phi[k])))
    lags = sorted(terms)
    return lags, [terms[lag] for lag in lags]


def dense_lag_coefficients(spec: SariSpec, params: SariParams) -> np.ndarray:
    """Recursion coefficients ``c_1..c_L`` as a dense float vector."""
    lags, coefs = ar_lag_coefficients(spec, params.phi, params.Phi)
    dense = np.zeros(spec.max_lag)
    for lag, coef in zip(lags, coefs, strict=True):
        dense[lag - 1] = value_of(coef)
    return dense


def forecast_path(
    lags: list[int],
    coefs: list,
    x_history,
    y_anchors,
    poly: np.ndarray,
    horizon: int,
    shocks=None,
) -> list:
    """One recursive forecast path on the original scale.

    Args:
        lags: Recursion lags from ``ar_lag_coefficients``.
        coefs: Matching coefficients (numbers or nodes).
        x_history: Differenced history, most recent last.
        y_anchors: The last ``len(poly) - 1`` original-scale values.
        poly: Differencing polynomial.
        horizon: Steps ahead.
        shocks: Optional innovations added at each step.

    """
    x = [float(v) for v in x_history]
    predicted = []
    for j in range(horizon):
        if lags:
            step = linear_combination(coefs, [x[-a] for a in lags])
        else:
            step = 0.0
        if shocks is not None:
            step = add(step, shocks[j])
        x.append(step)
        predicted.append(step)
    return integrate_path(predicted, y_anchors, poly)


def forecast_recursive(
    spec: SariSpec,
    params: SariParams,
    history,
    horizon: int,
    k: int = 1,
    noise_seed: int | None = None,
) -> np.ndarray:
    """Recursive multi-step forecasts from the end of ``history``.

    With ``k == 1`` and no seed the deterministic conditional-mean path is
    returned. Otherwise each of the ``k`` paths adds Gaussian innovations of
    scale ``params.sigma`` at every step on the differenced scale.

    Returns:
        Array of shape ``(k, horizon)`` on the original scale.

    Raises:
        SeriesTooShortError: If ``history`` is shorter than the required history.
        StationarityError: If sampling is requested with ``sigma == 0`` and no seed.

    """
    params.check(spec)
    history = np.asarray(history, dtype=float)
    if horizon < 1:
        raise DimensionMismatchError(f"Horizon must be positive, got {horizon}")
    if k < 1:
        raise DimensionMismatchError(f"Sample count must be positive, got {k}")
    if len(history) < spec.required_history:
        raise SeriesTooShortError(
            f"{spec.label()} needs {spec.required_history} observations, got {len(history)}",
        )
    sampling = k > 1 or noise_seed is not None
    if sampling and params.sigma == 0.0 and noise_seed is None:
        raise StationarityError(
            "Sampling more than one path with sigma = 0 yields identical paths; "
            "pass a noise seed to accept degenerate samples",
        )

    order = spec.differencing_order
    anchors = history[len(history) - order :] if order else history[:0]
    poly = differencing_polynomial(spec.d, spec.D, spec.s)
    lags, coefs = ar_lag_coefficients(spec, params.phi, params.Phi)
    # Pure differencing needs only the anchors.
    x_tail = history[:0]
    if spec.max_lag:
        x = difference(history, spec.d, spec.D, spec.s)[0] if order else history
        x_tail = x[len(x) - spec.max_lag :]

    shocks = None
    if sampling:
        rng = np.random.default_rng(noise_seed)
        shocks = rng.normal(0.0, params.sigma, size=(k, horizon))
    out = np.empty((k, horizon))
    for i in range(k):
        path = forecast_path(
            lags,
            coefs,
            x_tail,
            anchors,
            poly,
            horizon,
            None if shocks is None else shocks[i],
        )
        out[i] = [value_of(v) for v in path]
    return out


@dataclass(frozen=True)
class StationarityReport:
    """Roots of ``phi(z) Phi(z^s)`` and the resulting verdict."""

    roots: np.ndarray
    min_modulus: float
    stationary: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_modulus": None if np.isinf(self.min_modulus) else float(self.min_modulus),
            "stationary": self.stationary,
        }


def stationarity_check(
    spec: SariSpec,
    params: SariParams,
    tol: float = ROOT_TOLERANCE,
) -> StationarityReport:
    """Locate the AR polynomial roots via companion-matrix eigenvalues.

    The recursion ``x_t = sum c_a x_{t-a}`` has companion eigenvalues
    ``lambda``; the polynomial roots are ``z = 1 / lambda``. A degree-zero
    polynomial is reported as stationary with no roots.
    """
    params.check(spec)
    coefs = dense_lag_coefficients(spec, params)
    nonzero = np.flatnonzero(coefs)
    if nonzero.size == 0:
        return StationarityReport(np.zeros(0, dtype=complex), float("inf"), True)
    coefs = coefs[: nonzero[-1] + 1]
    degree = len(coefs)
    companion = np.zeros((degree, degree))
    companion[0, :] = coefs
    if degree > 1:
        companion[1:, :-1] = np.eye(degree - 1)
    eigenvalues = np.linalg.eigvals(companion)
    roots = 1.0 / eigenvalues
    min_modulus = float(np.min(np.abs(roots)))
    return StationarityReport(roots, min_modulus, min_modulus > 1.0 + tol)


def simulate(
    spec: SariSpec,
    params: SariParams,
    length: int,
    rng: np.random.Generator,
    burn_in: int = 200,
) -> np.ndarray:
    """Draw one realization of the model from zero initial conditions.

    The differenced process is run for ``burn_in`` extra steps which are
    discarded; the first ``d + s*D`` values of the output are the zero
    integration anchors.

    Raises:
        StationarityError: If the differenced-scale AR part is not stationary.
        SeriesTooShortError: If ``length`` does not exceed the differencing order.

    """
    params.check(spec)
    if not stationarity_check(spec, params).stationary:
        raise StationarityError(f"Cannot simulate non-stationary {spec.label()}")
    order = spec.differencing_order
    if length <= order:
        raise SeriesTooShortError(f"Length {length} must exceed differencing order {order}")
    coefs = dense_lag_coefficients(spec, params)
    total = burn_in + length - order
    noise = rng.normal(0.0, params.sigma, size=total) if params.sigma > 0 else np.zeros(total)
    lag = spec.max_lag
    x = np.zeros(total + lag)
    for t in range(total):
        past = x[t : t + lag][::-1]
        x[t + lag] = coefs @ past + noise[t]
    x = x[lag + burn_in :]
    state = RestorationState(anchors=np.zeros(order), d=spec.d, D=spec.D, s=spec.s)
    return np.concatenate([state.anchors, integrate(x, state)])
