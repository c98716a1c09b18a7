"""Conditional least squares fitting and AIC order selection."""

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ac_forecast.autodiff.tape import Tape, linear_combination, mul, sub, sum_nodes
from ac_forecast.errors import (
    AcForecastError,
    NonFiniteGradientError,
    OrderSelectionError,
    SeriesTimeoutError,
    SeriesTooShortError,
)
from ac_forecast.sari.model import (
    SariParams,
    SariSpec,
    ar_lag_coefficients,
    dense_lag_coefficients,
    difference,
)
from ac_forecast.training.optim import OptimizerState, adamw_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CssSettings:
    """Optimizer settings for the least-squares refinement."""

    lr: float = 0.05
    max_epochs: int = 100
    factor: float = 0.5
    min_lr: float = 1e-6
    tol: float = 1e-10


@dataclass(frozen=True)
class CssFit:
    """Result of ``css_fit``."""

    spec: SariSpec
    params: SariParams
    sse: float
    n_eff: int
    losses: list[float] = field(default_factory=list)
    converged: bool = True

    @property
    def aic(self) -> float:
        """``n_eff * ln(SSE / n_eff) + 2 * (p + P + 1)``."""
        sse = max(self.sse, np.finfo(float).tiny)
        return self.n_eff * math.log(sse / self.n_eff) + 2 * (self.spec.parameter_count + 1)


def _lag_matrix(x: np.ndarray, lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Targets ``x[lags:]`` and columns ``x_{t-1} .. x_{t-lags}``."""
    n = len(x) - lags
    columns = [x[lags - a : lags - a + n] for a in range(1, lags + 1)]
    matrix = np.column_stack(columns) if columns else np.zeros((n, 0))
    return x[lags:], matrix


def _residuals(spec: SariSpec, params: SariParams, x: np.ndarray) -> np.ndarray:
    target, matrix = _lag_matrix(x, spec.max_lag)
    return target - matrix @ dense_lag_coefficients(spec, params)


def one_step_residuals(spec: SariSpec, params: SariParams, train) -> np.ndarray:
    """In-sample one-step-ahead errors on the differenced scale."""
    train = np.asarray(train, dtype=float)
    x = difference(train, spec.d, spec.D, spec.s)[0] if spec.differencing_order else train
    return _residuals(spec, params, x)


def _initial_estimate(spec: SariSpec, x: np.ndarray) -> np.ndarray:
    """Two-stage regression: seasonal lags first, then regular lags on the filtered series."""
    Phi = np.zeros(spec.P)
    u = x
    if spec.P:
        span = spec.s * spec.P
        target, matrix = _lag_matrix(x, span)
        seasonal = matrix[:, [spec.s * (k + 1) - 1 for k in range(spec.P)]]
        Phi = np.linalg.lstsq(seasonal, target, rcond=None)[0]
        u = target - seasonal @ Phi
    phi = np.zeros(spec.p)
    if spec.p:
        target, matrix = _lag_matrix(u, spec.p)
        phi = np.linalg.lstsq(matrix, target, rcond=None)[0]
    return np.concatenate([phi, Phi])


def _loss_and_gradient(spec: SariSpec, vector: np.ndarray, x: np.ndarray) -> tuple[float, np.ndarray]:
    tape = Tape()
    phi = [tape.parameter(v, f"phi_{i + 1}") for i, v in enumerate(vector[: spec.p])]
    Phi = [tape.parameter(v, f"Phi_{k + 1}") for k, v in enumerate(vector[spec.p :])]
    lags, coefs = ar_lag_coefficients(spec, phi, Phi)
    squares = []
    for t in range(spec.max_lag, len(x)):
        error = sub(x[t], linear_combination(coefs, [x[t - a] for a in lags]))
        squares.append(mul(error, error))
    total = sum_nodes(squares)
    loss = mul(total, 1.0 / len(squares))
    grads = tape.backward(loss)
    names = [p.name for p in tape.parameters]
    return loss.value, np.array([grads[name] for name in names])


def css_fit(
    spec: SariSpec,
    train,
    settings: CssSettings | None = None,
    deadline: float | None = None,
) -> CssFit:
    """Fit AR coefficients by conditional least squares.

    The mean squared one-step-ahead error on the differenced scale is
    minimized starting from a two-stage regression estimate and refined with
    AdamW on the autodiff tape. A step that raises the loss is rejected and
    the learning rate is cut by ``settings.factor``, so the recorded losses
    never increase. ``sigma`` is the residual standard deviation.

    Raises:
        SeriesTooShortError: If ``train`` is shorter than the required history + 1.
        SeriesTimeoutError: If ``deadline`` (a ``time.monotonic`` value) passes.

    """
    settings = settings or CssSettings()
    train = np.asarray(train, dtype=float)
    if len(train) < spec.required_history + 1:
        raise SeriesTooShortError(
            f"{spec.label()} needs at least {spec.required_history + 1} observations, "
            f"got {len(train)}",
        )
    x = difference(train, spec.d, spec.D, spec.s)[0] if spec.differencing_order else train
    vector = _initial_estimate(spec, x)

    def float_loss(vec):
        residuals = _residuals(spec, SariParams.from_vector(spec, vec), x)
        return float(np.mean(residuals * residuals))

    loss = float_loss(vector)
    losses = [loss]
    converged = spec.parameter_count == 0
    if not converged:
        state = OptimizerState.initial(len(vector), lr=settings.lr, weight_decay=0.0)
        for _ in range(settings.max_epochs):
            if deadline is not None and time.monotonic() > deadline:
                raise SeriesTimeoutError(f"CSS fit of {spec.label()} ran past its deadline")
            _, grads = _loss_and_gradient(spec, vector, x)
            try:
                proposal, proposal_state = adamw_step(state, vector, grads)
            except NonFiniteGradientError:
                logger.debug("Non-finite CSS gradient for %s", spec.label())
                break
            proposal_loss = float_loss(proposal)
            if np.isfinite(proposal_loss) and proposal_loss <= loss:
                improvement = loss - proposal_loss
                vector, state, loss = proposal, proposal_state, proposal_loss
                losses.append(loss)
                if improvement <= settings.tol * max(abs(loss), 1.0):
                    converged = True
                    break
            else:
                lr = state.lr * settings.factor
                if lr < settings.min_lr:
                    converged = True
                    break
                state = OptimizerState.initial(len(vector), lr=lr, weight_decay=0.0)

    residuals = _residuals(spec, SariParams.from_vector(spec, vector), x)
    sigma = float(np.std(residuals)) if residuals.size else 0.0
    params = SariParams.from_vector(spec, vector, sigma=sigma)
    return CssFit(
        spec=spec,
        params=params,
        sse=float(np.sum(residuals * residuals)),
        n_eff=int(residuals.size),
        losses=losses,
        converged=converged,
    )


@dataclass(frozen=True)
class OrderGrid:
    """Bounds of the AIC order search."""

    p: tuple[int, ...] = (0, 1, 2)
    d: tuple[int, ...] = (0, 1)
    P: tuple[int, ...] = (0, 1)
    D: tuple[int, ...] = (0, 1)
    s: tuple[int, ...] = (24,)

    def candidates(self) -> list[SariSpec]:
        """Every distinct spec in the grid; non-seasonal specs use ``s = 1``."""
        seen = []
        for p, d, P, D in itertools.product(self.p, self.d, self.P, self.D):
            periods = [1] if P == 0 and D == 0 else [s for s in self.s if s > 1]
            for s in periods:
                spec = SariSpec(p=p, d=d, P=P, D=D, s=s)
                if spec not in seen:
                    seen.append(spec)
        return seen


def select_orders(
    train,
    grid: OrderGrid | list[SariSpec],
    settings: CssSettings | None = None,
    deadline: float | None = None,
) -> SariSpec:
    """Pick the spec with the lowest CSS AIC.

    Ties go to fewer AR terms, then to less differencing.

    Raises:
        OrderSelectionError: If no candidate can be fitted.

    """
    candidates = grid.candidates() if isinstance(grid, OrderGrid) else list(grid)
    if not candidates:
        raise OrderSelectionError("Order grid is empty")
    train = np.asarray(train, dtype=float)
    scored = []
    for spec in candidates:
        try:
            fit = css_fit(spec, train, settings, deadline=deadline)
        except SeriesTimeoutError:
            raise
        except AcForecastError as exc:
            logger.debug("Skipping %s: %s", spec.label(), exc)
            continue
        scored.append((fit.aic, spec.parameter_count, spec.d + spec.D, spec))
        logger.debug("%s AIC %.4f", spec.label(), fit.aic)
    if not scored:
        raise OrderSelectionError(
            f"No candidate in the grid could be fitted to {len(train)} observations",
        )
    best = min(scored, key=lambda item: item[:3])
    return best[3]
