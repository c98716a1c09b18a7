"""AdamW updates and a reduce-on-plateau learning-rate scheduler."""

import math
from dataclasses import dataclass, replace

import numpy as np

from ac_forecast.errors import NonFiniteGradientError


@dataclass(frozen=True)
class OptimizerState:
    """Moment accumulators and hyperparameters for AdamW."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.05
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initial(cls, size: int, **hyper) -> "OptimizerState":
        if hyper.get("lr", 0.05) <= 0:
            raise ValueError(f"Invalid learning rate: {hyper['lr']}")
        return cls(m=np.zeros(size), v=np.zeros(size), **hyper)


def adamw_step(
    state: OptimizerState,
    params: np.ndarray,
    grads: np.ndarray,
) -> tuple[np.ndarray, OptimizerState]:
    """One decoupled-weight-decay Adam update.

    ``params - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * params``
    with bias-corrected moments ``m_hat`` and ``v_hat``.

    Raises:
        NonFiniteGradientError: If any gradient is NaN or infinite.

    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"Shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}",
        )
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError(f"Non-finite gradient {grads}")

    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    updated = (
        params
        - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        - state.lr * state.weight_decay * params
    )
    return updated, replace(state, m=m, v=v, step=step)


class PlateauScheduler:
    """Cut the learning rate when the loss stops improving.

    An epoch improves when its loss is below ``best - threshold * |best|``.
    After ``patience`` consecutive epochs without improvement the rate is
    multiplied by ``factor`` (never below ``min_lr``) and the count restarts.
    """

    def __init__(
        self,
        lr: float,
        factor: float = 0.5,
        patience: int = 10,
        threshold: float = 1e-4,
        min_lr: float = 1e-5,
    ):
        if not 0.0 < factor < 1.0:
            raise ValueError(f"Factor should be in (0, 1), got {factor}")
        if patience < 1:
            raise ValueError(f"Patience should be >= 1, got {patience}")
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = math.inf
        self.num_bad_epochs = 0
        self.reductions = 0

    def is_improvement(self, loss: float) -> bool:
        if math.isinf(self.best):
            return loss < self.best
        return loss < self.best - self.threshold * abs(self.best)

    def step(self, loss: float) -> float:
        """Record one epoch's loss and return the learning rate to use next."""
        if self.is_improvement(loss):
            self.best = loss
            self.num_bad_epochs = 0
        else:
            self.num_bad_epochs += 1

        if self.num_bad_epochs >= self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if new_lr < self.lr:
                self.lr = new_lr
                self.reductions += 1
            self.num_bad_epochs = 0
        return self.lr
