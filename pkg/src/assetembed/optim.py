"""Row-sparse Adam and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    rows: Optional[np.ndarray] = None,
):
    """One bias-corrected Adam update, in place.

    With ``rows`` given, only those rows of ``params`` and of the moment
    estimates are touched (lazy sparse Adam); the step counter is global.
    ``grads`` always has the full shape of ``params``.

    Returns ``(params, state)``.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    sel = slice(None) if rows is None else rows
    g = grads[sel]
    m = beta1 * state.m[sel] + (1.0 - beta1) * g
    v = beta2 * state.v[sel] + (1.0 - beta2) * (g * g)
    state.m[sel] = m
    state.v[sel] = v
    params[sel] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` once the tracked loss has
    gone ``patience`` consecutive epochs without a relative improvement of
    at least ``rel_tol`` over the best value seen."""

    lr: float
    factor: float = 0.8
    patience: int = 3
    min_lr: float = 1e-6
    rel_tol: float = 1e-4
    best: float = field(default=math.inf)
    bad_epochs: int = 0

    def step(self, loss: float) -> float:
        if not math.isfinite(loss):
            raise ValueError(f"non-finite loss {loss}")
        threshold = self.best - self.rel_tol * abs(self.best) if math.isfinite(self.best) else math.inf
        if loss < threshold:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


def lr_scheduler_step(sched: PlateauScheduler, epoch_positive_loss: float) -> float:
    return sched.step(epoch_positive_loss)
