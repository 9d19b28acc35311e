"""Adam updates and an exponential moving average of parameters.

Both operate on flat lists of arrays in the head's declaration order
(see HeadParams.named_arrays) and follow the dtype of the parameters,
so float64 test traces reproduce the textbook recurrences to full
double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step", "EmaState", "ema_update", "ema_materialize"]


@dataclass
class AdamState:
    """First/second moment buffers and step counter for one parameter set."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray],
              lr: float, names: list[str] | None = None) -> None:
    """One in-place Adam update with bias correction."""
    if lr <= 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("params/grads do not match the optimizer state")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            label = names[i] if names else f"parameter {i}"
            raise FloatingPointError(f"non-finite gradient in {label}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class EmaState:
    """Shadow copy of parameters, decayed toward the live values."""

    alpha: float = 0.9
    shadow: list[np.ndarray] = field(default_factory=list)
    initialized: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")


def ema_update(state: EmaState, params: list[np.ndarray]) -> None:
    """shadow <- alpha * shadow + (1 - alpha) * params; first call copies."""
    if not state.initialized:
        state.shadow = [p.copy() for p in params]
        state.initialized = True
        return
    for s, p in zip(state.shadow, params):
        s *= state.alpha
        s += (1.0 - state.alpha) * p


def ema_materialize(state: EmaState) -> list[np.ndarray]:
    """Copies of the shadow parameters for evaluation or inference."""
    if not state.initialized:
        raise RuntimeError("EMA state has no shadow yet; call ema_update first")
    return [s.copy() for s in state.shadow]
