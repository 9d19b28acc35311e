"""Multilabel classification losses: BCE, focal, and asymmetric.

All three live in one parameterization: gamma_pos exponentiates the
positive branch, gamma_neg the negative branch, and ``clip`` shifts
negative probabilities by p_m = max(p - m, 0) so that easy negatives
(p <= m) contribute exactly zero loss and zero gradient.  Setting both
gammas to zero and m = 0 recovers binary cross-entropy; equal gammas
with m = 0 recover focal loss.

The per-label loss is summed over the K labels of a sample and averaged
over samples.  Values and gradients are evaluated in float64 regardless
of input dtype; gradients are returned in the dtype of the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = ["LossSpec", "sigmoid", "loss_value", "loss_grad"]

# Probabilities are clamped into [PROB_FLOOR, 1 - PROB_FLOOR] before any
# log; the clamp is part of the loss definition, so gradients are zero
# wherever the clamp is active.
PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class LossSpec:
    """Loss family selector: gammas, negative-probability clip, clamp floor."""

    gamma_pos: float = 0.0
    gamma_neg: float = 0.0
    clip: float = 0.0
    prob_floor: float = PROB_FLOOR

    def __post_init__(self):
        if self.gamma_pos < 0 or self.gamma_neg < 0:
            raise ValueError(f"gammas must be >= 0, got {self.gamma_pos}/{self.gamma_neg}")
        if not 0.0 <= self.clip < 1.0:
            raise ValueError(f"clip must lie in [0, 1), got {self.clip}")
        if not 0.0 < self.prob_floor < 0.5:
            raise ValueError(f"prob_floor must lie in (0, 0.5), got {self.prob_floor}")

    @classmethod
    def bce(cls) -> "LossSpec":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def focal(cls, gamma: float) -> "LossSpec":
        return cls(gamma, gamma, 0.0)

    @classmethod
    def asl(cls, gamma_pos: float = 1.0, gamma_neg: float = 4.0, clip: float = 0.05) -> "LossSpec":
        return cls(gamma_pos, gamma_neg, clip)


def sigmoid(z):
    """Numerically stable logistic function, preserving input dtype."""
    return expit(z)


def _prepare(logits, targets, spec: LossSpec):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} does not match targets shape {y.shape}")
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite logit passed to loss")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("targets must be exactly 0 or 1")
    s = expit(z)
    p = np.clip(s, spec.prob_floor, 1.0 - spec.prob_floor)
    pm = np.maximum(p - spec.clip, 0.0)
    return z, y, s, p, pm


def loss_value(logits, targets, spec: LossSpec) -> float:
    """Total loss: per-label terms summed over labels, averaged over samples."""
    _, y, _, p, pm = _prepare(logits, targets, spec)
    pos = (1.0 - p) ** spec.gamma_pos * np.log(p)
    neg = pm**spec.gamma_neg * np.log1p(-pm)
    per_label = -(y * pos + (1.0 - y) * neg)
    n = per_label.shape[0] if per_label.ndim else 1
    return float(per_label.sum() / n)


def loss_grad(logits, targets, spec: LossSpec) -> np.ndarray:
    """d(loss_value)/d(logits), elementwise.

    At the p = m threshold and inside the probability clamp the gradient
    of the active (flat) branch is used, i.e. exactly zero.
    """
    z, y, s, p, pm = _prepare(logits, targets, spec)
    gp, gn = spec.gamma_pos, spec.gamma_neg

    # d/dp of the positive-branch loss  -(1-p)^gp * log(p)
    if gp > 0:
        dpos = gp * (1.0 - p) ** (gp - 1.0) * np.log(p) - (1.0 - p) ** gp / p
    else:
        dpos = -1.0 / p

    # d/dp_m of the negative-branch loss  -(p_m)^gn * log(1-p_m), zero on
    # the thresholded side where p_m = 0.
    active = pm > 0.0
    dneg = np.zeros_like(p)
    if gn > 0:
        pma = pm[active]
        dneg[active] = -gn * pma ** (gn - 1.0) * np.log1p(-pma) + pma**gn / (1.0 - pma)
    else:
        dneg[active] = 1.0 / (1.0 - pm[active])

    # Chain through the clamped sigmoid: zero where the clamp is active.
    inside = (s > spec.prob_floor) & (s < 1.0 - spec.prob_floor)
    dpdz = np.where(inside, s * (1.0 - s), 0.0)

    n = z.shape[0] if z.ndim else 1
    grad = (y * dpos + (1.0 - y) * dneg) * dpdz / n
    return grad.astype(np.asarray(logits).dtype)
