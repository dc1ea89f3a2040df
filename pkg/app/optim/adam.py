"""
Functional Adam over named parameter tensors.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import torch

from ..errors import DimensionMismatchError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moment accumulators, step count and hyperparameters."""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(
    state: AdamState, params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor]
) -> Dict[str, torch.Tensor]:
    """One bias-corrected Adam update; returns new tensors and advances ``state``.

    A parameter whose gradient has a non-finite entry keeps its value and moments.
    """
    if set(params) != set(grads):
        raise DimensionMismatchError(
            f"parameter names {sorted(params)} do not match gradient names {sorted(grads)}"
        )
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step

    updated: Dict[str, torch.Tensor] = {}
    for name in sorted(params):
        value = params[name].detach()
        grad = grads[name]
        if grad is None:
            grad = torch.zeros_like(value)
        grad = grad.detach()
        if grad.shape != value.shape:
            raise DimensionMismatchError(
                f"gradient of '{name}' has shape {tuple(grad.shape)}, parameter {tuple(value.shape)}"
            )
        if not bool(torch.isfinite(grad).all()):
            logger.warning(f"Non-finite gradient for '{name}' at step {state.step}; update skipped")
            updated[name] = value.clone()
            continue

        m = state.m.get(name, torch.zeros_like(value))
        v = state.v.get(name, torch.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        updated[name] = value - state.lr * (m / bc1) / (torch.sqrt(v / bc2) + state.eps)
    return updated
