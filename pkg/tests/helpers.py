"""Gradient checking helpers shared by the test modules."""

import numpy as np
import torch

from app.geometry.transforms import DTYPE


def central_difference(fn, params: torch.Tensor, h: float = 1e-3) -> np.ndarray:
    """Gradient of a scalar function by central differences, one coordinate at a time."""
    flat = params.detach().to(DTYPE).reshape(-1)
    grad = np.zeros(flat.numel())
    for k in range(flat.numel()):
        step = torch.zeros_like(flat)
        step[k] = h
        with torch.no_grad():
            plus = float(fn((flat + step).reshape(params.shape)))
            minus = float(fn((flat - step).reshape(params.shape)))
        grad[k] = (plus - minus) / (2 * h)
    return grad


def autograd_gradient(fn, params: torch.Tensor) -> np.ndarray:
    leaf = params.detach().to(DTYPE).clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(leaf), [leaf])
    return grad.reshape(-1).numpy()


def assert_gradients_close(fn, params: torch.Tensor, h: float = 1e-3, rtol: float = 1e-2):
    """Relative error below ``rtol``, measured against 1% of the largest component for tiny ones."""
    analytic = autograd_gradient(fn, params)
    numeric = central_difference(fn, params, h)
    scale = np.abs(analytic).max()
    assert scale > 0
    error = np.abs(analytic - numeric)
    assert np.all(error <= rtol * np.maximum(np.abs(analytic), 1e-2 * scale)), (analytic, numeric)
