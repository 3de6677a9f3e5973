"""Fold inference-time batch normalization into convolution parameters.

    y = gamma * (conv(x) - mean) / sqrt(var + eps) + beta
      = conv'(x) with  W' = W * s,  b' = beta + (b - mean) * s,
      where s = gamma / sqrt(var + eps), applied per output channel.
"""
from __future__ import annotations

import numpy as np


def fold_batchnorm(weight: np.ndarray, bias: np.ndarray | None,
                   gamma: np.ndarray, beta: np.ndarray,
                   mean: np.ndarray, var: np.ndarray,
                   eps: float) -> tuple[np.ndarray, np.ndarray]:
    weight = np.asarray(weight, dtype=np.float64)
    if bias is None:
        bias = np.zeros(weight.shape[0])
    scale = np.asarray(gamma, dtype=np.float64) / np.sqrt(
        np.asarray(var, dtype=np.float64) + eps)
    folded_weight = weight * scale[:, None, None, None]
    folded_bias = np.asarray(beta, dtype=np.float64) + (
        np.asarray(bias, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    ) * scale
    return folded_weight.astype(np.float32), folded_bias.astype(np.float32)


def fold_torch(conv, bn) -> tuple[np.ndarray, np.ndarray]:
    """Fold a torch Conv2d + BatchNorm2d pair (eval-mode statistics)."""
    weight = conv.weight.detach().numpy()
    bias = conv.bias.detach().numpy() if conv.bias is not None else None
    return fold_batchnorm(
        weight, bias,
        bn.weight.detach().numpy(), bn.bias.detach().numpy(),
        bn.running_mean.detach().numpy(), bn.running_var.detach().numpy(),
        bn.eps)
