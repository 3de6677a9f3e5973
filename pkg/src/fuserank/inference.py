"""Deterministic forward execution of a validated model graph.

Activations are float64 throughout; layers execute in stored topological
order.  Feature extraction returns the final dense layer's pre-softmax
activation, which must be 1000-dimensional.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .model_graph import INPUT_ID, ModelGraph, WeightStore
from .nn_ops import conv2d_multichannel, conv_output_size_floor, dense, relu, softmax

FEATURE_DIM = 1000


@dataclass(frozen=True)
class FeatureVector:
    backbone_name: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != FEATURE_DIM:
            raise InvalidArgumentError(
                f"feature vector must have length {FEATURE_DIM}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("feature vector contains non-finite values")
        object.__setattr__(self, "values", values)


def _crop_to_stride(padded: np.ndarray, kernel: int, stride: int,
                    oh: int, ow: int) -> np.ndarray:
    # Drop trailing rows/columns that do not fit a full stride step; after
    # this the exact-geometry primitives apply.
    return padded[:kernel + stride * (oh - 1), :kernel + stride * (ow - 1), :]


def _conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray,
            kernel: int, stride: int, padding: int) -> np.ndarray:
    oh = conv_output_size_floor(x.shape[0], padding, kernel, stride)
    ow = conv_output_size_floor(x.shape[1], padding, kernel, stride)
    if padding:
        x = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    x = _crop_to_stride(x, kernel, stride, oh, ow)
    return conv2d_multichannel(x, weights, bias, stride=stride, padding=0)


def _pool(x: np.ndarray, window: int, stride: int, padding: int, mode: str) -> np.ndarray:
    if padding > window // 2:
        raise InvalidArgumentError(
            f"pool padding {padding} exceeds half the window {window}")
    oh = conv_output_size_floor(x.shape[0], padding, window, stride)
    ow = conv_output_size_floor(x.shape[1], padding, window, stride)
    fill = -np.inf if mode == "max" else 0.0
    if padding:
        x = np.pad(x, ((padding, padding), (padding, padding), (0, 0)),
                   constant_values=fill)
    x = _crop_to_stride(x, window, stride, oh, ow)
    sh, sw, sc = x.strides
    win = np.lib.stride_tricks.as_strided(
        x,
        shape=(oh, ow, window, window, x.shape[2]),
        strides=(sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    if mode == "max":
        return win.max(axis=(2, 3))
    return win.mean(axis=(2, 3))


def _lrn(x: np.ndarray, k: float, alpha: float, beta: float, n: int) -> np.ndarray:
    """Cross-channel response normalization.

    ``b_c = a_c / (k + alpha/n * sum_{j in window(c)} a_j^2)^beta`` with the
    window of n channels centered at c (front-heavy for even n) and truncated
    at the boundaries; the divisor stays n even where truncated.
    """
    sq = x * x
    channels = x.shape[2]
    acc = np.zeros_like(sq)
    for offset in range(-(n // 2), n - n // 2):
        lo = max(0, -offset)
        hi = min(channels, channels - offset)
        acc[:, :, lo:hi] += sq[:, :, lo + offset:hi + offset]
    return x / (k + alpha * acc / n) ** beta


def run_graph(model: ModelGraph, weights: WeightStore, image) -> dict[str, np.ndarray]:
    """Execute every layer and return the activation of each by layer id."""
    x = np.asarray(image, dtype=np.float64)
    if x.shape != model.input_shape:
        raise InvalidArgumentError(
            f"input shape {x.shape} does not match model input {model.input_shape}")
    activations: dict[str, np.ndarray] = {INPUT_ID: x}
    for layer in model.layers:
        args = [activations[ref] for ref in layer.inputs]
        p = layer.params
        if layer.op == "conv2d":
            out = _conv2d(args[0], weights.get(layer.id, "weight"),
                          weights.get(layer.id, "bias"),
                          p["kernel"], p["stride"], p["padding"])
        elif layer.op == "relu":
            out = relu(args[0])
        elif layer.op in ("maxpool", "avgpool"):
            out = _pool(args[0], p["window"], p["stride"], p.get("padding", 0),
                        "max" if layer.op == "maxpool" else "mean")
        elif layer.op == "global_avgpool":
            out = args[0].mean(axis=(0, 1))
        elif layer.op == "flatten":
            out = args[0].reshape(-1)
        elif layer.op == "dense":
            out = dense(args[0], weights.get(layer.id, "weight"),
                        weights.get(layer.id, "bias"))
        elif layer.op == "add":
            out = args[0]
            for other in args[1:]:
                out = out + other
        elif layer.op == "concat":
            out = np.concatenate(args, axis=2)
        elif layer.op == "lrn":
            out = _lrn(args[0], p["k"], p["alpha"], p["beta"], p["n"])
        elif layer.op == "softmax":
            out = softmax(args[0])
        else:
            raise AssertionError(f"unhandled op {layer.op}")
        if not np.all(np.isfinite(out)):
            raise NumericError(f"non-finite activation in layer {layer.id!r}")
        activations[layer.id] = out
    return activations


def infer_features(model: ModelGraph, weights: WeightStore, image) -> FeatureVector:
    """Forward pass returning the pre-softmax output of the final dense layer."""
    if model.output_dim != FEATURE_DIM:
        raise InvalidArgumentError(
            f"feature extraction expects output_dim {FEATURE_DIM}, "
            f"model declares {model.output_dim}")
    activations = run_graph(model, weights, image)
    final = model.layers[-1]
    feature_layer = final.inputs[0] if final.op == "softmax" else final.id
    return FeatureVector(backbone_name=model.name, values=activations[feature_layer])
