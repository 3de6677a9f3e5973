"""Seeded reference inputs and the sidecar JSON written next to containers.

Inputs are uniform in [0, 1), drawn from a SplitMix64 stream (top 53 bits
of each output mapped to a unit float) and filled in row-major
height/width/channel order, one image after the other.  Any consumer can
regenerate them from ``input_seed`` alone; the arrays are also stored
verbatim so verification never depends on this package.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53


def seeded_inputs(input_seed: int, shape, count: int) -> np.ndarray:
    """``count`` channel-last images drawn from one continuing stream."""
    h, w, c = shape
    rng = SplitMix64(input_seed)
    flat = np.fromiter((rng.next_unit() for _ in range(count * h * w * c)),
                       dtype=np.float64, count=count * h * w * c)
    return flat.reshape(count, h, w, c)


def write_sidecar(path, input_shape, input_seed: int, inputs: np.ndarray,
                  outputs: np.ndarray, per_layer: dict | None = None,
                  activation_shapes: dict | None = None) -> Path:
    payload = {
        "input_shape": list(input_shape),
        "input_seed": input_seed,
        "count": int(inputs.shape[0]),
        "inputs": [img.reshape(-1).tolist() for img in inputs],
        "outputs": [out.tolist() for out in np.asarray(outputs, dtype=np.float64)],
    }
    if per_layer is not None:
        payload["per_layer"] = per_layer
        payload["activation_shapes"] = activation_shapes or {}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return path
