"""FRMDL001 container writer (and a reader for round-trip checks).

Layout: ASCII magic ``FRMDL001``; u32 little-endian header length; UTF-8
JSON header ``{name, input_shape, layers[], output_dim}``; then, for each
layer in stored order and each weight slot in declared order, raw
little-endian binary32 values in row-major declared-shape order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FRMDL001"


class GraphBuilder:
    """Accumulates layers and weight blobs in execution order."""

    def __init__(self):
        self.layers: list[dict] = []
        self.weights: dict[tuple[str, str], np.ndarray] = {}
        self._ids: set[str] = set()

    def add(self, layer_id: str, op: str, params: dict, inputs: list[str],
            slots: dict[str, np.ndarray] | None = None) -> str:
        if layer_id in self._ids:
            raise ValueError(f"duplicate layer id {layer_id!r}")
        self._ids.add(layer_id)
        slots = slots or {}
        weight_slots = []
        # conv/dense slot order is fixed: weight, then bias
        for slot_name in ("weight", "bias"):
            if slot_name in slots:
                arr = np.ascontiguousarray(slots[slot_name], dtype=np.float32)
                weight_slots.append([slot_name, list(arr.shape)])
                self.weights[(layer_id, slot_name)] = arr
        self.layers.append({
            "id": layer_id,
            "op": op,
            "params": params,
            "inputs": inputs,
            "weight_slots": weight_slots,
        })
        return layer_id

    def op_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for layer in self.layers:
            counts[layer["op"]] = counts.get(layer["op"], 0) + 1
        return counts


def serialize(name: str, input_shape, layers: list[dict], output_dim: int,
              weights: dict[tuple[str, str], np.ndarray]) -> bytes:
    header = json.dumps({
        "name": name,
        "input_shape": list(input_shape),
        "layers": layers,
        "output_dim": output_dim,
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(header))
    blob += header
    for layer in layers:
        for slot_name, shape in layer["weight_slots"]:
            arr = np.ascontiguousarray(weights[(layer["id"], slot_name)],
                                       dtype="<f4")
            if list(arr.shape) != list(shape):
                raise ValueError(
                    f"slot {layer['id']}/{slot_name}: array {arr.shape} "
                    f"!= declared {shape}")
            blob += arr.tobytes()
    return bytes(blob)


def write_container(path, name: str, input_shape, builder: GraphBuilder,
                    output_dim: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize(name, input_shape, builder.layers, output_dim,
                               builder.weights))
    return path


def read_header(path) -> dict:
    """Parse just the JSON header back, for round-trip validation."""
    blob = Path(path).read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"bad magic in {path}")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    return json.loads(blob[start:start + header_len].decode("utf-8"))
