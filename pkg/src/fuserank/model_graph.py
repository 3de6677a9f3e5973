"""Model container parsing and layer-graph validation.

Container layout (bit-exact):

* bytes 0-7: ASCII magic ``FRMDL001``
* unsigned 32-bit little-endian header length
* UTF-8 JSON header ``{name, input_shape, layers[], output_dim}`` where each
  layer lists ``id, op, params, inputs, weight_slots [(name, shape), ...]``
* for each layer in stored order and each slot in declared order: raw
  little-endian IEEE-754 binary32 values in row-major declared-shape order,
  with no padding between blobs.

Layer geometry uses floor output sizes (trailing rows that do not fit a
stride step are cropped), which is what the stride-2 stages of the real
backbones require.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GraphError
from .nn_ops import conv_output_size_floor

MAGIC = b"FRMDL001"
INPUT_ID = "input"

OPS = frozenset({
    "conv2d", "relu", "maxpool", "avgpool", "global_avgpool",
    "dense", "add", "concat", "flatten", "lrn", "softmax",
})

# ops that carry weights, with their fixed slot names
_WEIGHTED_OPS = ("conv2d", "dense")
_SINGLE_INPUT_OPS = frozenset(OPS - {"add", "concat"})


@dataclass(frozen=True)
class LayerSpec:
    id: str
    op: str
    params: dict
    inputs: list[str]
    weight_slots: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)


@dataclass(frozen=True)
class ModelGraph:
    name: str
    input_shape: tuple[int, int, int]
    layers: list[LayerSpec]
    output_dim: int


class WeightStore:
    """Per-slot parameter arrays, converted to float64 once at load."""

    def __init__(self, arrays: dict[tuple[str, str], np.ndarray]):
        self._arrays = arrays

    def get(self, layer_id: str, slot: str) -> np.ndarray:
        return self._arrays[(layer_id, slot)]

    def __len__(self) -> int:
        return len(self._arrays)


def _parse_header(payload: dict) -> ModelGraph:
    try:
        name = payload["name"]
        input_shape = tuple(int(v) for v in payload["input_shape"])
        output_dim = int(payload["output_dim"])
        layers = []
        for entry in payload["layers"]:
            layers.append(LayerSpec(
                id=str(entry["id"]),
                op=str(entry["op"]),
                params=dict(entry.get("params", {})),
                inputs=[str(v) for v in entry["inputs"]],
                weight_slots=[
                    (str(slot_name), tuple(int(d) for d in shape))
                    for slot_name, shape in entry.get("weight_slots", [])
                ],
            ))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed container header: {exc}") from exc
    if len(input_shape) != 3:
        raise FormatError("input_shape must have three components")
    return ModelGraph(name=name, input_shape=input_shape, layers=layers,
                      output_dim=output_dim)


def read_container(path) -> tuple[ModelGraph, WeightStore]:
    """Parse a container file; structural validation is the caller's job."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4:
        raise FormatError("container too short for magic and header length")
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    offset = len(MAGIC) + 4
    if offset + header_len > len(blob):
        raise FormatError("container truncated inside the JSON header")
    try:
        payload = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"container header is not valid JSON: {exc}") from exc
    graph = _parse_header(payload)

    offset += header_len
    arrays: dict[tuple[str, str], np.ndarray] = {}
    for layer in graph.layers:
        for slot_name, shape in layer.weight_slots:
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = count * 4
            if offset + nbytes > len(blob):
                raise FormatError(
                    f"weights truncated in layer {layer.id!r} slot {slot_name!r}")
            values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            if not np.all(np.isfinite(values)):
                raise FormatError(
                    f"non-finite weight in layer {layer.id!r} slot {slot_name!r}")
            arrays[(layer.id, slot_name)] = values.astype(np.float64).reshape(shape)
            offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after weights")
    return graph, WeightStore(arrays)


def _pool_out(shape, params):
    window, stride = params["window"], params["stride"]
    padding = params.get("padding", 0)
    oh = conv_output_size_floor(shape[0], padding, window, stride)
    ow = conv_output_size_floor(shape[1], padding, window, stride)
    return (oh, ow, shape[2])


def infer_shapes(model: ModelGraph) -> dict[str, tuple[int, ...]]:
    """Propagate activation shapes; raises GraphError on the first failure.

    Use :func:`validate_graph` for a full diagnostic listing.
    """
    diagnostics: list[str] = []
    shapes = _propagate(model, diagnostics)
    if diagnostics:
        raise GraphError("; ".join(diagnostics))
    return shapes


def _check_params(layer: LayerSpec, diagnostics: list[str]) -> bool:
    p = layer.params
    ok = True

    def need(keys):
        nonlocal ok
        for key in keys:
            if key not in p:
                diagnostics.append(f"layer {layer.id!r}: missing param {key!r}")
                ok = False

    if layer.op == "conv2d":
        need(("kernel", "stride", "padding", "out_channels"))
        if ok and (p["kernel"] < 1 or p["stride"] < 1 or p["padding"] < 0
                   or p["out_channels"] < 1):
            diagnostics.append(f"layer {layer.id!r}: invalid conv geometry {p}")
            ok = False
    elif layer.op in ("maxpool", "avgpool"):
        need(("window", "stride"))
        if ok and (p["window"] < 1 or p["stride"] < 1 or p.get("padding", 0) < 0
                   or p.get("padding", 0) > p["window"] // 2):
            diagnostics.append(f"layer {layer.id!r}: invalid pool geometry {p}")
            ok = False
    elif layer.op == "dense":
        need(("out_features",))
        if ok and p["out_features"] < 1:
            diagnostics.append(f"layer {layer.id!r}: out_features must be >= 1")
            ok = False
    elif layer.op == "lrn":
        need(("k", "alpha", "beta", "n"))
        if ok and (p["n"] < 1 or not all(
                np.isfinite(p[key]) for key in ("k", "alpha", "beta"))):
            diagnostics.append(f"layer {layer.id!r}: invalid lrn constants {p}")
            ok = False
    return ok


def _expected_slots(layer: LayerSpec, in_shape) -> list[tuple[str, tuple[int, ...]]]:
    if layer.op == "conv2d":
        k = layer.params["kernel"]
        c_out = layer.params["out_channels"]
        return [("weight", (c_out, in_shape[2], k, k)), ("bias", (c_out,))]
    if layer.op == "dense":
        out = layer.params["out_features"]
        return [("weight", (out, in_shape[0])), ("bias", (out,))]
    return []


def _propagate(model: ModelGraph, diagnostics: list[str]) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {INPUT_ID: model.input_shape}
    seen: set[str] = set()
    for index, layer in enumerate(model.layers):
        if not layer.id or layer.id == INPUT_ID:
            diagnostics.append(f"layer #{index}: reserved or empty id {layer.id!r}")
            continue
        if layer.id in seen:
            diagnostics.append(f"layer {layer.id!r}: duplicate id")
            continue
        seen.add(layer.id)
        if layer.op not in OPS:
            diagnostics.append(f"layer {layer.id!r}: unknown op {layer.op!r}")
            continue
        if layer.op in _SINGLE_INPUT_OPS and len(layer.inputs) != 1:
            diagnostics.append(
                f"layer {layer.id!r}: op {layer.op} takes exactly one input")
            continue
        if layer.op not in _SINGLE_INPUT_OPS and len(layer.inputs) < 2:
            diagnostics.append(
                f"layer {layer.id!r}: op {layer.op} needs at least two inputs")
            continue
        in_shapes = []
        for ref in layer.inputs:
            if ref not in shapes:
                diagnostics.append(
                    f"layer {layer.id!r}: input {ref!r} is not an earlier layer")
            else:
                in_shapes.append(shapes[ref])
        if len(in_shapes) != len(layer.inputs):
            continue
        if not _check_params(layer, diagnostics):
            continue
        if layer.op not in _WEIGHTED_OPS and layer.weight_slots:
            diagnostics.append(f"layer {layer.id!r}: op {layer.op} carries no weights")
            continue

        out_shape = _out_shape(layer, in_shapes, diagnostics)
        if out_shape is None:
            continue
        if layer.op in _WEIGHTED_OPS:
            expected = _expected_slots(layer, in_shapes[0])
            declared = list(layer.weight_slots)
            if declared != expected:
                diagnostics.append(
                    f"layer {layer.id!r}: weight slots {declared} do not match "
                    f"geometry {expected}")
                continue
        shapes[layer.id] = out_shape
    return shapes


def _out_shape(layer, in_shapes, diagnostics):
    op = layer.op
    s = in_shapes[0]
    try:
        if op == "conv2d":
            if len(s) != 3:
                raise ValueError("conv2d needs a 3-D input")
            p = layer.params
            oh = conv_output_size_floor(s[0], p["padding"], p["kernel"], p["stride"])
            ow = conv_output_size_floor(s[1], p["padding"], p["kernel"], p["stride"])
            return (oh, ow, p["out_channels"])
        if op in ("maxpool", "avgpool"):
            if len(s) != 3:
                raise ValueError("pooling needs a 3-D input")
            return _pool_out(s, layer.params)
        if op == "global_avgpool":
            if len(s) != 3:
                raise ValueError("global_avgpool needs a 3-D input")
            return (s[2],)
        if op == "flatten":
            if len(s) != 3:
                raise ValueError("flatten needs a 3-D input")
            return (s[0] * s[1] * s[2],)
        if op == "dense":
            if len(s) != 1:
                raise ValueError("dense needs a flattened 1-D input")
            return (layer.params["out_features"],)
        if op == "softmax":
            if len(s) != 1:
                raise ValueError("softmax needs a 1-D input")
            return s
        if op in ("relu", "lrn"):
            if op == "lrn" and len(s) != 3:
                raise ValueError("lrn needs a 3-D input")
            return s
        if op == "add":
            if any(other != s for other in in_shapes[1:]):
                raise ValueError(f"add operands differ: {in_shapes}")
            return s
        if op == "concat":
            if any(len(other) != 3 for other in in_shapes):
                raise ValueError("concat needs 3-D inputs")
            if any(other[:2] != s[:2] for other in in_shapes[1:]):
                raise ValueError(f"concat spatial dims differ: {in_shapes}")
            return (s[0], s[1], sum(other[2] for other in in_shapes))
    except ValueError as exc:
        diagnostics.append(f"layer {layer.id!r}: {exc}")
        return None
    raise AssertionError(f"unhandled op {op}")


def validate_graph(model: ModelGraph) -> list[str]:
    """All structural diagnostics; an empty list means the graph is valid."""
    diagnostics: list[str] = []
    if any(v < 1 for v in model.input_shape):
        diagnostics.append(f"input_shape {model.input_shape} has components < 1")
    if not model.layers:
        diagnostics.append("model has no layers")
        return diagnostics
    _propagate(model, diagnostics)

    consumed: set[str] = set()
    for layer in model.layers:
        consumed.update(layer.inputs)
    dangling = [layer.id for layer in model.layers if layer.id not in consumed]
    if dangling != [model.layers[-1].id]:
        diagnostics.append(
            f"expected exactly the last layer to be unconsumed, found {dangling}")

    final = model.layers[-1]
    feature_layer = final
    if final.op == "softmax":
        producer = {layer.id: layer for layer in model.layers}
        feature_layer = producer.get(final.inputs[0]) if final.inputs else None
    if feature_layer is None or feature_layer.op != "dense":
        diagnostics.append("output must be a dense layer (optionally under softmax)")
    else:
        width = feature_layer.params.get("out_features")
        if width is not None and width != model.output_dim:
            diagnostics.append(
                f"output_dim {model.output_dim} != final dense width {width}")
    return diagnostics


def load_model(path) -> tuple[ModelGraph, WeightStore]:
    """Read and fully validate a container; every invariant is enforced."""
    graph, weights = read_container(path)
    diagnostics = validate_graph(graph)
    if diagnostics:
        raise GraphError("; ".join(diagnostics))
    return graph, weights
