"""Small seeded random-weight models plus per-layer reference activations.

A depth-``d`` model is ``d - 1`` blocks of conv(3x3, pad 1) -> relu ->
maxpool(2) over a 16x16x3 input, then flatten -> dense(1000); ``depth=1``
is the bare flatten -> dense head.  Variants splice a cross-channel
normalization, a two-branch residual add, or a two-branch concatenation
after the first block so every graph op has a torch-verified fixture.

The same layer list drives both the container writer and an independent
torch executor, so reference activations exercise torch's kernels, not the
consumer runtime's.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .container import GraphBuilder, serialize
from .sidecar import seeded_inputs, write_sidecar

INPUT_SHAPE = (16, 16, 3)
OUTPUT_DIM = 1000
MAX_DEPTH = 5
VARIANTS = ("plain", "lrn", "residual", "inception")

_BLOCK_CHANNELS = (4, 8, 12, 16)
_LRN_PARAMS = {"k": 2.0, "alpha": 0.01, "beta": 0.75, "n": 5}


def _build_layers(seed: int, depth: int, variant: str) -> GraphBuilder:
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [1, {MAX_DEPTH}]")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant != "plain" and depth < 2:
        raise ValueError(f"variant {variant!r} needs at least one conv block")

    rng = np.random.default_rng(seed)

    def conv_weights(c_out, c_in, k):
        fan_in = c_in * k * k
        return {
            "weight": rng.normal(scale=1.0 / np.sqrt(fan_in),
                                 size=(c_out, c_in, k, k)),
            "bias": rng.normal(scale=0.1, size=c_out),
        }

    g = GraphBuilder()
    prev = "input"
    channels = INPUT_SHAPE[2]
    spatial = INPUT_SHAPE[0]
    for block in range(1, depth):
        c_out = _BLOCK_CHANNELS[block - 1]
        prev = g.add(f"conv{block}", "conv2d",
                     {"kernel": 3, "stride": 1, "padding": 1,
                      "out_channels": c_out},
                     [prev], conv_weights(c_out, channels, 3))
        prev = g.add(f"relu{block}", "relu", {}, [prev])
        if block == 1 and variant == "lrn":
            prev = g.add("norm1", "lrn", dict(_LRN_PARAMS), [prev])
        prev = g.add(f"pool{block}", "maxpool", {"window": 2, "stride": 2},
                     [prev])
        channels = c_out
        spatial //= 2
        if block == 1 and variant == "residual":
            a = g.add("branch_a", "conv2d",
                      {"kernel": 3, "stride": 1, "padding": 1,
                       "out_channels": channels},
                      [prev], conv_weights(channels, channels, 3))
            b = g.add("branch_b", "conv2d",
                      {"kernel": 3, "stride": 1, "padding": 1,
                       "out_channels": channels},
                      [prev], conv_weights(channels, channels, 3))
            merged = g.add("merge", "add", {}, [a, b])
            prev = g.add("relu_merge", "relu", {}, [merged])
        elif block == 1 and variant == "inception":
            a = g.add("branch_a", "conv2d",
                      {"kernel": 1, "stride": 1, "padding": 0,
                       "out_channels": 4},
                      [prev], conv_weights(4, channels, 1))
            b = g.add("branch_b", "conv2d",
                      {"kernel": 3, "stride": 1, "padding": 1,
                       "out_channels": 4},
                      [prev], conv_weights(4, channels, 3))
            merged = g.add("merge", "concat", {}, [a, b])
            prev = g.add("relu_merge", "relu", {}, [merged])
            channels = 8

    flat = spatial * spatial * channels
    prev = g.add("flatten", "flatten", {}, [prev])
    g.add("head", "dense", {"out_features": OUTPUT_DIM}, [prev], {
        "weight": rng.normal(scale=1.0 / np.sqrt(flat), size=(OUTPUT_DIM, flat)),
        "bias": rng.normal(scale=0.1, size=OUTPUT_DIM),
    })
    return g


def torch_forward(builder: GraphBuilder, image_hwc: np.ndarray) -> dict[str, np.ndarray]:
    """Execute the layer list with torch ops; activations come back channel-last."""
    tensors: dict[str, torch.Tensor] = {
        "input": torch.from_numpy(
            np.ascontiguousarray(image_hwc.transpose(2, 0, 1))[None]
        ).to(torch.float32)
    }

    def weight(layer, slot):
        return torch.from_numpy(
            builder.weights[(layer["id"], slot)]).to(torch.float32)

    with torch.no_grad():
        for layer in builder.layers:
            args = [tensors[name] for name in layer["inputs"]]
            op, p = layer["op"], layer["params"]
            if op == "conv2d":
                out = F.conv2d(args[0], weight(layer, "weight"),
                               weight(layer, "bias"),
                               stride=p["stride"], padding=p["padding"])
            elif op == "relu":
                out = F.relu(args[0])
            elif op == "maxpool":
                out = F.max_pool2d(args[0], p["window"], p["stride"],
                                   p.get("padding", 0))
            elif op == "avgpool":
                out = F.avg_pool2d(args[0], p["window"], p["stride"],
                                   p.get("padding", 0))
            elif op == "lrn":
                out = F.local_response_norm(args[0], p["n"], alpha=p["alpha"],
                                            beta=p["beta"], k=p["k"])
            elif op == "add":
                out = args[0]
                for other in args[1:]:
                    out = out + other
            elif op == "concat":
                out = torch.cat(args, dim=1)
            elif op == "global_avgpool":
                out = args[0].mean(dim=(2, 3))
            elif op == "flatten":
                out = args[0].permute(0, 2, 3, 1).reshape(1, -1)
            elif op == "dense":
                out = F.linear(args[0], weight(layer, "weight"),
                               weight(layer, "bias"))
            else:
                raise ValueError(f"torch executor cannot run op {op!r}")
            tensors[layer["id"]] = out

    activations = {}
    for layer in builder.layers:
        t = tensors[layer["id"]]
        if t.dim() == 4:
            activations[layer["id"]] = t[0].permute(1, 2, 0).numpy().astype(np.float64)
        else:
            activations[layer["id"]] = t[0].numpy().astype(np.float64)
    return activations


def make_test_model(seed: int, depth: int = 3, variant: str = "plain",
                    sidecar_count: int = 10):
    """Container bytes plus a reference payload for the fixed seeded inputs."""
    builder = _build_layers(seed, depth, variant)
    name = f"testmodel-seed{seed}-depth{depth}-{variant}"
    container = serialize(name, INPUT_SHAPE, builder.layers, OUTPUT_DIM,
                          builder.weights)

    input_seed = seed + 1_000_000
    inputs = seeded_inputs(input_seed, INPUT_SHAPE, sidecar_count)
    outputs = []
    per_layer = {}
    shapes = {}
    for index, image in enumerate(inputs):
        activations = torch_forward(builder, image)
        outputs.append(activations["head"])
        if index == 0:
            for layer_id, act in activations.items():
                per_layer[layer_id] = act.reshape(-1).tolist()
                shapes[layer_id] = list(act.shape)
    refs = {
        "input_shape": INPUT_SHAPE,
        "input_seed": input_seed,
        "inputs": inputs,
        "outputs": np.stack(outputs),
        "per_layer": per_layer,
        "activation_shapes": shapes,
    }
    return container, refs


def write_test_model(out_path, seed: int, depth: int = 3,
                     variant: str = "plain") -> tuple[Path, Path]:
    container, refs = make_test_model(seed, depth, variant)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(container)
    sidecar_path = out_path.with_suffix(out_path.suffix + ".refs.json")
    write_sidecar(sidecar_path, refs["input_shape"], refs["input_seed"],
                  refs["inputs"], refs["outputs"], per_layer=refs["per_layer"],
                  activation_shapes=refs["activation_shapes"])
    return out_path, sidecar_path
