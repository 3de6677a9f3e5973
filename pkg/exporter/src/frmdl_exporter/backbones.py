"""Convert torchvision VGG-16 / ResNet-50 / GoogLeNet models into containers.

Batch normalization is folded into the preceding convolution, dropout
layers are dropped (inference identity), auxiliary heads are never built,
and the classic ceil-mode pools of GoogLeNet are exported with floor
geometry (the runtime's output-size rule), with reference activations
computed on a floor-mode copy so container and sidecar always agree.

Weight layouts: convolutions keep torch's (C_out, C_in, K, K); the first
fully connected layer after a spatial flatten has its input dimension
permuted from torch's channel-major order to the runtime's channel-last
row-major order.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import ExportError
from .container import GraphBuilder, write_container
from .fold import fold_torch
from .sidecar import seeded_inputs, write_sidecar

INPUT_SHAPE = (224, 224, 3)
OUTPUT_DIM = 1000
SIDECAR_COUNT = 10

BACKBONES = ("vgg16", "resnet50", "googlenet")

# op -> count for a faithful conversion; anything else is a wrong checkpoint
EXPECTED_INVENTORY = {
    "vgg16": {"conv2d": 13, "relu": 15, "maxpool": 5, "flatten": 1, "dense": 3},
    "resnet50": {"conv2d": 53, "relu": 49, "maxpool": 1, "add": 16,
                 "global_avgpool": 1, "dense": 1},
    "googlenet": {"conv2d": 57, "relu": 57, "maxpool": 13, "concat": 9,
                  "global_avgpool": 1, "dense": 1},
}

# torchvision GoogLeNet/ResNet batchnorm backbones cannot run unfolded: the
# runtime has no batchnorm op.
_BN_BACKBONES = ("resnet50", "googlenet")


@dataclass(frozen=True)
class ExportRecipe:
    backbone: str
    checkpoint: str = "random"
    fold_batchnorm: bool = True
    strip_dropout: bool = True
    init_seed: int = 0
    input_seed: int = 2024

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ExportError(f"unknown backbone {self.backbone!r}")
        if self.backbone in _BN_BACKBONES and not self.fold_batchnorm:
            raise ExportError(
                f"{self.backbone} requires fold_batchnorm: the runtime op set "
                "has no batchnorm layer")
        if not self.strip_dropout:
            raise ExportError("dropout layers must be stripped for inference")

    @property
    def container_name(self) -> str:
        return f"{self.backbone}[{self.checkpoint}]"


def build_source_model(recipe: ExportRecipe) -> nn.Module:
    import torchvision

    torch.manual_seed(recipe.init_seed)
    if recipe.backbone == "vgg16":
        model = torchvision.models.vgg16(weights=None)
    elif recipe.backbone == "resnet50":
        model = torchvision.models.resnet50(weights=None)
    else:
        model = torchvision.models.googlenet(
            weights=None, aux_logits=False, init_weights=True,
            transform_input=False)
    if recipe.checkpoint != "random":
        state = torch.load(recipe.checkpoint, map_location="cpu",
                           weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def _conv_params(conv: nn.Conv2d) -> dict:
    kh, kw = conv.kernel_size
    sh, sw = conv.stride
    ph, pw = conv.padding
    if kh != kw or sh != sw or ph != pw:
        raise ExportError(f"non-square conv geometry {conv}")
    return {"kernel": kh, "stride": sh, "padding": ph,
            "out_channels": conv.out_channels}


def _pool_params(pool: nn.MaxPool2d) -> dict:
    def pair(v):
        return (v, v) if isinstance(v, int) else tuple(v)

    kh, kw = pair(pool.kernel_size)
    sh, sw = pair(pool.stride)
    ph, pw = pair(pool.padding)
    if kh != kw or sh != sw or ph != pw:
        raise ExportError(f"non-square pool geometry {pool}")
    return {"window": kh, "stride": sh, "padding": ph}


class _Emitter:
    """Shared emission helpers over a GraphBuilder."""

    def __init__(self):
        self.g = GraphBuilder()

    def conv(self, layer_id: str, input_id: str, conv: nn.Conv2d,
             bn: nn.BatchNorm2d | None = None) -> str:
        if bn is not None:
            weight, bias = fold_torch(conv, bn)
        else:
            weight = conv.weight.detach().numpy()
            bias = (conv.bias.detach().numpy() if conv.bias is not None
                    else np.zeros(conv.out_channels, dtype=np.float32))
        return self.g.add(layer_id, "conv2d", _conv_params(conv), [input_id],
                          {"weight": weight, "bias": bias})

    def relu(self, layer_id: str, input_id: str) -> str:
        return self.g.add(layer_id, "relu", {}, [input_id])

    def maxpool(self, layer_id: str, input_id: str, pool: nn.MaxPool2d) -> str:
        return self.g.add(layer_id, "maxpool", _pool_params(pool), [input_id])

    def dense(self, layer_id: str, input_id: str, linear: nn.Linear,
              spatial: tuple[int, int, int] | None = None) -> str:
        weight = linear.weight.detach().numpy()
        if spatial is not None:
            # torch flattens (C, H, W); the runtime flattens (H, W, C)
            c, h, w = spatial
            weight = (weight.reshape(weight.shape[0], c, h, w)
                      .transpose(0, 2, 3, 1)
                      .reshape(weight.shape[0], c * h * w))
        return self.g.add(layer_id, "dense",
                          {"out_features": linear.out_features}, [input_id],
                          {"weight": weight, "bias": linear.bias.detach().numpy()})


def _convert_vgg16(model) -> GraphBuilder:
    em = _Emitter()
    prev = "input"
    conv_i = relu_i = pool_i = 0
    for module in model.features:
        if isinstance(module, nn.Conv2d):
            conv_i += 1
            prev = em.conv(f"conv{conv_i}", prev, module)
        elif isinstance(module, nn.ReLU):
            relu_i += 1
            prev = em.relu(f"relu{relu_i}", prev)
        elif isinstance(module, nn.MaxPool2d):
            pool_i += 1
            prev = em.maxpool(f"pool{pool_i}", prev, module)
        else:
            raise ExportError(f"unexpected feature layer {type(module).__name__}")
    # the adaptive 7x7 average pool is the identity at 224x224 input
    prev = em.g.add("flatten", "flatten", {}, [prev])
    spatial = (512, 7, 7)
    fc_i = 0
    for module in model.classifier:
        if isinstance(module, nn.Linear):
            fc_i += 1
            prev = em.dense(f"fc{fc_i}", prev, module, spatial=spatial)
            spatial = None
        elif isinstance(module, nn.ReLU):
            relu_i += 1
            prev = em.relu(f"relu{relu_i}", prev)
        elif isinstance(module, nn.Dropout):
            continue
        else:
            raise ExportError(f"unexpected classifier layer {type(module).__name__}")
    return em.g


def _convert_resnet50(model) -> GraphBuilder:
    em = _Emitter()
    prev = em.conv("conv1", "input", model.conv1, model.bn1)
    prev = em.relu("relu1", prev)
    prev = em.maxpool("pool1", prev, model.maxpool)
    relu_i = 1
    for stage_index, stage in enumerate(
            (model.layer1, model.layer2, model.layer3, model.layer4), start=1):
        for block_index, block in enumerate(stage):
            tag = f"s{stage_index}b{block_index}"
            entry = prev
            out = em.conv(f"{tag}_conv1", entry, block.conv1, block.bn1)
            relu_i += 1
            out = em.relu(f"relu{relu_i}", out)
            out = em.conv(f"{tag}_conv2", out, block.conv2, block.bn2)
            relu_i += 1
            out = em.relu(f"relu{relu_i}", out)
            out = em.conv(f"{tag}_conv3", out, block.conv3, block.bn3)
            if block.downsample is not None:
                shortcut = em.conv(f"{tag}_down", entry,
                                   block.downsample[0], block.downsample[1])
            else:
                shortcut = entry
            out = em.g.add(f"{tag}_add", "add", {}, [out, shortcut])
            relu_i += 1
            prev = em.relu(f"relu{relu_i}", out)
    prev = em.g.add("gap", "global_avgpool", {}, [prev])
    em.dense("fc", prev, model.fc)
    return em.g


def _convert_googlenet(model) -> GraphBuilder:
    em = _Emitter()
    relu_i = 0

    def basic_conv(layer_id: str, input_id: str, block) -> str:
        nonlocal relu_i
        out = em.conv(layer_id, input_id, block.conv, block.bn)
        relu_i += 1
        return em.relu(f"relu{relu_i}", out)

    prev = basic_conv("conv1", "input", model.conv1)
    prev = em.maxpool("pool1", prev, model.maxpool1)
    prev = basic_conv("conv2", prev, model.conv2)
    prev = basic_conv("conv3", prev, model.conv3)
    prev = em.maxpool("pool2", prev, model.maxpool2)

    stages = [
        ("3a", model.inception3a), ("3b", model.inception3b), ("pool3", None),
        ("4a", model.inception4a), ("4b", model.inception4b),
        ("4c", model.inception4c), ("4d", model.inception4d),
        ("4e", model.inception4e), ("pool4", None),
        ("5a", model.inception5a), ("5b", model.inception5b),
    ]
    for name, inception in stages:
        if inception is None:
            pool = model.maxpool3 if name == "pool3" else model.maxpool4
            prev = em.maxpool(name, prev, pool)
            continue
        b1 = basic_conv(f"i{name}_b1", prev, inception.branch1)
        b2 = basic_conv(f"i{name}_b2a", prev, inception.branch2[0])
        b2 = basic_conv(f"i{name}_b2b", b2, inception.branch2[1])
        b3 = basic_conv(f"i{name}_b3a", prev, inception.branch3[0])
        b3 = basic_conv(f"i{name}_b3b", b3, inception.branch3[1])
        b4 = em.maxpool(f"i{name}_b4pool", prev, inception.branch4[0])
        b4 = basic_conv(f"i{name}_b4", b4, inception.branch4[1])
        prev = em.g.add(f"i{name}_concat", "concat", {}, [b1, b2, b3, b4])
    prev = em.g.add("gap", "global_avgpool", {}, [prev])
    em.dense("fc", prev, model.fc)
    return em.g


_CONVERTERS = {
    "vgg16": _convert_vgg16,
    "resnet50": _convert_resnet50,
    "googlenet": _convert_googlenet,
}


def validate_inventory(backbone: str, builder: GraphBuilder) -> None:
    expected = EXPECTED_INVENTORY[backbone]
    actual = builder.op_counts()
    if actual != expected:
        unexpected = {op: count for op, count in actual.items()
                      if expected.get(op) != count}
        raise ExportError(
            f"{backbone}: layer inventory mismatch, unexpected {unexpected}, "
            f"expected {expected}")


def reference_model(recipe: ExportRecipe, model: nn.Module) -> nn.Module:
    """Torch model whose forward matches the exported graph exactly."""
    reference = copy.deepcopy(model).eval()
    if recipe.backbone == "googlenet":
        for module in reference.modules():
            if isinstance(module, nn.MaxPool2d):
                module.ceil_mode = False
    return reference


def reference_outputs(reference: nn.Module, inputs: np.ndarray) -> np.ndarray:
    outputs = []
    with torch.no_grad():
        for image in inputs:
            tensor = torch.from_numpy(
                image.transpose(2, 0, 1)[None]).to(torch.float32)
            outputs.append(reference(tensor).numpy()[0].astype(np.float64))
    return np.stack(outputs)


def export_backbone(recipe: ExportRecipe, out_path,
                    sidecar_path=None) -> tuple[Path, Path]:
    model = build_source_model(recipe)
    builder = _CONVERTERS[recipe.backbone](model)
    validate_inventory(recipe.backbone, builder)
    container = write_container(out_path, recipe.container_name, INPUT_SHAPE,
                                builder, OUTPUT_DIM)
    inputs = seeded_inputs(recipe.input_seed, INPUT_SHAPE, SIDECAR_COUNT)
    outputs = reference_outputs(reference_model(recipe, model), inputs)
    if sidecar_path is None:
        sidecar_path = container.with_suffix(container.suffix + ".refs.json")
    sidecar = write_sidecar(sidecar_path, INPUT_SHAPE, recipe.input_seed,
                            inputs, outputs)
    return container, sidecar
