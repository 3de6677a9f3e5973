import json
import struct
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent.parent / "fixtures"


def build_container(name, input_shape, layers, output_dim, weights=None) -> bytes:
    """Assemble container bytes directly from the documented layout.

    Kept independent of any writer in the package so it doubles as a format
    oracle.  ``layers`` entries: (id, op, params, inputs, weight_slots).
    ``weights`` maps (layer_id, slot_name) to float arrays.
    """
    weights = weights or {}
    header = json.dumps({
        "name": name,
        "input_shape": list(input_shape),
        "layers": [
            {
                "id": lid,
                "op": op,
                "params": params,
                "inputs": inputs,
                "weight_slots": [[slot, list(shape)] for slot, shape in slots],
            }
            for lid, op, params, inputs, slots in layers
        ],
        "output_dim": output_dim,
    }).encode("utf-8")
    blob = bytearray()
    blob += b"FRMDL001"
    blob += struct.pack("<I", len(header))
    blob += header
    for lid, _op, _params, _inputs, slots in layers:
        for slot, shape in slots:
            arr = np.asarray(weights[(lid, slot)], dtype="<f4").reshape(shape)
            blob += arr.tobytes()
    return bytes(blob)


def identity_dense_model() -> bytes:
    """1000-in/1000-out dense layer with identity weights and zero bias."""
    slots = [("weight", (1000, 1000)), ("bias", (1000,))]
    return build_container(
        "identity", (10, 10, 10),
        [
            ("flat", "flatten", {}, ["input"], []),
            ("out", "dense", {"out_features": 1000}, ["flat"], slots),
        ],
        1000,
        weights={("out", "weight"): np.eye(1000), ("out", "bias"): np.zeros(1000)},
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def tiny_backbone(name: str, seed: int) -> bytes:
    """16x16x3 two-block CNN ending in a 1000-wide dense head."""
    rng = np.random.default_rng(seed)

    def weight(shape, fan_in):
        return rng.normal(scale=1.0 / np.sqrt(fan_in), size=shape)

    layers = [
        ("conv1", "conv2d", {"kernel": 3, "stride": 1, "padding": 1,
                             "out_channels": 4}, ["input"],
         [("weight", (4, 3, 3, 3)), ("bias", (4,))]),
        ("relu1", "relu", {}, ["conv1"], []),
        ("pool1", "maxpool", {"window": 2, "stride": 2}, ["relu1"], []),
        ("conv2", "conv2d", {"kernel": 3, "stride": 1, "padding": 1,
                             "out_channels": 8}, ["pool1"],
         [("weight", (8, 4, 3, 3)), ("bias", (8,))]),
        ("relu2", "relu", {}, ["conv2"], []),
        ("gap", "global_avgpool", {}, ["relu2"], []),
        ("head", "dense", {"out_features": 1000}, ["gap"],
         [("weight", (1000, 8)), ("bias", (1000,))]),
    ]
    weights = {
        ("conv1", "weight"): weight((4, 3, 3, 3), 27),
        ("conv1", "bias"): rng.normal(scale=0.1, size=4),
        ("conv2", "weight"): weight((8, 4, 3, 3), 36),
        ("conv2", "bias"): rng.normal(scale=0.1, size=8),
        ("head", "weight"): weight((1000, 8), 8),
        ("head", "bias"): rng.normal(scale=0.1, size=1000),
    }
    return build_container(name, (16, 16, 3), layers, 1000, weights)


def write_texture_dataset(root: Path) -> dict:
    """Two strongly separated textures plus a regions file covering them."""
    from fuserank.manifest import save_gray_image

    rng = np.random.default_rng(1234)
    source = root / "source"
    source.mkdir(parents=True, exist_ok=True)
    bright = np.clip(0.75 + 0.08 * rng.standard_normal((96, 96)), 0, 1)
    dark = np.clip(0.20 + 0.08 * rng.standard_normal((96, 96)), 0, 1)
    save_gray_image(source / "bright.png", bright)
    save_gray_image(source / "dark.png", dark)
    regions = {
        "regions": [
            {"image": "bright.png", "label": "covid", "x": 0, "y": 0,
             "w": 96, "h": 96},
            {"image": "dark.png", "label": "nofinding", "x": 0, "y": 0,
             "w": 96, "h": 96},
        ]
    }
    regions_path = root / "regions.json"
    regions_path.write_text(json.dumps(regions, indent=1), encoding="utf-8")
    return {"source_dir": str(source), "regions_file": str(regions_path)}


def write_synthetic_config(root: Path, **tweaks) -> Path:
    """Full pipeline config over the texture dataset with tiny backbones."""
    dataset_paths = write_texture_dataset(root)
    models = root / "models"
    models.mkdir(exist_ok=True)
    paths = {}
    for index, name in enumerate(("vgg16", "googlenet", "resnet50")):
        path = models / f"{name}.frmdl"
        path.write_bytes(tiny_backbone(f"tiny-{name}", seed=100 + index))
        paths[name] = str(path)
    config = {
        "dataset": {
            **dataset_paths,
            "patch_size": 16,
            "count_per_class": 24,
            "seed": 7,
        },
        "backbones": {
            "order": ["vgg16", "googlenet", "resnet50"],
            "paths": paths,
        },
        "fusion": {"k": 64},
        "svm": {"C": 0.05, "max_iterations": 2000,
                "gradient_tolerance": 1e-4, "initial_step": 1.0},
        "split": {"train_fraction": 0.75},
        "output_dir": str(root / "out"),
    }
    for key, value in tweaks.items():
        section, _, field = key.partition(".")
        if field:
            config[section][field] = value
        else:
            config[section] = value
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    return config_path
