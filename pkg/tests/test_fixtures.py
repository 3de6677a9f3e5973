"""Checks against the committed model fixtures.

The reference activations were produced by an independent framework when
the fixtures were generated; these tests only read the committed files, so
the suite runs without that toolchain installed.
"""
import hashlib
import json

import numpy as np
import pytest

from fuserank.inference import infer_features, run_graph
from fuserank.model_graph import load_model, validate_graph

GOLDEN_SHA256 = "e4b4f480552618ed76057a3c7bd6f6cb6e1473824f0865e5c35d7741c73529f5"

MODEL_FIXTURES = [
    "models/golden_seed0_depth3.frmdl",
    "models/lrn_seed1.frmdl",
    "models/residual_seed2.frmdl",
    "models/inception_seed3.frmdl",
    "e2e/models/vgg16.frmdl",
    "e2e/models/googlenet.frmdl",
    "e2e/models/resnet50.frmdl",
]


def load_refs(path):
    payload = json.loads(path.read_text())
    shape = tuple(payload["input_shape"])
    inputs = [np.asarray(flat).reshape(shape) for flat in payload["inputs"]]
    return payload, inputs


def test_golden_fixture_is_the_checksummed_artifact(fixtures_dir):
    blob = (fixtures_dir / "models/golden_seed0_depth3.frmdl").read_bytes()
    assert hashlib.sha256(blob).hexdigest() == GOLDEN_SHA256


def test_golden_fixture_structure(fixtures_dir):
    graph, _ = load_model(fixtures_dir / "models/golden_seed0_depth3.frmdl")
    assert [layer.op for layer in graph.layers] == [
        "conv2d", "relu", "maxpool", "conv2d", "relu", "maxpool",
        "flatten", "dense"]
    assert graph.input_shape == (16, 16, 3)
    assert graph.output_dim == 1000


@pytest.mark.parametrize("name", MODEL_FIXTURES)
def test_fixture_graphs_validate(fixtures_dir, name):
    graph, _ = load_model(fixtures_dir / name)
    assert validate_graph(graph) == []


@pytest.mark.parametrize("name", MODEL_FIXTURES)
def test_per_layer_reference_activations(fixtures_dir, name):
    path = fixtures_dir / name
    graph, weights = load_model(path)
    payload, inputs = load_refs(path.with_suffix(".frmdl.refs.json"))
    activations = run_graph(graph, weights, inputs[0])
    assert payload["per_layer"], "fixture carries no per-layer references"
    for layer_id, flat in payload["per_layer"].items():
        expected = np.asarray(flat).reshape(payload["activation_shapes"][layer_id])
        worst = float(np.abs(activations[layer_id] - expected).max())
        assert worst < 1e-3, (layer_id, worst)


@pytest.mark.parametrize("name", MODEL_FIXTURES)
def test_reference_outputs(fixtures_dir, name):
    path = fixtures_dir / name
    graph, weights = load_model(path)
    payload, inputs = load_refs(path.with_suffix(".frmdl.refs.json"))
    assert len(inputs) == 10
    for image, expected in zip(inputs, payload["outputs"]):
        out = infer_features(graph, weights, image)
        assert float(np.abs(out.values - np.asarray(expected)).max()) < 1e-3
