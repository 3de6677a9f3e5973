import json

import numpy as np
import pytest

from frmdl_exporter.sidecar import seeded_inputs
from frmdl_exporter.testmodels import make_test_model, write_test_model

fuserank_graph = pytest.importorskip("fuserank.model_graph")
from fuserank.inference import infer_features, run_graph  # noqa: E402


def load_from_bytes(tmp_path, blob):
    path = tmp_path / "model.frmdl"
    path.write_bytes(blob)
    return fuserank_graph.load_model(path)


def test_same_seed_gives_identical_bytes(tmp_path):
    a, _ = make_test_model(seed=7, depth=3)
    b, _ = make_test_model(seed=7, depth=3)
    assert a == b
    c, _ = make_test_model(seed=8, depth=3)
    assert a != c


def test_depth_one_is_bare_dense(tmp_path):
    blob, refs = make_test_model(seed=3, depth=1)
    graph, weights = load_from_bytes(tmp_path, blob)
    assert [layer.op for layer in graph.layers] == ["flatten", "dense"]
    image = refs["inputs"][0]
    out = infer_features(graph, weights, image)
    w = weights.get("head", "weight")
    b = weights.get("head", "bias")
    expected = w @ image.reshape(-1) + b
    np.testing.assert_allclose(out.values, expected, atol=1e-12)


@pytest.mark.parametrize("variant", ["plain", "lrn", "residual", "inception"])
def test_runtime_matches_torch_per_layer(tmp_path, variant):
    blob, refs = make_test_model(seed=11, depth=3, variant=variant)
    graph, weights = load_from_bytes(tmp_path, blob)
    image = refs["inputs"][0]
    activations = run_graph(graph, weights, image)
    for layer_id, flat in refs["per_layer"].items():
        expected = np.asarray(flat).reshape(refs["activation_shapes"][layer_id])
        got = activations[layer_id]
        assert np.abs(got - expected).max() < 1e-3, layer_id


@pytest.mark.parametrize("variant", ["plain", "lrn", "residual", "inception"])
def test_runtime_matches_torch_outputs(tmp_path, variant):
    blob, refs = make_test_model(seed=5, depth=3, variant=variant)
    graph, weights = load_from_bytes(tmp_path, blob)
    for image, expected in zip(refs["inputs"], refs["outputs"]):
        out = infer_features(graph, weights, image)
        assert np.abs(out.values - expected).max() < 1e-3


def test_written_sidecar_is_self_contained(tmp_path):
    container, sidecar = write_test_model(tmp_path / "m.frmdl", seed=2, depth=2)
    payload = json.loads(sidecar.read_text())
    shape = tuple(payload["input_shape"])
    # inputs stored verbatim must equal regeneration from the recorded seed
    regenerated = seeded_inputs(payload["input_seed"], shape, payload["count"])
    stored = np.asarray(payload["inputs"]).reshape((-1,) + shape)
    np.testing.assert_array_equal(stored, regenerated)

    graph, weights = fuserank_graph.load_model(container)
    for image, expected in zip(stored, payload["outputs"]):
        out = infer_features(graph, weights, image)
        assert np.abs(out.values - np.asarray(expected)).max() < 1e-3


def test_depth_bounds():
    with pytest.raises(ValueError):
        make_test_model(seed=0, depth=0)
    with pytest.raises(ValueError):
        make_test_model(seed=0, depth=6)
    with pytest.raises(ValueError):
        make_test_model(seed=0, depth=1, variant="lrn")
