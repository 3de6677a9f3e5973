"""Stage orchestration: extract -> features -> train -> evaluate.

Each stage persists its artifact under the configured output directory and
embeds the configuration hash; evaluation refuses artifacts whose hash or
feature-store digest does not match what it reads.  Artifacts are written to
a temporary name and atomically renamed, so an interrupted run never leaves
a torso behind.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import svm
from .config import PipelineConfig
from .errors import ConfigError, StalenessError
from .feature_store import read_store, write_store
from .fusion import (
    FEATURE_LENGTH,
    FeatureMatrix,
    RankedSelection,
    apply_selection,
    fuse_features,
    rank_features,
    select_top_k,
)
from .inference import infer_features
from .labels import COVID, INT_TO_LABEL, NOFINDING
from .manifest import (
    load_region_images,
    load_regions_file,
    read_manifest,
    write_manifest,
)
from .metrics import (
    confusion,
    evaluate_metrics,
    render_confusion_report,
    round_half_away,
)
from .model_graph import load_model
from .patches import extract_patches, normalize_patch, split_indices
from .rng import SplitMix64

THREADS_ENV = "FUSERANK_THREADS"

PATCH_DIR = "patches"
STORE_FILE = "features.frft"
SELECTION_FILE = "selection.json"
MODEL_FILE = "model.json"
SPLIT_FILE = "split.json"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return min(8, os.cpu_count() or 1)


def _split_seed(dataset_seed: int) -> int:
    # one SplitMix64 step decouples the split stream from extraction
    return SplitMix64(dataset_seed).next_u64()


def _write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                   encoding="utf-8")
    os.replace(tmp, path)


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require_fresh(artifact: str, found, expected) -> None:
    if found != expected:
        raise StalenessError(
            f"{artifact} was produced under hash {found}, current config is "
            f"{expected}; rerun the earlier stages")


def check_inputs(config: PipelineConfig) -> list[str]:
    """Dry-run validation: input paths that must exist before any stage."""
    problems = []
    dataset = config["dataset"]
    for label, path in [
        ("dataset.source_dir", config.resolve(dataset["source_dir"])),
        ("dataset.regions_file", config.resolve(dataset["regions_file"])),
    ] + [(f"backbones.paths.{name}", path) for name, path in config.backbone_paths()]:
        if not path.exists():
            problems.append(f"{label}: {path} does not exist")
    return problems


def cmd_extract(config: PipelineConfig) -> dict:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    dataset = config["dataset"]
    regions = load_regions_file(config.resolve(dataset["regions_file"]))
    images = load_region_images(config.resolve(dataset["source_dir"]), regions)
    ps = extract_patches(
        images, regions,
        size=dataset["patch_size"],
        count_per_class=dataset["count_per_class"],
        seed=dataset["seed"],
        subset_name=f"subset-{dataset['patch_size']}",
    )
    out_dir = config.output_dir / PATCH_DIR
    write_manifest(ps, out_dir)
    return {"patch_dir": str(out_dir), "counts": ps.class_counts()}


def _check_manifest_freshness(ps, dataset: dict) -> None:
    recorded = {"seed": ps.seed, "patch_size": ps.patch_size,
                "counts": ps.class_counts()}
    expected = {"seed": dataset["seed"], "patch_size": dataset["patch_size"],
                "counts": {COVID: dataset["count_per_class"],
                           NOFINDING: dataset["count_per_class"]}}
    if recorded != expected:
        raise StalenessError(
            f"patch dataset on disk was generated with {recorded}, current "
            f"config wants {expected}; rerun extract")


def cmd_features(config: PipelineConfig) -> dict:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    ps = read_manifest(config.output_dir / PATCH_DIR)
    _check_manifest_freshness(ps, config["dataset"])
    backbones = []
    for name, path in config.backbone_paths():
        graph, weights = load_model(path)
        backbones.append((name, graph, weights))

    rows = len(ps.patches)
    order = tuple(name for name, _g, _w in backbones)
    values = np.zeros((rows, FEATURE_LENGTH * len(backbones)))
    labels = np.array([1 if p.label == COVID else 0 for p in ps.patches])

    def compute_row(index: int) -> None:
        patch = ps.patches[index]
        parts = []
        for _name, graph, weights in backbones:
            tensor = normalize_patch(patch, graph.input_shape)
            parts.append(infer_features(graph, weights, tensor).values)
        values[index] = fuse_features(*parts)

    threads = _thread_count()
    if threads == 1:
        for index in range(rows):
            compute_row(index)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(compute_row, range(rows)))

    matrix = FeatureMatrix(values=values, labels=labels)
    store_path = config.output_dir / STORE_FILE
    write_store(store_path, matrix, order, config_hash=config.config_hash())
    return {"store": str(store_path), "rows": rows, "dim": matrix.dim}


def cmd_train(config: PipelineConfig) -> dict:
    cfg_hash = config.config_hash()
    store_path = config.output_dir / STORE_FILE
    store = read_store(store_path)
    _require_fresh("feature store", store.config_hash, cfg_hash)

    split_seed = _split_seed(config["dataset"]["seed"])
    train_idx, test_idx = split_indices(
        store.matrix.labels, config["split"]["train_fraction"], split_seed)

    train_matrix = FeatureMatrix(values=store.matrix.values[train_idx],
                                 labels=store.matrix.labels[train_idx])
    selection = rank_features(train_matrix)
    k = config["fusion"]["k"]
    reduced = select_top_k(train_matrix, selection, k)

    solver = svm.SolverConfig(
        max_iterations=config["svm"]["max_iterations"],
        gradient_tolerance=config["svm"]["gradient_tolerance"],
        initial_step=config["svm"]["initial_step"],
    )
    model = svm.train(reduced, C=config["svm"]["C"], cfg=solver)

    _write_json(config.output_dir / SELECTION_FILE, {
        "order": selection.order.tolist(),
        "t_values": selection.t_values.tolist(),
        "config_hash": cfg_hash,
    })
    svm.save_model(model, config.output_dir / MODEL_FILE, config_hash=cfg_hash)
    _write_json(config.output_dir / SPLIT_FILE, {
        "train_indices": train_idx,
        "test_indices": test_idx,
        "train_fraction": config["split"]["train_fraction"],
        "split_seed": split_seed,
        "store_sha256": _sha256(store_path),
        "config_hash": cfg_hash,
    })
    return {
        "train_rows": len(train_idx),
        "test_rows": len(test_idx),
        "k": k,
        "solver_report": model.solver_report.as_dict(),
    }


def _selection_summary(selection: RankedSelection, k: int) -> dict:
    ranked_abs = np.abs(selection.t_values[selection.order])
    top = [
        {"feature": int(index), "t": float(selection.t_values[index])}
        for index in selection.order[:10]
    ]
    return {
        "k": k,
        "top_features": top,
        "max_abs_t": float(ranked_abs[0]),
        "min_selected_abs_t": float(ranked_abs[k - 1]),
    }


def cmd_evaluate(config: PipelineConfig, resubstitution: bool = False) -> dict:
    cfg_hash = config.config_hash()
    store_path = config.output_dir / STORE_FILE
    store = read_store(store_path)
    _require_fresh("feature store", store.config_hash, cfg_hash)

    split_info = _read_json(config.output_dir / SPLIT_FILE)
    _require_fresh("split", split_info["config_hash"], cfg_hash)
    _require_fresh("feature store digest", _sha256(store_path),
                   split_info["store_sha256"])

    selection_info = _read_json(config.output_dir / SELECTION_FILE)
    _require_fresh("selection", selection_info["config_hash"], cfg_hash)
    selection = RankedSelection(
        order=np.asarray(selection_info["order"], dtype=np.int64),
        t_values=np.asarray(selection_info["t_values"]))

    model = svm.load_model(config.output_dir / MODEL_FILE)
    model_hash = _read_json(config.output_dir / MODEL_FILE).get("config_hash")
    _require_fresh("model", model_hash, cfg_hash)

    indices = split_info["train_indices"] if resubstitution else split_info["test_indices"]
    k = config["fusion"]["k"]
    rows = apply_selection(store.matrix.values[indices], selection, k)
    scores = svm.decision_scores(model, rows)
    predictions = [COVID if s >= 0 else NOFINDING for s in scores]
    truth = [INT_TO_LABEL[int(v)] for v in store.matrix.labels[indices]]

    c = confusion(predictions, truth)
    report = evaluate_metrics(c)
    rendered = render_confusion_report(c)

    labels_all = store.matrix.labels
    payload = {
        "config_hash": cfg_hash,
        "evaluation_rows": "resubstitution" if resubstitution else "test",
        "dataset_counts": {
            COVID: int((labels_all == 1).sum()),
            NOFINDING: int((labels_all == 0).sum()),
            "evaluated": len(indices),
        },
        "selection_summary": _selection_summary(selection, k),
        "solver_report": model.solver_report.as_dict(),
        "evaluation": report.as_dict(),
    }
    _write_json(config.output_dir / REPORT_JSON, payload)
    text_path = config.output_dir / REPORT_TEXT
    tmp = text_path.with_name(text_path.name + ".tmp")
    tmp.write_text(rendered + "\n" + "\n".join(metrics_text(report)) + "\n",
                   encoding="utf-8")
    os.replace(tmp, text_path)
    return payload


def metrics_text(report) -> list[str]:
    """One percentage line per metric, 2 decimals, half away from zero."""
    lines = []
    for name, value in report.as_dict()["metrics"].items():
        if value is None:
            lines.append(f"{name}: undefined")
        else:
            lines.append(f"{name}: {round_half_away(100.0 * value, 2):.2f}%")
    return lines


def cmd_pipeline(config: PipelineConfig, resubstitution: bool = False) -> dict:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    stages = [
        ("extract", cmd_extract),
        ("features", cmd_features),
        ("train", cmd_train),
        ("evaluate", lambda cfg: cmd_evaluate(cfg, resubstitution=resubstitution)),
    ]
    timings = {}
    results = {}
    for name, stage in stages:
        started = time.perf_counter()
        results[name] = stage(config)
        timings[name] = time.perf_counter() - started
    results["evaluate"]["timings"] = timings
    _write_json(config.output_dir / REPORT_JSON, results["evaluate"])
    return results
