#!/usr/bin/env python3
"""Regenerate every committed fixture under fixtures/.

Requires both packages installed (fuserank and frmdl-exporter).  The
primary test suite only reads the committed outputs and never imports the
exporter.  Everything here is seeded; rerunning must be a no-op diff.
"""
from pathlib import Path

import numpy as np

from frmdl_exporter.testmodels import write_test_model
from fuserank.manifest import save_gray_image

ROOT = Path(__file__).parent

E2E_BACKBONE_SEEDS = {"vgg16": 101, "googlenet": 102, "resnet50": 103}
E2E_BACKBONE_VARIANTS = {"vgg16": "plain", "googlenet": "inception",
                         "resnet50": "residual"}


def make_models():
    models = ROOT / "models"
    write_test_model(models / "golden_seed0_depth3.frmdl", seed=0, depth=3)
    write_test_model(models / "lrn_seed1.frmdl", seed=1, depth=3, variant="lrn")
    write_test_model(models / "residual_seed2.frmdl", seed=2, depth=3,
                     variant="residual")
    write_test_model(models / "inception_seed3.frmdl", seed=3, depth=3,
                     variant="inception")


def smooth_field(rng, size, components=6):
    """Sum of random low-frequency cosine waves, normalized to [-1, 1]."""
    ys, xs = np.mgrid[0:size, 0:size] / size
    field = np.zeros((size, size))
    for _ in range(components):
        fy, fx = rng.uniform(1.0, 4.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        field += np.cos(2 * np.pi * (fy * ys + fx * xs) + phase)
    return field / np.abs(field).max()


def make_e2e_dataset():
    e2e = ROOT / "e2e"
    source = e2e / "source"
    source.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(20240901)
    size = 128
    # bright blobby texture vs dark speckle: patch means alone separate the
    # classes, so any feature set keeps them >= 95% apart by construction
    covid = np.clip(0.68 + 0.12 * smooth_field(rng, size)
                    + 0.03 * rng.standard_normal((size, size)), 0, 1)
    nofinding = np.clip(0.24 + 0.05 * smooth_field(rng, size)
                        + 0.06 * rng.standard_normal((size, size)), 0, 1)
    save_gray_image(source / "texture_covid.png", covid)
    save_gray_image(source / "texture_nofinding.png", nofinding)

    (e2e / "regions.json").write_text(
        '{\n "regions": [\n'
        '  {"image": "texture_covid.png", "label": "covid",'
        ' "x": 0, "y": 0, "w": 128, "h": 128},\n'
        '  {"image": "texture_nofinding.png", "label": "nofinding",'
        ' "x": 0, "y": 0, "w": 128, "h": 128}\n'
        ' ]\n}\n', encoding="utf-8")

    models = e2e / "models"
    for role, seed in E2E_BACKBONE_SEEDS.items():
        write_test_model(models / f"{role}.frmdl", seed=seed, depth=3,
                         variant=E2E_BACKBONE_VARIANTS[role])

    (e2e / "config.json").write_text(
        '{\n'
        ' "dataset": {\n'
        '  "source_dir": "source",\n'
        '  "regions_file": "regions.json",\n'
        '  "patch_size": 16,\n'
        '  "count_per_class": 100,\n'
        '  "seed": 42\n'
        ' },\n'
        ' "backbones": {\n'
        '  "order": ["vgg16", "googlenet", "resnet50"],\n'
        '  "paths": {\n'
        '   "vgg16": "models/vgg16.frmdl",\n'
        '   "googlenet": "models/googlenet.frmdl",\n'
        '   "resnet50": "models/resnet50.frmdl"\n'
        '  }\n'
        ' },\n'
        ' "fusion": {"k": 1500},\n'
        ' "svm": {"C": 0.01, "max_iterations": 20000,'
        ' "gradient_tolerance": 1e-05, "initial_step": 1.0},\n'
        ' "split": {"train_fraction": 0.75},\n'
        ' "output_dir": "out"\n'
        '}\n', encoding="utf-8")


if __name__ == "__main__":
    make_models()
    make_e2e_dataset()
    print("fixtures regenerated under", ROOT)
