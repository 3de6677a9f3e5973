"""Dataset file I/O: grayscale images, per-patch PNG files and the
JSON-lines manifest.

Manifest layout: the first line is a dataset header
``{subset_name, patch_size, seed, counts}``; every following line describes
one patch ``{file, label, source_image, x, y, size}``.  Patch pixels are
stored as 8-bit grayscale PNG, so intensities round-trip exactly on the
k/255 grid that 8-bit sources produce.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidArgumentError
from .labels import COVID, NOFINDING
from .patches import GrayImage, LabeledRegion, Patch, PatchSet

MANIFEST_NAME = "manifest.jsonl"


def load_regions_file(path) -> list[LabeledRegion]:
    """Read labelled rectangles from ``{"regions": [{image, label, x, y, w, h}]}``.

    The ``image`` value is a filename inside the dataset source directory and
    doubles as the image id.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = payload["regions"]
        regions = [
            LabeledRegion(image_id=str(e["image"]), x=int(e["x"]), y=int(e["y"]),
                          w=int(e["w"]), h=int(e["h"]), label=str(e["label"]))
            for e in entries
        ]
    except FileNotFoundError as exc:
        raise FormatError(f"regions file not found: {path}") from exc
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed regions file {path}: {exc}") from exc
    if not regions:
        raise FormatError(f"regions file {path} lists no regions")
    return regions


def load_region_images(source_dir, regions: list[LabeledRegion]) -> dict[str, GrayImage]:
    """Load every image referenced by the regions, keyed by image id."""
    source_dir = Path(source_dir)
    images: dict[str, GrayImage] = {}
    for region in regions:
        if region.image_id in images:
            continue
        path = source_dir / region.image_id
        if not path.is_file():
            raise FormatError(f"source image not found: {path}")
        images[region.image_id] = load_gray_image(path)
    return images


def load_gray_image(path) -> GrayImage:
    """Load a grayscale image, dividing by the format's maximum intensity."""
    try:
        with Image.open(path) as img:
            if img.mode in ("I;16", "I;16B", "I;16L"):
                pixels = np.asarray(img, dtype=np.float64) / 65535.0
            else:
                pixels = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    return GrayImage(pixels=pixels)


def save_gray_image(path, pixels: np.ndarray) -> None:
    """Write intensities in [0, 1] as 8-bit grayscale PNG."""
    data = np.rint(np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0) * 255.0)
    Image.fromarray(data.astype(np.uint8), mode="L").save(path, format="PNG")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_manifest(ps: PatchSet, directory) -> Path:
    """Write patch files plus the manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({
        "subset_name": ps.subset_name,
        "patch_size": ps.patch_size,
        "seed": ps.seed,
        "counts": ps.class_counts(),
    }, sort_keys=True)]
    per_label = {COVID: 0, NOFINDING: 0}
    for patch in ps.patches:
        index = per_label[patch.label]
        per_label[patch.label] += 1
        filename = f"{patch.label}_{index:05d}.png"
        save_gray_image(directory / filename, patch.pixels)
        lines.append(json.dumps({
            "file": filename,
            "label": patch.label,
            "source_image": patch.image_id,
            "x": patch.x,
            "y": patch.y,
            "size": ps.patch_size,
        }, sort_keys=True))
    manifest_path = directory / MANIFEST_NAME
    _atomic_write_text(manifest_path, "\n".join(lines) + "\n")
    return manifest_path


def read_manifest(directory) -> PatchSet:
    """Load a manifest and all referenced patch files back into a PatchSet."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"missing manifest {manifest_path}")
    raw_lines = manifest_path.read_text(encoding="utf-8").splitlines()
    if not raw_lines:
        raise FormatError(f"{manifest_path}: empty manifest")

    def parse(line_no: int, required: tuple) -> dict:
        try:
            entry = json.loads(raw_lines[line_no])
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}:{line_no + 1}: bad JSON: {exc}") from exc
        for key in required:
            if key not in entry:
                raise FormatError(f"{manifest_path}:{line_no + 1}: missing key {key!r}")
        return entry

    header = parse(0, ("subset_name", "patch_size", "seed", "counts"))
    patches: list[Patch] = []
    for line_no in range(1, len(raw_lines)):
        if not raw_lines[line_no].strip():
            continue
        entry = parse(line_no, ("file", "label", "source_image", "x", "y", "size"))
        if entry["size"] != header["patch_size"]:
            raise FormatError(
                f"{manifest_path}:{line_no + 1}: size {entry['size']} "
                f"!= dataset patch_size {header['patch_size']}")
        patch_path = directory / entry["file"]
        if not patch_path.is_file():
            raise FormatError(
                f"{manifest_path}:{line_no + 1}: missing patch file {patch_path}")
        pixels = load_gray_image(patch_path).pixels
        if pixels.shape != (header["patch_size"], header["patch_size"]):
            raise FormatError(
                f"{manifest_path}:{line_no + 1}: patch file has shape {pixels.shape}")
        try:
            patches.append(Patch(pixels=pixels, label=entry["label"],
                                 image_id=entry["source_image"],
                                 x=int(entry["x"]), y=int(entry["y"])))
        except (InvalidArgumentError, ValueError) as exc:
            raise FormatError(f"{manifest_path}:{line_no + 1}: {exc}") from exc
    counts = {COVID: 0, NOFINDING: 0}
    for patch in patches:
        counts[patch.label] += 1
    if counts != header["counts"]:
        raise FormatError(
            f"{manifest_path}: header counts {header['counts']} != actual {counts}")
    return PatchSet(subset_name=header["subset_name"],
                    patch_size=int(header["patch_size"]),
                    patches=patches, seed=int(header["seed"]))
