"""Patch extraction, normalization and the stratified train/test split.

Patches are square grayscale crops in [0, 1] sampled uniformly at random
over all valid top-left corners of same-label regions.  Every random choice
flows through a SplitMix64 stream seeded with one recorded 64-bit seed, so
extraction and splitting are exactly reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .labels import COVID, NOFINDING, validate_label
from .rng import SplitMix64, fisher_yates

# Give up drawing when rejections dominate; only reachable when the caller
# asks for more distinct patches than the regions can supply.
_MAX_DRAW_ATTEMPTS_PER_PATCH = 200


@dataclass(frozen=True)
class GrayImage:
    """2-D intensity grid normalized to [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.size == 0:
            raise InvalidArgumentError("image must be a non-empty 2-D grid")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise InvalidArgumentError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class LabeledRegion:
    """Axis-aligned rectangle (x, y, w, h) in pixel units on one image."""

    image_id: str
    x: int
    y: int
    w: int
    h: int
    label: str

    def __post_init__(self):
        validate_label(self.label)
        if self.x < 0 or self.y < 0 or self.w < 1 or self.h < 1:
            raise InvalidArgumentError(f"invalid rectangle {(self.x, self.y, self.w, self.h)}")


@dataclass(eq=False)
class Patch:
    pixels: np.ndarray
    label: str
    image_id: str
    x: int
    y: int

    def __eq__(self, other) -> bool:
        return (isinstance(other, Patch)
                and self.label == other.label
                and self.image_id == other.image_id
                and self.x == other.x and self.y == other.y
                and np.array_equal(self.pixels, other.pixels))


@dataclass(eq=False)
class PatchSet:
    subset_name: str
    patch_size: int
    patches: list[Patch]
    seed: int

    def __eq__(self, other) -> bool:
        return (isinstance(other, PatchSet)
                and self.subset_name == other.subset_name
                and self.patch_size == other.patch_size
                and self.seed == other.seed
                and self.patches == other.patches)

    def class_counts(self) -> dict[str, int]:
        counts = {COVID: 0, NOFINDING: 0}
        for patch in self.patches:
            counts[patch.label] += 1
        return counts


def extract_patches(images, regions: list[LabeledRegion], size: int,
                    count_per_class: int, seed: int,
                    subset_name: str = "") -> PatchSet:
    """Draw ``count_per_class`` distinct patches per label.

    ``images`` maps image ids to :class:`GrayImage`; a bare image is accepted
    when every region references the same id.  Corners are drawn uniformly
    over all valid placements of same-label regions; duplicate
    ``(image_id, x, y)`` triples are rejected and redrawn.
    """
    if isinstance(images, GrayImage):
        ids = {region.image_id for region in regions}
        if len(ids) != 1:
            raise InvalidArgumentError(
                "a bare image needs regions that agree on one image id")
        images = {next(iter(ids)): images}
    if size < 1 or count_per_class < 1:
        raise InvalidArgumentError("size and count_per_class must be >= 1")
    if not regions:
        raise InvalidArgumentError("no regions given")

    for region in regions:
        if region.image_id not in images:
            raise InvalidArgumentError(f"region references unknown image {region.image_id!r}")
        image = images[region.image_id]
        if region.x + region.w > image.width or region.y + region.h > image.height:
            raise InvalidArgumentError(
                f"region {(region.x, region.y, region.w, region.h)} exceeds "
                f"image {region.image_id!r} bounds")
        if region.w < size or region.h < size:
            raise InvalidArgumentError(
                f"region {(region.w, region.h)} smaller than patch size {size}")

    rng = SplitMix64(seed)
    patches: list[Patch] = []
    for label in (COVID, NOFINDING):
        label_regions = [region for region in regions if region.label == label]
        if not label_regions:
            raise InvalidArgumentError(f"no region labelled {label!r}")
        placements = [(r.w - size + 1) * (r.h - size + 1) for r in label_regions]
        total = sum(placements)
        if total < count_per_class:
            raise InvalidArgumentError(
                f"{label}: {total} candidate corners < {count_per_class} requested")
        taken: set[tuple[str, int, int]] = set()
        drawn: list[Patch] = []
        attempts_left = count_per_class * _MAX_DRAW_ATTEMPTS_PER_PATCH
        while len(drawn) < count_per_class:
            if attempts_left == 0:
                raise InvalidArgumentError(
                    f"{label}: could not draw {count_per_class} distinct patches")
            attempts_left -= 1
            u = rng.next_below(total)
            for region, count in zip(label_regions, placements):
                if u < count:
                    nx = region.w - size + 1
                    cx = region.x + u % nx
                    cy = region.y + u // nx
                    break
                u -= count
            key = (region.image_id, cx, cy)
            if key in taken:
                continue
            taken.add(key)
            pixels = images[region.image_id].pixels[cy:cy + size, cx:cx + size].copy()
            drawn.append(Patch(pixels=pixels, label=label,
                               image_id=region.image_id, x=cx, y=cy))
        patches.extend(drawn)
    return PatchSet(subset_name=subset_name, patch_size=size,
                    patches=patches, seed=seed)


def bilinear_resize(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling on the corner-aligned grid; exact for identity
    sizes and constant inputs, and never leaves the input value range."""
    h, w = a.shape
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = a[np.ix_(y0, x0)] * (1 - fx) + a[np.ix_(y0, x1)] * fx
    bottom = a[np.ix_(y1, x0)] * (1 - fx) + a[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bottom * fy


def normalize_patch(patch: Patch, target: tuple[int, int, int]) -> np.ndarray:
    """Resize a patch to ``(height, width)`` and replicate the gray channel
    across the target channel count (1 or 3)."""
    height, width, channels = target
    if channels not in (1, 3):
        raise InvalidArgumentError("target channels must be 1 or 3")
    if height < 1 or width < 1:
        raise InvalidArgumentError("target dims must be >= 1")
    resized = bilinear_resize(patch.pixels, height, width)
    return np.repeat(resized[:, :, None], channels, axis=2)


def _train_count(n: int, fraction: float) -> int:
    # round half up, portably
    return int(np.floor(fraction * n + 0.5))


def split_indices(labels, train_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Stratified index split: each class is shuffled with its own derived
    SplitMix64 stream (covid first) and cut at round(train_fraction * n)."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidArgumentError("train_fraction must lie strictly between 0 and 1")
    labels = [int(v) for v in labels]
    if any(v not in (0, 1) for v in labels):
        raise InvalidArgumentError("labels must be 0 or 1")
    master = SplitMix64(seed)
    train: list[int] = []
    test: list[int] = []
    for class_value in (1, 0):
        positions = [i for i, v in enumerate(labels) if v == class_value]
        class_rng = master.derive()
        if len(positions) < 2:
            raise InvalidArgumentError(
                f"class {class_value} has {len(positions)} rows; need >= 2")
        order = fisher_yates(len(positions), class_rng)
        shuffled = [positions[j] for j in order]
        cut = _train_count(len(shuffled), train_fraction)
        train.extend(shuffled[:cut])
        test.extend(shuffled[cut:])
    return train, test


def split_dataset(ps: PatchSet, train_fraction: float, seed: int) -> tuple[PatchSet, PatchSet]:
    """Stratified partition of a patch set; the two halves keep the parent
    name, size and generation seed."""
    int_labels = [1 if p.label == COVID else 0 for p in ps.patches]
    train_idx, test_idx = split_indices(int_labels, train_fraction, seed)

    def subset(indices):
        return PatchSet(subset_name=ps.subset_name, patch_size=ps.patch_size,
                        patches=[ps.patches[i] for i in indices], seed=ps.seed)

    return subset(train_idx), subset(test_idx)
