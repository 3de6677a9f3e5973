import json

import numpy as np
import pytest

from fuserank.errors import FormatError
from fuserank.manifest import (
    load_gray_image,
    read_manifest,
    save_gray_image,
    write_manifest,
)
from fuserank.patches import Patch, PatchSet


def grid_patchset(n_per_class=3, size=16, seed=11):
    # pixels on the k/255 grid so the 8-bit files round-trip exactly
    rng = np.random.default_rng(seed)
    patches = []
    for label in ("covid", "nofinding"):
        for i in range(n_per_class):
            pixels = rng.integers(0, 256, size=(size, size)) / 255.0
            patches.append(Patch(pixels=pixels, label=label,
                                 image_id=f"src_{i % 2}", x=3 * i, y=i))
    return PatchSet(subset_name="unit", patch_size=size, patches=patches, seed=seed)


def test_round_trip_identity(tmp_path):
    ps = grid_patchset()
    write_manifest(ps, tmp_path)
    assert read_manifest(tmp_path) == ps


def test_round_trip_empty_patchset(tmp_path):
    ps = PatchSet(subset_name="empty", patch_size=16, patches=[], seed=0)
    write_manifest(ps, tmp_path)
    loaded = read_manifest(tmp_path)
    assert loaded == ps
    assert loaded.patches == []


def test_rewrite_is_byte_identical(tmp_path):
    ps = grid_patchset()
    first = write_manifest(ps, tmp_path / "a").read_bytes()
    second = write_manifest(ps, tmp_path / "b").read_bytes()
    assert first == second
    for name in ("covid_00000.png", "nofinding_00002.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_patch_file(tmp_path):
    ps = grid_patchset()
    write_manifest(ps, tmp_path)
    (tmp_path / "covid_00001.png").unlink()
    with pytest.raises(FormatError, match="missing patch file"):
        read_manifest(tmp_path)


def test_malformed_line_reports_number(tmp_path):
    ps = grid_patchset(n_per_class=2)
    manifest_path = write_manifest(ps, tmp_path)
    lines = manifest_path.read_text().splitlines()
    lines[2] = "{not json"
    manifest_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match=":3:"):
        read_manifest(tmp_path)


def test_missing_key_reports_number(tmp_path):
    ps = grid_patchset(n_per_class=2)
    manifest_path = write_manifest(ps, tmp_path)
    lines = manifest_path.read_text().splitlines()
    entry = json.loads(lines[1])
    del entry["label"]
    lines[1] = json.dumps(entry)
    manifest_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match="missing key 'label'"):
        read_manifest(tmp_path)


def test_header_count_mismatch_detected(tmp_path):
    ps = grid_patchset(n_per_class=2)
    manifest_path = write_manifest(ps, tmp_path)
    lines = manifest_path.read_text().splitlines()
    header = json.loads(lines[0])
    header["counts"]["covid"] = 99
    lines[0] = json.dumps(header, sort_keys=True)
    manifest_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match="counts"):
        read_manifest(tmp_path)


def test_gray_image_png_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    pixels = rng.integers(0, 256, size=(24, 31)) / 255.0
    path = tmp_path / "img.png"
    save_gray_image(path, pixels)
    loaded = load_gray_image(path)
    np.testing.assert_array_equal(loaded.pixels, pixels)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "junk.png"
    path.write_bytes(b"this is not a png")
    with pytest.raises(FormatError):
        load_gray_image(path)
