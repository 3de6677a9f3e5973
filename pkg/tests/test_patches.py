import numpy as np
import pytest

from fuserank.errors import InvalidArgumentError
from fuserank.patches import (
    GrayImage,
    LabeledRegion,
    bilinear_resize,
    extract_patches,
    normalize_patch,
    split_dataset,
    split_indices,
)


def checkerboard(h, w, period=4):
    ys, xs = np.mgrid[0:h, 0:w]
    return (((ys // period) + (xs // period)) % 2).astype(float)


@pytest.fixture
def two_region_setup():
    rng = np.random.default_rng(0)
    image = GrayImage(pixels=rng.uniform(size=(64, 64)).round(3).clip(0, 1))
    regions = [
        LabeledRegion(image_id="img", x=0, y=0, w=32, h=64, label="covid"),
        LabeledRegion(image_id="img", x=32, y=0, w=32, h=64, label="nofinding"),
    ]
    return {"img": image}, regions


class TestExtract:
    def test_counts_are_exact(self, two_region_setup):
        images, regions = two_region_setup
        ps = extract_patches(images, regions, size=16, count_per_class=20, seed=7)
        assert ps.class_counts() == {"covid": 20, "nofinding": 20}
        assert ps.patch_size == 16
        assert len(ps.patches) == 40

    def test_patches_lie_inside_their_region(self, two_region_setup):
        images, regions = two_region_setup
        ps = extract_patches(images, regions, size=16, count_per_class=30, seed=7)
        by_label = {r.label: r for r in regions}
        for patch in ps.patches:
            region = by_label[patch.label]
            assert region.x <= patch.x <= region.x + region.w - 16
            assert region.y <= patch.y <= region.y + region.h - 16

    def test_pixels_match_provenance(self, two_region_setup):
        images, regions = two_region_setup
        ps = extract_patches(images, regions, size=16, count_per_class=5, seed=3)
        for patch in ps.patches:
            source = images[patch.image_id].pixels
            np.testing.assert_array_equal(
                patch.pixels, source[patch.y:patch.y + 16, patch.x:patch.x + 16])

    def test_single_placement_region(self):
        image = GrayImage(pixels=np.linspace(0, 1, 256).reshape(16, 16))
        regions = [
            LabeledRegion(image_id="a", x=0, y=0, w=16, h=16, label="covid"),
            LabeledRegion(image_id="a", x=0, y=0, w=16, h=16, label="nofinding"),
        ]
        ps = extract_patches({"a": image}, regions, size=16, count_per_class=1, seed=0)
        covid = [p for p in ps.patches if p.label == "covid"][0]
        assert (covid.image_id, covid.x, covid.y) == ("a", 0, 0)
        np.testing.assert_array_equal(covid.pixels, image.pixels)

    def test_same_seed_reproduces(self, two_region_setup):
        images, regions = two_region_setup
        a = extract_patches(images, regions, size=16, count_per_class=10, seed=42)
        b = extract_patches(images, regions, size=16, count_per_class=10, seed=42)
        assert a == b
        c = extract_patches(images, regions, size=16, count_per_class=10, seed=43)
        assert a != c

    def test_no_duplicate_corners(self, two_region_setup):
        images, regions = two_region_setup
        ps = extract_patches(images, regions, size=16, count_per_class=200, seed=1)
        triples = [(p.image_id, p.x, p.y, p.label) for p in ps.patches]
        assert len(set(triples)) == len(triples)

    def test_region_smaller_than_patch(self):
        image = GrayImage(pixels=np.zeros((32, 32)))
        regions = [
            LabeledRegion(image_id="a", x=0, y=0, w=8, h=32, label="covid"),
            LabeledRegion(image_id="a", x=8, y=0, w=24, h=32, label="nofinding"),
        ]
        with pytest.raises(InvalidArgumentError, match="smaller than patch"):
            extract_patches({"a": image}, regions, size=16, count_per_class=1, seed=0)

    def test_missing_label(self):
        image = GrayImage(pixels=np.zeros((32, 32)))
        regions = [LabeledRegion(image_id="a", x=0, y=0, w=32, h=32, label="covid")]
        with pytest.raises(InvalidArgumentError, match="nofinding"):
            extract_patches({"a": image}, regions, size=16, count_per_class=1, seed=0)

    def test_impossible_count_rejected(self):
        image = GrayImage(pixels=np.zeros((16, 16)))
        regions = [
            LabeledRegion(image_id="a", x=0, y=0, w=16, h=16, label="covid"),
            LabeledRegion(image_id="a", x=0, y=0, w=16, h=16, label="nofinding"),
        ]
        with pytest.raises(InvalidArgumentError):
            extract_patches({"a": image}, regions, size=16, count_per_class=2, seed=0)

    @pytest.mark.parametrize("size", [16, 32])
    def test_full_scale_subset_shape(self, size):
        # the published dataset shape: 3000 patches per class per subset
        rng = np.random.default_rng(size)
        image = GrayImage(pixels=rng.uniform(size=(256, 256)))
        regions = [
            LabeledRegion(image_id="ct", x=0, y=0, w=256, h=128, label="covid"),
            LabeledRegion(image_id="ct", x=0, y=128, w=256, h=128,
                          label="nofinding"),
        ]
        ps = extract_patches({"ct": image}, regions, size=size,
                             count_per_class=3000, seed=1)
        assert ps.class_counts() == {"covid": 3000, "nofinding": 3000}
        assert len(ps.patches) == 6000
        assert all(p.pixels.shape == (size, size) for p in ps.patches[:10])

    def test_bare_image_accepted(self):
        image = GrayImage(pixels=np.zeros((32, 32)))
        regions = [
            LabeledRegion(image_id="x", x=0, y=0, w=16, h=32, label="covid"),
            LabeledRegion(image_id="x", x=16, y=0, w=16, h=32, label="nofinding"),
        ]
        ps = extract_patches(image, regions, size=16, count_per_class=2, seed=0)
        assert len(ps.patches) == 4


class TestNormalize:
    def _patch(self, pixels):
        from fuserank.patches import Patch
        return Patch(pixels=np.asarray(pixels, dtype=float), label="covid",
                     image_id="a", x=0, y=0)

    def test_channels_replicated(self):
        patch = self._patch(np.random.default_rng(0).uniform(size=(16, 16)))
        out = normalize_patch(patch, (224, 224, 3))
        assert out.shape == (224, 224, 3)
        np.testing.assert_array_equal(out[:, :, 0], out[:, :, 1])
        np.testing.assert_array_equal(out[:, :, 0], out[:, :, 2])
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_identity_when_already_sized(self):
        pixels = np.random.default_rng(1).uniform(size=(16, 16))
        out = normalize_patch(self._patch(pixels), (16, 16, 1))
        np.testing.assert_array_equal(out[:, :, 0], pixels)

    def test_constant_patch_stays_constant(self):
        out = normalize_patch(self._patch(np.full((16, 16), 0.3)), (224, 224, 3))
        np.testing.assert_allclose(out, 0.3)

    def test_bad_channel_count(self):
        with pytest.raises(InvalidArgumentError):
            normalize_patch(self._patch(np.zeros((16, 16))), (8, 8, 2))

    def test_bilinear_interpolates_between_pixels(self):
        a = np.array([[0.0, 1.0]])
        out = bilinear_resize(a, 1, 3)
        np.testing.assert_allclose(out, [[0.0, 0.5, 1.0]])

    def test_bilinear_preserves_range(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=(7, 5))
        out = bilinear_resize(a, 50, 50)
        assert out.min() >= a.min() - 1e-12
        assert out.max() <= a.max() + 1e-12


def balanced_patchset(n_per_class, size=16, seed=0):
    from fuserank.patches import Patch, PatchSet
    rng = np.random.default_rng(seed)
    patches = []
    for label in ("covid", "nofinding"):
        for i in range(n_per_class):
            patches.append(Patch(
                pixels=rng.uniform(size=(size, size)),
                label=label, image_id="synthetic", x=i, y=0))
    return PatchSet(subset_name="test", patch_size=size, patches=patches, seed=seed)


class TestSplit:
    def test_published_split_arithmetic(self):
        ps = balanced_patchset(3000)
        train, test = split_dataset(ps, 0.75, seed=5)
        assert len(train.patches) == 4500
        assert len(test.patches) == 1500
        assert train.class_counts() == {"covid": 2250, "nofinding": 2250}
        assert test.class_counts() == {"covid": 750, "nofinding": 750}

    def test_partition_property(self):
        ps = balanced_patchset(40)
        train, test = split_dataset(ps, 0.75, seed=9)
        key = lambda p: (p.label, p.image_id, p.x, p.y)
        train_keys = {key(p) for p in train.patches}
        test_keys = {key(p) for p in test.patches}
        assert not train_keys & test_keys
        assert train_keys | test_keys == {key(p) for p in ps.patches}

    def test_per_class_proportions_within_one(self):
        for n, fraction in ((37, 0.75), (11, 0.6), (101, 0.33)):
            ps = balanced_patchset(n)
            train, _test = split_dataset(ps, fraction, seed=2)
            for count in train.class_counts().values():
                assert abs(count - fraction * n) <= 0.5 + 1e-9

    def test_same_seed_same_split(self):
        ps = balanced_patchset(25)
        a_train, a_test = split_dataset(ps, 0.75, seed=1)
        b_train, b_test = split_dataset(ps, 0.75, seed=1)
        assert a_train == b_train and a_test == b_test
        c_train, _ = split_dataset(ps, 0.75, seed=2)
        assert a_train != c_train

    def test_tiny_class_rejected(self):
        labels = [1, 1, 1, 0]
        with pytest.raises(InvalidArgumentError):
            split_indices(labels, 0.75, seed=0)

    def test_bad_fraction_rejected(self):
        with pytest.raises(InvalidArgumentError):
            split_indices([1, 1, 0, 0], 1.0, seed=0)
        with pytest.raises(InvalidArgumentError):
            split_indices([1, 1, 0, 0], 0.0, seed=0)

    def test_indices_are_stratified(self):
        labels = [1] * 8 + [0] * 8
        train_idx, test_idx = split_indices(labels, 0.75, seed=3)
        assert len(train_idx) == 12 and len(test_idx) == 4
        assert sum(1 for i in train_idx if labels[i] == 1) == 6
        assert sum(1 for i in test_idx if labels[i] == 1) == 2


def test_gray_image_validation():
    with pytest.raises(InvalidArgumentError):
        GrayImage(pixels=np.array([1.5]))
    with pytest.raises(InvalidArgumentError):
        GrayImage(pixels=np.full((4, 4), 2.0))
    with pytest.raises(InvalidArgumentError):
        GrayImage(pixels=np.full((4, 4), -0.1))


def test_labeled_region_validation():
    with pytest.raises(ValueError):
        LabeledRegion(image_id="a", x=0, y=0, w=4, h=4, label="weird")
    with pytest.raises(InvalidArgumentError):
        LabeledRegion(image_id="a", x=-1, y=0, w=4, h=4, label="covid")
