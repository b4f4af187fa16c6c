import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from robustrep.data import (
    RESTRICTED_IMAGENET,
    Dataset,
    DimensionError,
    ImageDecodeError,
    MissingSplitError,
    SuperclassMap,
    SuperclassMapError,
    apply_superclass_map,
    image_grid,
    load_dataset,
    noise_seed,
    pattern_seed,
    read_curve_csv,
    write_curve_csv,
    write_image_grid,
)
from robustrep.reptools import SweepCurve
from robustrep.synth import CLASSES, OOD_CLASSES, make_shapes, write_corpus


def _png(path, arr):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(path)


@pytest.fixture
def tiny_root(tmp_path):
    rng = np.random.default_rng(0)
    for cls in ("b_cls", "a_cls"):
        for i in range(3):
            _png(str(tmp_path / "train" / cls / f"{i}.png"), rng.integers(0, 256, (4, 4, 3)))
    return tmp_path


def test_two_classes_three_images(tiny_root):
    ds = load_dataset(str(tiny_root), "train")
    assert len(ds) == 6
    assert ds.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert ds.class_names == ["a_cls", "b_cls"]
    assert ds.images.shape == (6, 3, 4, 4)


def test_pixel_255_maps_to_one(tmp_path):
    _png(str(tmp_path / "s" / "c" / "x.png"), np.full((2, 2, 3), 255))
    ds = load_dataset(str(tmp_path), "s")
    assert ds.images.max() == 1.0 and ds.images.min() == 1.0


def test_byte_order_of_paths(tmp_path):
    for name in ("b.png", "B.png", "a10.png", "a2.png"):
        _png(str(tmp_path / "s" / "c" / name), np.zeros((2, 2, 3)))
    ds = load_dataset(str(tmp_path), "s")
    assert [os.path.basename(p) for p in ds.paths] == ["B.png", "a10.png", "a2.png", "b.png"]


def test_mismatched_dimensions_name_the_file(tmp_path):
    _png(str(tmp_path / "s" / "c" / "a.png"), np.zeros((4, 4, 3)))
    _png(str(tmp_path / "s" / "c" / "b.png"), np.zeros((5, 4, 3)))
    with pytest.raises(DimensionError, match="b.png"):
        load_dataset(str(tmp_path), "s")


def test_missing_split(tmp_path):
    with pytest.raises(MissingSplitError):
        load_dataset(str(tmp_path), "nope")


def test_undecodable_image(tmp_path):
    os.makedirs(tmp_path / "s" / "c")
    (tmp_path / "s" / "c" / "bad.png").write_bytes(b"not a png")
    with pytest.raises(ImageDecodeError):
        load_dataset(str(tmp_path), "s")


def test_dataset_rejects_out_of_range_pixels():
    with pytest.raises(Exception):
        Dataset(np.full((1, 3, 2, 2), 1.5), [0], ["a"])


def test_restricted_imagenet_ranges():
    expected = {"Dog": (151, 268), "Cat": (281, 285), "Frog": (30, 32), "Turtle": (33, 37),
                "Bird": (80, 100), "Primate": (365, 382), "Fish": (389, 397), "Crab": (118, 121),
                "Insect": (300, 319)}
    assert {n: tuple(r[0]) for n, r in RESTRICTED_IMAGENET.entries} == expected
    dog = RESTRICTED_IMAGENET.names.index("Dog")
    assert RESTRICTED_IMAGENET.lookup(151) == dog and RESTRICTED_IMAGENET.lookup(268) == dog
    assert RESTRICTED_IMAGENET.lookup(269) is None


def test_identity_map_leaves_dataset_unchanged():
    ds = Dataset(np.random.default_rng(0).random((5, 3, 2, 2)), [0, 1, 2, 1, 0], ["x", "y", "z"])
    out = apply_superclass_map(ds, SuperclassMap.identity(ds.class_names))
    np.testing.assert_array_equal(out.images, ds.images)
    np.testing.assert_array_equal(out.labels, ds.labels)
    assert out.class_names == ds.class_names


def test_superclass_map_remaps_and_drops():
    ds = Dataset(np.zeros((5, 3, 2, 2)), [0, 1, 2, 3, 4], list("abcde"))
    out = apply_superclass_map(ds, SuperclassMap.parse("Low: 0-1\nHigh: 3, 4\n"))
    assert out.labels.tolist() == [0, 0, 1, 1]
    assert out.class_names == ["Low", "High"]


def test_overlapping_ranges_rejected():
    with pytest.raises(SuperclassMapError):
        SuperclassMap.parse("A: 0-5\nB: 5-7")


def test_superclass_map_text_round_trip():
    assert SuperclassMap.parse(RESTRICTED_IMAGENET.dumps()).entries == RESTRICTED_IMAGENET.entries


def test_noise_seed_properties():
    a = noise_seed((3, 32, 32), 4)
    assert a.min() >= 0 and a.max() <= 1
    np.testing.assert_array_equal(a, noise_seed((3, 32, 32), 4))
    assert abs(a.mean() - 0.5) < 0.05


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 20), st.integers(2, 20))
def test_pattern_seed_is_mirror_symmetric(seed, h, w):
    p = pattern_seed((3, h, w), seed)
    np.testing.assert_array_equal(p, p[:, ::-1, :])
    np.testing.assert_array_equal(p, p[:, :, ::-1])
    assert p.min() >= 0 and p.max() <= 1


def test_pattern_seed_determinism_and_distinct_seeds():
    np.testing.assert_array_equal(pattern_seed((3, 32, 32), 1), pattern_seed((3, 32, 32), 1))
    assert pattern_seed((3, 32, 32), 1).tobytes() != pattern_seed((3, 32, 32), 2).tobytes()


def test_grid_layout_arithmetic():
    imgs = [np.zeros((3, 5, 7)) for _ in range(6)]
    assert image_grid(imgs, 3).shape == (2 * 5 + 2, 3 * 7 + 2 * 2, 3)


def test_grid_padding_is_mid_gray():
    g = image_grid([np.zeros((3, 2, 2))] * 3, 2)
    assert (g[:, 2:4] == 128).all()  # separator column
    assert (g[4:, 4:] == 128).all()  # empty cell


def test_single_image_round_trip(tmp_path):
    img = np.random.default_rng(1).random((3, 6, 5)).astype(np.float32)
    img[0, 0, 0] = 1.7
    path = write_image_grid([img], 1, str(tmp_path / "g.png"))
    back = np.asarray(Image.open(path)).transpose(2, 0, 1)
    np.testing.assert_array_equal(back, np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8))
    assert back[0, 0, 0] == 255


def test_grid_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_image_grid([np.zeros((3, 2, 2))], 1, str(tmp_path / "missing" / "g.png"))


def test_curve_csv_round_trip(tmp_path):
    curve = SweepCurve([0.125, 0.5, 2.0], [0.9, 0.512345678, 0.1], [0.8, 0.4, 0.05], [1.0, 0.6, 0.2], 7)
    path = str(tmp_path / "c.csv")
    write_curve_csv(curve, path)
    with open(path) as fh:
        assert fh.readline().strip() == "radius,mean,band_lo,band_hi,n_pairs"
    back = read_curve_csv(path)
    assert back.radii == curve.radii and back.n_pairs == 7
    np.testing.assert_allclose(back.mean, curve.mean, rtol=1e-6)


def test_empty_curve_writes_nothing(tmp_path):
    path = tmp_path / "c.csv"
    with pytest.raises(ValueError):
        write_curve_csv(SweepCurve([], [], [], [], 0), str(path))
    assert not path.exists()


def test_synthetic_corpus_layout(tmp_path):
    counts = write_corpus(str(tmp_path), n_train=2, n_test=1, n_ood=1, seed=3)
    assert counts == {"train": 2 * len(CLASSES), "test": len(CLASSES), "ood": len(OOD_CLASSES)}
    ds = load_dataset(str(tmp_path), "train")
    assert ds.images.shape[1:] == (3, 32, 32)
    assert ds.class_names[0].endswith(CLASSES[0])
    images, labels = make_shapes(2, 3)
    # PNG quantization is the only difference from the in-memory render
    np.testing.assert_array_equal(ds.labels, labels)
    np.testing.assert_allclose(ds.images, images, atol=0.5 / 255 + 1e-6)
