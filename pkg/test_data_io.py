"""Image/label I/O, synthetic scenes, augmentation, dataset readers and checkpoints."""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from PIL import Image

from crosscbam.data import checkpoint as ckpt
from crosscbam.data.augment import augment, hflip, nearest_indices, resize_sample
from crosscbam.data.datasets import (
    InMemoryDataset,
    SyntheticDataset,
    camvid,
    cityscapes,
    iterate_batches,
    open_dataset,
)
from crosscbam.data.image_io import (
    PALETTE,
    colorize,
    decolorize,
    read_color_mask,
    read_image,
    read_mask,
    write_color_mask,
    write_image,
    write_mask,
    write_overlay,
)
from crosscbam.data.synthetic import ShapeSpec, class_histogram, gen_synthetic, render_scene
from crosscbam.errors import ConfigurationError, DataError
from crosscbam.models.data import Checkpoint, Sample, SyntheticSceneSpec
from crosscbam.models.network_config import NetworkConfig
from crosscbam.models.training import AugmentConfig
from crosscbam.nn.network import build_network

SMALL = NetworkConfig(base_ch=16, decoder_ch=32, num_classes=4)


# ---------------------------------------------------------------------------
# Image and label files
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_image_round_trip(tmp_path, suffix):
    image = np.random.default_rng(0).integers(0, 256, size=(3, 5, 7)).astype(np.float32) / 255.0
    path = write_image(tmp_path / f"img{suffix}", image)
    assert_allclose(read_image(path), image, atol=1e-6)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_mask_round_trip(tmp_path, suffix):
    mask = np.array([[0, 1, 2], [18, 255, 3]])
    path = write_mask(tmp_path / f"mask{suffix}", mask)
    assert_array_equal(read_mask(path), mask)


def test_grey_image_is_replicated(tmp_path):
    path = write_mask(tmp_path / "grey.png", np.full((2, 3), 51))
    image = read_image(path)
    assert image.shape == (3, 2, 3)
    assert_allclose(image, 0.2, atol=1e-6)


def test_palette_png_is_read_as_color(tmp_path):
    img = Image.new("P", (2, 1))
    img.putpalette([255, 0, 0, 0, 0, 255] + [0] * 762)
    img.putpixel((1, 0), 1)
    path = tmp_path / "indexed.png"
    img.save(path)
    image = read_image(path)
    assert_allclose(image[:, 0, 0], [1.0, 0.0, 0.0])
    assert_allclose(image[:, 0, 1], [0.0, 0.0, 1.0])
    assert_array_equal(read_mask(path), [[0, 1]])


def test_mask_writer_rejects_wide_labels(tmp_path):
    with pytest.raises(DataError):
        write_mask(tmp_path / "bad.png", np.array([[0, 300]]))
    with pytest.raises(DataError):
        write_mask(tmp_path / "bad.png", np.zeros((2, 2, 2)))


def test_bad_png_signature_reports_offset(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"\x89PNX\r\n\x1a\n" + b"\x00" * 16)
    with pytest.raises(DataError, match="offset 3"):
        read_image(path)


def test_truncated_png_body(tmp_path):
    good = write_mask(tmp_path / "good.png", np.zeros((8, 8))).read_bytes()
    path = tmp_path / "short.png"
    path.write_bytes(good[:20])
    with pytest.raises(DataError):
        read_mask(path)


def test_netpbm_header_errors_name_the_byte_offset(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P2\n2 abc\n255\n0 1 2 3\n")
    with pytest.raises(DataError, match="byte offset 5"):
        read_mask(path)
    path.write_bytes(b"P5\n2 2\n255\n")
    with pytest.raises(DataError, match="byte offset 0"):
        read_mask(path)
    path.write_bytes(b"P2\n2 2\n255\n0 1 2\n")
    with pytest.raises(DataError, match="expected 4 samples"):
        read_mask(path)
    path.write_bytes(b"P2\n# comment\n1 1\n9\n10\n")
    with pytest.raises(DataError, match="exceeds maxval"):
        read_mask(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        read_image(tmp_path / "nope.png")


def test_palette_inversion(tmp_path):
    mask = np.arange(19).reshape(1, 19)
    assert_array_equal(decolorize(colorize(mask)), mask)
    with_ignore = np.array([[0, 255]])
    assert_array_equal(decolorize(colorize(with_ignore)), with_ignore)
    assert_array_equal(read_color_mask(write_color_mask(tmp_path / "c.png", mask)), mask)
    odd = colorize(np.zeros((1, 2), dtype=np.int64))
    odd[0, 1] = (1, 2, 3)
    with pytest.raises(DataError, match=r"pixel \(0, 1\)"):
        decolorize(odd)
    assert len(PALETTE) == 19


def test_overlay_writes_rgb(tmp_path):
    image = np.zeros((3, 4, 4), dtype=np.float32)
    path = write_overlay(tmp_path / "o.png", image, np.ones((4, 4), dtype=np.int64), alpha=1.0)
    assert_allclose(read_image(path)[:, 0, 0] * 255.0, PALETTE[1], atol=0.5)


# ---------------------------------------------------------------------------
# Synthetic scenes and augmentation
# ---------------------------------------------------------------------------

def test_synthetic_scenes_are_deterministic():
    spec = SyntheticSceneSpec(seed=5, n_samples=4, num_classes=4, canvas=(32, 48), noise=0.05)
    a, b = gen_synthetic(spec), gen_synthetic(spec)
    for x, y in zip(a, b):
        assert_array_equal(x.image, y.image)
        assert_array_equal(x.mask, y.mask)
    assert a[0].image.shape == (3, 32, 48)
    assert set(np.unique(np.concatenate([s.mask.ravel() for s in a]))) <= {0, 1, 2, 3}
    other = gen_synthetic(SyntheticSceneSpec(seed=6, n_samples=4, num_classes=4, canvas=(32, 48)))
    assert any(not np.array_equal(x.mask, y.mask) for x, y in zip(a, other))


def test_render_scene_paints_in_order():
    shapes = [ShapeSpec("rectangle", 1, (0, 0, 4, 4)), ShapeSpec("rectangle", 2, (2, 2, 6, 6))]
    sample = render_scene(shapes, (8, 8))
    assert sample.mask[1, 1] == 1
    assert sample.mask[3, 3] == 2
    assert sample.mask[7, 7] == 0
    stripe = render_scene([ShapeSpec("stripe", 1, (0, 2, 8, 3), vertical=True)], (4, 4))
    assert_array_equal(stripe.mask[:, 2], 1)
    assert class_histogram([sample], 3).sum() == 64


def test_synthetic_spec_validation():
    for bad in ({"num_classes": 1}, {"canvas": (0, 4)}, {"shape_kinds": ("hexagon",)}, {"noise": -1.0}):
        with pytest.raises(ConfigurationError):
            SyntheticSceneSpec(**bad)


def test_nearest_indices_half_pixel():
    assert nearest_indices(4, 2).tolist() == [1, 3]
    assert nearest_indices(2, 4).tolist() == [0, 0, 1, 1]


def test_augmentation_keeps_labels_and_crop():
    sample = gen_synthetic(SyntheticSceneSpec(seed=1, n_samples=1, num_classes=4, canvas=(64, 64)))[0]
    labels = set(np.unique(sample.mask)) | {255}
    cfg = AugmentConfig(crop=(32, 32), scale_range=(0.25, 1.5))
    rng = np.random.default_rng(0)
    for _ in range(100):
        out = augment(sample, cfg, rng)
        assert out.image.shape == (3, 32, 32)
        assert set(np.unique(out.mask)) <= labels
        assert out.image.min() >= 0.0 and out.image.max() <= 1.0


def test_double_flip_and_identity_resize():
    sample = gen_synthetic(SyntheticSceneSpec(seed=2, n_samples=1, canvas=(8, 12)))[0]
    twice = hflip(hflip(sample))
    assert_array_equal(twice.image, sample.image)
    assert_array_equal(twice.mask, sample.mask)
    assert resize_sample(sample, 8, 12) is sample


def test_crop_without_padding_must_fit():
    sample = Sample(image=np.zeros((3, 8, 8), dtype=np.float32), mask=np.zeros((8, 8), dtype=np.int64))
    cfg = AugmentConfig(crop=(16, 16), scale_range=(1.0, 1.0), pad_to_crop=False)
    with pytest.raises(ConfigurationError):
        augment(sample, cfg, np.random.default_rng(0))
    padded = augment(sample, AugmentConfig(crop=(16, 16), scale_range=(1.0, 1.0)), np.random.default_rng(0))
    assert (padded.mask == 255).sum() == 16 * 16 - 64


# ---------------------------------------------------------------------------
# Datasets and batches
# ---------------------------------------------------------------------------

def test_batches_are_deterministic_and_worker_independent():
    dataset = SyntheticDataset(SyntheticSceneSpec(seed=0, n_samples=7, num_classes=3, canvas=(32, 32)))
    cfg = AugmentConfig(crop=(16, 16), scale_range=(0.5, 1.0))
    serial = list(iterate_batches(dataset, 2, epoch=1, seed=3, augment_cfg=cfg))
    pooled = list(iterate_batches(dataset, 2, epoch=1, seed=3, augment_cfg=cfg, workers=3))
    assert len(serial) == 3
    for (xa, ya), (xb, yb) in zip(serial, pooled):
        assert xa.shape == (2, 3, 16, 16)
        assert_array_equal(xa, xb)
        assert_array_equal(ya, yb)
    other_epoch = list(iterate_batches(dataset, 2, epoch=2, seed=3, augment_cfg=cfg))
    assert any(not np.array_equal(a[1], b[1]) for a, b in zip(serial, other_epoch))


def test_batches_need_a_common_size():
    samples = [
        Sample(image=np.zeros((3, 4, 4), dtype=np.float32), mask=np.zeros((4, 4), dtype=np.int64)),
        Sample(image=np.zeros((3, 8, 4), dtype=np.float32), mask=np.zeros((8, 4), dtype=np.int64)),
    ]
    with pytest.raises(DataError):
        list(iterate_batches(InMemoryDataset(samples, 2), 2, shuffle=False))
    with pytest.raises(ConfigurationError):
        list(iterate_batches(InMemoryDataset(samples, 2), 0))
    assert list(iterate_batches(InMemoryDataset(samples, 2), 3)) == []


def test_cityscapes_and_camvid_layouts(tmp_path):
    image = np.zeros((3, 4, 4), dtype=np.float32)
    city = tmp_path / "city"
    write_image(city / "leftImg8bit" / "val" / "aachen" / "aachen_000000_000019_leftImg8bit.png", image)
    write_mask(city / "gtFine" / "val" / "aachen" / "aachen_000000_000019_gtFine_labelTrainIds.png",
               np.full((4, 4), 7))
    dataset = cityscapes(city, "val")
    assert len(dataset) == 1 and dataset.num_classes == 19
    assert dataset[0].mask[0, 0] == 7

    cam = tmp_path / "cam"
    write_image(cam / "test" / "0001.png", image)
    write_mask(cam / "testannot" / "0001.png", np.full((4, 4), 2))
    assert open_dataset("camvid", cam, "test")[0].mask.max() == 2
    assert camvid(cam, "test").num_classes == 11

    write_image(cam / "test" / "0002.png", image)
    with pytest.raises(DataError, match="missing label map"):
        camvid(cam, "test")
    with pytest.raises(DataError):
        cityscapes(city, "train")
    with pytest.raises(ConfigurationError):
        open_dataset("ade20k", cam, "test")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    model = build_network(SMALL, seed=1)
    path = ckpt.save_checkpoint(model, tmp_path / "m.xcbm", extra={"iteration": 5})
    fresh = build_network(SMALL, seed=2)
    loaded = ckpt.load_checkpoint(fresh, path)
    assert loaded.config["iteration"] == 5
    assert loaded.config["network"] == SMALL.to_dict()
    for (name, a), (_, b) in zip(ckpt.model_state(model).items(), ckpt.model_state(fresh).items()):
        assert_array_equal(a.astype(np.float32), b, err_msg=name)
    assert path.read_bytes()[:4] == ckpt.MAGIC


def test_checkpoint_corruption(tmp_path):
    raw = ckpt.encode(Checkpoint(config={"a": 1}, tensors={"w": np.ones((2, 2), dtype=np.float32)}))
    assert ckpt.decode(raw).tensors["w"].shape == (2, 2)
    with pytest.raises(DataError, match="truncated"):
        ckpt.decode(raw[:-3])
    with pytest.raises(DataError, match="trailing"):
        ckpt.decode(raw + b"\x00")
    with pytest.raises(DataError, match="magic"):
        ckpt.decode(b"NOPE" + raw[4:])
    with pytest.raises(DataError, match="version 2"):
        ckpt.decode(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
    with pytest.raises(DataError, match="no such checkpoint"):
        ckpt.read_checkpoint(tmp_path / "missing.xcbm")


def test_checkpoint_with_undecodable_tensor_name():
    raw = bytearray(ckpt.encode(Checkpoint(config={}, tensors={"ab": np.zeros(1, dtype=np.float32)})))
    at = raw.index(b"ab")
    raw[at : at + 2] = b"\xff\xfe"
    with pytest.raises(DataError, match=f"tensor 0 name at offset {at - 4}"):
        ckpt.decode(bytes(raw))


def test_mismatched_checkpoint_leaves_model_untouched(tmp_path):
    path = ckpt.save_checkpoint(build_network(SMALL, seed=1), tmp_path / "m.xcbm")
    wider = build_network(SMALL.replace(decoder_ch=64), seed=3)
    before = [p.data.copy() for p in wider.parameters()]
    with pytest.raises(ConfigurationError):
        ckpt.load_checkpoint(wider, path)
    assert all(np.array_equal(a, p.data) for a, p in zip(before, wider.parameters()))

    same_shapes = build_network(SMALL.replace(dilations=(1, 5)), seed=3)
    with pytest.raises(ConfigurationError, match="dilations"):
        ckpt.load_checkpoint(same_shapes, path)


def main():
    print("Data and checkpoint tests")
    print("=" * 50)
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn) and not hasattr(fn, "pytestmark"):
            if fn.__code__.co_argcount:
                continue
            print(f"  {name}")
            fn()
    print("\nRun under pytest for the file-backed cases.")


if __name__ == "__main__":
    main()
