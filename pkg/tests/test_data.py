import gzip
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kdwb.data import (Dataset, FormatError, StimulusSpec, adapt_to, gen_gaussian_noise,
                       gen_shapes, gen_uniform_noise, load_cifar10_bin, load_image_dir,
                       load_mnist_dir, load_mnist_idx, mix_augment, one_hot, preprocess,
                       read_netpbm, resize_bilinear, save_image_dir, to_grayscale,
                       write_cifar10_bin, write_netpbm)
from kdwb.data.formats import write_idx_images, write_idx_labels
from kdwb.data.synth import render_shape


def bilinear_oracle(img, h, w):
    """Loop-by-loop bilinear sampling with half-pixel centres and edge clamping."""
    H, W = img.shape
    out = np.zeros((h, w))
    for i in range(h):
        sy = min(max((i + 0.5) * H / h - 0.5, 0.0), H - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, H - 1)
        ty = sy - y0
        for j in range(w):
            sx = min(max((j + 0.5) * W / w - 0.5, 0.0), W - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, W - 1)
            tx = sx - x0
            top = img[y0, x0] * (1 - tx) + img[y0, x1] * tx
            bot = img[y1, x0] * (1 - tx) + img[y1, x1] * tx
            out[i, j] = top * (1 - ty) + bot * ty
    return out


# ---------------------------------------------------------------------- IDX

@pytest.fixture
def idx_pair(tmp_path):
    imgs = np.array([np.arange(12).reshape(3, 4) * 20, 255 - np.arange(12).reshape(3, 4)],
                    dtype=np.uint8)
    write_idx_images(tmp_path / "train-images-idx3-ubyte", imgs)
    write_idx_labels(tmp_path / "train-labels-idx1-ubyte", [7, 2])
    return tmp_path, imgs


def test_idx_round_trip(idx_pair):
    d, imgs = idx_pair
    ds = load_mnist_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte")
    assert ds.images.shape == (2, 1, 3, 4)
    np.testing.assert_array_equal(np.rint(ds.images[:, 0] * 255), imgs)
    np.testing.assert_array_equal(ds.hard_labels, [7, 2])
    assert ds.labeled_mask.all() and ds.num_classes == 10


def test_idx_gz_and_dir(idx_pair):
    d, imgs = idx_pair
    for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"):
        raw = (d / name).read_bytes()
        (d / name).unlink()
        with gzip.open(d / (name + ".gz"), "wb") as fh:
            fh.write(raw)
    ds = load_mnist_dir(d, "train")
    np.testing.assert_array_equal(np.rint(ds.images[:, 0] * 255), imgs)


def test_idx_bad_magic(idx_pair):
    d, _ = idx_pair
    p = d / "train-images-idx3-ubyte"
    p.write_bytes(b"\x00\x00\x00\x00" + p.read_bytes()[4:])
    with pytest.raises(FormatError, match="offset 0"):
        load_mnist_idx(p, d / "train-labels-idx1-ubyte")


def test_idx_truncated(idx_pair):
    d, _ = idx_pair
    p = d / "train-images-idx3-ubyte"
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError, match="offset"):
        load_mnist_idx(p, d / "train-labels-idx1-ubyte")


def test_idx_count_mismatch(idx_pair):
    d, _ = idx_pair
    write_idx_labels(d / "train-labels-idx1-ubyte", [1, 2, 3])
    with pytest.raises(FormatError, match="offset"):
        load_mnist_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte")


def test_missing_mnist_dir(tmp_path):
    with pytest.raises(FormatError):
        load_mnist_dir(tmp_path, "test")


# -------------------------------------------------------------------- CIFAR

def test_cifar_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, size=(2, 3, 32, 32), dtype=np.uint8)
    write_cifar10_bin(tmp_path / "data_batch_1.bin", px, [3, 9])
    ds = load_cifar10_bin(tmp_path)
    assert ds.images.shape == (2, 3, 32, 32)
    np.testing.assert_array_equal(ds.hard_labels, [3, 9])
    np.testing.assert_array_equal(np.rint(ds.images * 255), px)


def test_cifar_plane_order(tmp_path):
    rec = bytearray(3073)
    rec[0] = 1
    rec[1] = 255           # first R pixel
    rec[1 + 1024 + 1] = 128  # second G pixel
    (tmp_path / "test_batch.bin").write_bytes(bytes(rec))
    ds = load_cifar10_bin(tmp_path, split="test")
    assert ds.images[0, 0, 0, 0] == 1.0
    assert ds.images[0, 1, 0, 1] == pytest.approx(128 / 255)


def test_cifar_splits(tmp_path):
    px = np.zeros((1, 3072), dtype=np.uint8)
    for i in (1, 2):
        write_cifar10_bin(tmp_path / f"data_batch_{i}.bin", px, [i])
    write_cifar10_bin(tmp_path / "test_batch.bin", px, [5])
    assert len(load_cifar10_bin(tmp_path, "train")) == 2
    assert list(load_cifar10_bin(tmp_path, "test").hard_labels) == [5]
    assert len(load_cifar10_bin(tmp_path, "all")) == 3


def test_cifar_bad_size(tmp_path):
    (tmp_path / "data_batch_1.bin").write_bytes(b"\x00" * 3074)
    with pytest.raises(FormatError, match="3073"):
        load_cifar10_bin(tmp_path)


def test_cifar_empty_dir(tmp_path):
    with pytest.raises(FormatError):
        load_cifar10_bin(tmp_path)


# ------------------------------------------------------------------- netpbm

def test_p5_full_white(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n3 2\n255\n" + b"\xff" * 6)
    np.testing.assert_array_equal(read_netpbm(p), np.ones((1, 2, 3), dtype=np.float32))


def test_p2_with_comments(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_text("P2\n# a comment\n2 2 # inline\n4\n0 1\n2 4\n")
    np.testing.assert_allclose(read_netpbm(p)[0], [[0, 0.25], [0.5, 1.0]])


def test_p6_interleaved(tmp_path):
    p = tmp_path / "a.ppm"
    p.write_bytes(b"P6 2 1 255\n" + bytes([255, 0, 0, 0, 0, 51]))
    img = read_netpbm(p)
    assert img.shape == (3, 1, 2)
    np.testing.assert_allclose(img[:, 0, 0], [1, 0, 0])
    np.testing.assert_allclose(img[:, 0, 1], [0, 0, 0.2])


def test_sixteen_bit(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 1\n65535\n" + bytes([0x80, 0x00, 0xff, 0xff]))
    np.testing.assert_allclose(read_netpbm(p)[0, 0], [0x8000 / 65535, 1.0])


def test_netpbm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for c, maxval in ((1, 255), (3, 255), (3, 65535)):
        img = rng.integers(0, maxval + 1, size=(c, 5, 7)) / maxval
        write_netpbm(tmp_path / "x.pnm", img, maxval)
        np.testing.assert_allclose(read_netpbm(tmp_path / "x.pnm"), img, atol=1e-6)


@pytest.mark.parametrize("content", [b"P5\n3\n", b"P5\nx 2\n255\n\x00", b"BM\x00\x00",
                                     b"P5\n2 2\n255\n\x00"])
def test_netpbm_bad(tmp_path, content):
    p = tmp_path / "bad.pgm"
    p.write_bytes(content)
    with pytest.raises(FormatError):
        read_netpbm(p)


def test_image_dir_order_and_labels(tmp_path):
    write_netpbm(tmp_path / "b.pgm", np.full((1, 4, 4), 1.0))
    write_netpbm(tmp_path / "a.pgm", np.zeros((1, 4, 4)))
    ds = load_image_dir(tmp_path)
    assert len(ds) == 2 and not ds.labeled_mask.any()
    assert ds.images[0].max() == 0 and ds.images[1].min() == 1


def test_image_dir_rejects_other_files(tmp_path):
    write_netpbm(tmp_path / "a.pgm", np.zeros((1, 4, 4)))
    (tmp_path / "notes.txt").write_text("hi")
    with pytest.raises(FormatError, match="notes.txt"):
        load_image_dir(tmp_path)


def test_image_dir_resize_matches_oracle(tmp_path):
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, size=(3, 32, 32)) / 255
    write_netpbm(tmp_path / "x.ppm", img)
    ds = load_image_dir(tmp_path, target_shape=(3, 28, 28))
    for c in range(3):
        np.testing.assert_allclose(ds.images[0, c], bilinear_oracle(img[c], 28, 28), atol=1e-6)


def test_image_dir_grayscale_to_mnist_shape(tmp_path):
    write_netpbm(tmp_path / "x.ppm", np.ones((3, 32, 32)))
    ds = load_image_dir(tmp_path, target_shape=(1, 28, 28), grayscale=True)
    assert ds.shape == (1, 28, 28)
    np.testing.assert_allclose(ds.images, 1.0, atol=1e-6)


def test_save_image_dir_round_trip(tmp_path):
    ds = gen_shapes(3, 10, 10, seed=2)
    save_image_dir(ds, tmp_path, prefix="s")
    back = load_image_dir(tmp_path)
    np.testing.assert_allclose(back.images, ds.images, atol=0.5 / 255 + 1e-7)


# --------------------------------------------------------------- transforms

def test_red_to_gray():
    red = np.zeros((1, 3, 1, 1), dtype=np.float32)
    red[0, 0] = 1
    assert to_grayscale(red)[0, 0, 0, 0] == pytest.approx(0.299)


def test_grayscale_one_channel_noop():
    x = np.random.default_rng(0).random((2, 1, 3, 3)).astype(np.float32)
    assert to_grayscale(x) is x


def test_ramp_four_to_two():
    ramp = np.arange(16, dtype=np.float64).reshape(4, 4)
    got = resize_bilinear(ramp[None, None], 2, 2)[0, 0]
    # half-pixel centres land at 0.5 and 2.5 along each axis
    np.testing.assert_allclose(got, [[2.5, 4.5], [10.5, 12.5]])
    np.testing.assert_allclose(got, bilinear_oracle(ramp, 2, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 12), st.integers(1, 12),
       st.integers(0, 10_000))
def test_resize_matches_oracle(H, W, h, w, seed):
    img = np.random.default_rng(seed).random((H, W))
    np.testing.assert_allclose(resize_bilinear(img[None, None], h, w)[0, 0],
                               bilinear_oracle(img, h, w), atol=1e-12)


@given(st.floats(-5, 5), st.integers(1, 9), st.integers(1, 9))
def test_resize_constant(value, h, w):
    x = np.full((1, 2, 5, 7), value, dtype=np.float64)
    np.testing.assert_allclose(resize_bilinear(x, h, w), value, atol=1e-12)


def test_resize_zero_dims():
    with pytest.raises(ValueError):
        resize_bilinear(np.zeros((1, 1, 4, 4)), 0, 2)


def test_preprocess_mean_shift_range():
    ds = gen_shapes(20, 16, 16, seed=0)
    out = preprocess(ds, resize_to=(8, 8), mean_shift=0.13)
    assert out.images.min() >= -0.13 - 1e-6 and out.images.max() <= 0.87 + 1e-6
    np.testing.assert_allclose(out.mean_shift, [0.13])


def test_adapt_gray_to_color_teacher():
    ds = gen_shapes(2, 28, 28, seed=0)
    out = adapt_to(ds, (3, 32, 32), mean_shift=[0.1, 0.2, 0.3])
    assert out.shape == (3, 32, 32)
    np.testing.assert_allclose(out.images[:, 1] + 0.2, out.images[:, 0] + 0.1, atol=1e-6)


def test_preprocess_keeps_labels():
    ds = Dataset(np.zeros((2, 1, 4, 4)), one_hot([1, 0], 2))
    out = preprocess(ds, resize_to=(2, 2))
    np.testing.assert_array_equal(out.labels, ds.labels)
    assert out.labeled_mask.all()


# ---------------------------------------------------------------- generators

def test_uniform_noise_bounds_and_mean():
    ds = gen_uniform_noise(10, (1, 28, 28), seed=4)
    assert ds.images.min() >= -0.3 and ds.images.max() < 0.7
    assert abs(float(ds.images[:, :, :, :].ravel()[:10_000].mean()) - 0.2) < 0.01
    assert not ds.labeled_mask.any()


def test_uniform_noise_deterministic():
    a = gen_uniform_noise(3, (1, 5, 5), seed=1).images
    b = gen_uniform_noise(3, (1, 5, 5), seed=1).images
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != gen_uniform_noise(3, (1, 5, 5), seed=2).images.tobytes()


def test_uniform_noise_upper_bound_is_open():
    ds = gen_uniform_noise(50, (1, 20, 20), lo=0.9999999, hi=1.0, seed=0)
    assert ds.images.max() < 1.0


@pytest.mark.parametrize("kwargs", [dict(n=0), dict(lo=0.5, hi=0.5)])
def test_uniform_noise_errors(kwargs):
    args = dict(n=2, shape=(1, 2, 2))
    args.update(kwargs)
    with pytest.raises(ValueError):
        gen_uniform_noise(**args)


def test_gaussian_tiny_std():
    ds = gen_gaussian_noise(4, (1, 5, 5), mean=0.3, std=1e-9, seed=0)
    np.testing.assert_allclose(ds.images, 0.3, atol=1e-6)


def test_gaussian_moments_and_determinism():
    a = gen_gaussian_noise(10_000, (1, 1, 1), mean=1.0, std=2.0, seed=5).images
    assert abs(a.std() / 2.0 - 1) < 0.05
    assert a.tobytes() == gen_gaussian_noise(10_000, (1, 1, 1), 1.0, 2.0, seed=5).images.tobytes()
    with pytest.raises(ValueError):
        gen_gaussian_noise(2, (1, 1, 1), std=0.0)


def test_shapes_determinism_and_range():
    a = gen_shapes(50, 28, 28, seed=8).images
    assert a.tobytes() == gen_shapes(50, 28, 28, seed=8).images.tobytes()
    assert a.min() >= 0 and a.max() <= 1


def test_shapes_structure():
    ds, kinds = gen_shapes(200, 28, 28, seed=1, return_kinds=True)
    for img in ds.images[:, 0]:
        values = np.unique(img)
        assert 1 <= len(values) <= 2
        if len(values) == 2:
            assert values[1] - values[0] >= 0.2 - 1e-6
        # the shape fits in an 80% box, so it is always the minority value
        counts = [(img == v).sum() for v in values]
        assert min(counts) <= 22 * 22 or len(values) == 1


def test_shapes_kind_frequencies():
    _, kinds = gen_shapes(9_999, 8, 8, seed=0, return_kinds=True)
    counts = Counter(kinds.tolist())
    for k in range(3):
        assert abs(counts[k] / 9_999 - 1 / 3) <= 0.02


def test_shapes_canvas_too_small():
    with pytest.raises(ValueError):
        gen_shapes(1, 7, 28)


@pytest.mark.parametrize("kind", ["rectangle", "ellipse", "triangle"])
def test_render_shape_inside_box(kind):
    img = render_shape(kind, 20, 20, 0.0, 1.0, top=4, left=6, sh=10, sw=8)
    ys, xs = np.nonzero(img)
    assert len(ys) > 0
    assert ys.min() >= 4 and ys.max() < 14 and xs.min() >= 6 and xs.max() < 14


def test_render_rectangle_area():
    img = render_shape("rectangle", 20, 20, 0.0, 1.0, top=2, left=3, sh=5, sw=7)
    assert img.sum() == 35


def test_stimulus_spec():
    ds = StimulusSpec("uniform-noise", 4, (1, 6, 6), seed=3).build()
    assert ds.images.tobytes() == gen_uniform_noise(4, (1, 6, 6), seed=3).images.tobytes()
    assert StimulusSpec("shapes", 2, (3, 16, 16)).build().shape == (3, 16, 16)
    with pytest.raises(ValueError):
        StimulusSpec("uniform-noise", 1, params=dict(lo=1, hi=0))
    with pytest.raises(ValueError):
        StimulusSpec("gaussian-noise", 1, params=dict(std=-1))
    with pytest.raises(ValueError):
        StimulusSpec("video", 1)


# ------------------------------------------------------------------- mixing

def _labeled(n, shape=(1, 28, 28)):
    rng = np.random.default_rng(0)
    return Dataset(rng.random((n, *shape)), one_hot(rng.integers(10, size=n), 10), name="lab")


def test_mix_counts():
    mixed = mix_augment(_labeled(500), gen_uniform_noise(3000, (1, 28, 28)))
    assert len(mixed) == 3500 and mixed.labeled_mask.sum() == 500
    np.testing.assert_array_equal(mixed.labels[500:], np.full((3000, 10), 0.1))
    assert mixed.labeled_mask[:500].all()


def test_mix_preserves_pixels():
    lab, stim = _labeled(5), gen_uniform_noise(3, (1, 28, 28))
    mixed = mix_augment(lab, stim)
    np.testing.assert_array_equal(mixed.images, np.concatenate([lab.images, stim.images]))


def test_mix_empty_stimulus():
    lab = _labeled(4)
    empty = Dataset(np.zeros((0, 1, 28, 28)))
    assert mix_augment(lab, empty) is lab


def test_mix_errors():
    with pytest.raises(ValueError):
        mix_augment(_labeled(2), gen_uniform_noise(2, (1, 32, 32)))
    with pytest.raises(ValueError):
        mix_augment(_labeled(2), _labeled(2))


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 2, 2)), np.array([[0.5, 0.4], [1, 0]]))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2, 2)))
    ds = _labeled(3)
    assert ds.images.flags.writeable is False
    assert ds.unlabeled().labels is None
