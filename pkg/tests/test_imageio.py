import io

import numpy as np
import pytest
from PIL import Image

from drc.imageio import encode_png, read_pfm, tonemap, write_pfm, write_png


def test_pfm_round_trip(tmp_path, rng):
    img = rng.random((17, 23, 3)).astype(np.float32) * 10.0
    path = tmp_path / "x.pfm"
    write_pfm(path, img)
    back = read_pfm(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, img)


def test_pfm_rejects_truncation(tmp_path, rng):
    img = rng.random((8, 8, 3)).astype(np.float32)
    path = tmp_path / "x.pfm"
    write_pfm(path, img)
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    from drc.errors import FormatError

    with pytest.raises(FormatError):
        read_pfm(path)


def test_png_decodes_with_independent_reader(rng):
    img = (rng.random((21, 13, 3)) * 255).astype(np.uint8)
    data = encode_png(img)
    decoded = np.asarray(Image.open(io.BytesIO(data)).convert("RGB"))
    assert np.array_equal(decoded, img)


def test_png_deterministic(rng):
    img = (rng.random((32, 32, 3)) * 255).astype(np.uint8)
    assert encode_png(img) == encode_png(img)


def test_png_constant_smaller_than_noisy(rng):
    flat = np.full((64, 64, 3), 128, dtype=np.uint8)
    noise = np.clip(flat.astype(int) + rng.integers(-8, 9, flat.shape), 0, 255).astype(np.uint8)
    assert len(encode_png(flat)) < len(encode_png(noise))


def test_tonemap_range_and_gamma():
    img = np.array([[[0.0, 0.5, 1.0]]])
    out = tonemap(img)
    assert out.dtype == np.uint8
    assert out[0, 0, 0] == 0
    assert out[0, 0, 2] == 255
    assert out[0, 0, 1] == round(255 * 0.5 ** (1 / 2.2))


def test_write_png(tmp_path):
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    write_png(tmp_path / "z.png", img)
    assert (tmp_path / "z.png").read_bytes().startswith(b"\x89PNG")
