"""Image containers: PFM in/out, minimal PNG encoder, tonemapping.

PFM files are little-endian with scanlines stored bottom-up. The PNG
encoder is deliberately self-contained so the byte size is a stable noise
proxy: per-row adaptive filtering (minimum sum of absolute residuals over
filters 0..4) and a single zlib stream at level 6.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import FormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def write_pfm(path, image):
    """Write an HxWx3 float32 image as a color PFM file."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("write_pfm expects an HxWx3 array")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(b"PF\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(img[::-1].astype("<f4").tobytes())


def read_pfm(path):
    """Read a color PFM file into an HxWx3 float32 array."""
    with open(path, "rb") as f:
        raw = f.read()
    try:
        header, dims, scale_line, rest = raw.split(b"\n", 3)
    except ValueError:
        raise FormatError("truncated PFM header")
    if header != b"PF":
        raise FormatError(f"not a color PFM file (magic {header!r})")
    w, h = (int(t) for t in dims.split())
    scale = float(scale_line)
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * 3
    if len(rest) < count * 4:
        raise FormatError("truncated PFM payload", offset=len(raw))
    data = np.frombuffer(rest, dtype=dtype, count=count)
    return data.reshape(h, w, 3)[::-1].astype(np.float32)


def tonemap(image, exposure=1.0):
    """HDR -> 8-bit RGB with exposure scaling and gamma 1/2.2."""
    img = np.clip(np.asarray(image, dtype=np.float64) * exposure, 0.0, 1.0)
    return np.rint(255.0 * img ** (1.0 / 2.2)).astype(np.uint8)


def _png_chunk(tag, payload):
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def _filter_rows(img):
    """Per-row adaptive filtering: pick the filter with minimal abs residual sum."""
    h, w, _ = img.shape
    bpp = 3
    raw = img.reshape(h, w * bpp).astype(np.int16)
    prev = np.zeros(w * bpp, dtype=np.int16)
    out = bytearray()
    left = np.zeros_like(raw[0])
    for y in range(h):
        row = raw[y]
        left[:bpp] = 0
        left[bpp:] = row[:-bpp]
        up = prev
        upleft = np.zeros_like(row)
        upleft[bpp:] = up[:-bpp]
        none = row
        sub = (row - left) & 0xFF
        upf = (row - up) & 0xFF
        avg = (row - ((left + up) >> 1)) & 0xFF
        p = left + up - upleft
        pa, pb, pc = np.abs(p - left), np.abs(p - up), np.abs(p - upleft)
        pred = np.where((pa <= pb) & (pa <= pc), left, np.where(pb <= pc, up, upleft))
        paeth = (row - pred) & 0xFF
        candidates = (none & 0xFF, sub, upf, avg, paeth)
        # residuals scored as signed bytes, the usual heuristic
        scores = [int(np.abs(((c + 128) & 0xFF).astype(np.int16) - 128).sum()) for c in candidates]
        k = int(np.argmin(scores))
        out.append(k)
        out.extend(candidates[k].astype(np.uint8).tobytes())
        prev = row
    return bytes(out)


def encode_png(image_u8):
    """Encode an HxWx3 uint8 image as PNG bytes (fixed settings)."""
    img = np.asarray(image_u8)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("encode_png expects an HxWx3 uint8 array")
    h, w, _ = img.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    payload = zlib.compress(_filter_rows(img), 6)
    return (
        PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", payload)
        + _png_chunk(b"IEND", b"")
    )


def write_png(path, image_u8):
    with open(path, "wb") as f:
        f.write(encode_png(image_u8))
