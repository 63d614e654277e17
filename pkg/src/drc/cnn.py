"""From-scratch inference engine for the map-upgrading autoencoder.

The network is a U-Net-style convolutional autoencoder over 32x32 maps:
three encoder stages of two 3x3 convolutions each (doubling width), 2x2
max pooling between stages, a 4x4 bottleneck, three decoder stages of two
3x3 "deconvolutions" (stride-1 transposed convolutions) halving width with
bilinear 2x upsampling and channel-concatenated skips, and an output head
(two 3x3 deconvolutions, then 1x1 convolution + ReLU). Batch norm +
LeakyReLU follow every conv/deconv except the final 1x1.

Weights travel in the DRCW container (little-endian):
    magic "DRCW", u32 version=1, u32 leaky-slope (IEEE-754 bits),
    u32 tensor_count, then per tensor: u16 name length + UTF-8 name,
    u8 rank, u32 dims[rank], float32 values row-major.

All arithmetic is float32; `forward` is pure and reentrant.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .hemimap import HemiMap

DRCW_MAGIC = b"DRCW"
DRCW_VERSION = 1
DEFAULT_LEAKY_SLOPE = 0.01
BN_EPS = 1e-5

IN_CHANNELS = 7
OUT_CHANNELS = 3


def architecture(k):
    """Canonical tensor table for base width k. Returns {name: shape}."""
    if k < 4 or k % 4 != 0:
        raise FormatError(f"base width must be a positive multiple of 4, got {k}")
    table = {}

    def conv(name, cin, cout, ksize=3):
        table[f"{name}.weight"] = (cout, cin, ksize, ksize)
        table[f"{name}.bias"] = (cout,)

    def deconv(name, cin, cout):
        table[f"{name}.weight"] = (cin, cout, 3, 3)
        table[f"{name}.bias"] = (cout,)

    def bn(name, c):
        for t in ("gamma", "beta", "running_mean", "running_var"):
            table[f"{name}.{t}"] = (c,)

    widths = [(IN_CHANNELS, k), (k, 2 * k), (2 * k, 4 * k)]
    for i, (cin, cout) in enumerate(widths, start=1):
        conv(f"enc{i}.conv1", cin, cout)
        bn(f"enc{i}.bn1", cout)
        conv(f"enc{i}.conv2", cout, cout)
        bn(f"enc{i}.bn2", cout)
    conv("bott.conv1", 4 * k, 8 * k)
    bn("bott.bn1", 8 * k)
    conv("bott.conv2", 8 * k, 8 * k)
    bn("bott.bn2", 8 * k)
    dec = [(8 * k, 4 * k), (4 * k, 2 * k), (2 * k, k)]
    for i, (up, out) in zip((3, 2, 1), dec):
        deconv(f"dec{i}.deconv1", up + out, out)  # concat [upsampled, skip]
        bn(f"dec{i}.bn1", out)
        deconv(f"dec{i}.deconv2", out, out)
        bn(f"dec{i}.bn2", out)
    deconv("head.deconv1", k, k // 2)
    bn("head.bn1", k // 2)
    deconv("head.deconv2", k // 2, k // 4)
    bn("head.bn2", k // 4)
    conv("head.conv_out", k // 4, OUT_CHANNELS, ksize=1)
    return table


@dataclass
class Network:
    tensors: dict
    k: int
    slope: float = DEFAULT_LEAKY_SLOPE
    version: int = DRCW_VERSION

    def __post_init__(self):
        expected = architecture(self.k)
        missing = set(expected) - set(self.tensors)
        if missing:
            raise FormatError(f"missing tensor {sorted(missing)[0]!r}")
        extra = set(self.tensors) - set(expected)
        if extra:
            raise FormatError(f"unexpected tensor {sorted(extra)[0]!r}")
        for name, shape in expected.items():
            got = self.tensors[name].shape
            if got != shape:
                raise FormatError(
                    f"shape mismatch for {name!r}: expected {shape}, got {got}")


# ---------------------------------------------------------------------------
# primitives

def conv2d(x, weight, bias):
    """3x3 (pad 1) or 1x1 (pad 0) stride-1 convolution, torch layout."""
    cout, cin, kh, kw = weight.shape
    if x.shape[0] != cin:
        raise FormatError(f"channel mismatch: input {x.shape[0]}, kernel {cin}")
    c, h, w = x.shape
    if kh == 1:
        out = weight.reshape(cout, cin) @ x.reshape(cin, h * w)
    else:
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        s = xp.strides
        cols = np.lib.stride_tricks.as_strided(
            xp, (cin, kh, kw, h, w), (s[0], s[1], s[2], s[1], s[2]))
        out = weight.reshape(cout, cin * 9) @ cols.reshape(cin * 9, h * w)
    out += bias[:, None]
    return out.reshape(cout, h, w)


def deconv2d(x, weight, bias):
    """Stride-1, pad-1 transposed 3x3 convolution (spatial size preserved).

    Equivalent to a 3x3 convolution with the kernel flipped and the channel
    axes swapped; weight layout is (c_in, c_out, 3, 3).
    """
    w = weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    return conv2d(x, np.ascontiguousarray(w), bias)


def batchnorm_infer(x, gamma, beta, running_mean, running_var, eps=BN_EPS):
    """Inference-mode batch normalization per channel."""
    var = running_var + eps
    if np.any(var <= 0):
        raise FormatError("nonpositive running_var + eps")
    scale = (gamma / np.sqrt(var)).astype(np.float32)
    shift = (beta - running_mean * scale).astype(np.float32)
    return x * scale[:, None, None] + shift[:, None, None]


def leaky_relu(x, slope):
    return np.where(x >= 0, x, np.float32(slope) * x)


def relu(x):
    return np.maximum(x, np.float32(0))


def maxpool2x2(x):
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise FormatError("maxpool2x2 requires even spatial dims")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def upsample_bilinear2x2(x):
    """2x bilinear upsampling, align_corners=False semantics."""
    c, h, w = x.shape

    def weights(n):
        src = np.maximum((np.arange(2 * n) + 0.5) / 2.0 - 0.5, 0.0)
        i0 = np.minimum(src.astype(np.int64), n - 1)
        i1 = np.minimum(i0 + 1, n - 1)
        frac = (src - i0).astype(np.float32)
        return i0, i1, frac

    r0, r1, fr = weights(h)
    out = x[:, r0] * (1 - fr)[None, :, None] + x[:, r1] * fr[None, :, None]
    c0, c1, fc = weights(w)
    out = out[:, :, c0] * (1 - fc)[None, None, :] + out[:, :, c1] * fc[None, None, :]
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# forward pass

def _stage(net, prefix, x, deconv=False):
    op = deconv2d if deconv else conv2d
    kind = "deconv" if deconv else "conv"
    t = net.tensors
    for i in (1, 2):
        x = op(x, t[f"{prefix}.{kind}{i}.weight"], t[f"{prefix}.{kind}{i}.bias"])
        x = batchnorm_infer(x, t[f"{prefix}.bn{i}.gamma"], t[f"{prefix}.bn{i}.beta"],
                            t[f"{prefix}.bn{i}.running_mean"],
                            t[f"{prefix}.bn{i}.running_var"])
        x = leaky_relu(x, net.slope)
    return x


def forward(net, x):
    """Map stack (7,32,32) -> predicted radiance (3,32,32), nonnegative."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape != (IN_CHANNELS, 32, 32):
        raise FormatError(f"forward expects (7,32,32) input, got {x.shape}")
    s1 = _stage(net, "enc1", x)
    s2 = _stage(net, "enc2", maxpool2x2(s1))
    s3 = _stage(net, "enc3", maxpool2x2(s2))
    x = _stage(net, "bott", maxpool2x2(s3))
    x = _stage(net, "dec3", np.concatenate([upsample_bilinear2x2(x), s3]), deconv=True)
    x = _stage(net, "dec2", np.concatenate([upsample_bilinear2x2(x), s2]), deconv=True)
    x = _stage(net, "dec1", np.concatenate([upsample_bilinear2x2(x), s1]), deconv=True)
    t = net.tensors
    x = deconv2d(x, t["head.deconv1.weight"], t["head.deconv1.bias"])
    x = batchnorm_infer(x, t["head.bn1.gamma"], t["head.bn1.beta"],
                        t["head.bn1.running_mean"], t["head.bn1.running_var"])
    x = leaky_relu(x, net.slope)
    x = deconv2d(x, t["head.deconv2.weight"], t["head.deconv2.bias"])
    x = batchnorm_infer(x, t["head.bn2.gamma"], t["head.bn2.beta"],
                        t["head.bn2.running_mean"], t["head.bn2.running_var"])
    x = leaky_relu(x, net.slope)
    x = conv2d(x, t["head.conv_out.weight"], t["head.conv_out.bias"])
    return relu(x)


# ---------------------------------------------------------------------------
# DRCW container

def save_weights(net, path=None):
    """Serialize a Network; returns bytes if path is None."""
    buf = io.BytesIO()
    buf.write(DRCW_MAGIC)
    buf.write(struct.pack("<II", net.version,
                          struct.unpack("<I", struct.pack("<f", net.slope))[0]))
    names = sorted(net.tensors)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        data = np.ascontiguousarray(net.tensors[name], dtype="<f4")
        enc = name.encode("utf-8")
        buf.write(struct.pack("<H", len(enc)))
        buf.write(enc)
        buf.write(struct.pack("<B", data.ndim))
        buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
        buf.write(data.tobytes())
    raw = buf.getvalue()
    if path is None:
        return raw
    with open(path, "wb") as f:
        f.write(raw)
    return None


def load_weights(src):
    """Parse DRCW bytes (or a file path) into a validated Network."""
    if isinstance(src, (str, bytes)) and not (isinstance(src, bytes)):
        with open(src, "rb") as f:
            raw = f.read()
    else:
        raw = src
    buf = io.BytesIO(raw)

    def take(n, what):
        b = buf.read(n)
        if len(b) != n:
            raise FormatError(f"truncated while reading {what}", offset=buf.tell())
        return b

    if take(4, "magic") != DRCW_MAGIC:
        raise FormatError("bad magic, not a DRCW file", offset=0)
    version, slope_bits = struct.unpack("<II", take(8, "header"))
    if version != DRCW_VERSION:
        raise FormatError(f"unsupported DRCW version {version}", offset=4)
    slope = struct.unpack("<f", struct.pack("<I", slope_bits))[0]
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "tensor name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} dims"))
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(4 * n, f"{name} data"), dtype="<f4")
        tensors[name] = data.reshape(dims).astype(np.float32)
    if buf.read(1):
        raise FormatError("trailing bytes after last tensor", offset=buf.tell() - 1)
    if "enc1.conv1.weight" not in tensors:
        raise FormatError("missing tensor 'enc1.conv1.weight'")
    k = int(tensors["enc1.conv1.weight"].shape[0])
    return Network(tensors=tensors, k=k, slope=float(slope), version=version)


# ---------------------------------------------------------------------------
# network constructors

def zero_network(k=64, slope=DEFAULT_LEAKY_SLOPE):
    """All weights zero, batch-norm identity stats."""
    tensors = {}
    for name, shape in architecture(k).items():
        if name.endswith(("gamma",)):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith("running_var"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return Network(tensors=tensors, k=k, slope=slope)


def random_network(k=64, seed=0, slope=DEFAULT_LEAKY_SLOPE):
    """He-style random weights with sane batch-norm statistics."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in architecture(k).items():
        if name.endswith("gamma"):
            t = rng.uniform(0.8, 1.2, shape)
        elif name.endswith("beta"):
            t = rng.normal(0.0, 0.05, shape)
        elif name.endswith("running_mean"):
            t = rng.normal(0.0, 0.1, shape)
        elif name.endswith("running_var"):
            t = rng.uniform(0.5, 1.5, shape)
        elif name.endswith("bias"):
            t = rng.normal(0.0, 0.02, shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            t = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
        tensors[name] = t.astype(np.float32)
    return Network(tensors=tensors, k=k, slope=slope)


def make_blur_network(k=16, slope=DEFAULT_LEAKY_SLOPE):
    """Deterministic stub: output = radiance channels through two stacked
    3x3 Gaussian taps (the skip path carries them at full resolution).

    Useful as a weights file for pipeline tests and the task-budget sweeps:
    the prediction is a smoothed copy of the 1-spp input radiance.
    """
    if k < 12:
        raise FormatError("blur network needs k >= 12 (head width k//4 >= 3)")
    net = zero_network(k, slope)
    t = net.tensors
    g1 = np.exp(-0.5 * np.arange(-1, 2) ** 2)
    g1 /= g1.sum()
    g3 = np.outer(g1, g1).astype(np.float32)

    for c in range(3):
        t["enc1.conv1.weight"][c, c, 1, 1] = 1.0
        t["enc1.conv2.weight"][c, c, 1, 1] = 1.0
        # dec1 input is concat([upsampled (2k ch, all zero), skip1 (k ch)])
        t["dec1.deconv1.weight"][2 * k + c, c, 1, 1] = 1.0
        t["dec1.deconv2.weight"][c, c] = g3
        t["head.deconv1.weight"][c, c, 1, 1] = 1.0
        t["head.deconv2.weight"][c, c] = g3
        t["head.conv_out.weight"][c, c, 0, 0] = 1.0
    return net


# ---------------------------------------------------------------------------
# classic baseline

def gaussian_blur(hemimap, sigma=1.0):
    """Separable Gaussian blur of a map: azimuth wraps, polar axis clamps.

    Accepts a HemiMap (returns one) or a raw (H,W[,C]) array.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    is_map = isinstance(hemimap, HemiMap)
    data = np.asarray(hemimap.data if is_map else hemimap, dtype=np.float64)
    radius = int(np.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()

    h = data.shape[0]
    # vertical (clamped) pass
    out = np.zeros_like(data)
    for j, kv in zip(xs, kernel):
        idx = np.clip(np.arange(h) + j, 0, h - 1)
        out += kv * data[idx]
    # horizontal (wrapped) pass
    res = np.zeros_like(out)
    for j, kv in zip(xs, kernel):
        res += kv * np.roll(out, -j, axis=1)
    if is_map:
        from dataclasses import replace

        return replace(hemimap, data=res.astype(hemimap.data.dtype))
    return res
