"""Torch model mirroring the renderer's inference architecture, plus DRCW
import/export (independent implementation of the container)."""

from __future__ import annotations

import io
import os
import struct

import numpy as np
import torch
from torch import nn

DRCW_MAGIC = b"DRCW"
DRCW_VERSION = 1
DEFAULT_SLOPE = 0.01
BN_EPS = 1e-5


class _ConvStage(nn.Module):
    def __init__(self, cin, cout, slope, transposed=False):
        super().__init__()
        kind = "deconv" if transposed else "conv"
        op = (lambda a, b: nn.ConvTranspose2d(a, b, 3, stride=1, padding=1)) \
            if transposed else (lambda a, b: nn.Conv2d(a, b, 3, padding=1))
        setattr(self, f"{kind}1", op(cin, cout))
        self.bn1 = nn.BatchNorm2d(cout, eps=BN_EPS)
        setattr(self, f"{kind}2", op(cout, cout))
        self.bn2 = nn.BatchNorm2d(cout, eps=BN_EPS)
        self._kind = kind
        self.act = nn.LeakyReLU(slope)

    def forward(self, x):
        x = self.act(self.bn1(getattr(self, f"{self._kind}1")(x)))
        return self.act(self.bn2(getattr(self, f"{self._kind}2")(x)))


class _Head(nn.Module):
    def __init__(self, k, slope):
        super().__init__()
        self.deconv1 = nn.ConvTranspose2d(k, k // 2, 3, stride=1, padding=1)
        self.bn1 = nn.BatchNorm2d(k // 2, eps=BN_EPS)
        self.deconv2 = nn.ConvTranspose2d(k // 2, k // 4, 3, stride=1, padding=1)
        self.bn2 = nn.BatchNorm2d(k // 4, eps=BN_EPS)
        self.conv_out = nn.Conv2d(k // 4, 3, 1)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x):
        x = self.act(self.bn1(self.deconv1(x)))
        x = self.act(self.bn2(self.deconv2(x)))
        return torch.relu(self.conv_out(x))


class MapAutoencoder(nn.Module):
    """U-Net-style autoencoder over 32x32 hemisphere maps (7 -> 3 channels).

    Encoder stages double the width, decoder stages halve it; skips are
    channel-concatenated as [upsampled, skip]; upsampling is bilinear with
    align_corners=False; all conv/deconv except the final 1x1 carry
    batch norm + LeakyReLU.
    """

    def __init__(self, k=64, slope=DEFAULT_SLOPE):
        super().__init__()
        if k < 4 or k % 4:
            raise ValueError("base width must be a positive multiple of 4")
        self.k = k
        self.slope = slope
        self.enc1 = _ConvStage(7, k, slope)
        self.enc2 = _ConvStage(k, 2 * k, slope)
        self.enc3 = _ConvStage(2 * k, 4 * k, slope)
        self.bott = _ConvStage(4 * k, 8 * k, slope)
        self.dec3 = _ConvStage(8 * k + 4 * k, 4 * k, slope, transposed=True)
        self.dec2 = _ConvStage(4 * k + 2 * k, 2 * k, slope, transposed=True)
        self.dec1 = _ConvStage(2 * k + k, k, slope, transposed=True)
        self.head = _Head(k, slope)
        self.pool = nn.MaxPool2d(2)
        self.up = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)

    def forward(self, x):
        s1 = self.enc1(x)
        s2 = self.enc2(self.pool(s1))
        s3 = self.enc3(self.pool(s2))
        x = self.bott(self.pool(s3))
        x = self.dec3(torch.cat([self.up(x), s3], dim=1))
        x = self.dec2(torch.cat([self.up(x), s2], dim=1))
        x = self.dec1(torch.cat([self.up(x), s1], dim=1))
        return self.head(x)


# state_dict key suffix -> DRCW tensor name suffix
_BN_RENAME = {"weight": "gamma", "bias": "beta",
              "running_mean": "running_mean", "running_var": "running_var"}


def _drcw_names(model):
    """Map DRCW tensor names to state_dict keys."""
    mapping = {}
    for key in model.state_dict():
        if key.endswith("num_batches_tracked"):
            continue
        parts = key.split(".")
        if ".bn" in key:
            mapping[".".join(parts[:-1]) + "." + _BN_RENAME[parts[-1]]] = key
        else:
            mapping[key] = key
    return mapping


def export_drcw(model, path=None):
    """Serialize the model as DRCW bytes (or to a file)."""
    state = model.state_dict()
    tensors = {}
    for name, key in _drcw_names(model).items():
        tensors[name] = state[key].detach().cpu().numpy().astype("<f4")
    buf = io.BytesIO()
    buf.write(DRCW_MAGIC)
    buf.write(struct.pack("<II", DRCW_VERSION,
                          struct.unpack("<I", struct.pack("<f", model.slope))[0]))
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        data = tensors[name]
        enc = name.encode("utf-8")
        buf.write(struct.pack("<H", len(enc)))
        buf.write(enc)
        buf.write(struct.pack("<B", data.ndim))
        buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
        buf.write(np.ascontiguousarray(data).tobytes())
    raw = buf.getvalue()
    if path is None:
        return raw
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(raw)
    os.replace(tmp, path)  # atomic publish
    return None


def import_drcw(src):
    """Read DRCW bytes (or a file) into a fresh MapAutoencoder."""
    if isinstance(src, str):
        with open(src, "rb") as f:
            raw = f.read()
    else:
        raw = src
    buf = io.BytesIO(raw)
    if buf.read(4) != DRCW_MAGIC:
        raise ValueError("bad magic, not a DRCW file")
    version, slope_bits = struct.unpack("<II", buf.read(8))
    if version != DRCW_VERSION:
        raise ValueError(f"unsupported DRCW version {version}")
    slope = struct.unpack("<f", struct.pack("<I", slope_bits))[0]
    (count,) = struct.unpack("<I", buf.read(4))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", buf.read(2))
        name = buf.read(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", buf.read(1))
        dims = struct.unpack(f"<{rank}I", buf.read(4 * rank))
        n = int(np.prod(dims))
        tensors[name] = np.frombuffer(buf.read(4 * n), dtype="<f4").reshape(dims)
    k = int(tensors["enc1.conv1.weight"].shape[0])
    model = MapAutoencoder(k=k, slope=float(slope))
    state = model.state_dict()
    for name, key in _drcw_names(model).items():
        if name not in tensors:
            raise ValueError(f"missing tensor {name!r}")
        state[key] = torch.from_numpy(tensors[name].copy())
    model.load_state_dict(state)
    model.eval()
    return model


def forward_reference(model_or_weights, x):
    """Deterministic inference-mode forward pass (the parity partner of the
    renderer's from-scratch engine). Accepts (7,32,32) or a batch."""
    model = model_or_weights
    if not isinstance(model, nn.Module):
        model = import_drcw(model)
    model.eval()
    arr = torch.as_tensor(np.asarray(x, dtype=np.float32))
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    with torch.no_grad():
        out = model(arr).numpy()
    return out[0] if single else out
