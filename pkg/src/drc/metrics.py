"""Image and map quality statistics.

l1_diff and ssim operate on float arrays; ssim follows the standard
windowed formulation (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03,
L=1 for [0,1] data), averaged over the valid region and over channels.
png_size_proxy measures residual noise through the deterministic
in-package PNG encoder. kruskal_wallis is the rank-based H test with tie
correction and a chi-square upper-tail p value.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve1d
from scipy.special import gammaincc

from .errors import ContractError
from .imageio import encode_png

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def l1_diff(a, b):
    """Mean absolute difference over all components."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def _ssim_window():
    xs = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2.0
    k = np.exp(-0.5 * (xs / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _local_mean(x, kernel):
    out = convolve1d(x, kernel, axis=0, mode="constant")
    out = convolve1d(out, kernel, axis=1, mode="constant")
    pad = (SSIM_WINDOW - 1) // 2
    return out[pad:-pad, pad:-pad]


def ssim(a, b, data_range=1.0):
    """Mean structural similarity; multichannel images average per-channel."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], data_range)
                              for c in range(a.shape[2])]))
    if min(a.shape) < SSIM_WINDOW:
        raise ContractError(f"image smaller than the {SSIM_WINDOW}px window")
    kernel = _ssim_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _local_mean(a, kernel)
    mu_b = _local_mean(b, kernel)
    mu_aa = _local_mean(a * a, kernel)
    mu_bb = _local_mean(b * b, kernel)
    mu_ab = _local_mean(a * b, kernel)
    var_a = mu_aa - mu_a * mu_a
    var_b = mu_bb - mu_b * mu_b
    cov = mu_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def png_size_proxy(image_u8):
    """Encoded PNG byte count of an 8-bit RGB image (fixed settings).

    Comparisons are meaningful within one platform/build only; use for
    orderings, never for absolute cross-platform values.
    """
    img = np.asarray(image_u8)
    if img.dtype != np.uint8:
        raise ContractError("png_size_proxy expects an 8-bit image")
    return len(encode_png(img))


def chi2_sf(x, df):
    """Chi-square upper-tail probability (regularized incomplete gamma)."""
    return float(gammaincc(df / 2.0, x / 2.0))


def _rank_with_ties(values):
    """Average ranks (1-based); returns ranks and tie-group sizes."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ties = []
    i = 0
    sv = values[order]
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        ties.append(j - i + 1)
        i = j + 1
    return ranks, ties


def kruskal_wallis(groups):
    """Rank-based H statistic with tie correction; p from the chi-square
    tail with df = len(groups) - 1."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise ContractError("need at least two groups")
    if any(len(g) == 0 for g in groups):
        raise ContractError("groups must be nonempty")
    values = np.concatenate(groups)
    n = len(values)
    if n < 3:
        raise ContractError("need at least 3 observations in total")
    if np.all(values == values[0]):
        return {"H": 0.0, "p": 1.0}
    ranks, ties = _rank_with_ties(values)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + len(g)]
        h += r.sum() ** 2 / len(g)
        start += len(g)
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    correction = 1.0 - sum(t ** 3 - t for t in ties) / (n ** 3 - n)
    if correction > 0:
        h /= correction
    return {"H": float(h), "p": chi2_sf(h, len(groups) - 1)}
