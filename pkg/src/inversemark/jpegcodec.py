"""Baseline JPEG round trip implemented in-repo for bit-exact reproducibility.

Covers the lossy stages only: BT.601 full-range color transform, 4:2:0
chroma subsampling, 8x8 DCT, quantization with the standard tables scaled
by the IJG quality curve, then the inverse chain. Entropy coding is
lossless and therefore has no effect on a round trip, so no bitstream is
produced.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

from .errors import InvalidArgumentError

# ITU T.81 Annex K reference quantization tables.
LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.int64)


def quality_scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """Scale a reference table with the IJG quality curve, clamped to 1..255."""
    if not 1 <= quality <= 100:
        raise InvalidArgumentError("JPEG quality must lie in 1..100")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    table = (base * scale + 50) // 100
    return np.clip(table, 1, 255)


def quantize_block(block: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Level-shift an 8x8 sample block, DCT it, and quantize. Returns the
    integer coefficient block."""
    if block.shape != (8, 8):
        raise InvalidArgumentError("block must be 8x8")
    coeffs = dctn(block.astype(np.float64) - 128.0, norm="ortho")
    return np.round(coeffs / table).astype(np.int64)


def _pad_to_multiple(plane: np.ndarray, m: int) -> np.ndarray:
    h, w = plane.shape
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT-quantize-dequantize-IDCT an entire plane, 8x8 blockwise."""
    h, w = plane.shape
    padded = _pad_to_multiple(plane, 8)
    hb, wb = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(hb, 8, wb, 8).transpose(0, 2, 1, 3) - 128.0
    coeffs = dctn(blocks, axes=(2, 3), norm="ortho")
    quantized = np.round(coeffs / table) * table
    restored = idctn(quantized, axes=(2, 3), norm="ortho") + 128.0
    out = restored.transpose(0, 2, 1, 3).reshape(hb * 8, wb * 8)
    return out[:h, :w]


def _rgb_to_ycbcr(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = rgb[0], rgb[1], rgb[2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return y, cb, cr


def _ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    cb = cb - 128.0
    cr = cr - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b])


def _subsample(plane: np.ndarray) -> np.ndarray:
    padded = _pad_to_multiple(plane, 2)
    h, w = padded.shape
    return padded.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _upsample(plane: np.ndarray, h: int, w: int) -> np.ndarray:
    return plane.repeat(2, axis=0).repeat(2, axis=1)[:h, :w]


def jpeg_roundtrip(img01: np.ndarray, quality: int) -> np.ndarray:
    """Round-trip a (3, H, W) [0, 1] image through the baseline JPEG chain."""
    data = np.asarray(img01, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] != 3:
        raise InvalidArgumentError("JPEG round trip expects a (3, H, W) image")
    _, h, w = data.shape
    luma_q = quality_scaled_table(LUMA_TABLE, quality)
    chroma_q = quality_scaled_table(CHROMA_TABLE, quality)

    rgb = np.clip(np.round(data * 255.0), 0, 255)
    y, cb, cr = _rgb_to_ycbcr(rgb)
    y2 = _quantize_plane(y, luma_q)
    cb2 = _upsample(_quantize_plane(_subsample(cb), chroma_q), h, w)
    cr2 = _upsample(_quantize_plane(_subsample(cr), chroma_q), h, w)
    out = _ycbcr_to_rgb(y2, cb2, cr2)
    return np.clip(np.round(out), 0, 255) / 255.0
