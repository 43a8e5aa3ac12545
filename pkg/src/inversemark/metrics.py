"""Fidelity and extraction metrics."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve

from .core import BitString, ImageTensor
from .errors import InvalidArgumentError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    """Peak signal-to-noise ratio in dB over the [0, 1] domain (MAX = 1)."""
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _ssim_kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: ImageTensor, b: ImageTensor) -> float:
    """Single-scale SSIM: 11x11 Gaussian window, sigma 1.5, C1 = 0.01^2,
    C2 = 0.03^2, averaged over channels and valid window positions."""
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise InvalidArgumentError(f"images must be at least {SSIM_WINDOW} px per side")
    kernel = _ssim_kernel()
    scores = []
    for c in range(a.channels):
        x, y = a.data[c], b.data[c]
        mu_x = fftconvolve(x, kernel, mode="valid")
        mu_y = fftconvolve(y, kernel, mode="valid")
        xx = fftconvolve(x * x, kernel, mode="valid") - mu_x ** 2
        yy = fftconvolve(y * y, kernel, mode="valid") - mu_y ** 2
        xy = fftconvolve(x * y, kernel, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
        den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (xx + yy + SSIM_C2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def bit_accuracy(a: BitString, b: BitString) -> float:
    if len(a) != len(b):
        raise InvalidArgumentError(f"length mismatch {len(a)} vs {len(b)}")
    return float(np.mean(a.bits == b.bits))


def detection_rate(reports) -> float:
    reports = list(reports)
    if not reports:
        raise InvalidArgumentError("cannot compute a rate over zero reports")
    return float(np.mean([1.0 if r.detected else 0.0 for r in reports]))


def binomial_match_threshold(length: int, target_fpr: float) -> int:
    """Smallest match count k with Pr[Bin(length, 1/2) >= k] <= target_fpr,
    computed with exact integer tail sums."""
    if length < 1 or not (0.0 < target_fpr < 1.0):
        raise InvalidArgumentError("need length >= 1 and target_fpr in (0, 1)")
    budget = Fraction(target_fpr) * 2 ** length
    tail = 0
    for k in range(length, -1, -1):
        tail += math.comb(length, k)
        if tail > budget:
            return k + 1
    return 0


def multibit_detect(acc: float, length: int, target_fpr: float) -> bool:
    """Turn a bit accuracy into a detection decision at a fixed false-positive
    budget under the random-bits null."""
    if not (0.0 <= acc <= 1.0):
        raise InvalidArgumentError("accuracy must lie in [0, 1]")
    threshold = binomial_match_threshold(length, target_fpr)
    if threshold > length:
        return False
    matches = round(acc * length)
    return matches >= threshold
