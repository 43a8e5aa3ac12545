"""Normal-distortion channel suite applied to watermarked images before
extraction. Every operation preserves shape and the [0, 1] range, and every
stochastic one is a deterministic function of (input, seed)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import ImageTensor
from .errors import InvalidArgumentError
from .jpegcodec import jpeg_roundtrip

BLUR_TRUNCATE = 3.0


def jpeg(img: ImageTensor, quality: int = 50) -> ImageTensor:
    """Round trip through the in-repo baseline JPEG codec."""
    return ImageTensor(jpeg_roundtrip(img.data, quality))


def random_crop(img: ImageTensor, ratio: float = 0.8, seed=0) -> ImageTensor:
    """Keep a randomly placed window of side floor(ratio * side) in place and
    zero everything outside it. Geometry is preserved so inversion-based
    extraction stays spatially aligned."""
    if not (0.0 < ratio <= 1.0):
        raise InvalidArgumentError("crop ratio must lie in (0, 1]")
    if ratio == 1.0:
        return img
    rng = np.random.default_rng(seed)
    keep_h = int(ratio * img.height)
    keep_w = int(ratio * img.width)
    top = int(rng.integers(0, img.height - keep_h + 1))
    left = int(rng.integers(0, img.width - keep_w + 1))
    out = np.zeros_like(img.data)
    out[:, top:top + keep_h, left:left + keep_w] = \
        img.data[:, top:top + keep_h, left:left + keep_w]
    return ImageTensor(out)


def gaussian_blur(img: ImageTensor, radius: float = 2) -> ImageTensor:
    """Separable Gaussian with sigma = radius, kernel truncated at 3 sigma,
    edge-replicate padding."""
    if radius < 1:
        raise InvalidArgumentError("blur radius must be >= 1")
    out = np.empty_like(img.data)
    for c in range(img.channels):
        out[c] = ndimage.gaussian_filter(img.data[c], sigma=radius,
                                         truncate=BLUR_TRUNCATE, mode="nearest")
    return ImageTensor.clamped(out)


def gaussian_noise(img: ImageTensor, std: float = 0.05, seed=0) -> ImageTensor:
    if std < 0:
        raise InvalidArgumentError("noise std must be >= 0")
    if std == 0:
        return img
    rng = np.random.default_rng(seed)
    return ImageTensor.clamped(img.data + rng.normal(0.0, std, img.data.shape))


def brightness(img: ImageTensor, factor: float = 2.0) -> ImageTensor:
    if factor < 0:
        raise InvalidArgumentError("brightness factor must be >= 0")
    return ImageTensor.clamped(factor * img.data)


def rotate(img: ImageTensor, degrees: float = 90) -> ImageTensor:
    """Exact pixel permutation for multiples of 90 degrees; bicubic resample
    into the same canvas with zero fill otherwise."""
    turns = degrees / 90.0
    if turns == int(turns):
        k = int(turns) % 4
        if k == 0:
            return img
        return ImageTensor(np.rot90(img.data, k=k, axes=(1, 2)).copy())
    out = np.empty_like(img.data)
    for c in range(img.channels):
        out[c] = ndimage.rotate(img.data[c], degrees, reshape=False, order=3,
                                mode="constant", cval=0.0)
    return ImageTensor.clamped(out)


# Default parameters of the benchmark distortion suite.
DEFAULT_PARAMS = {
    "jpeg": {"quality": 50},
    "crop": {"ratio": 0.8},
    "blur": {"radius": 2},
    "noise": {"std": 0.05},
    "brightness": {"factor": 2.0},
    "rotate": {"degrees": 90},
}

_OPS = {
    "jpeg": jpeg,
    "crop": random_crop,
    "blur": gaussian_blur,
    "noise": gaussian_noise,
    "brightness": brightness,
    "rotate": rotate,
}

_SEEDED = {"crop", "noise"}


def apply_distortion(name: str, img: ImageTensor, seed=0, **params) -> ImageTensor:
    """Apply a distortion by name with its default parameters overridden by
    **params; stochastic ops consume the seed."""
    if name not in _OPS:
        raise InvalidArgumentError(f"unknown distortion {name!r}; known: {sorted(_OPS)}")
    kwargs = dict(DEFAULT_PARAMS[name])
    kwargs.update(params)
    if name in _SEEDED:
        kwargs["seed"] = seed
    return _OPS[name](img, **kwargs)
