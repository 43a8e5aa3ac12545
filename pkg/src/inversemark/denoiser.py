"""Noise-prediction interface plus analytic desk-scale implementations."""

from __future__ import annotations

import numpy as np

from .core import ImageTensor, LatentTensor
from .errors import InvalidArgumentError
from .scheduler import AlphaSchedule

MAX_LINEAR_SCALE = 0.5


class NoisePredictor:
    """Contract for anything that predicts noise from (latent, timestep, cond).

    Implementations declare their latent shape, their conditioning shape
    (None for unconditional models), and whether they may be shared across
    threads.
    """

    latent_shape: tuple
    cond_shape: tuple | None
    share_safe: bool = True

    def predict(self, z_t: LatentTensor, t: int, cond: ImageTensor | None) -> LatentTensor:
        raise NotImplementedError

    def _validate(self, z_t: LatentTensor, cond: ImageTensor | None):
        if tuple(z_t.shape) != tuple(self.latent_shape):
            raise InvalidArgumentError(
                f"latent shape {z_t.shape} does not match predictor shape {self.latent_shape}")
        if self.cond_shape is not None:
            if cond is None:
                raise InvalidArgumentError("predictor requires a conditioning image")
            if tuple(cond.shape) != tuple(self.cond_shape):
                raise InvalidArgumentError(
                    f"cond shape {cond.shape} does not match predictor shape {self.cond_shape}")


class ZeroToyPredictor(NoisePredictor):
    """Predicts no noise at all; DDIM becomes a pure scaling trajectory."""

    def __init__(self, latent_shape, cond_shape=None):
        self.latent_shape = tuple(latent_shape)
        self.cond_shape = tuple(cond_shape) if cond_shape is not None else None
        self.share_safe = True

    def predict(self, z_t, t, cond=None):
        self._validate(z_t, cond)
        return LatentTensor(np.zeros(self.latent_shape))


def shrink_conditioning(cond: ImageTensor, latent_shape) -> np.ndarray:
    """Map a conditioning image into latent shape: channel mean, nearest
    resize to the latent grid, placed in latent channel 0 (other channels 0)."""
    c, h, w = latent_shape
    grey = cond.data.mean(axis=0)
    if grey.shape != (h, w):
        rows = (np.arange(h) * grey.shape[0] // h).astype(int)
        cols = (np.arange(w) * grey.shape[1] // w).astype(int)
        grey = grey[np.ix_(rows, cols)]
    out = np.zeros(latent_shape)
    out[0] = grey
    return out


class LinearToyPredictor(NoisePredictor):
    """Affine stand-in for the SR UNet: eps = scale * z_t + cond_gain * shrink(cond).

    With scale = 0 the prediction is independent of the latent, which makes
    DDIM inversion the exact inverse of sampling; that configuration is the
    default. A nonzero scale exercises genuine latent feedback at the cost
    of a first-order round-trip error.
    """

    def __init__(self, latent_shape, cond_shape=None, scale=0.0, cond_gain=1.0):
        if abs(scale) > MAX_LINEAR_SCALE:
            raise InvalidArgumentError(f"|scale| must be <= {MAX_LINEAR_SCALE}")
        self.latent_shape = tuple(latent_shape)
        self.cond_shape = tuple(cond_shape) if cond_shape is not None else None
        self.scale = float(scale)
        self.cond_gain = float(cond_gain)
        self.share_safe = True

    def predict(self, z_t, t, cond=None):
        self._validate(z_t, cond)
        eps = self.scale * z_t.data
        if self.cond_gain != 0.0:
            if cond is None:
                raise InvalidArgumentError("cond_gain != 0 requires a conditioning image")
            eps = eps + self.cond_gain * shrink_conditioning(cond, self.latent_shape)
        return LatentTensor(eps)


def trajectory_coefficients(sched: AlphaSchedule, scale: float) -> tuple[float, float]:
    """Unroll the sampling recursion for eps = scale*z + const.

    Returns (gain, accum) such that z_0 = gain * z_T + accum * const.
    """
    abar, grid = sched.alpha_bar, sched.timestep_grid
    gain, accum = 1.0, 0.0
    for i in range(grid.size - 1):
        t, tp = grid[i], grid[i + 1]
        u, v = np.sqrt(abar[t]), np.sqrt(abar[tp])
        s, r = np.sqrt(1.0 - abar[t]), np.sqrt(1.0 - abar[tp])
        step_gain = (v / u) * (1.0 - scale * s) + scale * r
        step_const = r - s * v / u
        gain = step_gain * gain
        accum = step_gain * accum + step_const
    return float(gain), float(accum)


def conditioned_linear_predictor(sched: AlphaSchedule, codec, latent_shape,
                                 cond_shape, scale=0.1) -> LinearToyPredictor:
    """Linear toy whose conditioning gain is calibrated so that sampling from
    pure conditioning reproduces the (grey, block-upsampled) cover image."""
    _, accum = trajectory_coefficients(sched, scale)
    if accum == 0.0:
        raise InvalidArgumentError("schedule accumulates no conditioning signal")
    probe = np.zeros(latent_shape)
    probe[0] = 1.0
    dc_response = float(codec.decode(LatentTensor(probe)).data.mean())
    if dc_response == 0.0:
        raise InvalidArgumentError("codec has no DC response on latent channel 0")
    cond_gain = 1.0 / (accum * dc_response)
    return LinearToyPredictor(latent_shape, cond_shape, scale=scale, cond_gain=cond_gain)
