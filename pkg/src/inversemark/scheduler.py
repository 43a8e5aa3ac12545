"""Deterministic DDIM sampling and inversion over a pluggable noise predictor.

Sampling walks the timestep grid in descending order; inversion re-applies
the same update on the ascending grid with the model evaluated at the latent
it already has (the lower-timestep one). For predictors whose output does
not depend on the latent, inversion is the exact algebraic inverse of
sampling; latent-dependent predictors pick up a first-order error per step,
which is the usual behaviour of plain DDIM inversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImageTensor, LatentTensor
from .errors import InvalidArgumentError, NumericFailureError

SCHEDULE_KINDS = ("linear", "scaled_linear")


@dataclass(frozen=True)
class SchedulerConfig:
    t_train: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    kind: str = "scaled_linear"
    steps: int = 25

    def __post_init__(self):
        if not (0.0 < self.beta_start < self.beta_end < 1.0):
            raise InvalidArgumentError("need 0 < beta_start < beta_end < 1")
        if self.steps < 1 or self.t_train < self.steps:
            raise InvalidArgumentError("need t_train >= steps >= 1")
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidArgumentError(f"schedule kind must be one of {SCHEDULE_KINDS}")


@dataclass(frozen=True, eq=False)
class AlphaSchedule:
    """Cumulative signal levels plus the selected inference timesteps."""

    alpha_bar: np.ndarray
    timestep_grid: np.ndarray

    def __post_init__(self):
        abar = np.ascontiguousarray(self.alpha_bar, dtype=np.float64)
        grid = np.ascontiguousarray(self.timestep_grid, dtype=np.int64)
        if abar.ndim != 1 or abar.size < 1:
            raise InvalidArgumentError("alpha_bar must be a nonempty 1-d array")
        if np.any(abar <= 0.0) or np.any(abar > 1.0):
            raise InvalidArgumentError("alpha_bar values must lie in (0, 1]")
        if abar.size > 1 and not np.all(np.diff(abar) < 0.0):
            raise InvalidArgumentError("alpha_bar must be strictly decreasing")
        if abar[0] < 0.99:
            raise InvalidArgumentError("alpha_bar[0] must be >= 0.99")
        if grid.ndim != 1 or grid.size < 1:
            raise InvalidArgumentError("timestep grid must be a nonempty 1-d array")
        if grid.min() < 0 or grid.max() >= abar.size:
            raise InvalidArgumentError("timestep grid out of range")
        if grid.size > 1 and not np.all(np.diff(grid) < 0):
            raise InvalidArgumentError("timestep grid must be strictly descending")
        abar.flags.writeable = False
        grid.flags.writeable = False
        object.__setattr__(self, "alpha_bar", abar)
        object.__setattr__(self, "timestep_grid", grid)

    @property
    def steps(self) -> int:
        return int(self.timestep_grid.size)


def make_schedule(cfg: SchedulerConfig) -> AlphaSchedule:
    """Build the cumulative-product alpha table and the inference grid."""
    if cfg.kind == "linear":
        betas = np.linspace(cfg.beta_start, cfg.beta_end, cfg.t_train)
    else:
        betas = np.linspace(cfg.beta_start ** 0.5, cfg.beta_end ** 0.5, cfg.t_train) ** 2
    alpha_bar = np.cumprod(1.0 - betas)
    if cfg.steps == 1:
        grid = np.array([cfg.t_train - 1], dtype=np.int64)
    else:
        grid = np.round(np.linspace(0, cfg.t_train - 1, cfg.steps)).astype(np.int64)[::-1]
    return AlphaSchedule(alpha_bar=alpha_bar, timestep_grid=grid)


def schedule_from_table(alpha_bar, steps: int) -> AlphaSchedule:
    """Build a schedule from an externally supplied alpha table (e.g. the one
    a bridge server advertises), keeping the usual even timestep grid."""
    abar = np.asarray(alpha_bar, dtype=np.float64)
    if steps < 1 or steps > abar.size:
        raise InvalidArgumentError("need 1 <= steps <= len(alpha_bar)")
    if steps == 1:
        grid = np.array([abar.size - 1], dtype=np.int64)
    else:
        grid = np.round(np.linspace(0, abar.size - 1, steps)).astype(np.int64)[::-1]
    return AlphaSchedule(alpha_bar=abar, timestep_grid=grid)


def _check_shapes(model, z: LatentTensor, cond: ImageTensor | None):
    if tuple(z.shape) != tuple(model.latent_shape):
        raise InvalidArgumentError(
            f"latent shape {z.shape} does not match model latent shape {model.latent_shape}")
    if model.cond_shape is not None:
        if cond is None:
            raise InvalidArgumentError("model requires a conditioning image")
        if tuple(cond.shape) != tuple(model.cond_shape):
            raise InvalidArgumentError(
                f"cond shape {cond.shape} does not match model cond shape {model.cond_shape}")


def _predict(model, z: np.ndarray, t: int, cond: ImageTensor | None) -> np.ndarray:
    eps = model.predict(LatentTensor(z), int(t), cond).data
    if not np.isfinite(eps).all():
        raise NumericFailureError(f"non-finite model output at timestep {t}")
    return eps


def ddim_sample(model, z_T: LatentTensor, cond: ImageTensor | None,
                sched: AlphaSchedule) -> LatentTensor:
    """Denoise z_T to z_0 along the descending timestep grid."""
    _check_shapes(model, z_T, cond)
    abar, grid = sched.alpha_bar, sched.timestep_grid
    z = z_T.data.copy()
    for i in range(grid.size - 1):
        t, t_prev = grid[i], grid[i + 1]
        eps = _predict(model, z, t, cond)
        sqrt_ab_t = np.sqrt(abar[t])
        sqrt_1m_t = np.sqrt(1.0 - abar[t])
        x0 = (z - sqrt_1m_t * eps) / sqrt_ab_t
        z = np.sqrt(abar[t_prev]) * x0 + np.sqrt(1.0 - abar[t_prev]) * eps
    return LatentTensor(z)


def ddim_invert(model, z_0: LatentTensor, cond: ImageTensor | None,
                sched: AlphaSchedule) -> LatentTensor:
    """Re-noise z_0 to z_T along the ascending grid (plain DDIM inversion)."""
    _check_shapes(model, z_0, cond)
    abar, grid = sched.alpha_bar, sched.timestep_grid
    ascending = grid[::-1]
    z = z_0.data.copy()
    for i in range(ascending.size - 1):
        t_prev, t = ascending[i], ascending[i + 1]
        eps = _predict(model, z, t_prev, cond)
        sqrt_ab_p = np.sqrt(abar[t_prev])
        sqrt_1m_p = np.sqrt(1.0 - abar[t_prev])
        x0 = (z - sqrt_1m_p * eps) / sqrt_ab_p
        z = np.sqrt(abar[t]) * x0 + np.sqrt(1.0 - abar[t]) * eps
    return LatentTensor(z)
