"""End-to-end watermark embedding and extraction.

Embedding: downscale the cover, sample watermarked latent noise, denoise it
conditioned on the small cover, decode to the super-resolved image, and
blend the residual back into the cover with the strength factor. Extraction
runs the chain backwards through DDIM inversion and hands the recovered
noise to the injector's statistical reader.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import LatentCodec
from .core import (BitString, ImageTensor, LatentTensor, PipelineConfig,
                   ResidualTensor, TreeRingKey, WatermarkKey, resize, resize_array,
                   watermark_bit_length)
from .denoiser import NoisePredictor
from .errors import InvalidArgumentError
from .gshade import gs_diffuse, gs_encrypt, gs_extract, gs_sample_noise
from .metrics import bit_accuracy, psnr, ssim
from .scheduler import AlphaSchedule, SchedulerConfig, ddim_invert, ddim_sample, make_schedule
from .treering import DetectionReport, tr_detect, tr_inject


class GaussianShadingInjector:
    """Multi-bit injector: encrypted, replicated payload bits select the
    half-line each latent noise cell is sampled from."""

    kind = "gshade"

    def __init__(self, key: WatermarkKey, seed=0):
        self.key = key
        self.seed = seed

    def expected_length(self, latent_shape) -> int:
        c, h, w = latent_shape
        return watermark_bit_length(c, h, w, self.key.f_c, self.key.f_hw)

    def initial_noise(self, latent_shape) -> LatentTensor:
        if len(self.key.payload) != self.expected_length(latent_shape):
            raise InvalidArgumentError(
                f"payload length {len(self.key.payload)} does not match grid "
                f"capacity {self.expected_length(latent_shape)}")
        diffused = gs_diffuse(self.key.payload, self.key, latent_shape)
        return gs_sample_noise(gs_encrypt(diffused, self.key), self.seed)

    def read(self, z_inv: LatentTensor) -> "ExtractResult":
        bits = gs_extract(z_inv, self.key)
        return ExtractResult(bits=bits,
                             accuracy=bit_accuracy(bits, self.key.payload),
                             inverted_latent=z_inv)


class TreeRingInjector:
    """Zero-bit injector: ring-constant key values written into the centered
    spectrum of fresh Gaussian noise."""

    kind = "treering"

    def __init__(self, key: TreeRingKey, seed=0):
        self.key = key
        self.seed = seed

    def initial_noise(self, latent_shape) -> LatentTensor:
        _, h, w = latent_shape
        if (h, w) != self.key.grid_shape:
            raise InvalidArgumentError(
                f"latent grid {h}x{w} does not match key grid {self.key.grid_shape}")
        rng = np.random.default_rng(self.seed)
        noise = LatentTensor(rng.standard_normal(latent_shape))
        return tr_inject(noise, self.key)

    def read(self, z_inv: LatentTensor) -> "ExtractResult":
        return ExtractResult(report=tr_detect(z_inv, self.key), inverted_latent=z_inv)


@dataclass(frozen=True, eq=False)
class EmbedResult:
    watermarked: ImageTensor
    residual: ResidualTensor
    super_resolved: ImageTensor
    fidelity: tuple

    @property
    def psnr(self) -> float:
        return self.fidelity[0]

    @property
    def ssim(self) -> float:
        return self.fidelity[1]


@dataclass(frozen=True, eq=False)
class ExtractResult:
    bits: BitString | None = None
    accuracy: float | None = None
    report: DetectionReport | None = None
    inverted_latent: LatentTensor | None = None

    def __post_init__(self):
        if self.accuracy is not None and not (0.0 <= self.accuracy <= 1.0):
            raise InvalidArgumentError("bit accuracy must lie in [0, 1]")
        if self.bits is None and self.report is None:
            raise InvalidArgumentError("extraction must yield bits or a detection report")


def resolve_schedule(cfg: PipelineConfig, steps: int) -> AlphaSchedule:
    base = cfg.schedule if cfg.schedule is not None else SchedulerConfig()
    return make_schedule(SchedulerConfig(t_train=base.t_train, beta_start=base.beta_start,
                                         beta_end=base.beta_end, kind=base.kind,
                                         steps=steps))


def embed(i_ori: ImageTensor, injector, cfg: PipelineConfig,
          model: NoisePredictor, codec: LatentCodec,
          sched: AlphaSchedule | None = None) -> EmbedResult:
    """Embed a watermark into the cover image, returning the blended image,
    the raw residual, and fidelity scores."""
    if i_ori.height != cfg.resolution or i_ori.width != cfg.resolution:
        raise InvalidArgumentError(
            f"cover must be {cfg.resolution}x{cfg.resolution}, got "
            f"{i_ori.height}x{i_ori.width}")
    latent_shape = (codec.c_latent, cfg.s_low, cfg.s_low)
    if sched is None:
        sched = resolve_schedule(cfg, cfg.infer_steps)

    i_low = resize(i_ori, cfg.s_low, cfg.s_low)
    z_wm_T = injector.initial_noise(latent_shape)
    assert z_wm_T.shape == latent_shape
    z_wm_0 = ddim_sample(model, z_wm_T, i_low, sched)
    i_sr = codec.decode(z_wm_0)
    assert i_sr.shape == (codec.c_pixel, codec.f_vae * cfg.s_low, codec.f_vae * cfg.s_low)
    if i_sr.shape[1:] == (cfg.resolution, cfg.resolution):
        i_sr_down = i_sr.data
    else:
        i_sr_down = resize_array(i_sr.data, cfg.resolution, cfg.resolution)
    residual = ResidualTensor(i_sr_down - i_ori.data)
    watermarked = ImageTensor.clamped(i_ori.data + cfg.f_s * residual.data)
    fidelity = (psnr(watermarked, i_ori), ssim(watermarked, i_ori))
    return EmbedResult(watermarked=watermarked, residual=residual,
                       super_resolved=ImageTensor.clamped(i_sr.data),
                       fidelity=fidelity)


def extract(i_wm: ImageTensor, injector, cfg: PipelineConfig,
            model: NoisePredictor, codec: LatentCodec,
            sched: AlphaSchedule | None = None) -> ExtractResult:
    """Invert a (possibly distorted) watermarked image back to latent noise
    and read the watermark out of it."""
    if i_wm.height != cfg.resolution or i_wm.width != cfg.resolution:
        raise InvalidArgumentError(
            f"watermarked image must be {cfg.resolution}x{cfg.resolution}, got "
            f"{i_wm.height}x{i_wm.width}")
    if sched is None:
        sched = resolve_schedule(cfg, cfg.invert_steps)
    high = codec.f_vae * cfg.s_low

    i_up = resize(i_wm, high, high)
    z0 = codec.encode(i_up)
    assert z0.shape == (codec.c_latent, cfg.s_low, cfg.s_low)
    i_down = resize(i_wm, cfg.s_low, cfg.s_low)
    z_T = ddim_invert(model, z0, i_down, sched)
    return injector.read(z_T)
