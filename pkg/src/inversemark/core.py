"""Domain tensors, payload bits, keys, and run configuration.

Images live in [0, 1] as float64 channel-major arrays. Conversion to 8-bit
happens only on PNG export and inside the JPEG distortion; everything in
between stays at full precision. Residuals are signed and unclamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError, IoError

if TYPE_CHECKING:
    from .scheduler import SchedulerConfig

MIN_SIDE = 8


def _frozen(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Pixel image of shape (channels, height, width) with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise InvalidArgumentError(f"image must be 3-d, got shape {arr.shape}")
        c, h, w = arr.shape
        if c not in (1, 3):
            raise InvalidArgumentError(f"image channels must be 1 or 3, got {c}")
        if h < MIN_SIDE or w < MIN_SIDE:
            raise InvalidArgumentError(f"image sides must be >= {MIN_SIDE}, got {h}x{w}")
        if not np.isfinite(arr).all():
            raise InvalidArgumentError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidArgumentError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def clamped(cls, arr: np.ndarray) -> "ImageTensor":
        """Construct from an arbitrary real array, clamping into [0, 1]."""
        return cls(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class ResidualTensor:
    """Signed, unclamped image-shaped buffer (e.g. the embedding residual)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise InvalidArgumentError(f"residual must be 3-d, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise InvalidArgumentError("residual contains non-finite values")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class LatentTensor:
    """Diffusion latent of shape (C_latent, h, w), unconstrained reals."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise InvalidArgumentError(f"latent must be 3-d, got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class BitString:
    """Ordered sequence of payload bits."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidArgumentError("bit string must be a nonempty 1-d sequence")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidArgumentError("bit string entries must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(arr, dtype=np.uint8))

    @classmethod
    def from_iterable(cls, bits: Iterable[int]) -> "BitString":
        return cls(np.fromiter(bits, dtype=np.uint8))

    @classmethod
    def random(cls, rng: np.random.Generator, length: int) -> "BitString":
        if length < 1:
            raise InvalidArgumentError("bit string length must be >= 1")
        return cls(rng.integers(0, 2, size=length, dtype=np.uint8))

    @classmethod
    def from_hex(cls, hexstr: str, length: int) -> "BitString":
        raw = bytes.fromhex(hexstr)
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="big")
        if bits.size < length:
            raise InvalidArgumentError("hex payload shorter than declared bit length")
        return cls(bits[:length])

    def to_hex(self) -> str:
        padded = np.zeros((-len(self) % 8) + len(self), dtype=np.uint8)
        padded[: len(self)] = self.bits
        return np.packbits(padded, bitorder="big").tobytes().hex()

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool((self.bits == other.bits).all())

    def __hash__(self):
        return hash(self.bits.tobytes())


CIPHER_KEY_BYTES = 32
NONCE_BYTES = 12


@dataclass(frozen=True, eq=False)
class WatermarkKey:
    """Stream-cipher key material plus replication factors and payload bits."""

    cipher_key: bytes
    nonce: bytes
    f_c: int
    f_hw: int
    payload: BitString

    def __post_init__(self):
        if len(self.cipher_key) != CIPHER_KEY_BYTES:
            raise InvalidArgumentError(f"cipher key must be {CIPHER_KEY_BYTES} bytes")
        if len(self.nonce) != NONCE_BYTES:
            raise InvalidArgumentError(f"nonce must be {NONCE_BYTES} bytes")
        if self.f_c < 1 or self.f_hw < 1:
            raise InvalidArgumentError("replication factors must be >= 1")


@dataclass(frozen=True, eq=False)
class TreeRingKey:
    """Ring-valued frequency key with its mask, grid, and detection threshold.

    Ring values are stored complex but drawn real: exact ring constancy
    together with Hermitian (real inverse transform) symmetry forces the
    value at a coordinate and at its mirror, which share a ring, to be
    conjugate-equal, i.e. real.
    """

    ring_values: np.ndarray
    radius: int
    mask: np.ndarray
    threshold: float
    seed: int | None = None

    def __post_init__(self):
        vals = np.ascontiguousarray(self.ring_values, dtype=np.complex128)
        mask = np.asarray(self.mask, dtype=bool)
        if self.radius < 1:
            raise InvalidArgumentError("ring radius must be >= 1")
        if vals.shape != (self.radius,):
            raise InvalidArgumentError("need exactly one ring value per ring index")
        if mask.ndim != 2 or not mask.any():
            raise InvalidArgumentError("mask must be a nonempty 2-d boolean grid")
        if not (0.0 < self.threshold < 1.0):
            raise InvalidArgumentError("threshold must lie in (0, 1)")
        vals.flags.writeable = False
        frozen_mask = np.ascontiguousarray(mask)
        frozen_mask.flags.writeable = False
        object.__setattr__(self, "ring_values", vals)
        object.__setattr__(self, "mask", frozen_mask)

    @property
    def grid_shape(self) -> tuple:
        return self.mask.shape


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one embedding/extraction run."""

    s_low: int = 128
    f_s: float = 0.4
    infer_steps: int = 25
    invert_steps: int = 25
    resolution: int = 512
    schedule: "SchedulerConfig | None" = None

    def __post_init__(self):
        if self.s_low < MIN_SIDE:
            raise InvalidArgumentError(f"s_low must be >= {MIN_SIDE}")
        if self.s_low > self.resolution:
            raise InvalidArgumentError("s_low must not exceed the target resolution")
        if not (0.0 <= self.f_s <= 1.0):
            raise InvalidArgumentError("strength factor must lie in [0, 1]")
        if self.infer_steps < 1 or self.invert_steps < 1:
            raise InvalidArgumentError("step counts must be >= 1")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def resize_array(data: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bicubic channel-wise resize of a (C, H, W) array; output is unclamped."""
    if target_h < MIN_SIDE or target_w < MIN_SIDE:
        raise InvalidArgumentError(f"target dims must be >= {MIN_SIDE}, got {target_h}x{target_w}")
    data = np.asarray(data, dtype=np.float64)
    if data.shape[1:] == (target_h, target_w):
        return data.copy()
    out = np.empty((data.shape[0], target_h, target_w), dtype=np.float64)
    for c in range(data.shape[0]):
        plane = Image.fromarray(data[c].astype(np.float32), mode="F")
        out[c] = np.asarray(plane.resize((target_w, target_h), Image.Resampling.BICUBIC),
                            dtype=np.float64)
    return out


def resize(img: ImageTensor, target_h: int, target_w: int) -> ImageTensor:
    """Bicubic resize; the resized image is clamped back into [0, 1]."""
    if (img.height, img.width) == (target_h, target_w):
        return img
    return ImageTensor.clamped(resize_array(img.data, target_h, target_w))


def watermark_bit_length(c_latent: int, latent_h: int, latent_w: int,
                         f_c: int, f_hw: int) -> int:
    """Payload capacity of a latent grid under channel/spatial replication."""
    for name, value in (("c_latent", c_latent), ("latent_h", latent_h),
                        ("latent_w", latent_w), ("f_c", f_c), ("f_hw", f_hw)):
        if int(value) != value or value < 1:
            raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
    if c_latent % f_c != 0:
        raise InvalidArgumentError(f"f_c={f_c} does not divide c_latent={c_latent}")
    if latent_h % f_hw != 0 or latent_w % f_hw != 0:
        raise InvalidArgumentError(f"f_hw={f_hw} does not divide latent dims "
                                   f"{latent_h}x{latent_w}")
    return (c_latent // f_c) * (latent_h // f_hw) * (latent_w // f_hw)


# ---------------------------------------------------------------------------
# PNG and TOML plumbing
# ---------------------------------------------------------------------------


def load_image(path) -> ImageTensor:
    """Read an 8-bit RGB image file into a [0, 1] tensor."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc
    return ImageTensor(arr.transpose(2, 0, 1))


def save_image(img: ImageTensor, path) -> None:
    """Write a tensor as an 8-bit PNG (round(255*x), clamped)."""
    arr = np.clip(np.round(img.data * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[0] == 1:
        pil = Image.fromarray(arr[0], mode="L")
    else:
        pil = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    try:
        pil.save(path)
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise InvalidArgumentError(f"cannot serialize {type(value).__name__} to TOML")


def dump_toml(sections: dict) -> str:
    """Serialize {section: {key: scalar-or-list}} into TOML text."""
    lines = []
    for section, fields in sections.items():
        lines.append(f"[{section}]")
        for key, value in fields.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def parse_toml(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def load_pipeline_config(path) -> PipelineConfig:
    """Read a TOML config file mirroring PipelineConfig (CLI flags override)."""
    from .scheduler import SchedulerConfig

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    doc = parse_toml(text)
    pipe = doc.get("pipeline", {})
    sched = doc.get("schedule", {})
    schedule = SchedulerConfig(
        t_train=int(sched.get("t_train", 1000)),
        beta_start=float(sched.get("beta_start", 1e-4)),
        beta_end=float(sched.get("beta_end", 2e-2)),
        kind=str(sched.get("kind", "scaled_linear")),
        steps=int(pipe.get("infer_steps", 25)),
    )
    return PipelineConfig(
        s_low=int(pipe.get("s_low", 128)),
        f_s=float(pipe.get("f_s", 0.4)),
        infer_steps=int(pipe.get("infer_steps", 25)),
        invert_steps=int(pipe.get("invert_steps", 25)),
        resolution=int(pipe.get("resolution", 512)),
        schedule=schedule,
    )


def config_to_toml(cfg: PipelineConfig) -> str:
    from .scheduler import SchedulerConfig

    schedule = cfg.schedule if cfg.schedule is not None else SchedulerConfig(steps=cfg.infer_steps)
    return dump_toml({
        "pipeline": {
            "s_low": cfg.s_low,
            "f_s": cfg.f_s,
            "infer_steps": cfg.infer_steps,
            "invert_steps": cfg.invert_steps,
            "resolution": cfg.resolution,
        },
        "schedule": {
            "t_train": schedule.t_train,
            "beta_start": schedule.beta_start,
            "beta_end": schedule.beta_end,
            "kind": schedule.kind,
        },
    })
