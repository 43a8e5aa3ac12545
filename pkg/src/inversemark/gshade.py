"""Gaussian-Shading watermark: payload bits diffused over the latent grid,
whitened with a ChaCha20 keystream, realized as half-line-truncated normal
samples, and recovered by quantile reads plus per-block majority voting."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
from scipy.special import ndtr, ndtri

from .core import (BitString, LatentTensor, WatermarkKey, dump_toml, parse_toml,
                   watermark_bit_length)
from .errors import InvalidArgumentError, IoError

# Smallest quantile we hand to the inverse CDF; keeps the u = 0 draw of a
# zero bit finite instead of -inf.
_MIN_QUANTILE = 1e-300


@dataclass(frozen=True, eq=False)
class DiffusedBits:
    """Payload bits replicated over a full latent grid."""

    grid: np.ndarray
    source: BitString
    replication: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.grid, dtype=np.uint8)
        if arr.ndim != 3:
            raise InvalidArgumentError("diffused grid must be 3-d")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidArgumentError("diffused grid entries must be 0 or 1")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", arr)


def keystream_bits(key: WatermarkKey, nbits: int) -> np.ndarray:
    """ChaCha20 keystream expanded bit by bit, low bit first in each byte,
    block counter starting at zero."""
    nbytes = (nbits + 7) // 8
    nonce = (0).to_bytes(4, "little") + key.nonce
    enc = Cipher(algorithms.ChaCha20(key.cipher_key, nonce), mode=None).encryptor()
    stream = enc.update(bytes(nbytes))
    bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8), bitorder="little")
    return bits[:nbits]


def gs_diffuse(bits: BitString, key: WatermarkKey, latent_shape) -> DiffusedBits:
    """Replicate each payload bit over an f_c x f_hw x f_hw block."""
    c, h, w = latent_shape
    expected = watermark_bit_length(c, h, w, key.f_c, key.f_hw)
    if len(bits) != expected:
        raise InvalidArgumentError(
            f"payload has {len(bits)} bits but the grid carries {expected}")
    small = bits.bits.reshape(c // key.f_c, h // key.f_hw, w // key.f_hw)
    grid = small.repeat(key.f_c, axis=0).repeat(key.f_hw, axis=1).repeat(key.f_hw, axis=2)
    return DiffusedBits(grid=grid, source=bits, replication=key.f_c * key.f_hw ** 2)


def gs_encrypt(diffused: DiffusedBits, key: WatermarkKey) -> DiffusedBits:
    """XOR the grid with the keystream; applying it twice restores the grid."""
    stream = keystream_bits(key, diffused.grid.size).reshape(diffused.grid.shape)
    return DiffusedBits(grid=diffused.grid ^ stream, source=diffused.source,
                        replication=diffused.replication)


def gs_sample_noise(m: DiffusedBits, seed) -> LatentTensor:
    """Sample latent noise whose sign cell-wise encodes the grid bits.

    Each cell with bit y draws u ~ Uniform[0,1) and takes the standard
    normal quantile of (y+u)/2, i.e. a normal truncated to the bit's
    half-line; over uniformly random bits the marginal is exactly N(0,1).
    """
    rng = np.random.default_rng(seed)
    u = rng.random(m.grid.shape)
    q = np.maximum((m.grid + u) / 2.0, _MIN_QUANTILE)
    return LatentTensor(ndtri(q))


def gs_extract_cell(z):
    """Read a cell back to a bit: floor(2 * Phi(z)), clamped into {0, 1}."""
    bit = np.clip(np.floor(2.0 * ndtr(z)), 0, 1)
    if np.isscalar(z) or np.ndim(z) == 0:
        return int(bit)
    return bit.astype(np.uint8)


def gs_vote(copies) -> int:
    """Majority over the replicated copies; strictly more than half wins."""
    arr = np.asarray(copies)
    if arr.size == 0:
        raise InvalidArgumentError("cannot vote over zero copies")
    return int(arr.sum() * 2 > arr.size)


def gs_extract(z_inv: LatentTensor, key: WatermarkKey) -> BitString:
    """Recover the payload: per-cell quantile read, keystream decrypt, vote."""
    c, h, w = z_inv.shape
    watermark_bit_length(c, h, w, key.f_c, key.f_hw)  # validates divisibility
    cells = np.clip(np.floor(2.0 * ndtr(z_inv.data)), 0, 1).astype(np.uint8)
    stream = keystream_bits(key, cells.size).reshape(cells.shape)
    plain = cells ^ stream
    blocks = plain.reshape(c // key.f_c, key.f_c, h // key.f_hw, key.f_hw,
                           w // key.f_hw, key.f_hw)
    counts = blocks.sum(axis=(1, 3, 5), dtype=np.int64)
    half = key.f_c * key.f_hw * key.f_hw
    votes = (counts * 2 > half).astype(np.uint8)
    return BitString(votes.reshape(-1))


# ---------------------------------------------------------------------------
# Key file round trip
# ---------------------------------------------------------------------------


def random_watermark_key(rng: np.random.Generator, f_c: int, f_hw: int,
                         payload_bits: int) -> WatermarkKey:
    payload = BitString.random(rng, payload_bits)
    return WatermarkKey(cipher_key=rng.bytes(32), nonce=rng.bytes(12),
                        f_c=f_c, f_hw=f_hw, payload=payload)


def save_watermark_key(key: WatermarkKey, path) -> None:
    text = dump_toml({"gshade": {
        "cipher_key": key.cipher_key.hex(),
        "nonce": key.nonce.hex(),
        "f_c": key.f_c,
        "f_hw": key.f_hw,
        "payload": key.payload.to_hex(),
        "payload_bits": len(key.payload),
    }})
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write key file {path}: {exc}") from exc


def load_watermark_key(path) -> WatermarkKey:
    try:
        doc = parse_toml(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read key file {path}: {exc}") from exc
    try:
        sect = doc["gshade"]
        return WatermarkKey(
            cipher_key=bytes.fromhex(sect["cipher_key"]),
            nonce=bytes.fromhex(sect["nonce"]),
            f_c=int(sect["f_c"]),
            f_hw=int(sect["f_hw"]),
            payload=BitString.from_hex(sect["payload"], int(sect["payload_bits"])),
        )
    except (KeyError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed watermark key file {path}: {exc}") from exc
