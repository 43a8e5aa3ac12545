"""Tree-Ring frequency watermark: ring-constant values written into the
centered Fourier transform of latent channel 0, detected by a noncentral
chi-squared score on the inverted latent."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammainc, gammaln

from .core import LatentTensor, TreeRingKey, dump_toml, parse_toml
from .errors import (DegenerateInputError, InvalidArgumentError, IoError,
                     NumericFailureError)

_MAX_SERIES_TERMS = 200_000


@dataclass(frozen=True)
class DetectionReport:
    mu: float
    sigma2: float
    p_value: float
    detected: bool
    threshold: float

    def __post_init__(self):
        if self.mu < 0.0 or self.sigma2 <= 0.0:
            raise InvalidArgumentError("mu must be >= 0 and sigma2 > 0")
        if not (0.0 <= self.p_value <= 1.0):
            raise InvalidArgumentError("p value must lie in [0, 1]")
        if self.detected != (self.p_value < self.threshold):
            raise InvalidArgumentError("detected flag inconsistent with p < threshold")


def ring_index_grid(h: int, w: int) -> np.ndarray:
    """Rounded distance to the centered-FFT origin for every coordinate."""
    ry = np.arange(h) - h // 2
    rx = np.arange(w) - w // 2
    dist = np.hypot(ry[:, None], rx[None, :])
    return np.round(dist).astype(np.int64)


def tr_make_key(radius: int, seed, grid_shape=(128, 128), threshold: float = 0.9) -> TreeRingKey:
    """Draw one value per ring from the transform distribution of unit noise.

    Values are drawn on the real axis (variance h*w/2 per component, the
    real marginal of an FFT coefficient of N(0,1) noise): real values are
    the only ring-constant choice compatible with a real inverse transform.
    """
    h, w = grid_shape
    if radius < 1:
        raise InvalidArgumentError("ring radius must be >= 1")
    if radius > min(h, w) // 2:
        raise InvalidArgumentError(f"radius {radius} does not fit a {h}x{w} grid")
    rng = np.random.default_rng(seed)
    values = rng.normal(0.0, np.sqrt(h * w / 2.0), size=radius).astype(np.complex128)
    mask = ring_index_grid(h, w) < radius
    return TreeRingKey(ring_values=values, radius=radius, mask=mask,
                       threshold=threshold, seed=seed if isinstance(seed, int) else None)


def _key_grid_values(key: TreeRingKey) -> np.ndarray:
    rings = ring_index_grid(*key.grid_shape)
    vals = np.zeros(key.grid_shape, dtype=np.complex128)
    vals[key.mask] = key.ring_values[rings[key.mask]]
    return vals


def tr_inject(z: LatentTensor, key: TreeRingKey) -> LatentTensor:
    """Overwrite masked Fourier coefficients of latent channel 0 with the key.

    Ring values are real and the mask is centro-symmetric, so the overwrite
    preserves Hermitian symmetry and the inverse transform stays real.
    """
    c, h, w = z.shape
    if (h, w) != key.grid_shape:
        raise InvalidArgumentError(
            f"latent grid {h}x{w} does not match key grid {key.grid_shape}")
    if min(h, w) < 2 * key.radius:
        raise InvalidArgumentError("latent spatial dims must be >= 2 * radius")
    spectrum = np.fft.fftshift(np.fft.fft2(z.data[0]))
    spectrum[key.mask] = _key_grid_values(key)[key.mask]
    channel = np.fft.ifft2(np.fft.ifftshift(spectrum))
    out = z.data.copy()
    out[0] = channel.real
    return LatentTensor(out)


def tr_score(z_inv: LatentTensor, key: TreeRingKey) -> tuple[float, float]:
    """Masked squared residual against the key, normalized by signal power."""
    _, h, w = z_inv.shape
    if (h, w) != key.grid_shape:
        raise InvalidArgumentError(
            f"latent grid {h}x{w} does not match key grid {key.grid_shape}")
    y = np.fft.fftshift(np.fft.fft2(z_inv.data[0]))[key.mask]
    sigma2 = float(np.mean(np.abs(y) ** 2))
    if sigma2 == 0.0:
        raise DegenerateInputError("masked spectrum has zero power")
    k = _key_grid_values(key)[key.mask]
    mu = float(np.sum(np.abs(k - y) ** 2) / sigma2)
    return mu, sigma2


def noncentral_chi2_cdf(x: float, dof: int, lam: float) -> float:
    """CDF of the noncentral chi-squared law via its Poisson mixture.

    P(X <= x) = sum_j Pois(j; lam/2) * P(chi2_{dof+2j} <= x), accumulated
    outward from the Poisson mode until the remaining mixture mass is below
    1e-13 (every central CDF factor is <= 1, so that also bounds the
    truncation error).
    """
    if x < 0.0 or dof < 1 or lam < 0.0:
        raise InvalidArgumentError("need x >= 0, dof >= 1, lam >= 0")
    if x == 0.0:
        return 0.0
    if lam == 0.0:
        return float(gammainc(dof / 2.0, x / 2.0))
    half = lam / 2.0
    j0 = int(half)
    log_w0 = -half + j0 * np.log(half) - gammaln(j0 + 1)
    w0 = float(np.exp(log_w0))
    total = w0 * float(gammainc(dof / 2.0 + j0, x / 2.0))
    # walk upward from the Poisson mode; weights decay geometrically once
    # j exceeds half, so a 1e-17 weight bounds the discarded tail well
    # below the 1e-10 budget
    j, wj = j0, w0
    for _ in range(_MAX_SERIES_TERMS):
        j += 1
        wj *= half / j
        total += wj * float(gammainc(dof / 2.0 + j, x / 2.0))
        if j > half and wj < 1e-17:
            break
    else:
        raise NumericFailureError("noncentral chi2 series did not converge upward")
    # walk downward from just below the mode
    j, wj = j0, w0
    for _ in range(_MAX_SERIES_TERMS):
        if j == 0:
            break
        wj *= j / half
        j -= 1
        total += wj * float(gammainc(dof / 2.0 + j, x / 2.0))
        if wj < 1e-17:
            break
    else:
        raise NumericFailureError("noncentral chi2 series did not converge downward")
    return float(min(max(total, 0.0), 1.0))


def tr_pvalue(mu: float, dof: int, lam: float) -> float:
    return noncentral_chi2_cdf(mu, dof, lam)


def tr_detect(z_inv: LatentTensor, key: TreeRingKey) -> DetectionReport:
    """Score the inverted latent and flag detection when p < threshold."""
    mu, sigma2 = tr_score(z_inv, key)
    k = _key_grid_values(key)[key.mask]
    lam = float(np.sum(np.abs(k) ** 2) / sigma2)
    p = tr_pvalue(mu, int(key.mask.sum()), lam)
    return DetectionReport(mu=mu, sigma2=sigma2, p_value=p,
                           detected=p < key.threshold, threshold=key.threshold)


# ---------------------------------------------------------------------------
# Key file round trip
# ---------------------------------------------------------------------------


def save_treering_key(key: TreeRingKey, path) -> None:
    pairs = np.empty(2 * key.radius, dtype="<f8")
    pairs[0::2] = key.ring_values.real
    pairs[1::2] = key.ring_values.imag
    text = dump_toml({"treering": {
        "radius": key.radius,
        "seed": -1 if key.seed is None else key.seed,
        "threshold": key.threshold,
        "grid": list(key.grid_shape),
        "ring_values": pairs.tobytes().hex(),
    }})
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write key file {path}: {exc}") from exc


def load_treering_key(path) -> TreeRingKey:
    try:
        doc = parse_toml(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read key file {path}: {exc}") from exc
    try:
        sect = doc["treering"]
        radius = int(sect["radius"])
        h, w = (int(v) for v in sect["grid"])
        pairs = np.frombuffer(bytes.fromhex(sect["ring_values"]), dtype="<f8")
        values = pairs[0::2] + 1j * pairs[1::2]
        seed = int(sect["seed"])
        return TreeRingKey(ring_values=values, radius=radius,
                           mask=ring_index_grid(h, w) < radius,
                           threshold=float(sect["threshold"]),
                           seed=None if seed < 0 else seed)
    except (KeyError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed tree-ring key file {path}: {exc}") from exc
