"""Physics-based low-light sensor noise synthesis.

A clean linear RAW-RGB value v in [0, 1] is corrupted as

    v' = K' * Poisson(v / K') + N(0, read') + N_row(0, row') + U(-q/2, q/2)

where K' is the per-photoelectron system gain expressed on the [0, 1]
scale (K digital numbers per electron divided by the ADC full scale),
read'/row' are the read and row-banding sigmas on the same scale, the row
draw is shared by every pixel of one row within a channel, and
q = 1/(2^adc_bits - 1) is the quantizer step. Everything is driven by a
generator derived from (seed, image_id), so identical inputs give
bit-identical outputs.

Low-light capture is simulated by dividing by a low-light factor before
noise injection and multiplying back (with clipping) afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from llraw.errors import ParameterError
from llraw.isp import IspParams, RawRgbImage, SrgbImage, unprocess

# Above this Poisson mean the exact sampler hands over to the Gaussian
# moment-matched approximation; relative skew there is < 1/sqrt(1e4) = 1%.
POISSON_NORMAL_CROSSOVER = 1e4


@dataclass(frozen=True)
class NoiseParams:
    """Sensor noise configuration, sigmas and gain in DN at the ADC scale."""

    system_gain_k: float = 4.0
    read_sigma: float = 3.0
    row_sigma: float = 1.5
    adc_bits: int = 14
    low_light_factor: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.system_gain_k) or self.system_gain_k <= 0:
            raise ParameterError(f"system_gain_k must be positive, got {self.system_gain_k}")
        if not np.isfinite(self.read_sigma) or self.read_sigma < 0:
            raise ParameterError(f"read_sigma must be >= 0, got {self.read_sigma}")
        if not np.isfinite(self.row_sigma) or self.row_sigma < 0:
            raise ParameterError(f"row_sigma must be >= 0, got {self.row_sigma}")
        if self.adc_bits < 1:
            raise ParameterError(f"adc_bits must be >= 1, got {self.adc_bits}")
        if not np.isfinite(self.low_light_factor) or self.low_light_factor < 1:
            raise ParameterError(
                f"low_light_factor must be >= 1, got {self.low_light_factor}"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def full_scale(self) -> float:
        return float(2**self.adc_bits - 1)

    @property
    def k_norm(self) -> float:
        """System gain on the normalized [0, 1] signal scale."""
        return self.system_gain_k / self.full_scale

    @property
    def read_sigma_norm(self) -> float:
        return self.read_sigma / self.full_scale

    @property
    def row_sigma_norm(self) -> float:
        return self.row_sigma / self.full_scale

    @property
    def quant_step(self) -> float:
        return 1.0 / self.full_scale

    def to_dict(self) -> dict:
        return {
            "system_gain_k": self.system_gain_k,
            "read_sigma": self.read_sigma,
            "row_sigma": self.row_sigma,
            "adc_bits": self.adc_bits,
            "low_light_factor": self.low_light_factor,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseParams":
        known = {"system_gain_k", "read_sigma", "row_sigma", "adc_bits",
                 "low_light_factor", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown NoiseParams key {sorted(unknown)[0]!r}")
        return cls(**d)


def _rng_for(params: NoiseParams, image_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        entropy=int(params.seed), spawn_key=(int(image_id),)))


def _sample_poisson(rng: np.random.Generator, lam: np.ndarray) -> np.ndarray:
    """Exact Poisson below the crossover mean, Gaussian approximation above."""
    counts = np.zeros_like(lam)
    small = lam <= POISSON_NORMAL_CROSSOVER
    if small.any():
        counts[small] = rng.poisson(lam[small])
    if (~small).any():
        big = lam[~small]
        counts[~small] = big + np.sqrt(big) * rng.standard_normal(big.shape)
    return counts


def noisy_values(values: np.ndarray, params: NoiseParams, image_id: int = 0,
                 clip: bool = True) -> np.ndarray:
    """Apply the full noise stack to a (C, H, W) array of [0, 1] values.

    ``clip=False`` skips the final [0, 1] clamp so variance measurements
    near the range boundaries stay unbiased.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    rng = _rng_for(params, image_id)
    k = params.k_norm
    out = k * _sample_poisson(rng, v / k)
    if params.read_sigma > 0:
        out += rng.normal(0.0, params.read_sigma_norm, size=v.shape)
    if params.row_sigma > 0:
        row = rng.normal(0.0, params.row_sigma_norm, size=v.shape[:-1])
        out += row[..., None]
    q = params.quant_step
    out += rng.uniform(-0.5 * q, 0.5 * q, size=v.shape)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out


def darken(raw: RawRgbImage, factor: float) -> RawRgbImage:
    """Divide intensities by a low-light factor (shorter simulated exposure)."""
    if factor < 1:
        raise ParameterError(f"darken factor must be >= 1, got {factor}")
    return RawRgbImage(raw.pixels / factor, bit_depth=raw.bit_depth,
                       clip_fraction=raw.clip_fraction)


def amplify(raw: RawRgbImage, factor: float) -> RawRgbImage:
    """Digital gain with clipping at the white point."""
    if factor <= 0:
        raise ParameterError(f"amplify factor must be positive, got {factor}")
    v = raw.pixels * factor
    clipped = float((v > 1.0).mean())
    return RawRgbImage(np.clip(v, 0.0, 1.0), bit_depth=raw.bit_depth,
                       clip_fraction=max(raw.clip_fraction, clipped))


def inject_noise(clean: RawRgbImage, params: NoiseParams, image_id: int = 0) -> RawRgbImage:
    return RawRgbImage(noisy_values(clean.pixels, params, image_id=image_id, clip=True),
                       bit_depth=clean.bit_depth, clip_fraction=clean.clip_fraction)


def synthesize_lowlight(srgb: SrgbImage, isp: IspParams, params: NoiseParams,
                        image_id: int = 0) -> tuple[RawRgbImage, RawRgbImage]:
    """sRGB -> (clean RAW x, noisy low-light RAW x') for paired training."""
    clean = unprocess(srgb, isp)
    f = params.low_light_factor
    noisy = amplify(inject_noise(darken(clean, f), params, image_id=image_id), f)
    return clean, noisy
