"""Invertible camera ISP simulation.

``process`` turns a linear RAW-RGB image into a display sRGB image
(white balance -> color correction -> gamma -> tone curve); ``unprocess``
runs the exact inverse chain to synthesize RAW data from sRGB sources.
Every stage clips to [0, 1] and the fraction of clipped values is
reported, so out-of-gamut inversions are visible instead of silent.

The tone curve is the smoothstep s(x) = 3x^2 - 2x^3, inverted numerically
by bisection; gamma defaults to 1/2.2 for the RAW -> sRGB direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from llraw.errors import DimensionError, DomainError, ParameterError

DEFAULT_GAMMA = 1.0 / 2.2
DEFAULT_WB_GAINS = (2.0, 1.0, 1.6)
TONE_CURVES = ("none", "smoothstep")
RAW_BIT_DEPTHS = (8, 10, 12, 14)


@dataclass
class SrgbImage:
    """Display-referred 3-channel image, values in [0, 1]."""

    pixels: np.ndarray
    source_bit_depth: int = 8

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        _check_chw(self.pixels, "SrgbImage")
        _check_unit_range(self.pixels, "SrgbImage")


@dataclass
class RawRgbImage:
    """Linear-domain 3-channel RAW-RGB image, values in [0, 1]."""

    pixels: np.ndarray
    bit_depth: int = 14
    clip_fraction: float = 0.0

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        _check_chw(self.pixels, "RawRgbImage")
        _check_unit_range(self.pixels, "RawRgbImage")
        if self.bit_depth not in RAW_BIT_DEPTHS:
            raise ParameterError(
                f"RawRgbImage bit_depth must be one of {RAW_BIT_DEPTHS}, got {self.bit_depth}"
            )


@dataclass
class BayerImage:
    """Single mosaic plane with an RGGB color filter array."""

    plane: np.ndarray
    cfa: str = "RGGB"

    def __post_init__(self):
        self.plane = np.ascontiguousarray(self.plane, dtype=np.float64)
        if self.plane.ndim != 2:
            raise DimensionError(f"BayerImage plane must be 2-D, got {self.plane.ndim} axes")
        h, w = self.plane.shape
        if h % 2 or w % 2:
            raise DimensionError(f"BayerImage extents must be even, got {h}x{w}")
        if self.cfa != "RGGB":
            raise ParameterError(f"only the RGGB pattern is supported, got {self.cfa!r}")


@dataclass
class IspParams:
    """White balance gains, color matrix, gamma exponent, and tone curve tag."""

    wb_gains: tuple = DEFAULT_WB_GAINS
    ccm: np.ndarray = field(default_factory=lambda: np.eye(3))
    gamma: float = DEFAULT_GAMMA
    tone_curve: str = "none"

    def __post_init__(self):
        self.wb_gains = tuple(float(g) for g in self.wb_gains)
        if len(self.wb_gains) != 3 or any(g <= 0 for g in self.wb_gains):
            raise ParameterError(f"wb_gains must be 3 positive reals, got {self.wb_gains}")
        self.ccm = np.ascontiguousarray(self.ccm, dtype=np.float64)
        if self.ccm.shape != (3, 3):
            raise ParameterError(f"ccm must be 3x3, got {self.ccm.shape}")
        rows = self.ccm.sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-9):
            raise ParameterError(f"ccm rows must sum to 1, got sums {rows}")
        if not np.isfinite(np.linalg.cond(self.ccm)) or np.linalg.cond(self.ccm) > 1e12:
            raise ParameterError("ccm is singular or near-singular")
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.tone_curve not in TONE_CURVES:
            raise ParameterError(
                f"tone_curve must be one of {TONE_CURVES}, got {self.tone_curve!r}"
            )

    def to_dict(self) -> dict:
        return {
            "wb_gains": list(self.wb_gains),
            "ccm": self.ccm.tolist(),
            "gamma": self.gamma,
            "tone_curve": self.tone_curve,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IspParams":
        known = {"wb_gains", "ccm", "gamma", "tone_curve"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown IspParams key {sorted(unknown)[0]!r}")
        kwargs = dict(d)
        return cls(**kwargs)


def _check_chw(pixels: np.ndarray, name: str) -> None:
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise DimensionError(f"{name} pixels must be (3, H, W), got {pixels.shape}")


def _check_unit_range(values: np.ndarray, name: str) -> None:
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise DomainError(
            f"{name}: values outside [0, 1] (min {values.min():.6g}, max {values.max():.6g})"
        )


def gamma_correct(img, gamma: float) -> np.ndarray:
    """Elementwise power curve on [0, 1]; fixed points at 0 and 1."""
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    arr = np.asarray(img, dtype=np.float64)
    _check_unit_range(arr, "gamma_correct")
    return arr**gamma


def smoothstep(x: np.ndarray) -> np.ndarray:
    return x * x * (3.0 - 2.0 * x)


def smoothstep_inverse(y: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Invert the monotone smoothstep on [0, 1] by bisection."""
    y = np.asarray(y, dtype=np.float64)
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    # Halving the bracket 64 times reaches float64 resolution, well below tol.
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = smoothstep(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if float(np.max(hi - lo)) <= tol:
            break
    return 0.5 * (lo + hi)


def _apply_ccm(pixels: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jhw->ihw", matrix, pixels)


class _ClipTracker:
    """Clips each stage to [0, 1] and remembers which values ever clipped."""

    def __init__(self, shape):
        self.mask = np.zeros(shape, dtype=bool)

    def clip(self, values: np.ndarray) -> np.ndarray:
        self.mask |= (values < 0.0) | (values > 1.0)
        return np.clip(values, 0.0, 1.0)

    @property
    def fraction(self) -> float:
        return float(self.mask.mean())


def unprocess(img: SrgbImage, isp: IspParams) -> RawRgbImage:
    """sRGB -> linear RAW-RGB: inverse tone curve, gamma, color matrix, gains."""
    tracker = _ClipTracker(img.pixels.shape)
    v = img.pixels
    if isp.tone_curve == "smoothstep":
        v = smoothstep_inverse(v)
    v = gamma_correct(v, 1.0 / isp.gamma)
    v = tracker.clip(_apply_ccm(v, np.linalg.inv(isp.ccm)))
    v = tracker.clip(v / np.asarray(isp.wb_gains)[:, None, None])
    return RawRgbImage(v, bit_depth=14, clip_fraction=tracker.fraction)


def process(raw: RawRgbImage, isp: IspParams) -> SrgbImage:
    """Linear RAW-RGB -> sRGB: gains, color matrix, gamma, tone curve."""
    tracker = _ClipTracker(raw.pixels.shape)
    v = tracker.clip(raw.pixels * np.asarray(isp.wb_gains)[:, None, None])
    v = tracker.clip(_apply_ccm(v, isp.ccm))
    v = gamma_correct(v, isp.gamma)
    if isp.tone_curve == "smoothstep":
        v = smoothstep(v)
    return SrgbImage(np.clip(v, 0.0, 1.0))


def mosaic(raw: RawRgbImage) -> BayerImage:
    """Sample the 3 channels onto an RGGB plane at full resolution."""
    r, g, b = raw.pixels
    h, w = r.shape
    if h % 2 or w % 2:
        raise DimensionError(f"mosaic: extents must be even, got {h}x{w}")
    plane = np.empty((h, w))
    plane[0::2, 0::2] = r[0::2, 0::2]
    plane[0::2, 1::2] = g[0::2, 1::2]
    plane[1::2, 0::2] = g[1::2, 0::2]
    plane[1::2, 1::2] = b[1::2, 1::2]
    return BayerImage(plane)


def demosaic_avg(bayer: BayerImage) -> RawRgbImage:
    """Half-resolution RAW-RGB: R top-left, B bottom-right, G = mean of the pair."""
    p = bayer.plane
    r = p[0::2, 0::2]
    g = 0.5 * (p[0::2, 1::2] + p[1::2, 0::2])
    b = p[1::2, 1::2]
    return RawRgbImage(np.stack([r, g, b]), bit_depth=14)


def quantize_to_grid(values: np.ndarray, bits: int) -> np.ndarray:
    """Round [0, 1] values to the k/(2^bits - 1) grid, ties to even."""
    if bits < 1:
        raise ParameterError(f"bits must be >= 1, got {bits}")
    levels = float(2**bits - 1)
    return np.round(np.asarray(values, dtype=np.float64) * levels) / levels


def quantize(raw: RawRgbImage, bits: int) -> RawRgbImage:
    if bits not in RAW_BIT_DEPTHS:
        raise ParameterError(f"bits must be one of {RAW_BIT_DEPTHS}, got {bits}")
    return RawRgbImage(
        quantize_to_grid(raw.pixels, bits), bit_depth=bits, clip_fraction=raw.clip_fraction
    )


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; math.inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def default_isp(tone_curve: str = "none") -> IspParams:
    """Documented defaults: daylight-ish gains, identity ccm, gamma 1/2.2."""
    return IspParams(wb_gains=DEFAULT_WB_GAINS, ccm=np.eye(3), gamma=DEFAULT_GAMMA,
                     tone_curve=tone_curve)


def identity_isp() -> IspParams:
    """Pass-through parameters; process and unprocess become the identity."""
    return IspParams(wb_gains=(1.0, 1.0, 1.0), ccm=np.eye(3), gamma=1.0, tone_curve="none")


def scaled(raw: RawRgbImage, pixels: np.ndarray, clip_fraction=None) -> RawRgbImage:
    """RawRgbImage with new pixels but the same metadata."""
    img = replace(raw, pixels=pixels)
    if clip_fraction is not None:
        img.clip_fraction = float(clip_fraction)
    return img
