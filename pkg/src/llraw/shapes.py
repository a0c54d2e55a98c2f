"""Procedural classification dataset: colored shapes on textured backgrounds.

Four classes (circle, square, triangle, cross), each with a characteristic
hue so that globally pooled features carry class signal. Every sample is
pushed through the full synthesis pipeline: sRGB -> unprocess -> darken ->
sensor noise -> amplify, yielding pixel-aligned clean/noisy RAW pairs.
Generation is fully seeded and label-free to reproduce.
"""

from __future__ import annotations

import numpy as np

from llraw.dsl import PairBatch
from llraw.errors import ParameterError
from llraw.isp import IspParams, SrgbImage, default_isp
from llraw.noise import NoiseParams, synthesize_lowlight

CLASS_NAMES = ("circle", "square", "triangle", "cross")

# base RGB per class; jittered per sample
_CLASS_COLORS = np.array([
    [0.82, 0.25, 0.20],
    [0.20, 0.78, 0.30],
    [0.25, 0.35, 0.85],
    [0.85, 0.80, 0.22],
])


def _smooth_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Low-frequency texture: bilinear upsampling of a coarse random grid."""
    coarse = rng.uniform(0.18, 0.55, size=(3, 5, 5))
    pos = np.linspace(0.0, 4.0, size)
    i0 = np.clip(pos.astype(int), 0, 3)
    frac = pos - i0
    rows = (coarse[:, i0, :] * (1 - frac)[None, :, None]
            + coarse[:, i0 + 1, :] * frac[None, :, None])
    cols = (rows[:, :, i0] * (1 - frac)[None, None, :]
            + rows[:, :, i0 + 1] * frac[None, None, :])
    return cols


def _shape_mask(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = rng.uniform(0.35, 0.65) * size
    cx = rng.uniform(0.35, 0.65) * size
    r = rng.uniform(0.18, 0.30) * size
    if cls == 0:  # circle
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if cls == 1:  # square
        return (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    if cls == 2:  # triangle, apex up
        inside = (yy >= cy - r) & (yy <= cy + r)
        half = (yy - (cy - r)) / 2.0
        return inside & (np.abs(xx - cx) <= half)
    if cls == 3:  # cross
        arm = max(r / 3.0, 1.0)
        vert = (np.abs(xx - cx) <= arm) & (np.abs(yy - cy) <= r)
        horiz = (np.abs(yy - cy) <= arm) & (np.abs(xx - cx) <= r)
        return vert | horiz
    raise ParameterError(f"unknown class {cls}")


def make_srgb_sample(cls: int, size: int, rng: np.random.Generator) -> SrgbImage:
    img = _smooth_background(rng, size)
    mask = _shape_mask(cls, size, rng)
    color = np.clip(_CLASS_COLORS[cls] + rng.uniform(-0.08, 0.08, size=3), 0.05, 0.95)
    img = np.where(mask[None, :, :], color[:, None, None], img)
    return SrgbImage(np.clip(img, 0.0, 1.0))


def make_pair_dataset(num_pairs: int, image_size: int = 32, num_classes: int = 4,
                      isp: IspParams | None = None, noise: NoiseParams | None = None,
                      seed: int = 0) -> PairBatch:
    """Balanced shuffled dataset of clean/noisy RAW pairs."""
    if not 1 <= num_classes <= len(CLASS_NAMES):
        raise ParameterError(f"num_classes must be 1..{len(CLASS_NAMES)}")
    isp = isp or default_isp()
    noise = noise or NoiseParams(seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(5,)))
    labels = np.arange(num_pairs) % num_classes
    rng.shuffle(labels)
    clean = np.empty((num_pairs, 3, image_size, image_size))
    noisy = np.empty_like(clean)
    for n in range(num_pairs):
        srgb = make_srgb_sample(int(labels[n]), image_size, rng)
        x, x_noisy = synthesize_lowlight(srgb, isp, noise, image_id=n)
        clean[n] = x.pixels
        noisy[n] = x_noisy.pixels
    return PairBatch(clean, noisy, labels)


def split_pairs(pairs: PairBatch, holdout_fraction: float, seed: int = 0):
    """(train, holdout) split with a seeded permutation."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ParameterError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(6,)))
    order = rng.permutation(len(pairs))
    n_hold = max(1, int(round(holdout_fraction * len(pairs))))
    return pairs.subset(order[n_hold:]), pairs.subset(order[:n_hold])
