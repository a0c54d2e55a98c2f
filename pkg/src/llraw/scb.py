"""Smooth-oriented convolutional block.

Training-time structure: a main 3x3 convolution plus an auxiliary branch
made of a 1x1 convolution followed by a per-output-channel smooth
depthwise 3x3 convolution. The smooth kernels are softmax-constrained
(positive, unit sum), so the auxiliary branch is forced to act as a
learned low-pass filter.

Because both branches are linear, the block folds into a single 3x3
convolution for inference:

    w_folded[i, j, h, t] = w3[i, j, h, t] + w1[i, j] * smooth[i, h, t]

The fold is exact up to float64 rounding; ``fold_check`` quantifies the
divergence on random instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from llraw import backend
from llraw.awd import gaussian_kernel
from llraw.errors import DimensionError, ParameterError, UsageError
from llraw.tensor import as_tensor, conv2d, softmax, softmax_backward

INIT_KINDS = ("mean", "gaussian")


@dataclass
class ScbParams:
    w3: np.ndarray            # (C2, C1, 3, 3)
    w1: np.ndarray            # (C2, C1, 1, 1)
    sconv_logits: np.ndarray  # (C2, 3, 3)
    init_kind: str = "mean"

    def __post_init__(self):
        self.w3 = as_tensor(self.w3, "w3")
        self.w1 = as_tensor(self.w1, "w1")
        self.sconv_logits = as_tensor(self.sconv_logits, "sconv_logits")
        if self.w3.ndim != 4 or self.w3.shape[2:] != (3, 3):
            raise DimensionError(f"w3 must be (C2, C1, 3, 3), got {self.w3.shape}")
        c2, c1 = self.w3.shape[:2]
        if self.w1.shape != (c2, c1, 1, 1):
            raise DimensionError(f"w1 must be {(c2, c1, 1, 1)}, got {self.w1.shape}")
        if self.sconv_logits.shape != (c2, 3, 3):
            raise DimensionError(
                f"sconv_logits must be {(c2, 3, 3)}, got {self.sconv_logits.shape}"
            )
        if self.init_kind not in INIT_KINDS:
            raise ParameterError(f"init_kind must be one of {INIT_KINDS}")

    @property
    def in_channels(self) -> int:
        return self.w3.shape[1]

    @property
    def out_channels(self) -> int:
        return self.w3.shape[0]

    @classmethod
    def init(cls, in_channels: int, out_channels: int, init_kind: str = "mean",
             rng: np.random.Generator | None = None) -> "ScbParams":
        rng = rng or np.random.default_rng(0)
        fan = in_channels * 9
        w3 = rng.normal(0.0, np.sqrt(2.0 / fan), size=(out_channels, in_channels, 3, 3))
        w1 = rng.normal(0.0, np.sqrt(1.0 / in_channels),
                        size=(out_channels, in_channels, 1, 1))
        if init_kind == "mean":
            logits = np.zeros((out_channels, 3, 3))
        elif init_kind == "gaussian":
            logits = np.broadcast_to(
                np.log(gaussian_kernel(3, 1.0)), (out_channels, 3, 3)
            ).copy()
        else:
            raise ParameterError(f"init_kind must be one of {INIT_KINDS}")
        return cls(w3, w1, logits, init_kind=init_kind)


@dataclass
class FoldedConv:
    """Single 3x3 kernel equivalent to the two-branch training block."""

    w_folded: np.ndarray


@dataclass
class ScbCache:
    xpad: np.ndarray        # zero-padded input for the 3x3 branches
    x_shape: tuple
    aux_pad: np.ndarray     # zero-padded 1x1-branch activations
    smooth: np.ndarray      # softmax kernels, (C2, 3, 3)
    params: ScbParams
    out_shape: tuple


def sconv_kernel(logits) -> np.ndarray:
    """Per-channel softmax over the 9 taps: positive, sums to 1."""
    logits = as_tensor(logits, "sconv logits")
    if logits.ndim != 3 or logits.shape[1:] != (3, 3):
        raise DimensionError(f"sconv logits must be (C, 3, 3), got {logits.shape}")
    flat = softmax(logits.reshape(logits.shape[0], 9), axis=1)
    return flat.reshape(logits.shape)


def scb_forward_train(x, params: ScbParams):
    """Two-branch forward, stride 1, output size equals input size."""
    x = as_tensor(x, "scb input")
    if x.ndim != 3:
        raise DimensionError(f"scb input must be (C, H, W), got {x.shape}")
    if x.shape[0] != params.in_channels:
        raise DimensionError(
            f"scb: input has {x.shape[0]} channels, block expects {params.in_channels}"
        )
    kern = backend.kernels()
    xpad = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    main = kern.conv2d_fwd(xpad, params.w3, 1)
    aux = kern.conv2d_fwd(np.ascontiguousarray(x), params.w1, 1)
    smooth = sconv_kernel(params.sconv_logits)
    aux_pad = np.pad(aux, ((0, 0), (1, 1), (1, 1)))
    y = main + kern.depthwise_fwd(aux_pad, smooth, 1)
    cache = ScbCache(xpad, x.shape, aux_pad, smooth, params, y.shape)
    return y, cache


def scb_backward(cache: ScbCache, dy):
    """Gradients (dx, dw3, dw1, dlogits) of scb_forward_train."""
    dy = as_tensor(dy, "scb dy")
    if dy.shape != cache.out_shape:
        raise UsageError(
            f"scb_backward: dy shape {dy.shape} does not match cached output "
            f"{cache.out_shape}"
        )
    kern = backend.kernels()
    params = cache.params
    dxpad, dw3 = kern.conv2d_bwd(cache.xpad, params.w3, dy, 1)
    dx = dxpad[:, 1:-1, 1:-1]

    daux_pad, dsmooth = kern.depthwise_bwd(cache.aux_pad, cache.smooth, dy, 1)
    daux = np.ascontiguousarray(daux_pad[:, 1:-1, 1:-1])
    x = np.ascontiguousarray(cache.xpad[:, 1:-1, 1:-1])
    dx_aux, dw1 = kern.conv2d_bwd(x, params.w1, daux, 1)
    dx = dx + dx_aux

    c2 = params.out_channels
    dlogits = softmax_backward(
        cache.smooth.reshape(c2, 9), dsmooth.reshape(c2, 9), axis=1
    ).reshape(c2, 3, 3)
    return dx, dw3, dw1, dlogits


def fold(params: ScbParams) -> FoldedConv:
    """Merge both branches into one 3x3 kernel."""
    smooth = sconv_kernel(params.sconv_logits)
    w_folded = params.w3 + params.w1[:, :, 0, 0][:, :, None, None] * smooth[:, None, :, :]
    return FoldedConv(w_folded)


def scb_forward_infer(x, folded: FoldedConv) -> np.ndarray:
    """Inference path: one plain 3x3 convolution."""
    return conv2d(x, folded.w_folded, stride=1, padding=1)


def fold_check(num: int = 100, seed: int = 0, max_channels: int = 8,
               max_extent: int = 16):
    """Max elementwise |train-path - folded-path| over random instances.

    Returns (rows, max_divergence); each row is
    (instance, c1, c2, h, w, divergence).
    """
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    for i in range(num):
        c1 = int(rng.integers(1, max_channels + 1))
        c2 = int(rng.integers(1, max_channels + 1))
        h = int(rng.integers(3, max_extent + 1))
        w = int(rng.integers(3, max_extent + 1))
        params = ScbParams.init(c1, c2, init_kind="mean", rng=rng)
        params.sconv_logits = rng.normal(0.0, 1.0, size=(c2, 3, 3))
        x = rng.normal(0.0, 1.0, size=(c1, h, w))
        y_train, _ = scb_forward_train(x, params)
        y_infer = scb_forward_infer(x, fold(params))
        div = float(np.abs(y_train - y_infer).max())
        worst = max(worst, div)
        rows.append((i, c1, c2, h, w, div))
    return rows, worst
