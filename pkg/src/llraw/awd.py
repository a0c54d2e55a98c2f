"""Adaptive weighted downsampling.

Strided downsampling discards 3/4 of the feature map and passes noise
straight through; low-pass filtering before the stride suppresses it.
This module provides three levels of that idea:

* ``downsample_fixed``: strided (nearest), mean, Gaussian, and bilateral
  filters with stride 2 — the fixed baselines.
* ``spatial_variant_downsample``: one softmax-normalized k*k kernel per
  output location, shared across channels, predicted from the local
  receptive field.
* ``awd_forward``/``awd_backward``: per-channel kernels whose local
  logits are scaled by a global per-channel temperature predicted from
  pooled features, giving channel- and spatial-variant low-pass filters.

The softmax constraint keeps every generated kernel positive with unit
sum, so each output is a convex combination of its input window.

Geometry: inputs are reflect-padded so that the output extent is
ceil(H/stride) for every kernel size, and the tap at index
((k-1)//2, (k-1)//2) of each window lands exactly on the strided sample
position. A one-hot kernel on that tap therefore reproduces plain strided
downsampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from llraw import backend
from llraw.errors import DimensionError, ParameterError, UsageError
from llraw.tensor import as_tensor, relu, sigmoid, softmax, softmax_backward, softplus

SUPPORTED_KERNELS = (2, 3, 4, 5)


# ---------------------------------------------------------------------------
# padding geometry shared by every downsampler
# ---------------------------------------------------------------------------

def _pad_amounts(n: int, k: int, stride: int) -> tuple[int, int, int]:
    """(before, after, n_out) with n_out = ceil(n/stride), centered windows."""
    n_out = -(-n // stride)
    before = (k - 1) // 2
    after = (n_out - 1) * stride + k - n - before
    if after < 0:
        raise DimensionError(f"kernel {k} with stride {stride} over-covers extent {n}")
    if before >= n or after >= n:
        raise DimensionError(f"kernel {k} exceeds spatial extent {n}")
    return before, after, n_out


def _reflect_pad(x: np.ndarray, k: int, stride: int):
    c, h, w = x.shape
    top, bottom, h_out = _pad_amounts(h, k, stride)
    left, right, w_out = _pad_amounts(w, k, stride)
    xpad = np.pad(x, ((0, 0), (top, bottom), (left, right)), mode="reflect")
    return np.ascontiguousarray(xpad), (top, bottom, left, right), (h_out, w_out)


def _reflect_pad_adjoint(dxpad: np.ndarray, pads, shape) -> np.ndarray:
    """Fold padded-gradient strips back onto their reflected source rows/cols."""
    top, bottom, left, right = pads
    c, h, w = shape
    rows = dxpad[:, top : top + h, :].copy()
    for i in range(top):
        rows[:, top - i, :] += dxpad[:, i, :]
    for j in range(bottom):
        rows[:, h - 2 - j, :] += dxpad[:, top + h + j, :]
    dx = rows[:, :, left : left + w].copy()
    for i in range(left):
        dx[:, :, left - i] += rows[:, :, i]
    for j in range(right):
        dx[:, :, w - 2 - j] += rows[:, :, left + w + j]
    return dx


# ---------------------------------------------------------------------------
# fixed low-pass baselines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedFilterKind:
    """Tag + parameters for the non-learned downsampling baselines."""

    tag: str  # strided | mean | gaussian | bilateral
    kernel_size: int = 3
    stride: int = 2
    sigma: float = 1.0          # gaussian
    sigma_spatial: float = 1.0  # bilateral
    sigma_range: float = 0.5    # bilateral, relative to the window value range

    def __post_init__(self):
        if self.tag not in ("strided", "mean", "gaussian", "bilateral"):
            raise ParameterError(f"unknown filter tag {self.tag!r}")
        if self.tag != "strided" and self.kernel_size < 2:
            raise ParameterError(f"kernel_size must be >= 2, got {self.kernel_size}")
        if self.stride < 1:
            raise ParameterError(f"stride must be >= 1, got {self.stride}")
        if self.tag == "gaussian" and self.sigma <= 0:
            raise ParameterError("gaussian sigma must be positive")
        if self.tag == "bilateral" and (self.sigma_spatial <= 0 or self.sigma_range <= 0):
            raise ParameterError("bilateral sigmas must be positive")


def gaussian_kernel(k: int, sigma: float) -> np.ndarray:
    """Normalized k x k Gaussian centered on the strided-sample tap."""
    center = (k - 1) // 2
    ax = np.arange(k, dtype=np.float64) - center
    g1 = np.exp(-0.5 * (ax / sigma) ** 2)
    kern = np.outer(g1, g1)
    return kern / kern.sum()


def _window_view(xpad: np.ndarray, k: int, stride: int) -> np.ndarray:
    v = np.lib.stride_tricks.sliding_window_view(xpad, (k, k), axis=(1, 2))
    return v[:, ::stride, ::stride]


def downsample_fixed(x, kind: FixedFilterKind) -> np.ndarray:
    """Strided correlation with one of the fixed low-pass kernels."""
    x = as_tensor(x, "downsample input")
    if x.ndim != 3:
        raise DimensionError(f"downsample input must be (C, H, W), got {x.shape}")
    s = kind.stride
    if kind.tag == "strided":
        return np.ascontiguousarray(x[:, ::s, ::s])
    k = kind.kernel_size
    xpad, _, _ = _reflect_pad(x, k, s)
    if kind.tag == "mean":
        kern = np.full((k, k), 1.0 / (k * k))
    elif kind.tag == "gaussian":
        kern = gaussian_kernel(k, kind.sigma)
    else:  # bilateral: range weights recomputed per location, then normalized
        return _bilateral(xpad, k, s, kind)
    kern_all = np.array(np.broadcast_to(kern, (x.shape[0], k, k)), order="C")
    return backend.kernels().depthwise_fwd(xpad, kern_all, s)


def _bilateral(xpad: np.ndarray, k: int, stride: int, kind: FixedFilterKind) -> np.ndarray:
    center = (k - 1) // 2
    ax = np.arange(k, dtype=np.float64) - center
    dist2 = ax[:, None] ** 2 + ax[None, :] ** 2
    spatial = np.exp(-0.5 * dist2 / kind.sigma_spatial**2).reshape(-1)
    win = _window_view(xpad, k, stride)
    flat = win.reshape(win.shape[:3] + (k * k,))
    ref = flat[..., center * k + center][..., None]
    span = flat.max(axis=-1, keepdims=True) - flat.min(axis=-1, keepdims=True)
    span = np.maximum(span, 1e-12)
    rng_w = np.exp(-0.5 * ((flat - ref) / (span * kind.sigma_range)) ** 2)
    wts = spatial * rng_w
    wts /= wts.sum(axis=-1, keepdims=True)
    return np.einsum("chwm,chwm->chw", flat, wts, optimize=True)


# ---------------------------------------------------------------------------
# spatial-variant filter (shared across channels)
# ---------------------------------------------------------------------------

def spatial_variant_downsample(x, logit_weights, stride: int = 2) -> np.ndarray:
    """Downsample with one predicted softmax kernel per output location.

    ``logit_weights`` is a (k*k, C, k, k) convolution producing the k*k
    logits of each location's kernel from its receptive field.
    """
    x = as_tensor(x, "spatial_variant input")
    w = as_tensor(logit_weights, "spatial_variant logit weights")
    if w.ndim != 4:
        raise DimensionError(f"logit weights must be 4-D, got {w.ndim} axes")
    k = w.shape[2]
    if w.shape[0] != k * k:
        raise ParameterError(
            f"logit generator must emit k^2={k * k} maps, got {w.shape[0]}"
        )
    if w.shape[1] != x.shape[0]:
        raise DimensionError(
            f"spatial_variant: input has {x.shape[0]} channels, generator expects {w.shape[1]}"
        )
    xpad, _, (h_out, w_out) = _reflect_pad(x, k, stride)
    logits = backend.kernels().conv2d_fwd(xpad, w, stride)  # (k*k, Ho, Wo)
    wts = softmax(logits, axis=0).transpose(1, 2, 0)  # (Ho, Wo, k*k)
    wts_all = np.array(np.broadcast_to(wts, (x.shape[0], h_out, w_out, k * k)),
                       order="C")
    return backend.kernels().awd_combine_fwd(xpad, wts_all, k, k, stride)


# ---------------------------------------------------------------------------
# the adaptive weighted downsampling layer
# ---------------------------------------------------------------------------

@dataclass
class AwdParams:
    """Learnable state: local logit generator + global temperature MLP."""

    local_logit_weights: np.ndarray  # (C, k*k, k, k), depthwise per channel
    temp_fc1: np.ndarray             # (C/r, C)
    temp_fc2: np.ndarray             # (C, C/r)
    kernel_size: int = 3
    stride: int = 2
    reduction: int = 4

    def __post_init__(self):
        self.local_logit_weights = as_tensor(self.local_logit_weights, "local_logit_weights")
        self.temp_fc1 = as_tensor(self.temp_fc1, "temp_fc1")
        self.temp_fc2 = as_tensor(self.temp_fc2, "temp_fc2")
        k = self.kernel_size
        if k not in SUPPORTED_KERNELS:
            raise ParameterError(f"kernel_size must be in {SUPPORTED_KERNELS}, got {k}")
        c = self.channels
        if self.local_logit_weights.shape != (c, k * k, k, k):
            raise DimensionError(
                f"local_logit_weights must be (C, k*k, k, k) = {(c, k * k, k, k)}, "
                f"got {self.local_logit_weights.shape}"
            )
        if c % self.reduction:
            raise ParameterError(
                f"reduction {self.reduction} must divide channel count {c}"
            )
        hidden = c // self.reduction
        if self.temp_fc1.shape != (hidden, c) or self.temp_fc2.shape != (c, hidden):
            raise DimensionError(
                f"temperature MLP must be ({hidden}, {c}) and ({c}, {hidden}), "
                f"got {self.temp_fc1.shape} and {self.temp_fc2.shape}"
            )

    @property
    def channels(self) -> int:
        return self.local_logit_weights.shape[0]

    @classmethod
    def init(cls, channels: int, kernel_size: int = 3, stride: int = 2,
             reduction: int = 4, rng: np.random.Generator | None = None,
             logit_scale: float = 0.1) -> "AwdParams":
        """Small random logits (near-mean filter at start) and a light MLP."""
        rng = rng or np.random.default_rng(0)
        k = kernel_size
        hidden = channels // reduction
        if hidden < 1:
            raise ParameterError(
                f"reduction {reduction} leaves no hidden units for {channels} channels"
            )
        local = rng.normal(0.0, logit_scale / (k * k), size=(channels, k * k, k, k))
        fc1 = rng.normal(0.0, 1.0 / np.sqrt(channels), size=(hidden, channels))
        fc2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(channels, hidden))
        return cls(local, fc1, fc2, kernel_size=k, stride=stride, reduction=reduction)

    def grads_like(self) -> "AwdGrads":
        return AwdGrads(np.zeros_like(self.local_logit_weights),
                        np.zeros_like(self.temp_fc1), np.zeros_like(self.temp_fc2))


@dataclass
class AwdGrads:
    local_logit_weights: np.ndarray
    temp_fc1: np.ndarray
    temp_fc2: np.ndarray


@dataclass
class AwdWeights:
    """Generated filter bank, (C, H', W', k*k); convex per tap slice."""

    w: np.ndarray


@dataclass
class AwdCache:
    xpad: np.ndarray
    x_shape: tuple
    pads: tuple
    local_logits: np.ndarray   # V, (C, Ho, Wo, k*k)
    pooled: np.ndarray         # GP(X), (C,)
    hidden_pre: np.ndarray     # fc1 @ pooled
    temp_pre: np.ndarray       # fc2 @ relu(hidden_pre)
    temperature: np.ndarray    # softplus(temp_pre), (C,)
    weights: np.ndarray        # softmax output, (C, Ho, Wo, k*k)
    params: AwdParams


def awd_forward(x, params: AwdParams):
    """Returns (Y, AwdWeights, cache); cache feeds awd_backward."""
    x = as_tensor(x, "awd input")
    if x.ndim != 3:
        raise DimensionError(f"awd input must be (C, H, W), got {x.shape}")
    c = x.shape[0]
    if c != params.channels:
        raise DimensionError(
            f"awd: input has {c} channels but params were built for {params.channels}"
        )
    k, s = params.kernel_size, params.stride
    kk = k * k
    xpad, pads, (h_out, w_out) = _reflect_pad(x, k, s)
    kern = backend.kernels()

    # local logits V: one depthwise conv per tap map
    v = np.empty((c, h_out, w_out, kk))
    for m in range(kk):
        v[..., m] = kern.depthwise_fwd(
            xpad, np.ascontiguousarray(params.local_logit_weights[:, m]), s
        )

    # global temperature T
    pooled = x.mean(axis=(1, 2))
    hidden_pre = params.temp_fc1 @ pooled
    temp_pre = params.temp_fc2 @ relu(hidden_pre)
    temperature = softplus(temp_pre)

    wts = softmax(v * temperature[:, None, None, None], axis=-1)
    wts = np.ascontiguousarray(wts)
    y = kern.awd_combine_fwd(xpad, wts, k, k, s)
    cache = AwdCache(xpad, x.shape, pads, v, pooled, hidden_pre, temp_pre,
                     temperature, wts, params)
    return y, AwdWeights(wts), cache


def awd_backward(cache: AwdCache, dy) -> tuple[np.ndarray, AwdGrads]:
    """Exact gradients of awd_forward for downstream loss gradient dy."""
    dy = as_tensor(dy, "awd dy")
    params = cache.params
    k, s = params.kernel_size, params.stride
    if dy.shape != cache.weights.shape[:3]:
        raise UsageError(
            f"awd_backward: dy shape {dy.shape} does not match cached output "
            f"{cache.weights.shape[:3]}"
        )
    kern = backend.kernels()
    dxpad, dwts = kern.awd_combine_bwd(cache.xpad, cache.weights, dy, k, k, s)

    dz = softmax_backward(cache.weights, dwts, axis=-1)
    t = cache.temperature
    dv = dz * t[:, None, None, None]
    dt = np.einsum("chwm,chwm->c", dz, cache.local_logits, optimize=True)

    # temperature MLP path
    db = dt * sigmoid(cache.temp_pre)
    hidden = relu(cache.hidden_pre)
    dfc2 = np.outer(db, hidden)
    dhidden = params.temp_fc2.T @ db
    da = dhidden * (cache.hidden_pre > 0)
    dfc1 = np.outer(da, cache.pooled)
    dpooled = params.temp_fc1.T @ da

    # local logit generator path
    dlocal = np.empty_like(params.local_logit_weights)
    for m in range(k * k):
        dxp_m, dlocal[:, m] = kern.depthwise_bwd(
            cache.xpad, np.ascontiguousarray(params.local_logit_weights[:, m]),
            np.ascontiguousarray(dv[..., m]), s,
        )
        dxpad += dxp_m

    dx = _reflect_pad_adjoint(dxpad, cache.pads, cache.x_shape)
    c, h, w = cache.x_shape
    dx += dpooled[:, None, None] / (h * w)
    return dx, AwdGrads(dlocal, dfc1, dfc2)


def weight_std_map(weights: AwdWeights) -> np.ndarray:
    """Per-location dispersion of the generated kernels, averaged over channels.

    Uniform kernels give 0; a one-hot kernel gives sqrt(k^2 - 1)/k^2, the
    maximum. Bright regions in the rendered map mark positions where the
    layer sharpened its filter to preserve detail.
    """
    return weights.w.std(axis=-1).mean(axis=0)


def max_onehot_std(kernel_size: int) -> float:
    n = kernel_size * kernel_size
    return float(np.sqrt(n - 1) / n)


# ---------------------------------------------------------------------------
# fixed probe network for disturbance measurements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisturbanceProbe:
    """Frozen random 2-stage conv net; features are taken after each downsample."""

    w1: np.ndarray
    w2: np.ndarray

    @classmethod
    def init(cls, in_channels: int = 3, width: int = 8, seed: int = 0) -> "DisturbanceProbe":
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, np.sqrt(2.0 / (in_channels * 9)), size=(width, in_channels, 3, 3))
        w2 = rng.normal(0.0, np.sqrt(2.0 / (width * 9)), size=(width, width, 3, 3))
        return cls(w1, w2)

    def features(self, x, downsample) -> list[np.ndarray]:
        """Two feature stages; ``downsample`` maps a (C, H, W) tensor down."""
        from llraw.tensor import conv2d

        h1 = relu(conv2d(x, self.w1, stride=1, padding=1))
        d1 = downsample(h1)
        h2 = relu(conv2d(d1, self.w2, stride=1, padding=1))
        d2 = downsample(h2)
        return [d1, d2]
