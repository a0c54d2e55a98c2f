"""Pure-numpy kernel implementations (fallback backend).

These mirror the compiled kernels in ``llraw._kernels`` exactly: same
signatures, same shapes, float64 in and out. Inputs arrive pre-padded and
C-contiguous; validation and padding live in the calling modules.

All convolutions are correlations (no kernel flip). Vectorization uses
sliding windows plus einsum, so accumulation order differs from the naive
loop; agreement with loop references is to ~1e-15 absolute at desk scale.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"


def _windows(xpad: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided (C, Ho, Wo, kh, kw) view of a padded (C, Hp, Wp) array."""
    v = sliding_window_view(xpad, (kh, kw), axis=(1, 2))
    return v[:, ::stride, ::stride]


def conv2d_fwd(xpad: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    win = _windows(xpad, w.shape[2], w.shape[3], stride)
    return np.einsum("ihwkl,oikl->ohw", win, w, optimize=True)


def conv2d_bwd(
    xpad: np.ndarray, w: np.ndarray, dy: np.ndarray, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of conv2d_fwd w.r.t. the padded input and the weights."""
    kh, kw = w.shape[2], w.shape[3]
    win = _windows(xpad, kh, kw, stride)
    dw = np.einsum("ihwkl,ohw->oikl", win, dy, optimize=True)
    dxpad = np.zeros_like(xpad)
    # (C_in, Ho, Wo, kh, kw) contributions scattered back tap by tap.
    dwin = np.einsum("ohw,oikl->ihwkl", dy, w, optimize=True)
    ho, wo = dy.shape[1], dy.shape[2]
    for h in range(kh):
        for t in range(kw):
            dxpad[:, h : h + stride * ho : stride, t : t + stride * wo : stride] += dwin[
                :, :, :, h, t
            ]
    return dxpad, dw


def depthwise_fwd(xpad: np.ndarray, kern: np.ndarray, stride: int) -> np.ndarray:
    win = _windows(xpad, kern.shape[1], kern.shape[2], stride)
    return np.einsum("chwkl,ckl->chw", win, kern, optimize=True)


def depthwise_bwd(
    xpad: np.ndarray, kern: np.ndarray, dy: np.ndarray, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    kh, kw = kern.shape[1], kern.shape[2]
    win = _windows(xpad, kh, kw, stride)
    dkern = np.einsum("chwkl,chw->ckl", win, dy, optimize=True)
    dxpad = np.zeros_like(xpad)
    dwin = dy[:, :, :, None, None] * kern[:, None, None, :, :]
    ho, wo = dy.shape[1], dy.shape[2]
    for h in range(kh):
        for t in range(kw):
            dxpad[:, h : h + stride * ho : stride, t : t + stride * wo : stride] += dwin[
                :, :, :, h, t
            ]
    return dxpad, dkern


def awd_combine_fwd(
    xpad: np.ndarray, wts: np.ndarray, kh: int, kw: int, stride: int
) -> np.ndarray:
    """Per-location weighted tap sum: wts is (C, Ho, Wo, kh*kw)."""
    win = _windows(xpad, kh, kw, stride)
    flat = win.reshape(win.shape[:3] + (kh * kw,))
    return np.einsum("chwm,chwm->chw", flat, wts, optimize=True)


def awd_combine_bwd(
    xpad: np.ndarray, wts: np.ndarray, dy: np.ndarray, kh: int, kw: int, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    win = _windows(xpad, kh, kw, stride)
    flat = win.reshape(win.shape[:3] + (kh * kw,))
    dwts = flat * dy[:, :, :, None]
    dwin = (wts * dy[:, :, :, None]).reshape(win.shape)
    dxpad = np.zeros_like(xpad)
    ho, wo = dy.shape[1], dy.shape[2]
    for h in range(kh):
        for t in range(kw):
            dxpad[:, h : h + stride * ho : stride, t : t + stride * wo : stride] += dwin[
                :, :, :, h, t
            ]
    return dxpad, dwts
