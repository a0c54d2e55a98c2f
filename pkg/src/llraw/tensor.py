"""Dense-tensor primitives: convolution, pooling, softmax, linear algebra.

Tensors are float64 numpy arrays in channel-first (C, H, W) layout.
Convolutions are correlations (no kernel flip), the deep-learning
convention. All operations are pure functions of their inputs and are
safe to call concurrently on distinct arrays.

Backward passes are hand-derived; ``finite_diff_grad`` is the independent
oracle they are checked against.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from llraw import backend
from llraw.errors import DimensionError, NumericError


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.size == 0:
        raise DimensionError(f"{name}: empty extent in dims {arr.shape}")
    return arr


def _require_3d(x: np.ndarray, name: str) -> np.ndarray:
    if x.ndim != 3:
        raise DimensionError(f"{name}: expected 3 axes (C, H, W), got {x.ndim}")
    return x


def _out_extent(n: int, k: int, stride: int, padding: int, axis: str, op: str) -> int:
    out = (n + 2 * padding - k) // stride + 1
    if n + 2 * padding < k or out < 1:
        raise DimensionError(
            f"{op}: kernel {k} exceeds padded extent {n + 2 * padding} on axis {axis}"
        )
    return out


def _pad_zero(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def conv2d(x, weights, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlate (C_in, H, W) with (C_out, C_in, kh, kw) weights."""
    x = _require_3d(as_tensor(x, "conv2d input"), "conv2d input")
    w = as_tensor(weights, "conv2d weights")
    if w.ndim != 4:
        raise DimensionError(f"conv2d weights: expected 4 axes (O, I, kh, kw), got {w.ndim}")
    if w.shape[1] != x.shape[0]:
        raise DimensionError(
            f"conv2d: channel axis 0 mismatch, input has {x.shape[0]} channels "
            f"but weights expect {w.shape[1]}"
        )
    _out_extent(x.shape[1], w.shape[2], stride, padding, "H", "conv2d")
    _out_extent(x.shape[2], w.shape[3], stride, padding, "W", "conv2d")
    return backend.kernels().conv2d_fwd(_pad_zero(x, padding), w, stride)


def conv2d_backward(x, weights, dy, stride: int = 1, padding: int = 0):
    """Gradients (dx, dweights) of ``sum(conv2d(x, w) * dy)``."""
    x = as_tensor(x, "conv2d input")
    w = as_tensor(weights, "conv2d weights")
    dy = as_tensor(dy, "conv2d dy")
    dxpad, dw = backend.kernels().conv2d_bwd(_pad_zero(x, padding), w, dy, stride)
    if padding:
        dxpad = dxpad[:, padding:-padding, padding:-padding]
    return dxpad, dw


def depthwise_conv2d(x, kernels, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Per-channel correlation with (C, kh, kw) kernels; no channel mixing."""
    x = _require_3d(as_tensor(x, "depthwise input"), "depthwise input")
    k = as_tensor(kernels, "depthwise kernels")
    if k.ndim != 3:
        raise DimensionError(f"depthwise kernels: expected 3 axes (C, kh, kw), got {k.ndim}")
    if k.shape[0] != x.shape[0]:
        raise DimensionError(
            f"depthwise_conv2d: channel axis 0 mismatch, input has {x.shape[0]} "
            f"channels but kernels have {k.shape[0]}"
        )
    _out_extent(x.shape[1], k.shape[1], stride, padding, "H", "depthwise_conv2d")
    _out_extent(x.shape[2], k.shape[2], stride, padding, "W", "depthwise_conv2d")
    return backend.kernels().depthwise_fwd(_pad_zero(x, padding), k, stride)


def depthwise_conv2d_backward(x, kernels, dy, stride: int = 1, padding: int = 0):
    x = as_tensor(x, "depthwise input")
    k = as_tensor(kernels, "depthwise kernels")
    dy = as_tensor(dy, "depthwise dy")
    dxpad, dk = backend.kernels().depthwise_bwd(_pad_zero(x, padding), k, dy, stride)
    if padding:
        dxpad = dxpad[:, padding:-padding, padding:-padding]
    return dxpad, dk


def global_avg_pool(x) -> np.ndarray:
    """Mean over the spatial axes of a (C, H, W) tensor."""
    x = _require_3d(as_tensor(x, "global_avg_pool input"), "global_avg_pool input")
    if x.shape[1] == 0 or x.shape[2] == 0:
        raise DimensionError("global_avg_pool: empty spatial extent")
    return x.mean(axis=(1, 2))


def global_avg_pool_backward(x_shape: tuple, dy) -> np.ndarray:
    c, h, w = x_shape
    dy = as_tensor(dy, "global_avg_pool dy")
    return np.broadcast_to(dy[:, None, None] / (h * w), x_shape).copy()


def softmax(v, axis: int = -1) -> np.ndarray:
    """Softmax with max subtraction; finite for any finite input."""
    v = np.asarray(v, dtype=np.float64)
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(y: np.ndarray, dy, axis: int = -1) -> np.ndarray:
    """Jacobian-vector product of softmax given its output ``y``."""
    dy = np.asarray(dy, dtype=np.float64)
    inner = (dy * y).sum(axis=axis, keepdims=True)
    return (dy - inner) * y


def fully_connected(x, weights, bias) -> np.ndarray:
    """W @ x + b for a vector input."""
    x = as_tensor(x, "fully_connected input")
    w = as_tensor(weights, "fully_connected weights")
    b = as_tensor(bias, "fully_connected bias")
    if x.ndim != 1 or w.ndim != 2 or b.ndim != 1:
        raise DimensionError("fully_connected: expected x (N,), weights (M, N), bias (M,)")
    if w.shape[1] != x.shape[0]:
        raise DimensionError(
            f"fully_connected: axis 1 of weights is {w.shape[1]} but input has {x.shape[0]}"
        )
    if w.shape[0] != b.shape[0]:
        raise DimensionError(
            f"fully_connected: axis 0 of weights is {w.shape[0]} but bias has {b.shape[0]}"
        )
    return w @ x + b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)), overflow-safe."""
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def finite_diff_grad(scalar_fn: Callable[[np.ndarray], float], at, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    This is the independent oracle for every analytic backward pass in the
    library; it never calls any of them.
    """
    at = as_tensor(at, "finite_diff_grad point")
    grad = np.zeros_like(at)
    flat = at.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(scalar_fn(at))
        flat[i] = orig - eps
        f_minus = float(scalar_fn(at))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"finite_diff_grad: non-finite function value at coordinate {i}")
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def sgd_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float
) -> list[np.ndarray]:
    """p - lr * g for each (p, g) pair; returns new arrays."""
    if len(params) != len(grads):
        raise DimensionError(
            f"sgd_step: {len(params)} params but {len(grads)} grads"
        )
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        p = as_tensor(p, f"sgd param {i}")
        g = as_tensor(g, f"sgd grad {i}")
        if p.shape != g.shape:
            raise DimensionError(
                f"sgd_step: param {i} has dims {p.shape} but grad has {g.shape}"
            )
        out.append(p - lr * g)
    return out
