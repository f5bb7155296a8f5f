"""Dense-tensor kernel for the neural stages.

Tensors are plain ``numpy.ndarray`` values of dtype float64, rank 1-4,
laid out channels x height x width (with an optional leading batch dim).
Every operation here is a pure function: inputs are never mutated and
updates return fresh arrays, so concurrent use on distinct tensors is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Tensor = np.ndarray

_MASK64 = (1 << 64) - 1


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


def as_tensor(data, rank: int | None = None) -> Tensor:
    """Coerce ``data`` to a float64 tensor of rank 1-4.

    Args:
        data: array-like input.
        rank: if given, the exact rank the result must have.
    """
    t = np.asarray(data, dtype=np.float64)
    if t.ndim < 1 or t.ndim > 4:
        raise ShapeError(f"tensor rank must be 1-4, got {t.ndim}")
    if t.size == 0 or min(t.shape) < 1:
        raise ShapeError(f"all dims must be >= 1, got shape {t.shape}")
    if rank is not None and t.ndim != rank:
        raise ShapeError(f"expected rank {rank}, got shape {t.shape}")
    return t


@dataclass(frozen=True)
class Conv2DSpec:
    """One 2-D convolution layer: weights (out x in x k x k) plus bias (out).

    Convolution is computed as cross-correlation (no kernel flip), the
    standard deep-learning convention. Typical kernel sizes are 3 and 5;
    1x1 kernels are allowed for channel-mixing layers.
    """

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    weights: Tensor = field(default=None, repr=False)  # type: ignore[assignment]
    bias: Tensor = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("channel counts must be positive")
        if self.kernel_size < 1:
            raise ShapeError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")
        k = self.kernel_size
        expected_w = (self.out_channels, self.in_channels, k, k)
        if self.weights is None or tuple(self.weights.shape) != expected_w:
            got = None if self.weights is None else tuple(self.weights.shape)
            raise ShapeError(f"weights shape {got} inconsistent with spec {expected_w}")
        if self.bias is None or tuple(self.bias.shape) != (self.out_channels,):
            raise ShapeError("bias shape must be (out_channels,)")


def conv2d(x: Tensor, spec: Conv2DSpec) -> Tensor:
    """Cross-correlate ``x`` (CxHxW or BxCxHxW) with ``spec`` and add bias.

    Output spatial dims follow floor((H + 2*padding - k)/stride) + 1.
    """
    batched = x.ndim == 4
    if not batched:
        if x.ndim != 3:
            raise ShapeError(f"conv2d input must be CxHxW or BxCxHxW, got shape {x.shape}")
        x = x[np.newaxis]
    _, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"input has {c} channels, spec expects {spec.in_channels}")
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    h_out = (h + 2 * p - k) // s + 1
    w_out = (w + 2 * p - k) // s + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"kernel {k} does not fit input {h}x{w} with padding {p}")
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::s, ::s]
    out = np.einsum("ockl,bcijkl->boij", spec.weights, win, optimize=True)
    out += spec.bias[np.newaxis, :, np.newaxis, np.newaxis]
    return out if batched else out[0]


def conv2d_backward(x: Tensor, spec: Conv2DSpec, grad_out: Tensor):
    """Gradients of conv2d w.r.t. input, weights, and bias.

    ``x`` and ``grad_out`` may both be rank 3 or both rank 4; weight and
    bias gradients are summed over the batch.
    """
    batched = x.ndim == 4
    if not batched:
        x, grad_out = x[np.newaxis], grad_out[np.newaxis]
    b, c, h, w = x.shape
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    _, _, h_out, w_out = grad_out.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_w = np.einsum("boij,bcijkl->ockl", grad_out, win, optimize=True)
    gxp = np.zeros((b, c, h + 2 * p, w + 2 * p))
    g2 = grad_out.transpose(0, 2, 3, 1)  # b,i,j,o
    for ky in range(k):
        for kx in range(k):
            tap = g2 @ spec.weights[:, :, ky, kx]  # b,i,j,c
            gxp[:, :, ky : ky + h_out * s : s, kx : kx + w_out * s : s] += tap.transpose(0, 3, 1, 2)
    grad_x = gxp[:, :, p : p + h, p : p + w] if p else gxp
    if not batched:
        grad_x = grad_x[0]
    return grad_x, grad_w, grad_b


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Move rxr spatial blocks into channel depth: CxHxW -> (C*r^2)x(H/r)x(W/r).

    Output channel c*r^2 + dy*r + dx at (y, x) holds input channel c at
    (y*r + dy, x*r + dx); a bijective rearrangement, no value created or lost.
    """
    if r < 1:
        raise ValueError(f"scale factor must be >= 1, got {r}")
    c, h, w = _chw(x, "pixel_unshuffle")
    if h % r != 0:
        raise ShapeError(f"height {h} not divisible by r={r}")
    if w % r != 0:
        raise ShapeError(f"width {w} not divisible by r={r}")
    out = x.reshape(c, h // r, r, w // r, r)
    out = out.transpose(0, 2, 4, 1, 3)  # c, dy, dx, y, x
    return out.reshape(c * r * r, h // r, w // r).copy()


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Exact inverse of :func:`pixel_unshuffle`: (C*r^2)xHxW -> Cx(H*r)x(W*r)."""
    if r < 1:
        raise ValueError(f"scale factor must be >= 1, got {r}")
    c, h, w = _chw(x, "pixel_shuffle")
    if c % (r * r) != 0:
        raise ShapeError(f"channel count {c} not divisible by r^2={r * r}")
    c_out = c // (r * r)
    out = x.reshape(c_out, r, r, h, w)
    out = out.transpose(0, 3, 1, 4, 2)  # c, y, dy, x, dx
    return out.reshape(c_out, h * r, w * r).copy()


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """Element-wise max(x, slope*x)."""
    _nonempty(x, "leaky_relu")
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(x: Tensor, grad_out: Tensor, slope: float = 0.2) -> Tensor:
    return grad_out * np.where(x > 0, 1.0, slope)


def nearest_upsample(x: Tensor, factor: int) -> Tensor:
    """Repeat each pixel ``factor`` times along H and W."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    _chw(x, "nearest_upsample")
    return np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)


def nearest_upsample_backward(grad_out: Tensor, factor: int) -> Tensor:
    c, h, w = grad_out.shape
    g = grad_out.reshape(c, h // factor, factor, w // factor, factor)
    return g.sum(axis=(2, 4))


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; H and W must be even."""
    c, h, w = _chw(x, "max_pool2")
    if h % 2 != 0:
        raise ShapeError(f"height {h} must be even for 2x2 pooling")
    if w % 2 != 0:
        raise ShapeError(f"width {w} must be even for 2x2 pooling")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def max_pool2_backward(x: Tensor, grad_out: Tensor) -> Tensor:
    # Gradient routes to the first maximum within each 2x2 window (ties
    # broken by row-major order) so the backward pass is deterministic.
    c, h, w = x.shape
    win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    onehot = np.eye(4)[idx]  # c,h2,w2,4
    g = onehot * grad_out[..., np.newaxis]
    g = g.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4)
    return g.reshape(c, h, w)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over H and W per channel: CxHxW -> C."""
    _chw(x, "global_avg_pool")
    return x.mean(axis=(1, 2))


def global_avg_pool_backward(x_shape: tuple, grad_out: Tensor) -> Tensor:
    c, h, w = x_shape
    return np.broadcast_to(grad_out[:, np.newaxis, np.newaxis] / (h * w), (c, h, w)).copy()


def softmax(logits: Tensor) -> Tensor:
    """Stable softmax over a rank-1 tensor of K >= 2 logits.

    The maximum logit is subtracted before exponentiation, so the result is
    strictly positive and sums to 1 within 1e-12 regardless of logit scale.
    """
    z = as_tensor(logits, rank=1)
    if z.shape[0] < 2:
        raise ShapeError(f"softmax needs K >= 2 logits, got {z.shape[0]}")
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass
class AdamState:
    """First/second moment buffers, one pair per parameter name."""

    m: dict
    v: dict


def init_adam_state(params: dict) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int = 1,
) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state.

    ``t`` is the 1-based step count used for bias correction. Deterministic
    given identical inputs.
    """
    if t < 1:
        raise ValueError(f"step count t must be >= 1, got {t}")
    if set(params) != set(grads):
        raise ShapeError("params and grads must share the same names")
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeError(f"shape mismatch for parameter '{name}'")
        m = beta1 * state.m[name] + (1 - beta1) * g
        v = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(m=new_m, v=new_v)


def power_iteration(matrix: Tensor, iters: int = 50, start: Tensor | None = None):
    """Power-iterate A^T A; returns (sigma estimate, final right vector).

    Starts from the normalized all-ones vector (deterministic) unless
    ``start`` is given, e.g. to warm-start from a persisted vector during
    repeated normalization of the same weight. The zero matrix yields
    sigma 0.0.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    n = a.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n)) if start is None else start / np.linalg.norm(start)
    for _ in range(iters):
        u = a @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0, v
        u /= nu
        w = a.T @ u
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v
        v = w / nw
    return float(np.linalg.norm(a @ v)), v


def power_iteration_sigma(matrix: Tensor, iters: int = 50, start: Tensor | None = None) -> float:
    """Largest-singular-value estimate of an MxN matrix (see power_iteration)."""
    return power_iteration(matrix, iters=iters, start=start)[0]


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 generator: returns (new_state, 64-bit output).

    Fixed here so that seeded shuffles are portable across implementations.
    """
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


def _chw(x: Tensor, op: str) -> tuple:
    if x.ndim != 3:
        raise ShapeError(f"{op} expects a CxHxW tensor, got shape {x.shape}")
    _nonempty(x, op)
    return x.shape


def _nonempty(x: Tensor, op: str):
    if x.size == 0:
        raise ShapeError(f"{op} got an empty tensor")
