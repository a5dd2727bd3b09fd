"""Numeric kernels with analytic gradients: dilated temporal convolution,
periodic padding, max-pool/upsample, time-distributed dense, softmax,
spatial dropout, and Adam.

Everything works on channels x frames matrices and preserves the input dtype,
so gradient checking can run the whole stack in float64 while training stays
in float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


def periodic_pad(x: np.ndarray, p: int) -> np.ndarray:
    """Pad the channel axis cyclically: last p rows on top, first p rows below.

    Exploits pitch-class circularity of chroma inputs; zero-padding would
    break the wrap-around between B and C.
    """
    c = x.shape[0]
    if p < 0 or (p > 0 and p >= c):
        raise ValueError(f"pad size {p} must satisfy 0 <= p < {c}")
    if p == 0:
        return x.copy()
    return np.concatenate([x[-p:], x, x[:p]], axis=0)


def periodic_pad_backward(grad_out: np.ndarray, p: int) -> np.ndarray:
    """Route each pad row's gradient back to its source row."""
    if p == 0:
        return grad_out.copy()
    c = grad_out.shape[0] - 2 * p
    grad = grad_out[p : p + c].copy()
    grad[-p:] += grad_out[:p]
    grad[:p] += grad_out[c + p :]
    return grad


def _im2col(x: np.ndarray, d: int, dilation: int) -> np.ndarray:
    """Stack the d dilated taps of each frame: (C_in, T) -> (C_in * d, T)."""
    c_in, t = x.shape
    pad = dilation * (d - 1) // 2
    xp = np.zeros((c_in, t + 2 * pad), dtype=x.dtype)
    xp[:, pad : pad + t] = x
    taps = np.lib.stride_tricks.as_strided(
        xp, (c_in, d, t),
        (xp.strides[0], dilation * xp.strides[1], xp.strides[1]),
    )
    return np.ascontiguousarray(taps).reshape(c_in * d, t)


def dilated_conv1d(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    dilation: int = 1,
    return_cols: bool = False,
):
    """Temporal convolution with gaps of ``dilation`` between taps.

    x: (C_in, T); w: (C_out, C_in, d) with odd d; "same" output length via
    dilation*(d-1)/2 zeros each side. out[f, t] = b[f] +
    sum_{c,j} w[f,c,j] * x[c, t + dilation*(j - (d-1)/2)].

    Internally one GEMM on an im2col matrix; pass ``return_cols=True`` to get
    that matrix back for reuse in the backward pass.
    """
    c_out, c_in, d = w.shape
    if d % 2 != 1:
        raise ValueError("kernel size must be odd")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, filters expect {c_in}")
    cols = _im2col(x, d, dilation)
    out = w.reshape(c_out, c_in * d) @ cols
    out += b[:, None]
    if return_cols:
        return out, cols
    return out


def dilated_conv1d_backward(
    x: np.ndarray,
    w: np.ndarray,
    grad_out: np.ndarray,
    dilation: int = 1,
    cols: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients w.r.t. (x, w, b) for dilated_conv1d."""
    c_out, c_in, d = w.shape
    t = x.shape[1]
    pad = dilation * (d - 1) // 2
    if cols is None:
        cols = _im2col(x, d, dilation)
    grad_b = grad_out.sum(axis=1)
    grad_w = (grad_out @ cols.T).reshape(c_out, c_in, d)
    grad_cols = (w.reshape(c_out, c_in * d).T @ grad_out).reshape(c_in, d, t)
    grad_xp = np.zeros((c_in, t + 2 * pad), dtype=x.dtype)
    for j in range(d):
        off = j * dilation
        grad_xp[:, off : off + t] += grad_cols[:, j]
    return grad_xp[:, pad : pad + t], grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def temporal_maxpool(x: np.ndarray, pool: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Halve the frame axis by pairwise max; returns (pooled, argmax) where
    argmax records which element of each window won, for backprop routing."""
    c, t = x.shape
    if t % pool != 0:
        raise ValueError(f"frame count {t} not divisible by pool size {pool}")
    windows = x.reshape(c, t // pool, pool)
    idx = windows.argmax(axis=2)
    return windows.max(axis=2), idx


def temporal_maxpool_backward(
    grad_out: np.ndarray, idx: np.ndarray, pool: int = 2
) -> np.ndarray:
    c, t_out = grad_out.shape
    grad = np.zeros((c, t_out, pool), dtype=grad_out.dtype)
    rows = np.arange(c)[:, None]
    cols = np.arange(t_out)[None, :]
    grad[rows, cols, idx] = grad_out
    return grad.reshape(c, t_out * pool)


def temporal_upsample(x: np.ndarray, factor: int = 2) -> np.ndarray:
    """Repeat each frame ``factor`` times."""
    return np.repeat(x, factor, axis=1)


def temporal_upsample_backward(grad_out: np.ndarray, factor: int = 2) -> np.ndarray:
    c, t = grad_out.shape
    return grad_out.reshape(c, t // factor, factor).sum(axis=2)


def dense_timedistributed(x: np.ndarray, u: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-frame linear map: (C_out, C_in) @ (C_in, T) + bias."""
    return u @ x + b[:, None]


def dense_timedistributed_backward(
    x: np.ndarray, u: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return u.T @ grad_out, grad_out @ x.T, grad_out.sum(axis=1)


def softmax_frames(z: np.ndarray) -> np.ndarray:
    """Column-wise softmax with max subtraction for overflow safety."""
    shifted = z - z.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def softmax_frames_backward(p: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    inner = (grad_out * p).sum(axis=0, keepdims=True)
    return p * (grad_out - inner)


def spatial_dropout(
    x: np.ndarray,
    rate: float,
    rng: np.random.Generator | None = None,
    training: bool = True,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Zero whole channels with probability ``rate``, scaling survivors by
    1/(1-rate). Returns (output, per-channel scale) where scale is None in
    eval mode (identity)."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an RNG")
    keep = rng.random(x.shape[0]) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    return x * scale[:, None], scale


def spatial_dropout_backward(
    grad_out: np.ndarray, scale: np.ndarray | None
) -> np.ndarray:
    if scale is None:
        return grad_out
    return grad_out * scale[:, None]


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for a named parameter set."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, learning_rate: float = 1e-3) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        for name, value in params.items():
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        return state


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One in-place Adam update over every parameter present in the state."""
    for name, g in grads.items():
        if name in state.m and not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name!r}")
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    for name in state.m:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / bias1
        v_hat = v / bias2
        params[name] -= (
            state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        ).astype(params[name].dtype, copy=False)
    return params, state


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator,
               dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
