"""Forward and backward passes for the temporal layers.

Tensors are time-major, shape (T, C). Each ``*_forward`` returns the output
and a cache; the matching ``*_backward`` takes the upstream gradient and the
cache and returns the input gradient (plus parameter gradients for conv1d).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


def same_padding(width: int, dilation: int) -> tuple[int, int]:
    span = (width - 1) * dilation
    left = span // 2
    return left, span - left


def conv1d_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, dilation: int = 1):
    """Same-length temporal convolution with zero padding.

    x: (T, Cin), W: (width, Cin, Cout), b: (Cout,). Output row t sums
    W[k] . x[t + k*dilation - left] over taps k.
    """
    if W.ndim != 3 or x.ndim != 2 or x.shape[1] != W.shape[1] or b.shape != (W.shape[2],):
        raise ShapeMismatch(f"conv1d: input {x.shape}, kernel {W.shape}, bias {b.shape}")
    width, cin, cout = W.shape
    if width < 1 or dilation < 1:
        raise ShapeMismatch("conv1d: width and dilation must be >= 1")
    T = x.shape[0]
    if width == 1:
        return x @ W[0] + b, (x, None, W, dilation)
    left, right = same_padding(width, dilation)
    xp = np.pad(x, ((left, right), (0, 0)))
    # (T, Cin, span) -> taps every `dilation` -> (T, width, Cin)
    windows = sliding_window_view(xp, (width - 1) * dilation + 1, axis=0)[:, :, ::dilation]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(T, width * cin)
    y = cols @ W.reshape(width * cin, cout) + b
    return y, (x, cols, W, dilation)


def conv1d_backward(dy: np.ndarray, cache):
    x, cols, W, dilation = cache
    width, cin, cout = W.shape
    db = dy.sum(axis=0)
    if width == 1:
        return dy @ W[0].T, (x.T @ dy)[None], db
    T = x.shape[0]
    dW = (cols.T @ dy).reshape(width, cin, cout)
    dcols = (dy @ W.reshape(width * cin, cout).T).reshape(T, width, cin)
    left, right = same_padding(width, dilation)
    dxp = np.zeros((T + left + right, cin))
    for k in range(width):
        dxp[k * dilation : k * dilation + T] += dcols[:, k, :]
    return dxp[left : left + T], dW, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x


def relu_backward(dy: np.ndarray, cache):
    return dy * (cache > 0)


def maxpool2_forward(x: np.ndarray):
    """Non-overlapping max over pairs of frames; T must be even. Ties go to the earlier frame."""
    T, C = x.shape
    if T % 2:
        raise ShapeMismatch(f"max-pool needs an even length, got {T}")
    pairs = x.reshape(T // 2, 2, C)
    take_second = pairs[:, 1, :] > pairs[:, 0, :]
    return np.where(take_second, pairs[:, 1, :], pairs[:, 0, :]), take_second


def maxpool2_backward(dy: np.ndarray, cache):
    take_second = cache
    dx = np.zeros((dy.shape[0], 2, dy.shape[1]))
    dx[:, 0, :] = np.where(take_second, 0.0, dy)
    dx[:, 1, :] = np.where(take_second, dy, 0.0)
    return dx.reshape(-1, dy.shape[1])


def upsample2_forward(x: np.ndarray):
    return np.repeat(x, 2, axis=0), None


def upsample2_backward(dy: np.ndarray, cache=None):
    return dy[0::2] + dy[1::2]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gated_forward(z: np.ndarray):
    """tanh(filter) * sigmoid(gate), with the filter half first along channels."""
    half = z.shape[1] // 2
    t = np.tanh(z[:, :half])
    s = sigmoid(z[:, half:])
    return t * s, (t, s)


def gated_backward(dy: np.ndarray, cache):
    t, s = cache
    return np.concatenate([dy * s * (1.0 - t * t), dy * t * s * (1.0 - s)], axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None):
    """Mean cross-entropy over unmasked frames and its gradient w.r.t. the logits.

    Returns (loss, dlogits, probs). With one frame the gradient is p - onehot.
    """
    T = logits.shape[0]
    mask = np.ones(T, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise ShapeMismatch("no unmasked frames in loss")
    probs = softmax(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.flatnonzero(mask)
    loss = -log_probs[rows, labels[rows]].sum() / n
    dlogits = probs.copy()
    dlogits[np.arange(T), labels] -= 1.0
    dlogits *= mask[:, None] / n
    return float(loss), dlogits, probs
