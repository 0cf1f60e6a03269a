'''
Differentiable operations.

Every op computes its forward value with numpy and returns a tensor whose
backward closure maps the upstream gradient to parent gradients. Shapes
follow the channels-first convention for convolutions, (N, H, C, L) with
H the head (group) axis, and batch-first (N, L, D) for sequences.
'''
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from precursormil._exceptions import ShapeMismatch
from precursormil._types import FloatArray, IntArray
from precursormil.engine._tensor import Tensor, make_result

_BCE_CLIP = 1e-12


def _unbroadcast(grad: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise and shape ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), grad_fn)


def sum_(a: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return make_result(np.asarray(a.data.sum(axis=axis)), (a,), grad_fn)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g.reshape(a.shape),)

    return make_result(a.data.reshape(shape), (a,), grad_fn)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g.transpose(inverse),)

    return make_result(a.data.transpose(axes), (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g * mask,)

    return make_result(np.where(mask, a.data, 0.0), (a,), grad_fn)


def sigmoid_array(x: FloatArray) -> FloatArray:
    # tanh form is overflow free and gives exactly 0.5 at 0
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    s = sigmoid_array(a.data)

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g * s * (1.0 - s),)

    return make_result(s, (a,), grad_fn)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g * (1.0 - t * t),)

    return make_result(t, (a,), grad_fn)


# -- layers ------------------------------------------------------------------


def same_padding(kernel_size: int) -> tuple[int, int]:
    left = (kernel_size - 1) // 2
    return left, kernel_size - 1 - left


def conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    '''
    Grouped 1-D convolution, stride 1, same padding.

    Parameters
    ----------
    x : Tensor
        Input of shape (N, H, C_in, L).
    weight : Tensor
        Kernels of shape (H, C_out, C_in, k); head h only sees group h.
    bias : Tensor
        Offsets of shape (H, C_out).

    Returns
    -------
    Tensor
        Output of shape (N, H, C_out, L).
    '''
    heads, c_out, c_in, k = weight.shape
    if x.ndim != 4 or x.shape[1] != heads or x.shape[2] != c_in:
        raise ShapeMismatch('conv1d input', ('N', heads, c_in, 'L'), x.shape)
    n, _, _, length = x.shape
    left, right = same_padding(k)

    padded = np.pad(x.data, ((0, 0), (0, 0), (0, 0), (left, right)))
    windows = sliding_window_view(padded, k, axis=3)  # (N, H, C_in, L, k)
    cols = windows.transpose(1, 0, 3, 2, 4).reshape(heads, n * length, c_in * k)
    kernel = weight.data.reshape(heads, c_out, c_in * k).transpose(0, 2, 1)
    out = np.matmul(cols, kernel).reshape(heads, n, length, c_out).transpose(1, 0, 3, 2)
    out = out + bias.data[None, :, :, None]

    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        g_cols = g.transpose(1, 0, 3, 2).reshape(heads, n * length, c_out)
        d_kernel = np.matmul(cols.transpose(0, 2, 1), g_cols)
        d_weight = d_kernel.transpose(0, 2, 1).reshape(heads, c_out, c_in, k)
        d_bias = g.sum(axis=(0, 3))

        d_windows = np.matmul(g_cols, kernel.transpose(0, 2, 1))
        d_windows = d_windows.reshape(heads, n, length, c_in, k).transpose(1, 0, 3, 2, 4)
        d_padded = np.zeros_like(padded)
        for j in range(k):
            d_padded[..., j:j + length] += d_windows[..., j]
        return d_padded[..., left:left + length], d_weight, d_bias

    return make_result(np.ascontiguousarray(out), (x, weight, bias), grad_fn)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: FloatArray,
    running_var: FloatArray,
    *,
    training: bool,
    momentum: float,
    eps: float,
) -> Tensor:
    '''
    Per (head, channel) normalization of an (N, H, C, L) tensor.

    Training mode normalizes with the biased batch statistics over N and L
    and folds the unbiased variance into the running estimates in place.
    Evaluation mode uses the running estimates only.
    '''
    if x.ndim != 4 or x.shape[1:3] != gamma.shape:
        raise ShapeMismatch('batch_norm input', ('N', *gamma.shape, 'L'), x.shape)
    axes = (0, 3)
    count = x.shape[0] * x.shape[3]
    scale = gamma.data[None, :, :, None]

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        unbiased = var * count / (count - 1) if count > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean[None, :, :, None]) * inv_std[None, :, :, None]
    out = scale * x_hat + beta.data[None, :, :, None]

    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        d_gamma = (g * x_hat).sum(axis=axes)
        d_beta = g.sum(axis=axes)
        d_hat = g * scale
        if training:
            d_x = (
                count * d_hat
                - d_hat.sum(axis=axes, keepdims=True)
                - x_hat * (d_hat * x_hat).sum(axis=axes, keepdims=True)
            ) * (inv_std[None, :, :, None] / count)
        else:
            d_x = d_hat * inv_std[None, :, :, None]
        return d_x, d_gamma, d_beta

    return make_result(out, (x, gamma, beta), grad_fn)


def gru(
    x: Tensor,
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
) -> Tensor:
    '''
    Gated recurrent unit over a batch-first sequence, zero initial state.

    Gate blocks are stacked reset, update, candidate along the last axis of
    the weights:

        r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
        z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h

    Parameters
    ----------
    x : Tensor
        Sequence of shape (N, L, D).
    w_ih, w_hh : Tensor
        Shapes (D, 3H) and (H, 3H).
    b_ih, b_hh : Tensor
        Shapes (3H,).

    Returns
    -------
    Tensor
        Hidden states of shape (N, L, H).
    '''
    hidden = w_hh.shape[0]
    if x.ndim != 3 or x.shape[2] != w_ih.shape[0]:
        raise ShapeMismatch('gru input', ('N', 'L', w_ih.shape[0]), x.shape)
    n, length, _ = x.shape
    H = hidden

    gi = x.data @ w_ih.data + b_ih.data  # (N, L, 3H)
    states = np.zeros((n, length + 1, H))
    r_all = np.empty((n, length, H))
    z_all = np.empty((n, length, H))
    c_all = np.empty((n, length, H))
    hn_all = np.empty((n, length, H))

    for t in range(length):
        h = states[:, t]
        gh = h @ w_hh.data + b_hh.data
        r = sigmoid_array(gi[:, t, :H] + gh[:, :H])
        z = sigmoid_array(gi[:, t, H:2 * H] + gh[:, H:2 * H])
        hn = gh[:, 2 * H:]
        c = np.tanh(gi[:, t, 2 * H:] + r * hn)
        states[:, t + 1] = (1.0 - z) * c + z * h
        r_all[:, t], z_all[:, t], c_all[:, t], hn_all[:, t] = r, z, c, hn

    def grad_fn(g: FloatArray) -> tuple[FloatArray, ...]:
        d_gi = np.empty((n, length, 3 * H))
        d_w_hh = np.zeros_like(w_hh.data)
        d_b_hh = np.zeros_like(b_hh.data)
        d_next = np.zeros((n, H))
        for t in reversed(range(length)):
            h = states[:, t]
            r, z, c, hn = r_all[:, t], z_all[:, t], c_all[:, t], hn_all[:, t]
            d_h = g[:, t] + d_next
            d_c = d_h * (1.0 - z) * (1.0 - c * c)
            d_z = d_h * (h - c) * z * (1.0 - z)
            d_r = d_c * hn * r * (1.0 - r)
            d_gi[:, t, :H] = d_r
            d_gi[:, t, H:2 * H] = d_z
            d_gi[:, t, 2 * H:] = d_c
            d_gh = np.concatenate((d_r, d_z, d_c * r), axis=1)
            d_w_hh += h.T @ d_gh
            d_b_hh += d_gh.sum(axis=0)
            d_next = d_h * z + d_gh @ w_hh.data.T

        flat_x = x.data.reshape(n * length, -1)
        flat_gi = d_gi.reshape(n * length, 3 * H)
        d_x = d_gi @ w_ih.data.T
        d_w_ih = flat_x.T @ flat_gi
        d_b_ih = flat_gi.sum(axis=0)
        return d_x, d_w_ih, d_w_hh, d_b_ih, d_b_hh

    return make_result(states[:, 1:].copy(), (x, w_ih, w_hh, b_ih, b_hh), grad_fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    '''
    Affine map on the last axis; time distributed for (N, L, D) input.
    '''
    d_in, d_out = weight.shape
    if x.shape[-1] != d_in:
        raise ShapeMismatch('linear input', ('...', d_in), x.shape)

    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        flat_g = g.reshape(-1, d_out)
        return (
            g @ weight.data.T,
            x.data.reshape(-1, d_in).T @ flat_g,
            flat_g.sum(axis=0),
        )

    return make_result(x.data @ weight.data + bias.data, (x, weight, bias), grad_fn)


def max_over_time(x: Tensor) -> tuple[Tensor, IntArray]:
    '''
    Max pool over axis 1; the gradient goes to the first maximal index.

    Returns the pooled tensor and the argmax indices.
    '''
    index = np.argmax(x.data, axis=1)
    expanded = np.expand_dims(index, 1)
    out = np.take_along_axis(x.data, expanded, axis=1).squeeze(1)

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        d_x = np.zeros_like(x.data)
        np.put_along_axis(d_x, expanded, np.expand_dims(g, 1), axis=1)
        return (d_x,)

    return make_result(out, (x,), grad_fn), index


def binary_cross_entropy(prob: Tensor, target: FloatArray) -> Tensor:
    '''
    Cross-entropy averaged over the batch axis and summed over classes.
    '''
    target = np.asarray(target, dtype=np.float64)
    if target.shape != prob.shape:
        raise ShapeMismatch('binary_cross_entropy target', prob.shape, target.shape)
    n = prob.shape[0]
    clipped = np.clip(prob.data, _BCE_CLIP, 1.0 - _BCE_CLIP)
    inside = (prob.data > _BCE_CLIP) & (prob.data < 1.0 - _BCE_CLIP)
    terms = target * np.log(clipped) + (1.0 - target) * np.log1p(-clipped)
    loss = -terms.sum() / n

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        d_p = (-target / clipped + (1.0 - target) / (1.0 - clipped)) / n
        return (g * d_p * inside,)

    return make_result(np.asarray(loss), (prob,), grad_fn)
