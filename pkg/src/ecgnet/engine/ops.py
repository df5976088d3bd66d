"""Differentiable operations on channels-last ``[batch, length, channels]`` tensors."""

from __future__ import annotations

import numpy as np

from ecgnet.engine.tensor import Tensor
from ecgnet.errors import InvalidValue, PoolLargerThanInput, ShapeMismatch

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b):
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return Tensor.from_op(a.data + b.data, (a, b), backward)


def scale(a, factor):
    a = _t(a)

    def backward(g):
        a.accumulate(g * factor)

    return Tensor.from_op(a.data * factor, (a,), backward)


def relu(x):
    x = _t(x)
    mask = x.data > 0

    def backward(g):
        x.accumulate(g * mask)

    return Tensor.from_op(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), backward)


def conv1d(x, kernels, bias):
    """Stride-1 cross-correlation with zero 'same' padding.

    ``kernels`` is ``[k, ch_in, ch_out]``. Even ``k`` puts the extra pad
    sample on the right.
    """
    x, kernels, bias = _t(x), _t(kernels), _t(bias)
    if x.data.ndim != 3 or kernels.data.ndim != 3:
        raise ShapeMismatch("conv1d expects [b, L, c] input and [k, c_in, c_out] kernels")
    b, length, c_in = x.shape
    k, k_in, c_out = kernels.shape
    if k_in != c_in or bias.shape != (c_out,) or k < 1:
        raise ShapeMismatch(f"conv1d: input {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    left = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (left, k - 1 - left), (0, 0)))
    w = kernels.data
    out = np.empty((b, length, c_out), dtype=np.result_type(x.data, w))
    out[...] = bias.data
    for j in range(k):
        out += xp[:, j : j + length, :] @ w[j]

    def backward(g):
        if kernels.requires_grad:
            gw = np.empty_like(w)
            for j in range(k):
                gw[j] = np.tensordot(xp[:, j : j + length, :], g, axes=([0, 1], [0, 1]))
            kernels.accumulate(gw)
        if bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 1)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j : j + length, :] += g @ w[j].T
            x.accumulate(gxp[:, left : left + length, :])

    return Tensor.from_op(out, (x, kernels, bias), backward)


def batch_norm1d(x, gamma, beta, running_mean, running_var, mode="train",
                 momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel normalization over the batch and length axes.

    In train mode the batch statistics are used and ``running_mean`` /
    ``running_var`` (numpy arrays) are updated in place as
    ``momentum * running + (1 - momentum) * batch``.
    """
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"batch_norm1d: {x.shape} with gamma {gamma.shape}")
    if mode == "train":
        m = x.shape[0] * x.shape[1]
        mu = x.data.mean(axis=(0, 1))
        centered = x.data - mu
        var = (centered * centered).mean(axis=(0, 1))
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        centered = x.data - running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = gamma.data * xhat + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 1)))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 1)))
        if x.requires_grad:
            gx_hat = g * gamma.data
            if mode == "train":
                gx = (inv / m) * (m * gx_hat - gx_hat.sum(axis=(0, 1))
                                  - xhat * (gx_hat * xhat).sum(axis=(0, 1)))
            else:
                gx = gx_hat * inv
            x.accumulate(gx)

    return Tensor.from_op(out.astype(x.data.dtype, copy=False), (x, gamma, beta), backward)


def concat_channels(*tensors):
    tensors = [_t(t) for t in tensors]
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeMismatch(f"concat_channels: {tensors[0].shape} vs {t.shape}")
    widths = [t.shape[-1] for t in tensors]
    bounds = np.cumsum([0] + widths)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                t.accumulate(g[..., lo:hi])

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=-1), tensors, backward)


def avg_pool1d(x, pool_size, stride):
    x = _t(x)
    length = x.shape[1]
    if pool_size > length:
        raise PoolLargerThanInput(f"pool {pool_size} larger than length {length}")
    n_out = (length - pool_size) // stride + 1
    span = stride * (n_out - 1) + 1
    out = sum(x.data[:, j : j + span : stride, :] for j in range(pool_size)) / pool_size

    def backward(g):
        gx = np.zeros_like(x.data)
        gp = g / pool_size
        for j in range(pool_size):
            gx[:, j : j + span : stride, :] += gp
        x.accumulate(gx)

    return Tensor.from_op(out, (x,), backward)


def mean_time(x):
    """Average over the length axis: ``[b, L, c] -> [b, c]``."""
    x = _t(x)
    length = x.shape[1]

    def backward(g):
        x.accumulate(np.broadcast_to(g[:, None, :] / length, x.shape))

    return Tensor.from_op(x.data.mean(axis=1), (x,), backward)


def dense(x, weight, bias):
    x, weight, bias = _t(x), _t(weight), _t(bias)
    if x.data.ndim != 2 or weight.shape[0] != x.shape[1] or bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"dense: input {x.shape}, weight {weight.shape}, bias {bias.shape}")

    def backward(g):
        if weight.requires_grad:
            weight.accumulate(x.data.T @ g)
        if bias.requires_grad:
            bias.accumulate(g.sum(axis=0))
        if x.requires_grad:
            x.accumulate(g @ weight.data.T)

    return Tensor.from_op(x.data @ weight.data + bias.data, (x, weight, bias), backward)


def _softmax(z, axis=-1):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x):
    x = _t(x)
    p = _softmax(x.data)

    def backward(g):
        x.accumulate(p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return Tensor.from_op(p, (x,), backward)


def softmax_cross_entropy(logits, targets):
    """Stable softmax plus mean cross-entropy against one-hot targets.

    Returns ``(probs, loss)`` where ``probs`` is a plain array.
    """
    logits = _t(logits)
    t = np.asarray(targets, dtype=logits.data.dtype)
    if t.shape != logits.shape:
        raise ShapeMismatch(f"targets {t.shape} vs logits {logits.shape}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(log_p)
    b = logits.shape[0]
    loss = -(t * log_p).sum() / b

    def backward(g):
        logits.accumulate(g * (p - t) / b)

    return p, Tensor.from_op(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


def nll_loss(probs, targets):
    """Mean negative log-probability of the target class for probability rows."""
    probs = _t(probs)
    t = np.asarray(targets, dtype=probs.data.dtype)
    b = probs.shape[0]
    p_t = np.maximum((probs.data * t).sum(axis=-1), np.finfo(probs.data.dtype).tiny)
    loss = -np.log(p_t).sum() / b

    def backward(g):
        probs.accumulate(-g * t / (b * p_t[:, None]))

    return Tensor.from_op(np.asarray(loss, dtype=probs.data.dtype), (probs,), backward)


def dropout(x, rate=0.25, mode="train", rng=None):
    """Inverted dropout; identity in infer mode or at rate 0."""
    x = _t(x)
    if not 0 <= rate < 1:
        raise InvalidValue(f"dropout rate must be in [0, 1), got {rate}")
    if mode != "train" or rate == 0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(x.data.dtype)

    def backward(g):
        x.accumulate(g * keep)

    return Tensor.from_op(x.data * keep, (x,), backward)


def attention_pool(states, score_weight, score_bias):
    """Softmax-weighted sum of timestep states.

    Scores are ``e_t = states[:, t] . w + b``; returns ``(pooled, alpha)``
    with ``alpha`` a plain ``[b, T]`` array.
    """
    states, score_weight, score_bias = _t(states), _t(score_weight), _t(score_bias)
    h = states.data
    if score_weight.shape != (h.shape[-1],):
        raise ShapeMismatch(f"score weights {score_weight.shape} for states {h.shape}")
    e = h @ score_weight.data + score_bias.data.reshape(())
    alpha = _softmax(e, axis=1)
    out = np.einsum("bt,btu->bu", alpha, h)

    def backward(g):
        g_alpha = np.einsum("bu,btu->bt", g, h)
        g_e = alpha * (g_alpha - (alpha * g_alpha).sum(axis=1, keepdims=True))
        if score_weight.requires_grad:
            score_weight.accumulate(np.einsum("bt,btu->u", g_e, h))
        if score_bias.requires_grad:
            score_bias.accumulate(np.reshape(g_e.sum(), score_bias.shape))
        if states.requires_grad:
            states.accumulate(alpha[:, :, None] * g[:, None, :] + g_e[:, :, None] * score_weight.data)

    return Tensor.from_op(out, (states, score_weight, score_bias), backward), alpha


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_cell(x, h, w_in, w_rec, bias):
    """One GRU step on plain arrays; returns ``(h_next, z, r, cand)``.

    Gate columns are ordered update | reset | candidate, and the reset
    gate multiplies the state before the recurrent candidate product.
    """
    u = h.shape[-1]
    xa = x @ w_in + bias
    z = _sigmoid(xa[:, :u] + h @ w_rec[:, :u])
    r = _sigmoid(xa[:, u : 2 * u] + h @ w_rec[:, u : 2 * u])
    cand = np.tanh(xa[:, 2 * u :] + (r * h) @ w_rec[:, 2 * u :])
    return (1 - z) * h + z * cand, z, r, cand


def gru_forward(inputs, w_in, w_rec, bias, h0=None):
    """Run a GRU over ``[b, T, d]`` inputs and return all states ``[b, T, units]``.

    ``w_in`` is ``[d, 3u]``, ``w_rec`` is ``[u, 3u]`` and ``bias`` is
    ``[3u]``; backward is full backpropagation through time.
    """
    inputs, w_in, w_rec, bias = _t(inputs), _t(w_in), _t(w_rec), _t(bias)
    b, steps, d = inputs.shape
    u = w_rec.shape[0]
    if steps < 1 or w_in.shape != (d, 3 * u) or w_rec.shape != (u, 3 * u) or bias.shape != (3 * u,):
        raise ShapeMismatch(
            f"gru: inputs {inputs.shape}, w_in {w_in.shape}, w_rec {w_rec.shape}, bias {bias.shape}"
        )
    h0 = _t(np.zeros((b, u), dtype=inputs.data.dtype)) if h0 is None else _t(h0)
    if h0.shape != (b, u):
        raise ShapeMismatch(f"gru: h0 {h0.shape}, expected {(b, u)}")

    dtype = np.result_type(inputs.data, w_in.data)
    states = np.empty((b, steps, u), dtype=dtype)
    zs, rs, cands = (np.empty_like(states) for _ in range(3))
    h = h0.data
    for t in range(steps):
        h, zs[:, t], rs[:, t], cands[:, t] = gru_cell(inputs.data[:, t], h, w_in.data, w_rec.data, bias.data)
        states[:, t] = h

    def backward(g):
        W, U = w_in.data, w_rec.data
        gW = np.zeros_like(W)
        gU = np.zeros_like(U)
        gb = np.zeros_like(bias.data)
        gx = np.zeros_like(inputs.data) if inputs.requires_grad else None
        dh_next = np.zeros((b, u), dtype=dtype)
        for t in reversed(range(steps)):
            h_prev = states[:, t - 1] if t > 0 else h0.data
            z, r, cand = zs[:, t], rs[:, t], cands[:, t]
            dh = g[:, t] + dh_next
            da_h = dh * z * (1 - cand * cand)
            da_z = dh * (cand - h_prev) * z * (1 - z)
            d_rh = da_h @ U[:, 2 * u :].T
            da_r = d_rh * h_prev * r * (1 - r)
            da = np.concatenate([da_z, da_r, da_h], axis=1)
            x_t = inputs.data[:, t]
            gW += x_t.T @ da
            gb += da.sum(axis=0)
            gU[:, :u] += h_prev.T @ da_z
            gU[:, u : 2 * u] += h_prev.T @ da_r
            gU[:, 2 * u :] += (r * h_prev).T @ da_h
            dh_next = dh * (1 - z) + d_rh * r + da_z @ U[:, :u].T + da_r @ U[:, u : 2 * u].T
            if gx is not None:
                gx[:, t] = da @ W.T
        if w_in.requires_grad:
            w_in.accumulate(gW)
        if w_rec.requires_grad:
            w_rec.accumulate(gU)
        if bias.requires_grad:
            bias.accumulate(gb)
        if gx is not None:
            inputs.accumulate(gx)
        if h0.requires_grad:
            h0.accumulate(dh_next)

    return Tensor.from_op(states, (inputs, w_in, w_rec, bias, h0), backward)
