import numpy as np

from ecgnet.errors import ShapeMismatch

DEFAULT_LR = 5e-4


def adam_step(params, grads=None, lr=DEFAULT_LR, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place.

    ``grads`` defaults to each parameter's accumulated ``.grad``;
    parameters without a gradient are left untouched.
    """
    params = list(params)
    if grads is None:
        grads = [p.grad for p in params]
    grads = list(grads)
    if len(grads) != len(params):
        raise ShapeMismatch("adam_step: one gradient per parameter")
    for p, g in zip(params, grads):
        if g is None:
            continue
        g = np.asarray(g, dtype=p.data.dtype)
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"adam_step: grad {g.shape} for parameter {p.data.shape}")
        p.step_count += 1
        p.adam_m *= beta1
        p.adam_m += (1 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1 - beta2) * (g * g)
        m_hat = p.adam_m / (1 - beta1 ** p.step_count)
        v_hat = p.adam_v / (1 - beta2 ** p.step_count)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)
