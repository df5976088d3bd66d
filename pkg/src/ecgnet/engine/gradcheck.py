import numpy as np

from ecgnet.engine.tensor import Tensor


def numeric_gradient(fn, tensor, coords=None):
    """Central-difference gradient of scalar ``fn()`` w.r.t. ``tensor.data``.

    The step is ``1e-5 * max(1, |x|)`` per coordinate. Only ``coords``
    (flat indices) are perturbed when given; other entries are NaN.
    """
    flat = tensor.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if coords is None else coords
    for i in idx:
        orig = flat[i]
        h = 1e-5 * max(1.0, abs(float(orig)))
        flat[i] = orig + h
        f_plus = float(fn().data)
        flat[i] = orig - h
        f_minus = float(fn().data)
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2 * h)
    return out.reshape(tensor.shape)


def gradient_check(fn, tensors, max_coords=None, seed=0):
    """Largest ``|analytic - numeric| / max(1, |numeric|)`` over ``tensors``.

    ``fn`` must rebuild the graph from ``tensors`` on every call and
    return a scalar :class:`Tensor`. With ``max_coords`` a seeded random
    subset of coordinates per tensor is checked.
    """
    tensors = list(tensors)
    for t in tensors:
        t.zero_grad()
    fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, a in zip(tensors, analytic):
        coords = None
        if max_coords is not None and t.data.size > max_coords:
            coords = rng.choice(t.data.size, size=max_coords, replace=False)
        num = numeric_gradient(fn, t, coords)
        mask = ~np.isnan(num)
        err = np.abs(a[mask] - num[mask]) / np.maximum(1.0, np.abs(num[mask]))
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


def as_leaf(array):
    """A fresh gradient-tracking leaf holding a copy of ``array``."""
    return Tensor(np.array(array, copy=True), requires_grad=True)
