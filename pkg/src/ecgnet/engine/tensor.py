"""Reverse-mode tensor core.

A :class:`Tensor` wraps a numpy array. Operations in :mod:`ecgnet.engine.ops`
record their parents and a backward closure; :meth:`Tensor.backward`
walks the graph once in reverse topological order, accumulating
gradients so that tensors used by several consumers receive the sum.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ecgnet.errors import InvalidValue

_precision = {"dtype": np.float64}
_grad = {"enabled": True}


def get_dtype():
    return _precision["dtype"]


def set_precision(bits):
    if bits not in (32, 64):
        raise InvalidValue(f"precision must be 32 or 64, got {bits}")
    _precision["dtype"] = np.float64 if bits == 64 else np.float32


@contextlib.contextmanager
def precision(bits):
    old = _precision["dtype"]
    set_precision(bits)
    try:
        yield
    finally:
        _precision["dtype"] = old


@contextlib.contextmanager
def no_grad():
    """Build no backward graph inside the block (inference only)."""
    old = _grad["enabled"]
    _grad["enabled"] = False
    try:
        yield
    finally:
        _grad["enabled"] = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or get_dtype())
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @classmethod
    def from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out._parents = tuple(parents)
        out.requires_grad = _grad["enabled"] and any(p.requires_grad for p in out._parents)
        if not out.requires_grad:
            out._parents = ()
        out._backward = backward if out.requires_grad else None
        return out

    @property
    def shape(self):
        return self.data.shape

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.data.dtype})"

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Backpropagate from this tensor (default seed: ones)."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, self.data.dtype)
        self.accumulate(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """A trainable tensor carrying its Adam moment estimates."""

    __slots__ = ("adam_m", "adam_v", "step_count")

    def __init__(self, data, name=None, dtype=None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)
        self.reset_optimizer()

    def reset_optimizer(self):
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0
