# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Dense tensor engine with reverse-mode automatic differentiation. Tensors
wrap 64-bit numpy arrays. Every operation that involves at least one tensor
that requires a gradient records its inputs and a backward function. Calling
backward() on a scalar result propagates gradients to all leaf tensors that
require them.

Graph construction can be switched off for inference using the no_grad()
context manager. The switch is thread-local, i.e., read-only inference with
frozen parameters can run from multiple threads.
"""

import contextlib
import threading

import numpy as np

from bottlelab.error import BottlelabError, DimensionError, UnknownTokenError


"""Floating point type for all tensor data."""
DTYPE = np.float64

"""Additive attention bias for masked positions."""
MASK_VALUE = -1e9


_local = threading.local()


def is_grad_enabled():
    """Test whether operations currently record the computation graph.

    Returns
    -------
    bool
    """
    return getattr(_local, 'grad_enabled', True)


@contextlib.contextmanager
def no_grad():
    """Context manager that disables graph construction for all tensor
    operations in the current thread.
    """
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


class FlopCounter(object):
    """Counter for the number of floating point operations of matrix
    products. A multiply-add counts as two operations.
    """
    def __init__(self):
        """Initialize the counter."""
        self.matmul = 0

    def add(self, flops):
        """Increment the counter.

        Parameters
        ----------
        flops: int
            Number of operations.
        """
        self.matmul += int(flops)


@contextlib.contextmanager
def count_flops():
    """Context manager that yields a FlopCounter. All matrix products that
    are evaluated in the current thread while the context is active are
    recorded in the counter.
    """
    counters = getattr(_local, 'counters', None)
    if counters is None:
        counters = list()
        _local.counters = counters
    counter = FlopCounter()
    counters.append(counter)
    try:
        yield counter
    finally:
        counters.remove(counter)


class Tensor(object):
    """Node in a computation graph. Leaf tensors are created by the user.
    Inner nodes are created by tensor operations and keep references to their
    inputs together with the function that maps the gradient of the node to
    the gradients of its inputs.
    """
    def __init__(self, data, requires_grad=False, parents=None, backward_fn=None):
        """Initialize the tensor.

        Parameters
        ----------
        data: numpy.ndarray, float, or list
            Tensor values. Converted to a 64-bit float array.
        requires_grad: bool, default=False
            Flag indicating whether gradients are computed for the tensor.
        parents: tuple(bottlelab.tensor.Tensor), optional
            Input tensors for tensors that are the result of an operation.
        backward_fn: callable, optional
            Function that receives the gradient of this tensor and returns a
            tuple with the gradients for each of the parents.
        """
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents if parents is not None else tuple()
        self._backward_fn = backward_fn

    def __repr__(self):
        return 'Tensor(shape={}, requires_grad={})'.format(
            self.shape,
            self.requires_grad
        )

    @property
    def is_leaf(self):
        """Leaf tensors are not the result of a recorded operation.

        Returns
        -------
        bool
        """
        return self._backward_fn is None

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def backward(self):
        """Propagate gradients from this scalar tensor to all leaf tensors in
        the graph that require a gradient. Gradients are added to any
        gradient that already exists for a leaf.

        Raises
        ------
        bottlelab.error.DimensionError
        """
        if self.data.size != 1:
            raise DimensionError('backward (non-scalar loss)', self.shape, ())
        if not self.requires_grad:
            return
        order = topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.array(g, dtype=DTYPE)
                else:
                    node.grad = node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    def detach(self):
        """Get a leaf copy of the tensor that is not connected to the graph.

        Returns
        -------
        bottlelab.tensor.Tensor
        """
        return Tensor(self.data.copy())

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        """Reset the gradient to an all-zero array."""
        self.grad = np.zeros_like(self.data)

    # -- Operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)


def astensor(value):
    """Wrap a value as a constant tensor unless it is a tensor already.

    Parameters
    ----------
    value: bottlelab.tensor.Tensor, numpy.ndarray, or float

    Returns
    -------
    bottlelab.tensor.Tensor
    """
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def topological_order(root):
    """Get all nodes that require a gradient and that are reachable from the
    given root in topological order (inputs before results). Uses an explicit
    stack to avoid recursion limits for deep graphs.

    Parameters
    ----------
    root: bottlelab.tensor.Tensor

    Returns
    -------
    list(bottlelab.tensor.Tensor)
    """
    order = list()
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def unbroadcast(grad, shape):
    """Sum out the dimensions of a gradient that were added by numpy
    broadcasting so that the result has the given shape.

    Parameters
    ----------
    grad: numpy.ndarray
    shape: tuple(int)

    Returns
    -------
    numpy.ndarray
    """
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(data, parents, backward_fn):
    """Create the tensor for the result of an operation. The graph is only
    recorded if gradients are enabled and one of the inputs requires a
    gradient.
    """
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(
            data,
            requires_grad=True,
            parents=tuple(parents),
            backward_fn=backward_fn
        )
    return Tensor(data)


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# -- Elementwise arithmetic ---------------------------------------------------

def add(a, b):
    a, b = astensor(a), astensor(b)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    a, b = astensor(a), astensor(b)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    a, b = astensor(a), astensor(b)

    def backward_fn(g):
        return (
            unbroadcast(g * b.data, a.shape),
            unbroadcast(g * a.data, b.shape)
        )

    return _result(a.data * b.data, (a, b), backward_fn)


def div(a, b):
    a, b = astensor(a), astensor(b)

    def backward_fn(g):
        return (
            unbroadcast(g / b.data, a.shape),
            unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        )

    return _result(a.data / b.data, (a, b), backward_fn)


def power(a, exponent):
    """Raise tensor elements to a constant scalar power."""
    a = astensor(a)
    exponent = float(exponent)

    def backward_fn(g):
        return (g * exponent * np.power(a.data, exponent - 1.0),)

    return _result(np.power(a.data, exponent), (a,), backward_fn)


def exp(a):
    a = astensor(a)
    out = np.exp(a.data)

    def backward_fn(g):
        return (g * out,)

    return _result(out, (a,), backward_fn)


def log(a):
    a = astensor(a)

    def backward_fn(g):
        return (g / a.data,)

    return _result(np.log(a.data), (a,), backward_fn)


def relu(a):
    a = astensor(a)

    def backward_fn(g):
        return (g * (a.data > 0),)

    return _result(np.maximum(a.data, 0.0), (a,), backward_fn)


def sigmoid(a):
    """Numerically stable logistic function."""
    a = astensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return _result(out, (a,), backward_fn)


# -- Reductions and shape manipulation ----------------------------------------

def tensor_sum(a, axis=None, keepdims=False):
    a = astensor(a)
    axes = _normalize_axes(axis, a.ndim)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, a.shape),)

    return _result(a.data.sum(axis=axes, keepdims=keepdims), (a,), backward_fn)


def mean(a, axis=None, keepdims=False):
    """Arithmetic mean. Computed as the first element plus the mean offset
    from it, so that the mean of a constant is exactly that constant.
    """
    a = astensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    base = a.data[tuple(slice(0, 1) if i in axes else slice(None) for i in range(a.ndim))]
    data = base + (a.data - base).sum(axis=axes, keepdims=True) / count
    if not keepdims:
        data = data.reshape([n for i, n in enumerate(a.shape) if i not in axes])

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g / count, a.shape),)

    return _result(data, (a,), backward_fn)


def reshape(a, shape):
    a = astensor(a)

    def backward_fn(g):
        return (g.reshape(a.shape),)

    return _result(a.data.reshape(shape), (a,), backward_fn)


def transpose(a, axes=None):
    a = astensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def backward_fn(g):
        return (np.transpose(g, inverse),)

    return _result(np.transpose(a.data, axes), (a,), backward_fn)


def swap_last(a):
    """Swap the two trailing axes of a tensor."""
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def index(a, key):
    """Select elements using numpy indexing. Gradients are scattered back to
    the selected positions (repeated indices accumulate).
    """
    a = astensor(a)

    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return _result(a.data[key], (a,), backward_fn)


def concat(tensors, axis=0):
    """Concatenate tensors along an existing axis."""
    tensors = [astensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return _result(data, tensors, backward_fn)


def stack(tensors, axis=0):
    """Stack tensors of identical shape along a new axis."""
    tensors = [astensor(t) for t in tensors]

    def backward_fn(g):
        return tuple(np.moveaxis(g, axis, 0))

    data = np.stack([t.data for t in tensors], axis=axis)
    return _result(data, tensors, backward_fn)


# -- Linear algebra -----------------------------------------------------------

def matmul(a, b):
    """Matrix product over the two trailing axes with numpy broadcasting of
    leading (batch) axes.

    Raises
    ------
    bottlelab.error.DimensionError
    """
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError('matmul', a.shape, b.shape)
    out = np.matmul(a.data, b.data)
    counters = getattr(_local, 'counters', None)
    if counters:
        flops = 2 * out.size * a.shape[-1]
        for counter in counters:
            counter.add(flops)

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _result(out, (a, b), backward_fn)


# -- Neural network primitives ------------------------------------------------

def softmax(x, axis=-1):
    """Softmax with max-subtraction for numerical stability."""
    x = astensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), backward_fn)


def log_softmax(x, axis=-1):
    x = astensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward_fn(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), backward_fn)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the trailing axis and apply an affine transformation."""
    x = astensor(x)
    mu = mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=-1, keepdims=True)
    return centered * power(var + eps, -0.5) * gamma + beta


def embedding_lookup(table, ids):
    """Select rows of an embedding table.

    Parameters
    ----------
    table: bottlelab.tensor.Tensor
        Embedding table of shape (vocabulary size, width).
    ids: numpy.ndarray
        Integer array of token identifier.

    Returns
    -------
    bottlelab.tensor.Tensor

    Raises
    ------
    bottlelab.error.UnknownTokenError
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise UnknownTokenError(
            'token id out of range [0, {})'.format(table.shape[0])
        )

    def backward_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _result(table.data[ids], (table,), backward_fn)


def mean_pool(x, mask=None):
    """Average over the sequence axis (second to last axis).

    Parameters
    ----------
    x: bottlelab.tensor.Tensor
        Tensor of shape (..., length, width).
    mask: numpy.ndarray, optional
        Array of shape (..., length) with 1 for positions that are included.

    Returns
    -------
    bottlelab.tensor.Tensor
    """
    if mask is None:
        return mean(x, axis=-2)
    mask = np.asarray(mask, dtype=DTYPE)
    counts = np.maximum(mask.sum(axis=-1, keepdims=True), 1.0)
    return tensor_sum(x * mask[..., None], axis=-2) / counts


def attention(q, k, v, mask=None):
    """Scaled dot-product attention.

    Parameters
    ----------
    q: bottlelab.tensor.Tensor
        Queries of shape (..., len_q, d_k).
    k: bottlelab.tensor.Tensor
        Keys of shape (..., len_k, d_k).
    v: bottlelab.tensor.Tensor
        Values of shape (..., len_k, d_v).
    mask: numpy.ndarray, optional
        Boolean array broadcastable to (..., len_q, len_k). Positions that are
        False are excluded from attention.

    Returns
    -------
    bottlelab.tensor.Tensor
    """
    scores = matmul(q, swap_last(k)) / np.sqrt(q.shape[-1])
    if mask is not None:
        scores = scores + np.where(mask, 0.0, MASK_VALUE)
    return matmul(softmax(scores, axis=-1), v)


def cross_entropy(logits, targets, ignore_index=None):
    """Mean negative log-likelihood of target classes.

    Parameters
    ----------
    logits: bottlelab.tensor.Tensor
        Unnormalized scores of shape (..., classes).
    targets: numpy.ndarray
        Integer class labels of shape (...).
    ignore_index: int, optional
        Label value that is excluded from the loss (e.g., padding).

    Returns
    -------
    bottlelab.tensor.Tensor
    """
    logits = astensor(logits)
    classes = logits.shape[-1]
    flat = logits.data.reshape(-1, classes)
    labels = np.asarray(targets, dtype=np.int64).reshape(-1)
    if labels.shape[0] != flat.shape[0]:
        raise DimensionError('cross_entropy', logits.shape, np.shape(targets))
    if ignore_index is None:
        valid = np.ones(labels.shape, dtype=bool)
    else:
        valid = labels != ignore_index
    safe = np.where(valid, labels, 0)
    shifted = flat - flat.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(flat.shape[0])
    count = max(int(valid.sum()), 1)
    loss = -(logp[rows, safe] * valid).sum() / count

    def backward_fn(g):
        p = np.exp(logp)
        p[rows, safe] -= 1.0
        p *= valid[:, None] / count
        return ((g * p).reshape(logits.shape),)

    return _result(np.asarray(loss), (logits,), backward_fn)


def mse(a, b):
    """Mean squared error averaged over all elements (and the batch).

    Raises
    ------
    bottlelab.error.DimensionError
    """
    a, b = astensor(a), astensor(b)
    if a.shape != b.shape:
        raise DimensionError('mse', a.shape, b.shape)
    diff = a - b
    return mean(diff * diff)


def dropout(x, p, rng, training=True):
    """Inverted dropout. Identity in evaluation mode or for p = 0.

    Parameters
    ----------
    x: bottlelab.tensor.Tensor
    p: float
        Drop probability.
    rng: numpy.random.Generator
        Random generator for the drop mask.
    training: bool, default=True

    Returns
    -------
    bottlelab.tensor.Tensor
    """
    if not training or p <= 0:
        return x
    if p >= 1:
        raise BottlelabError('dropout probability must be < 1')
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * keep
