# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Neural network building blocks on top of the tensor engine: a module base
class that collects named parameters, and the layers that are needed for the
transformer encoder/decoder and the cross-modal adapters.
"""

from collections import OrderedDict
from functools import lru_cache

import numpy as np

from bottlelab.error import CheckpointError
from bottlelab.tensor import DTYPE, Tensor

import bottlelab.tensor as T


class Parameter(Tensor):
    """Trainable leaf tensor. Parameters are collected by Module objects."""
    def __init__(self, data):
        super(Parameter, self).__init__(
            np.array(data, dtype=DTYPE),
            requires_grad=True
        )


class Module(object):
    """Base class for all model components. Parameters and sub-modules are
    discovered from the instance attributes (including lists of modules) in
    the order in which they were assigned.
    """
    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError()

    def children(self):
        """Iterate over (name, module) pairs of direct sub-modules."""
        for name, value in self.__dict__.items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield '{}.{}'.format(name, i), item

    def named_parameters(self, prefix=''):
        """Iterate over (qualified name, parameter) pairs.

        Parameters
        ----------
        prefix: string, default=''
            Prefix for parameter names.

        Returns
        -------
        iterator
        """
        for name, value in self.__dict__.items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, module in self.children():
            for item in module.named_parameters(prefix + name + '.'):
                yield item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def freeze(self):
        """Exclude all parameters from gradient computation."""
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        return self

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True
        return self

    @property
    def frozen(self):
        return not any(p.requires_grad for p in self.parameters())

    def train(self, mode=True):
        """Set training mode (dropout active) for the module tree."""
        self.training = mode
        for _, module in self.children():
            module.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.trainable_parameters():
            p.zero_grad()

    def state_dict(self):
        """Get a copy of all parameter values.

        Returns
        -------
        collections.OrderedDict
        """
        return OrderedDict(
            (name, p.data.copy()) for name, p in self.named_parameters()
        )

    def load_state_dict(self, state):
        """Replace parameter values. The given state has to contain values
        of matching shape for exactly the parameters of this module.

        Parameters
        ----------
        state: dict(string: numpy.ndarray)

        Raises
        ------
        bottlelab.error.CheckpointError
        """
        params = OrderedDict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise CheckpointError(
                'parameter mismatch (missing {}, unexpected {})'.format(
                    sorted(missing),
                    sorted(unexpected)
                )
            )
        for name, p in params.items():
            value = np.asarray(state[name], dtype=DTYPE)
            if value.shape != p.shape:
                raise CheckpointError(
                    "shape mismatch for '{}': {} != {}".format(
                        name,
                        value.shape,
                        p.shape
                    )
                )
            p.data = value.copy()
        return self


# -- Layers -------------------------------------------------------------------

class Dropout(Module):
    def __init__(self, p, rng):
        self.p = p
        self.rng = rng

    def forward(self, x):
        return T.dropout(x, self.p, self.rng, training=self.training)


class Embedding(Module):
    def __init__(self, num_embeddings, dim, rng):
        self.weight = Parameter(rng.normal(0.0, dim ** -0.5, (num_embeddings, dim)))

    def forward(self, ids):
        return T.embedding_lookup(self.weight, ids)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return T.layer_norm(x, self.weight, self.bias, eps=self.eps)


class Linear(Module):
    """Affine map x W + b with Xavier-uniform initialization."""
    def __init__(self, d_in, d_out, rng, bias=True):
        limit = np.sqrt(6.0 / (d_in + d_out))
        self.weight = Parameter(rng.uniform(-limit, limit, (d_in, d_out)))
        if bias:
            self.bias = Parameter(np.zeros(d_out))
        else:
            self.bias = None

    def forward(self, x):
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class FeedForward(Module):
    def __init__(self, dim, inner, dropout, rng):
        self.inner = Linear(dim, inner, rng)
        self.outer = Linear(inner, dim, rng)
        self.dropout = Dropout(dropout, rng)

    def forward(self, x):
        return self.outer(self.dropout(T.relu(self.inner(x))))


class MultiHeadAttention(Module):
    """Multi-head attention over batched sequences of shape (batch, length,
    width).
    """
    def __init__(self, dim, heads, dropout, rng):
        assert dim % heads == 0
        self.heads = heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.output = Linear(dim, dim, rng)
        self.dropout = Dropout(dropout, rng)

    def _split(self, x):
        batch, length, dim = x.shape
        x = x.reshape(batch, length, self.heads, dim // self.heads)
        return x.transpose(0, 2, 1, 3)

    def forward(self, x, memory=None, mask=None):
        """Attend from x to memory (self-attention if memory is None).

        Parameters
        ----------
        x: bottlelab.tensor.Tensor
            Queries of shape (batch, len_q, width).
        memory: bottlelab.tensor.Tensor, optional
            Keys and values of shape (batch, len_k, width).
        mask: numpy.ndarray, optional
            Boolean mask broadcastable to (batch, heads, len_q, len_k).

        Returns
        -------
        bottlelab.tensor.Tensor
        """
        memory = x if memory is None else memory
        batch, length, dim = x.shape
        q = self._split(self.query(x))
        k = self._split(self.key(memory))
        v = self._split(self.value(memory))
        context = T.attention(q, k, v, mask=mask)
        context = context.transpose(0, 2, 1, 3).reshape(batch, length, dim)
        return self.dropout(self.output(context))


class EncoderLayer(Module):
    """Pre-norm transformer encoder layer."""
    def __init__(self, dim, heads, ffn, dropout, rng):
        self.attention_norm = LayerNorm(dim)
        self.attention = MultiHeadAttention(dim, heads, dropout, rng)
        self.ffn_norm = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn, dropout, rng)
        self.dropout = Dropout(dropout, rng)

    def forward(self, x, mask=None):
        x = x + self.attention(self.attention_norm(x), mask=mask)
        return x + self.dropout(self.ffn(self.ffn_norm(x)))


class DecoderLayer(Module):
    """Pre-norm transformer decoder layer with causal self-attention and
    cross-attention over an encoder memory.
    """
    def __init__(self, dim, heads, ffn, dropout, rng):
        self.self_norm = LayerNorm(dim)
        self.self_attention = MultiHeadAttention(dim, heads, dropout, rng)
        self.cross_norm = LayerNorm(dim)
        self.cross_attention = MultiHeadAttention(dim, heads, dropout, rng)
        self.ffn_norm = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn, dropout, rng)
        self.dropout = Dropout(dropout, rng)

    def forward(self, x, memory, mask=None):
        x = x + self.self_attention(self.self_norm(x), mask=mask)
        x = x + self.cross_attention(self.cross_norm(x), memory=memory)
        return x + self.dropout(self.ffn(self.ffn_norm(x)))


# -- Helper Methods -----------------------------------------------------------

@lru_cache(maxsize=32)
def _positions(length, dim):
    pos = np.arange(length, dtype=DTYPE)[:, None]
    rates = np.power(10000.0, -np.arange(0, dim, 2, dtype=DTYPE) / dim)
    table = np.zeros((length, dim), dtype=DTYPE)
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates[:dim // 2])
    table.setflags(write=False)
    return table


def sinusoidal_positions(length, dim):
    """Get the sinusoidal positional encodings for the first length
    positions. Tables are cached and read-only.

    Parameters
    ----------
    length: int
    dim: int

    Returns
    -------
    numpy.ndarray
    """
    # Compute a table for the next power of two so that the cache does not
    # hold one table per sequence length.
    size = 1
    while size < max(length, 1):
        size *= 2
    return _positions(size, dim)[:length]


def padding_mask(mask):
    """Convert a (batch, length) key mask into an attention mask of shape
    (batch, 1, 1, length).
    """
    if mask is None:
        return None
    return np.asarray(mask, dtype=bool)[:, None, None, :]


def causal_mask(length):
    return np.tril(np.ones((length, length), dtype=bool))[None, None, :, :]
