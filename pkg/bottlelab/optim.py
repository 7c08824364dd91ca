# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""AdamW optimizer with decoupled weight decay and an inverse square root
learning rate schedule with linear warmup.
"""

import numpy as np

from bottlelab.error import BottlelabError


class OptimizerState(object):
    """Hyper-parameters, step counter and per-parameter moment accumulators
    of the AdamW optimizer.
    """
    def __init__(
        self, learning_rate=4e-4, betas=(0.9, 0.98), eps=1e-8,
        weight_decay=0.01, warmup_steps=400
    ):
        """Initialize the optimizer state.

        Parameters
        ----------
        learning_rate: float, default=4e-4
            Peak learning rate (reached at the end of warmup).
        betas: (float, float), default=(0.9, 0.98)
            Decay rates for the first and second moment estimates.
        eps: float, default=1e-8
            Term added to the denominator for numerical stability.
        weight_decay: float, default=0.01
            Decoupled weight decay coefficient.
        warmup_steps: int, default=400
            Number of linear warmup steps. No warmup and no decay if 0.
        """
        self.learning_rate = learning_rate
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.step = 0
        self.exp_avg = dict()
        self.exp_avg_sq = dict()

    def rate(self, step=None):
        """Learning rate for the given step (default is the current step).
        Linear warmup to the peak rate followed by decay proportional to the
        inverse square root of the step number.

        Parameters
        ----------
        step: int, optional

        Returns
        -------
        float
        """
        step = self.step if step is None else step
        if self.warmup_steps <= 0:
            return self.learning_rate
        step = max(step, 1)
        if step < self.warmup_steps:
            return self.learning_rate * step / self.warmup_steps
        return self.learning_rate * np.sqrt(self.warmup_steps / step)


def adamw_step(params, state):
    """Update parameters in place using the AdamW rule. Gradients are not
    modified (the caller resets them).

    Parameters
    ----------
    params: list(bottlelab.nn.Parameter)
        Parameters in fixed order. The position in the list identifies the
        moment accumulators in the state.
    state: bottlelab.optim.OptimizerState

    Raises
    ------
    bottlelab.error.BottlelabError
    """
    for i, p in enumerate(params):
        if p.grad is None:
            raise BottlelabError('missing gradient for parameter {}'.format(i))
    state.step += 1
    t = state.step
    lr = state.rate()
    beta1, beta2 = state.betas
    for i, p in enumerate(params):
        g = p.grad
        m = state.exp_avg.get(i)
        v = state.exp_avg_sq.get(i)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise BottlelabError('moment shape mismatch for parameter {}'.format(i))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.exp_avg[i] = m
        state.exp_avg_sq[i] = v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data = (
            p.data
            - lr * state.weight_decay * p.data
            - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        )


def clip_grad_norm(params, max_norm):
    """Scale gradients so that their global L2 norm is at most max_norm.

    Parameters
    ----------
    params: list(bottlelab.nn.Parameter)
    max_norm: float

    Returns
    -------
    float
        Norm before clipping.
    """
    grads = [p.grad for p in params if p.grad is not None]
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class AdamW(object):
    """Optimizer object bundling a parameter list with its state."""
    def __init__(self, params, **kwargs):
        """Initialize the optimizer. Keyword arguments are passed to the
        OptimizerState constructor.

        Parameters
        ----------
        params: list(bottlelab.nn.Parameter)
        """
        self.params = list(params)
        self.state = OptimizerState(**kwargs)

    @property
    def lr(self):
        return self.state.rate()

    def step(self):
        adamw_step(self.params, self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
