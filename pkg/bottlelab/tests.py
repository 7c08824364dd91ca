# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Helpers for test purposes: a tiny language world with corpus and
vocabularies, a tiny experiment configuration that runs end-to-end in a few
seconds, and a finite-difference gradient checker for tensor functions.
"""

import numpy as np

from bottlelab.config import from_dict
from bottlelab.corpus import (
    BASE_ALPHABET, ORDER_REVERSE, PIVOT, TIER_HIGH, TIER_LOW, TIER_NEW,
    LanguageSpec, generate_corpus
)
from bottlelab.tokenizer import train_subword_vocab

import bottlelab.tensor as T


def tiny_world():
    """Pivot language and two families. The first family has a language of
    tier new.

    Returns
    -------
    list(bottlelab.corpus.LanguageSpec)
    """
    return [
        LanguageSpec(language=PIVOT, family='pivot', tier=TIER_HIGH, pairs=40),
        LanguageSpec(language='aa-hi', family='alpha', shift=3, tier=TIER_HIGH, pairs=40),
        LanguageSpec(
            language='aa-lo',
            family='alpha',
            shift=3,
            swaps=[['e', 'i']],
            word_order=ORDER_REVERSE,
            tier=TIER_LOW,
            pairs=10
        ),
        LanguageSpec(
            language='aa-nw',
            family='alpha',
            shift=3,
            swaps=[['a', 'u']],
            tier=TIER_NEW,
            pairs=10
        ),
        LanguageSpec(language='bb-hi', family='beta', script='greek', tier=TIER_HIGH, pairs=40),
        LanguageSpec(
            language='bb-lo',
            family='beta',
            script='greek',
            swaps=[['s', 'z']],
            tier=TIER_LOW,
            pairs=10
        )
    ]


def tiny_corpus(seed=0):
    return generate_corpus(tiny_world(), seed, dev_size=6, test_size=6)


def tiny_vocab(corpus, size=200):
    """Vocabulary pair for a corpus over the alphabets of all its
    languages.
    """
    alphabet = set(BASE_ALPHABET)
    for spec in corpus.specs:
        alphabet.update(spec.letters)
    return train_subword_vocab(corpus.texts(), size, languages=corpus.families(), alphabet=alphabet)


def tiny_config(output_dir, speech=False, students=None):
    """Experiment configuration for the tiny world with few training steps.

    Parameters
    ----------
    output_dir: string
        Run directory.
    speech: bool, default=False
        Include the speech front-end and a dual adapter.
    students: list(dict), optional
        Student configurations. Defaults to a single character student.

    Returns
    -------
    bottlelab.config.ExperimentConfig
    """
    schedule = {'steps': 4, 'batch_size': 4, 'warmup_steps': 2, 'dev_every': 2, 'dev_pairs': 4, 'log_every': 1}
    if students is None:
        students = [dict(schedule, name='char', granularity='character')]
    doc = {
        'name': 'tiny',
        'seed': 0,
        'corpus': {
            'dev_size': 6,
            'test_size': 6,
            'subword_size': 200,
            'languages': [s.to_dict() for s in tiny_world()]
        },
        'model': {'dim': 16, 'layers': 1, 'heads': 2, 'ffn': 32, 'dropout': 0.0},
        'teacher': dict(schedule, steps=6),
        'students': students,
        'evaluation': {'negatives': 8, 'max_sentences': 4, 'beam': 1, 'max_len': 12},
        'output_dir': str(output_dir)
    }
    if speech:
        doc['speech'] = {'languages': ['aa-hi'], 'utterances': 8, 'noise_sd': 0.5}
        doc['adapters'] = [
            dict(schedule, name='dual', kind='dual', hidden=8, gate_hidden=4, dev_pairs=2)
        ]
    return from_dict(doc)


# -- Gradient checks ----------------------------------------------------------

def numeric_gradient(fn, values, index, eps=1e-6):
    """Central finite-difference gradient of a scalar function with respect
    to one of its array arguments.

    Parameters
    ----------
    fn: callable
        Function that maps a list of tensors to a scalar tensor.
    values: list(numpy.ndarray)
    index: int
        Position of the argument to differentiate.
    eps: float, default=1e-6

    Returns
    -------
    numpy.ndarray
    """
    values = [np.array(v, dtype=np.float64) for v in values]
    grad = np.zeros_like(values[index])
    it = np.nditer(values[index], flags=['multi_index'])
    with T.no_grad():
        while not it.finished:
            i = it.multi_index
            orig = values[index][i]
            values[index][i] = orig + eps
            plus = fn([T.Tensor(v) for v in values]).item()
            values[index][i] = orig - eps
            minus = fn([T.Tensor(v) for v in values]).item()
            values[index][i] = orig
            grad[i] = (plus - minus) / (2 * eps)
            it.iternext()
    return grad


def gradient_error(fn, values):
    """Maximal relative error between the analytic and the numeric gradient
    over all arguments of a scalar tensor function.

    Returns
    -------
    float
    """
    tensors = [T.Tensor(np.array(v, dtype=np.float64), requires_grad=True) for v in values]
    fn(tensors).backward()
    error = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(fn, values, i)
        scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
        error = max(error, float(np.abs(analytic - numeric).max() / scale))
    return error
