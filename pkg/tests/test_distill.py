# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for the distillation objectives, augmentations, and student
training.
"""

import numpy as np
import pytest

from bottlelab.config import OBJECTIVES, StudentConfig
from bottlelab.distill import (
    CharDistribution, TeacherTargets, augment_noise, augment_normalize,
    init_student, loss_interpol, loss_recon, noise_text, normalize_text,
    objective_loss, student_languages, train_student
)
from bottlelab.error import BottlelabError
from bottlelab.model import BottleneckEncoder
from bottlelab.tests import tiny_corpus, tiny_vocab
from bottlelab.tokenizer import CHARACTER, family_tag, tag_token

import bottlelab.tensor as T


@pytest.fixture
def corpus():
    return tiny_corpus()


@pytest.fixture
def vocab(corpus):
    return tiny_vocab(corpus)


@pytest.fixture
def teacher(vocab):
    return BottleneckEncoder(len(vocab.subword), dim=16, layers=1, heads=2, ffn=32, dropout=0.0)


def test_objective_identities():
    rng = np.random.default_rng(0)
    c = T.Tensor(rng.normal(size=(4, 8)))
    e_x, e_y = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    assert loss_interpol(c, e_x, e_x).item() == loss_recon(c, e_x).item()
    assert loss_interpol(c, e_x, e_y).item() == loss_interpol(c, e_y, e_x).item()
    for objective in OBJECTIVES:
        assert np.isfinite(objective_loss(objective, c, e_x, e_y).item())
    with pytest.raises(BottlelabError):
        objective_loss('unknown', c, e_x, e_y)


def test_normalize_text():
    assert normalize_text('Hello,  World!') == 'hello world'
    assert normalize_text('does the cat run?') == 'does the cat run'


def test_augmentations_identity_at_zero():
    """All-zero augmentation probabilities leave the text unchanged."""
    rng = np.random.default_rng(0)
    config = StudentConfig(p_norm=0.0, p_noise=0.0)
    dist = CharDistribution(['abc'])
    for text in ['The cat, runs.', 'a b c']:
        assert augment_normalize(text, 0.0, rng) == text
        assert augment_noise(text, config, dist, rng) == text
        assert noise_text(text, 0.0, 0.0, 0.0, dist, rng) == (text, 0)


def test_noise_uses_distribution():
    rng = np.random.default_rng(0)
    dist = CharDistribution(['xxxx'])
    text, edits = noise_text('abc', 0.0, 1.0, 0.0, dist, rng)
    assert text == 'xxx'
    assert edits == 3


def test_normalization_rate():
    rng = np.random.default_rng(8)
    n = 100000
    hits = sum(augment_normalize('The Cat!', 0.25, rng) == 'the cat' for _ in range(n))
    assert abs(hits / n - 0.25) < 0.01


def test_expected_noise_edits():
    """Expected number of edits is about the sum of the edit rates times
    the text length.
    """
    rng = np.random.default_rng(9)
    dist = CharDistribution(['abcdef'])
    text = 'abcdefabcdefabcdefab'
    n = 100000
    edits = [noise_text(text, 0.0025, 0.0025, 0.0025, dist, rng)[1] for _ in range(n)]
    expected = len(text) * (0.0025 + 0.9975 * 0.0025 + 0.0025)
    assert abs(np.mean(edits) - expected) < 0.006
    assert abs(np.mean(edits) - 3 * 0.0025 * len(text)) < 0.006
    # Noise is applied with probability p_noise.
    config = StudentConfig(p_noise=0.5, p_delete=1.0, p_replace=0.0, p_insert=0.0)
    noised = sum(augment_noise(text, config, dist, rng) == '' for _ in range(10000))
    assert abs(noised / 10000 - 0.5) < 0.03


def test_teacher_targets_new_languages(corpus, vocab, teacher):
    """Teacher targets of new languages are the pivot embeddings."""
    targets = TeacherTargets(teacher, vocab, corpus)
    pair = corpus.pairs('aa-nw')[0]
    key_x, key_y = targets.pair(pair)
    assert key_x == key_y == (pair.target, 'pvt')
    pair = corpus.pairs('aa-hi')[0]
    assert targets.pair(pair)[0] == (pair.source, 'aa-hi')


def test_init_student(corpus, vocab, teacher):
    config = StudentConfig(name='s', granularity=CHARACTER)
    student = init_student(teacher, vocab, config, seed=0, known=['aa-hi', 'aa-lo'])
    table = vocab.character
    assert student.embedding.weight.shape[0] == len(table)
    t_weight = teacher.embedding.weight.data
    s_weight = student.embedding.weight.data
    char_id = table.content_id('a')
    assert np.array_equal(s_weight[char_id], t_weight[char_id])
    fam = table.tag_id(family_tag('alpha'))
    rows = [table.token_id(tag_token('aa-hi')), table.token_id(tag_token('aa-lo'))]
    assert np.allclose(s_weight[fam], t_weight[rows].mean(axis=0))


def test_student_languages(corpus):
    config = StudentConfig(zero_shot=True)
    languages = student_languages(corpus, config)
    assert 'aa-nw' not in languages
    assert 'aa-lo' in languages
    assert student_languages(corpus, StudentConfig(languages=['pvt'])) == ['pvt']
    with pytest.raises(BottlelabError):
        student_languages(corpus, StudentConfig(languages=['aa-nw'], zero_shot=True))


def test_train_student(corpus, vocab, teacher):
    config = StudentConfig(
        name='zs',
        steps=4,
        batch_size=4,
        warmup_steps=2,
        dev_every=2,
        dev_pairs=4,
        zero_shot=True,
        pretrain=True,
        pretrain_fraction=0.5,
        p_norm=0.5,
        p_noise=0.5,
        p_family=0.5
    )
    before = teacher.state_dict()
    student, manifest = train_student(teacher, corpus, vocab, config, seed=0)
    assert 'aa-nw' not in manifest
    assert manifest['bb-lo'] == 10
    assert student.embedding.weight.shape[0] == len(vocab.character)
    # The teacher is never modified.
    for name, value in teacher.state_dict().items():
        assert np.array_equal(value, before[name])
