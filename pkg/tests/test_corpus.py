# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for the synthetic language world and parallel corpus."""

import numpy as np
import os
import pytest

from bottlelab.corpus import (
    PIVOT, SPLIT_DEV, SPLIT_TEST, TIER_NEW, LanguageSpec, apply_word_order,
    default_world, derive_language, generate_base_sentences, invert_language,
    read_corpus, temperature_probabilities, temperature_sample
)
from bottlelab.error import AlphabetError, BottlelabError
from bottlelab.tests import tiny_corpus, tiny_world


def test_base_sentences():
    sentences = generate_base_sentences(50, seed=1)
    assert len(sentences) == 50
    assert len(set(sentences)) == 50
    assert sentences == generate_base_sentences(50, seed=1)


def test_derive_and_invert():
    spec = LanguageSpec(
        language='xx',
        family='f',
        script='cyrillic',
        shift=5,
        swaps=[['a', 'o']],
        word_order='rotate'
    )
    for s in generate_base_sentences(20, seed=2):
        derived = derive_language(s, spec)
        assert derived != s
        assert invert_language(derived, spec) == s
    with pytest.raises(AlphabetError):
        derive_language('hello #', spec)


def test_word_order():
    words = ['a', 'b', 'c']
    assert apply_word_order(words, 'reverse') == ['c', 'b', 'a']
    rotated = apply_word_order(words, 'rotate')
    assert rotated == ['b', 'c', 'a']
    assert apply_word_order(rotated, 'rotate', inverse=True) == words


def test_invalid_spec():
    with pytest.raises(BottlelabError):
        LanguageSpec(language='xx', family='f', script='klingon')
    with pytest.raises(BottlelabError):
        LanguageSpec(language='xx', family='f', swaps=[['a', 'b'], ['b', 'c']])


def test_default_world():
    world = default_world(scale=0.1)
    assert world[0].language == PIVOT
    families = set(s.family for s in world[1:])
    assert len(families) == 4
    assert len([s for s in world if s.tier == TIER_NEW]) == 2
    # Family members share script and rotation.
    for fam in families:
        members = [s for s in world if s.family == fam]
        assert len(set((s.script, s.shift) for s in members)) == 1


def test_temperature_sampling():
    """Draw frequencies follow the temperature probabilities."""
    draws = temperature_sample([3, 1], 1.0, np.random.default_rng(0), 100000)
    freq = np.bincount(draws, minlength=2) / len(draws)
    assert np.allclose(freq, [0.75, 0.25], atol=0.01)
    draws = temperature_sample([3, 1], 0.5, np.random.default_rng(1), 100000)
    freq = np.bincount(draws, minlength=2) / len(draws)
    expected = np.sqrt(3) / (np.sqrt(3) + 1)
    assert abs(freq[0] - expected) < 0.01


def test_temperature():
    p = temperature_probabilities([100, 1], 1.0)
    assert p[0] == pytest.approx(100 / 101)
    flat = temperature_probabilities([100, 1], 0.5)
    assert flat[1] > p[1]
    with pytest.raises(BottlelabError):
        temperature_probabilities([1, 2], 0.0)


def test_generate_corpus(tmpdir):
    corpus = tiny_corpus(seed=3)
    again = tiny_corpus(seed=3)
    assert [p.source for p in corpus.pairs('aa-lo')] == [p.source for p in again.pairs('aa-lo')]
    assert len(corpus.pairs('aa-lo')) == 10
    # Dev and test pivot sentences are shared by all languages.
    for split in [SPLIT_DEV, SPLIT_TEST]:
        targets = [p.target for p in corpus.pairs('aa-hi', split)]
        assert targets == [p.target for p in corpus.pairs('bb-lo', split)]
    train = set(p.target for p in corpus.pairs('aa-hi'))
    assert not train & set(p.target for p in corpus.pairs('aa-hi', SPLIT_TEST))
    filename = os.path.join(str(tmpdir), 'corpus.tsv')
    corpus.write(filename)
    loaded = read_corpus(filename, tiny_world(), seed=3)
    assert [p.pair_id for p in loaded.pairs('bb-hi', SPLIT_DEV)] == [p.pair_id for p in corpus.pairs('bb-hi', SPLIT_DEV)]
    assert np.all([p.source == q.source for p, q in zip(loaded.pairs('bb-hi'), corpus.pairs('bb-hi'))])


def test_corpus_languages():
    corpus = tiny_corpus()
    assert corpus.languages(tiers=[TIER_NEW]) == ['aa-nw']
    assert PIVOT not in corpus.languages(include_pivot=False)
    assert corpus.families()['bb-lo'] == 'beta'
