# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for the subword and character vocabularies."""

import numpy as np
import pytest

from bottlelab.error import BottlelabError, UnknownTokenError
from bottlelab.tests import tiny_corpus, tiny_vocab
from bottlelab.tokenizer import (
    BLANK_ID, CHARACTER, EOS_ID, PAD_ID, SUBWORD, UNK_ID, family_tag,
    pad_sequences, read_vocab, substitute_family_token, train_subword_vocab,
    write_vocab
)


@pytest.fixture
def corpus():
    return tiny_corpus()


@pytest.fixture
def vocab(corpus):
    return tiny_vocab(corpus)


def test_character_vocab_is_prefix(vocab):
    """The character vocabulary is a prefix of the subword vocabulary."""
    chars = vocab.character.tokens
    assert vocab.subword.tokens[:len(chars)] == chars
    assert vocab.subword.tokens[:4] == ['<pad>', '<unk>', '</s>', '<blank>']
    assert (PAD_ID, UNK_ID, EOS_ID, BLANK_ID) == (0, 1, 2, 3)


def test_encode_character(corpus, vocab):
    text = corpus.pairs('bb-lo')[0].source
    seq = vocab.encode(text, 'bb-lo', CHARACTER)
    assert len(seq) == len(text) + 2
    assert seq.ids[0] == vocab.character.tag_id('bb-lo')
    assert seq.ids[-1] == EOS_ID
    assert vocab.decode(seq.ids, CHARACTER) == text


def test_encode_subword(corpus, vocab):
    text = corpus.pairs('aa-hi')[0].source
    sub = vocab.encode(text, 'aa-hi', SUBWORD)
    char = vocab.encode(text, 'aa-hi', CHARACTER)
    assert len(sub) <= len(char)
    assert vocab.decode(sub.ids, SUBWORD) == text
    spans = vocab.spans(text)
    assert spans[0][0] == 0 and spans[-1][1] == len(text)
    assert len(spans) == len(sub) - 2


def test_unknown_tokens(vocab):
    seq = vocab.encode('a#b', 'pvt', CHARACTER)
    assert seq.ids[2] == UNK_ID
    assert vocab.spans('a#b') is None
    with pytest.raises(UnknownTokenError):
        vocab.encode('abc', 'zz', CHARACTER)


def test_family_tokens(vocab):
    fam = vocab.character.tag_id(family_tag('alpha'))
    seq = vocab.encode('abc', 'aa-lo', CHARACTER)
    swapped = substitute_family_token(seq, vocab.character, 1.0, np.random.default_rng(0))
    assert swapped.ids[0] == fam
    assert swapped.ids[1:] == seq.ids[1:]
    same = substitute_family_token(seq, vocab.character, 0.0, np.random.default_rng(0))
    assert same.ids == seq.ids


def test_family_token_rate(vocab):
    fam = vocab.character.tag_id(family_tag('alpha'))
    seq = vocab.encode('abc', 'aa-lo', CHARACTER)
    rng = np.random.default_rng(7)
    n = 100000
    hits = sum(substitute_family_token(seq, vocab.character, 0.2, rng).ids[0] == fam for _ in range(n))
    assert abs(hits / n - 0.2) < 0.01


def test_pad_sequences(vocab):
    seqs = [vocab.encode('ab', 'pvt', CHARACTER), vocab.encode('abcd', 'pvt', CHARACTER)]
    ids, mask = pad_sequences(seqs)
    assert ids.shape == (2, 6)
    assert mask[0].tolist() == [1, 1, 1, 1, 0, 0]
    assert ids[0, -1] == PAD_ID


def test_vocab_files(tmpdir, corpus, vocab):
    write_vocab(vocab, str(tmpdir))
    loaded = read_vocab(str(tmpdir), corpus.families())
    assert loaded.subword.tokens == vocab.subword.tokens
    assert loaded.fingerprint == vocab.fingerprint
    assert loaded.character.family_tag_id(loaded.character.tag_id('bb-hi')) == \
        vocab.character.tag_id(family_tag('beta'))


def test_vocab_size_errors(corpus):
    with pytest.raises(BottlelabError):
        train_subword_vocab(corpus.texts(), 5, corpus.families())
    with pytest.raises(BottlelabError):
        train_subword_vocab([], 100, corpus.families())
