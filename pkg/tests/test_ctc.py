# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for the simulated acoustic front-end and CTC compression."""

import numpy as np
import os
import pytest

from bottlelab.ctc import (
    BLANK_INDEX, CtcHead, FrameSimulator, asr_utterances, calibrate_noise,
    character_error_rate, collapse, create_head, ctc_compress,
    ctc_greedy_decode, ctc_labels, edit_distance, read_asr, simulate_frames,
    write_asr
)
from bottlelab.distill import normalize_text
from bottlelab.error import AlphabetError, BottlelabError
from bottlelab.tests import tiny_corpus, tiny_vocab


def run_length_oracle(frames, labels):
    """Straightforward loop over frames that averages each maximal run of a
    non-blank label.
    """
    rows, out = list(), list()
    i = 0
    while i < len(labels):
        j = i
        while j + 1 < len(labels) and labels[j + 1] == labels[i]:
            j += 1
        if labels[i] != BLANK_INDEX:
            total = np.zeros(frames.shape[1])
            for k in range(i, j + 1):
                total += frames[k]
            rows.append(total / (j - i + 1))
            out.append(labels[i])
        i = j + 1
    return rows, out


def random_head(rng, width, labels):
    chars = ['c{}'.format(i) for i in range(labels - 1)]
    return CtcHead('xx', chars, rng.normal(size=(width, labels)), list(range(labels - 1)))


def test_compression_oracle():
    """Compression matches the run-length oracle and its labels equal the
    greedy CTC decoding of the frames.
    """
    rng = np.random.default_rng(0)
    for _ in range(1000):
        width = int(rng.integers(2, 6))
        labels = int(rng.integers(2, 5))
        length = int(rng.integers(0, 12))
        head = random_head(rng, width, labels)
        frames = rng.normal(size=(length, width))
        pi = ctc_labels(frames, head)
        rep = ctc_compress(frames, pi)
        rows, out = run_length_oracle(frames, pi)
        assert rep.labels == out
        assert len(rep) == len(rows)
        for a, b in zip(rep.rows, rows):
            assert np.allclose(a, b, rtol=0, atol=1e-12)
        assert rep.labels == collapse(pi)


def test_compression_of_arbitrary_labels():
    frames = np.arange(12, dtype=float).reshape(6, 2)
    rep = ctc_compress(frames, [0, 2, 2, 0, 1, 1])
    assert rep.labels == [2, 1]
    assert rep.runs == [(1, 3), (4, 6)]
    assert np.allclose(rep.rows[0], [3.0, 4.0])
    with pytest.raises(BottlelabError):
        ctc_compress(frames, [0, 1])


def test_all_blank_utterance():
    rep = ctc_compress(np.ones((4, 3)), [0, 0, 0, 0])
    assert rep.empty
    assert rep.rows.shape == (0, 3)


def test_ctc_ties_lowest_index():
    head = CtcHead('xx', ['a'], np.ones((2, 2)), [4])
    assert ctc_labels(np.ones((3, 2)), head) == [0, 0, 0]


def test_edit_distance():
    assert edit_distance('kitten', 'sitting') == 3
    assert character_error_rate('abc', 'abc') == 0.0
    assert character_error_rate('abd', 'abcd') == 0.25
    assert character_error_rate('', '') == 0.0


@pytest.fixture
def head():
    corpus = tiny_corpus()
    return create_head(corpus.spec('aa-hi'), tiny_vocab(corpus), dim=48, seed=0)


def test_create_head(head):
    assert len(head) == 28
    assert head.labels[0] == '<blank>'
    assert head.chars[0] == ' '
    with pytest.raises(AlphabetError):
        head.index('!')
    corpus = tiny_corpus()
    with pytest.raises(BottlelabError):
        create_head(corpus.spec('aa-hi'), tiny_vocab(corpus), dim=10)


def test_noise_free_simulation(head):
    """Without noise the greedy decoding recovers the transcript, including
    repeated characters.
    """
    transcript = head.text([head.index(c) for c in 'ab  cc'])
    assert transcript == 'ab  cc'
    text = ''.join(head.chars[k - 1] for k in [3, 3, 4, 1, 5])
    rep = simulate_frames(text, head, 8.0, 0.0, (1, 3), 0.3, np.random.default_rng(0))
    decoded, cer = ctc_greedy_decode(rep.frames, head, gold=text)
    assert decoded == text
    assert cer == 0.0
    compressed = ctc_compress(rep.frames, ctc_labels(rep.frames, head))
    assert len(compressed) == len(text)


def test_frame_simulator(head):
    corpus = tiny_corpus()
    utts = asr_utterances(corpus, 'aa-hi', 'dev', None, 0, normalize_text)
    assert len(utts) == 6
    clean = FrameSimulator(head, 8.0, 0.0, (1, 3), 0.3)
    assert clean.cer(utts) == 0.0
    rep = clean.frames(utts[0])
    assert np.array_equal(rep.frames, clean.frames(utts[0]).frames)
    noisy = FrameSimulator(head, 8.0, 20.0, (1, 3), 0.3)
    assert noisy.cer(utts) > 0.1
    sd = calibrate_noise(head, utts, 8.0, (1, 3), 0.3, target_cer=0.05, iterations=6)
    assert 0.0 < sd < 20.0


def test_asr_files(tmpdir):
    corpus = tiny_corpus()
    utts = asr_utterances(corpus, 'aa-hi', 'train', 5, 0, normalize_text)
    assert len(utts) == 5
    filename = os.path.join(str(tmpdir), 'asr-aa-hi-train.tsv')
    write_asr(utts, filename)
    assert read_asr(filename) == utts
