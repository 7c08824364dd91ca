# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for the cross-modal speech adapters."""

import numpy as np
import pytest

from bottlelab.adapter import (
    SpeechAdapter, SubwordPoolAdapter, assemble_input, encode_speech,
    load_adapter, read_registry, save_adapter, speech_data, subword_pool,
    train_adapter
)
from bottlelab.config import AdapterConfig
from bottlelab.ctc import (
    CompressedRepresentation, FrameSimulator, asr_utterances, create_head
)
from bottlelab.distill import normalize_text
from bottlelab.error import InsufficientDataError
from bottlelab.model import BottleneckEncoder
from bottlelab.tests import tiny_corpus, tiny_vocab
from bottlelab.tokenizer import CHARACTER

import bottlelab.tensor as T


@pytest.fixture
def corpus():
    return tiny_corpus()


@pytest.fixture
def vocab(corpus):
    return tiny_vocab(corpus)


@pytest.fixture
def head(corpus, vocab):
    return create_head(corpus.spec('aa-hi'), vocab, dim=32, seed=0)


@pytest.fixture
def encoder(vocab):
    return BottleneckEncoder(len(vocab.character), dim=16, layers=1, heads=2, ffn=32, dropout=0.0).eval()


def parameter_gradient_error(adapter, rows, target):
    """Maximal relative error between the analytic and the central
    difference gradient of the adapter loss for all trainable parameters.
    """
    def loss():
        return T.mse(adapter(rows), target)

    adapter.zero_grad()
    loss().backward()
    error = 0.0
    for param in adapter.trainable_parameters():
        analytic = param.grad.copy()
        numeric = np.zeros_like(param.data)
        with T.no_grad():
            for i in np.ndindex(*param.data.shape):
                orig = param.data[i]
                param.data[i] = orig + 1e-6
                plus = loss().item()
                param.data[i] = orig - 1e-6
                minus = loss().item()
                param.data[i] = orig
                numeric[i] = (plus - minus) / 2e-6
        scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
        error = max(error, float(np.abs(analytic - numeric).max() / scale))
    return error


def test_pretrained_uniform_weights():
    """Zero input rows give uniform weights and the mean embedding row."""
    rng = np.random.default_rng(0)
    adapter = SpeechAdapter('pretrained', frame_dim=6, labels=5, dim=4, rng=rng).eval()
    adapter.ctc_weight.data = rng.normal(size=(6, 5))
    adapter.char_embedding.data = rng.normal(size=(5, 4))
    with T.no_grad():
        out = adapter(np.zeros((3, 6))).data
    expected = adapter.char_embedding.data.mean(axis=0)
    for row in out:
        assert np.allclose(row, expected, rtol=0, atol=1e-9)


def test_pretrained_saturated_rows():
    """Saturated rows reproduce the embedding row of their label."""
    rng = np.random.default_rng(1)
    adapter = SpeechAdapter('pretrained', frame_dim=5, labels=5, dim=4, rng=rng).eval()
    adapter.ctc_weight.data = np.eye(5)
    adapter.char_embedding.data = rng.normal(size=(5, 4))
    with T.no_grad():
        out = adapter(100.0 * np.eye(5)).data
    assert np.allclose(out, adapter.char_embedding.data, rtol=0, atol=1e-9)


def test_dual_mixture():
    rng = np.random.default_rng(2)
    adapter = SpeechAdapter('dual', frame_dim=6, labels=5, dim=4, hidden=8, gate_hidden=3, rng=rng).eval()
    adapter.ctc_weight.data = rng.normal(size=(6, 5))
    adapter.char_embedding.data = rng.normal(size=(5, 4))
    rows = rng.normal(size=(7, 6))
    with T.no_grad():
        e_pt = adapter.pretrained(rows)
        e_rnd = adapter.random(rows)
        v = adapter.gate(e_pt, e_rnd).data
        out = adapter(rows).data
    assert v.shape == (7, 1)
    assert np.all((v > 0) & (v < 1))
    assert np.allclose(out, v * e_pt.data + (1 - v) * e_rnd.data, rtol=0, atol=1e-9)
    # An open gate passes the pretrained branch.
    adapter.gate_outer.bias.data = np.array([100.0])
    with T.no_grad():
        out = adapter(rows).data
    assert np.allclose(out, e_pt.data, rtol=0, atol=1e-9)


@pytest.mark.parametrize('kind', ['pretrained', 'random', 'dual'])
@pytest.mark.parametrize(
    'n,frame_dim,labels,dim',
    [(3, 4, 3, 3), (1, 5, 4, 2), (5, 3, 6, 4)]
)
def test_adapter_gradients(kind, n, frame_dim, labels, dim):
    rng = np.random.default_rng(3 + n)
    adapter = SpeechAdapter(
        kind, frame_dim=frame_dim, labels=labels, dim=dim, hidden=5,
        gate_hidden=2, dropout=0.0, random_dropout=0.0, rng=rng
    )
    if kind != 'random':
        adapter.ctc_weight.data = rng.normal(size=(frame_dim, labels))
        adapter.char_embedding.data = rng.normal(size=(labels, dim))
    rows = rng.normal(size=(n, frame_dim))
    target = rng.normal(size=(n, dim))
    assert parameter_gradient_error(adapter, rows, target) < 1e-5


def test_adapter_input_errors():
    adapter = SpeechAdapter('random', frame_dim=4, labels=3, dim=3, hidden=5)
    with pytest.raises(InsufficientDataError):
        adapter(np.zeros((0, 4)))


def test_from_head(head, encoder, vocab):
    config = AdapterConfig(name='frozen', kind='pretrained', train=False)
    adapter = SpeechAdapter.from_head('pretrained', head, encoder, config, np.random.default_rng(0))
    assert adapter.trainable_parameters() == []
    assert np.array_equal(adapter.ctc_weight.data, head.weight)
    k = head.index('a')
    assert np.array_equal(
        adapter.char_embedding.data[k],
        encoder.embedding.weight.data[vocab.character.content_id('a')]
    )
    config = AdapterConfig(name='dual', kind='dual', hidden=8, gate_hidden=4)
    adapter = SpeechAdapter.from_head('dual', head, encoder, config, np.random.default_rng(0))
    assert len(adapter.trainable_parameters()) == 8


def test_gain_sweep(corpus, vocab, head, encoder):
    """With increasing gain the pretrained adapter converges to the text
    path of the transcript.
    """
    config = AdapterConfig(name='pt', kind='pretrained', train=False, dropout=0.0)
    adapter = SpeechAdapter.from_head('pretrained', head, encoder, config, np.random.default_rng(0))
    utt = asr_utterances(corpus, 'aa-hi', 'dev', 1, 0, normalize_text)[0]
    tag_id = vocab.character.tag_id('aa-hi')
    c_text = encoder.encode(vocab.encode(utt.transcript, 'aa-hi', CHARACTER)).vector
    distances = list()
    for gain in [1.0, 10.0, 100.0]:
        rep = FrameSimulator(head, gain, 0.0, (1, 3), 0.3).compress(utt)
        assert len(rep) == len(utt.transcript)
        c_speech = encode_speech(rep.rows, adapter, encoder, tag_id).vector
        distances.append(np.linalg.norm(c_speech - c_text))
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] < 1e-2 * np.linalg.norm(c_text)


def test_assemble_input(vocab, encoder):
    tag_id = vocab.character.tag_id('aa-hi')
    seq = vocab.encode('abc', 'aa-hi', CHARACTER)
    rows = encoder.embedding.weight.data[seq.ids[1:-1]]
    with T.no_grad():
        x = assemble_input(rows, encoder, tag_id).data
        expected = encoder.embed(np.array(seq.ids)).data
    assert np.allclose(x, expected, rtol=0, atol=1e-12)


def test_train_and_save_adapter(tmpdir, corpus, vocab, head, encoder):
    utts = asr_utterances(corpus, 'aa-hi', 'train', 8, 0, normalize_text)
    dev_utts = asr_utterances(corpus, 'aa-hi', 'dev', None, 0, normalize_text)
    simulator = FrameSimulator(head, 8.0, 0.5, (1, 3), 0.3)
    teacher = BottleneckEncoder(len(vocab.subword), dim=16, layers=1, heads=2, ffn=32, dropout=0.0).eval()
    config = AdapterConfig(
        name='dual', kind='dual', hidden=8, gate_hidden=4, steps=4,
        batch_size=4, warmup_steps=2, dev_every=2, dev_pairs=2
    )
    adapter = SpeechAdapter.from_head('dual', head, encoder, config, np.random.default_rng(0))
    data = speech_data(adapter, simulator, utts, teacher, vocab)
    dev = speech_data(adapter, simulator, dev_utts, teacher, vocab)
    assert data.targets.shape == (len(data), 16)
    before = encoder.state_dict()
    adapter, manifest = train_adapter(
        adapter, encoder, vocab.character.tag_id('aa-hi'), data, dev, config, seed=0
    )
    assert manifest['trained']
    for name, value in encoder.state_dict().items():
        assert np.array_equal(value, before[name])
    save_adapter(adapter, str(tmpdir), 'aa-hi', 'aa-hi')
    assert read_registry(str(tmpdir)) == {'aa-hi': 'aa-hi'}
    loaded = load_adapter(str(tmpdir), 'aa-hi')
    for name, value in adapter.state_dict().items():
        assert np.array_equal(loaded.state_dict()[name], value)
    # Frozen pretrained adapters stay frozen after a reload.
    config = AdapterConfig(name='frozen', kind='pretrained', train=False)
    frozen = SpeechAdapter.from_head('pretrained', head, encoder, config, np.random.default_rng(0))
    assert frozen.trainable_parameters() == []
    save_adapter(frozen, str(tmpdir), 'frozen', 'bb-hi')
    loaded = load_adapter(str(tmpdir), 'frozen')
    assert loaded.trainable_parameters() == []
    assert np.array_equal(loaded.ctc_weight.data, head.weight)
    assert read_registry(str(tmpdir)) == {'aa-hi': 'aa-hi', 'bb-hi': 'frozen'}


class SingleCharacterSpans(object):
    def spans(self, text):
        return [(i, i + 1) for i in range(len(text))]


class NoSpans(object):
    def spans(self, text):
        return None


def test_subword_pool(corpus, vocab, head):
    utt = asr_utterances(corpus, 'aa-hi', 'dev', 1, 0, normalize_text)[0]
    text = utt.transcript
    labels = [head.index(c) for c in text]
    rows = np.random.default_rng(4).normal(size=(len(text), head.dim))
    rep = CompressedRepresentation(rows=rows, labels=labels)
    # One span per row keeps the rows.
    pooled, fallback = subword_pool(rep, head, SingleCharacterSpans())
    assert not fallback
    assert np.array_equal(pooled, rows)
    # Pooled rows are the means of the rows in their subword span.
    spans = vocab.spans(text)
    pooled, fallback = subword_pool(rep, head, vocab)
    assert not fallback
    assert pooled.shape == (len(spans), head.dim)
    assert len(spans) <= len(text)
    for row, (start, end) in zip(pooled, spans):
        assert np.allclose(row, rows[start:end].mean(axis=0), rtol=0, atol=1e-12)
    # Text without segmentation falls back to characters.
    pooled, fallback = subword_pool(rep, head, NoSpans())
    assert fallback
    assert np.array_equal(pooled, rows)
    adapter = SubwordPoolAdapter(head.dim, 8, hidden=4, head=head, vocab=NoSpans())
    assert np.array_equal(adapter.prepare(rep), rows)
    assert adapter.fallbacks == 1
    empty = CompressedRepresentation(rows=np.zeros((0, head.dim)))
    pooled, fallback = subword_pool(empty, head, vocab)
    assert pooled.shape == (0, head.dim)
    assert not fallback
