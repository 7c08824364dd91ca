# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for the bottleneck encoder, decoder, and teacher training."""

import numpy as np
import os
import pytest

from bottlelab.config import ModelConfig, TeacherConfig
from bottlelab.error import CheckpointError, DimensionError
from bottlelab.model import (
    BottleneckEncoder, Seq2Seq, decode_beam, decode_embeddings, decode_greedy,
    encode_texts, load_model, save_model, teacher_languages, train_teacher
)
from bottlelab.tests import tiny_corpus, tiny_vocab
from bottlelab.tokenizer import CHARACTER, EOS_ID, SUBWORD, pad_sequences

import bottlelab.tensor as T
import flowserv.core.util as util


MODEL = ModelConfig(dim=16, layers=1, heads=2, ffn=32, dropout=0.0)


@pytest.fixture
def corpus():
    return tiny_corpus()


@pytest.fixture
def vocab(corpus):
    return tiny_vocab(corpus)


def test_encoder_padding_invariance(vocab):
    """Embeddings do not depend on the padding of a batch."""
    encoder = BottleneckEncoder(len(vocab.subword), dim=16, layers=1, heads=2, ffn=32, dropout=0.0).eval()
    seqs = [vocab.encode('the cat', 'pvt'), vocab.encode('a dog runs far away', 'pvt')]
    ids, mask = pad_sequences(seqs)
    with T.no_grad():
        batch = encoder(ids, mask=mask).data
    single = encoder.encode(seqs[0]).vector
    assert batch.shape == (2, 16)
    assert np.allclose(batch[0], single, atol=1e-10)


def test_text_path_equivalence(vocab):
    """Assembling the embedding rows of a character sequence and encoding
    them reproduces the encoding of the sequence.
    """
    encoder = BottleneckEncoder(len(vocab.character), dim=16, layers=1, heads=2, ffn=32, dropout=0.0).eval()
    seq = vocab.encode('the cat', 'aa-hi', CHARACTER)
    with T.no_grad():
        x = encoder.embed(np.array(seq.ids))
        vec = encoder.encode_from_embeddings(x).data
    assert np.array_equal(vec, encoder.encode(seq).vector)
    with pytest.raises(DimensionError):
        encoder.encode_from_embeddings(np.zeros((3, 8)))


def test_decoder_loss_and_decoding(vocab):
    net = Seq2Seq.create(len(vocab.subword), MODEL, np.random.default_rng(0))
    sources = [vocab.encode('the cat', 'pvt'), vocab.encode('a dog', 'pvt')]
    loss = net.loss(sources, sources)
    assert np.isfinite(loss.item())
    loss.backward()
    assert net.decoder.output.weight.grad is not None
    net.eval()
    emb = encode_texts(net.encoder, vocab, ['the cat', 'a dog'], 'pvt', SUBWORD)
    tag = vocab.subword.tag_id('pvt')
    hyps = decode_greedy(net.decoder, emb, [tag, tag], max_len=5)
    assert len(hyps) == 2
    for h in hyps:
        assert len(h.ids) <= 5
        assert EOS_ID not in h.ids
    beam = decode_beam(net.decoder, emb[0], tag, beam=3, max_len=5)
    assert len(beam.ids) <= 5
    texts = decode_embeddings(net.decoder, vocab, emb, 'pvt', beam=1, max_len=5)
    assert len(texts) == 2


def test_model_files(tmpdir, vocab):
    net = Seq2Seq.create(len(vocab.subword), MODEL, np.random.default_rng(0))
    save_model(net, str(tmpdir), 'teacher', vocab=vocab)
    loaded = load_model(str(tmpdir), 'teacher', vocab=vocab)
    assert np.array_equal(loaded.encoder.embedding.weight.data, net.encoder.embedding.weight.data)
    save_model(net.encoder, str(tmpdir), 'encoder')
    encoder = load_model(str(tmpdir), 'encoder')
    assert isinstance(encoder, BottleneckEncoder)
    with pytest.raises(CheckpointError):
        load_model(str(tmpdir), 'unknown')
    # Models are bound to the vocabulary they were trained with.
    filename = os.path.join(str(tmpdir), 'teacher.json')
    doc = util.read_object(filename=filename)
    assert doc['vocab_hash'] == vocab.fingerprint
    doc['vocab_hash'] = '0' * 64
    util.write_object(obj=doc, filename=filename)
    with pytest.raises(CheckpointError):
        load_model(str(tmpdir), 'teacher', vocab=vocab)
    assert load_model(str(tmpdir), 'teacher') is not None
    with pytest.raises(CheckpointError):
        load_model(str(tmpdir), 'encoder', vocab=vocab)


def test_train_teacher(tmpdir, corpus, vocab):
    config = TeacherConfig(steps=4, batch_size=4, warmup_steps=2, dev_every=2, dev_pairs=4)
    logfile = os.path.join(str(tmpdir), 'teacher.csv')
    net, manifest = train_teacher(corpus, vocab, MODEL, config, seed=0, logfile=logfile)
    assert 'aa-nw' not in manifest
    assert set(manifest) == set(teacher_languages(corpus))
    assert manifest['aa-lo'] == 10
    with open(logfile) as f:
        lines = f.read().splitlines()
    assert lines[0].startswith('# config:')
    assert lines[1] == 'step,phase,loss,lr'
    assert len([line for line in lines if ',dev,' in line]) == 2
    assert not net.training


class TableDecoder(object):
    """Decoder whose next-token distribution depends on the last token of
    the prefix only.
    """
    def __init__(self, table):
        self.table = table

    def __call__(self, prefixes, memory):
        logits = np.log([self.table[int(p[-1])] for p in prefixes])
        return T.Tensor(logits[:, None, :])


def test_beam_search_finds_best_completion():
    eps = 1e-6
    decoder = TableDecoder({
        5: [eps, eps, eps, 0.55, 0.45, eps],
        3: [eps, eps, 0.4, 0.35, 0.25, eps],
        4: [eps, eps, 0.9, 0.05, 0.05, eps]
    })
    memory = np.zeros((1, 2))
    greedy = decode_greedy(decoder, memory, [5], max_len=4)[0]
    assert greedy.ids == [3]
    assert greedy.log_prob == pytest.approx(np.log(0.22), abs=1e-4)
    single = decode_beam(decoder, memory[0], 5, beam=1, max_len=4)
    assert single.ids == greedy.ids
    assert single.log_prob == pytest.approx(greedy.log_prob)
    best = decode_beam(decoder, memory[0], 5, beam=2, max_len=4)
    assert best.ids == [4]
    assert best.log_prob == pytest.approx(np.log(0.405), abs=1e-4)
    assert not best.truncated


def test_beam_width_one_is_greedy(vocab):
    net = Seq2Seq.create(len(vocab.subword), MODEL, np.random.default_rng(1)).eval()
    texts = ['the cat', 'a dog', 'the big dog runs']
    emb = encode_texts(net.encoder, vocab, texts, 'pvt', SUBWORD)
    tag = vocab.subword.tag_id('pvt')
    greedy = decode_greedy(net.decoder, emb, [tag] * 3, max_len=8)
    for i in range(3):
        beam = decode_beam(net.decoder, emb[i], tag, beam=1, max_len=8)
        assert beam.ids == greedy[i].ids
        assert beam.log_prob == pytest.approx(greedy[i].log_prob)
        assert beam.truncated == greedy[i].truncated
