# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Bottleneck encoder and decoder. The encoder mean-pools its final hidden
states into a single sentence embedding. The decoder cross-attends to that
embedding only, i.e., its memory has length one regardless of the length of
the source sentence. The same classes are used for the subword teacher and
for the character (or subword) students.
"""

from dataclasses import asdict, dataclass

import logging
import os

import numpy as np

from bottlelab.error import BottlelabError, CheckpointError, DimensionError
from bottlelab.checkpoint import load_checkpoint, save_checkpoint
from bottlelab.corpus import SPLIT_DEV, TIER_NEW, temperature_sample
from bottlelab.tokenizer import EOS_ID, PAD_ID, SUBWORD, pad_sequences
from bottlelab.training import Trainer

import bottlelab.nn as nn
import bottlelab.tensor as T
import bottlelab.util as butil
import flowserv.core.util as util


logger = logging.getLogger(__name__)


"""Provenance tags for sentence embeddings."""
TEACHER = 'teacher'
STUDENT = 'student'
SPEECH = 'speech'


@dataclass
class SentenceEmbedding:
    """Fixed-size sentence embedding with the kind of encoder that produced
    it.
    """
    vector: np.ndarray
    provenance: str = TEACHER

    @property
    def dim(self):
        return self.vector.shape[-1]


@dataclass
class Hypothesis:
    """Decoder output. The truncated flag is set if no hypothesis reached
    EOS within the length limit.
    """
    ids: list
    log_prob: float
    truncated: bool = False


class BottleneckEncoder(nn.Module):
    """Transformer encoder with a mean-pooled output."""
    def __init__(self, vocab_size, dim=64, layers=2, heads=4, ffn=256, dropout=0.1, rng=None):
        """Initialize the encoder parameters.

        Parameters
        ----------
        vocab_size: int
        dim: int, default=64
        layers: int, default=2
        heads: int, default=4
        ffn: int, default=256
        dropout: float, default=0.1
        rng: numpy.random.Generator, optional
        """
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = dict(
            vocab_size=vocab_size,
            dim=dim,
            layers=layers,
            heads=heads,
            ffn=ffn,
            dropout=dropout
        )
        self.dim = dim
        self.embedding = nn.Embedding(vocab_size, dim, rng)
        self.layers = [nn.EncoderLayer(dim, heads, ffn, dropout, rng) for _ in range(layers)]
        self.norm = nn.LayerNorm(dim)

    def forward(self, ids, mask=None):
        return self.encode_from_embeddings(self.embed(ids), mask=mask)

    def embed(self, ids):
        """Token embeddings plus sinusoidal positions.

        Parameters
        ----------
        ids: numpy.ndarray
            Token identifier of shape (batch, length) or (length,).

        Returns
        -------
        bottlelab.tensor.Tensor
        """
        ids = np.asarray(ids, dtype=np.int64)
        x = self.embedding(ids)
        return x + nn.sinusoidal_positions(ids.shape[-1], self.dim)

    def encode_from_embeddings(self, x, mask=None):
        """Run the transformer layers over input rows that already include
        the tag row, the EOS row, and positional encodings, and mean-pool the
        normalized final states.

        Parameters
        ----------
        x: bottlelab.tensor.Tensor
            Input rows of shape (batch, length, dim) or (length, dim).
        mask: numpy.ndarray, optional
            Padding mask of shape (batch, length).

        Returns
        -------
        bottlelab.tensor.Tensor
            Embeddings of shape (batch, dim) or (dim,).

        Raises
        ------
        bottlelab.error.DimensionError
        """
        x = T.astensor(x)
        if x.shape[-1] != self.dim:
            raise DimensionError('encode', x.shape, (self.dim,))
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        attn_mask = nn.padding_mask(mask)
        for layer in self.layers:
            x = layer(x, mask=attn_mask)
        out = T.mean_pool(self.norm(x), mask=mask)
        if squeeze:
            out = out.reshape(self.dim)
        return out

    def encode(self, seq, provenance=STUDENT):
        """Embedding for a single token sequence (evaluation mode, no graph).

        Parameters
        ----------
        seq: bottlelab.tokenizer.TokenSeq
        provenance: string, default='student'

        Returns
        -------
        bottlelab.model.SentenceEmbedding
        """
        if len(seq) == 0:
            raise BottlelabError('empty token sequence')
        with T.no_grad():
            vec = self.forward(np.asarray(seq.ids, dtype=np.int64))
        return SentenceEmbedding(vector=vec.data.copy(), provenance=provenance)


class BottleneckDecoder(nn.Module):
    """Transformer decoder that cross-attends to a single memory vector."""
    def __init__(self, vocab_size, dim=64, layers=2, heads=4, ffn=256, dropout=0.1, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.embedding = nn.Embedding(vocab_size, dim, rng)
        self.layers = [nn.DecoderLayer(dim, heads, ffn, dropout, rng) for _ in range(layers)]
        self.norm = nn.LayerNorm(dim)
        self.output = nn.Linear(dim, vocab_size, rng)

    def forward(self, ids, memory):
        """Next-token logits for every prefix position.

        Parameters
        ----------
        ids: numpy.ndarray
            Decoder input of shape (batch, length). The first token is the
            target language tag.
        memory: bottlelab.tensor.Tensor
            Sentence embeddings of shape (batch, dim).

        Returns
        -------
        bottlelab.tensor.Tensor
            Logits of shape (batch, length, vocabulary size).
        """
        ids = np.asarray(ids, dtype=np.int64)
        memory = T.astensor(memory)
        if memory.shape != (ids.shape[0], self.dim):
            raise DimensionError('decode', memory.shape, (ids.shape[0], self.dim))
        memory = memory.reshape(ids.shape[0], 1, self.dim)
        x = self.embedding(ids) + nn.sinusoidal_positions(ids.shape[1], self.dim)
        mask = nn.causal_mask(ids.shape[1])
        for layer in self.layers:
            x = layer(x, memory, mask=mask)
        return self.output(self.norm(x))


class Seq2Seq(nn.Module):
    """Encoder-decoder pair that communicates through the sentence
    embedding.
    """
    def __init__(self, encoder, decoder):
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def create(cls, vocab_size, model, rng):
        """Create a randomly initialized model.

        Parameters
        ----------
        vocab_size: int
        model: bottlelab.config.ModelConfig
        rng: numpy.random.Generator

        Returns
        -------
        bottlelab.model.Seq2Seq
        """
        args = dict(
            dim=model.dim,
            layers=model.layers,
            heads=model.heads,
            ffn=model.ffn,
            dropout=model.dropout,
            rng=rng
        )
        return cls(
            encoder=BottleneckEncoder(vocab_size, **args),
            decoder=BottleneckDecoder(vocab_size, **args)
        )

    def loss(self, sources, targets):
        """Cross-entropy of the target sequences given the bottleneck
        embeddings of the source sequences.

        Parameters
        ----------
        sources: list(bottlelab.tokenizer.TokenSeq)
        targets: list(bottlelab.tokenizer.TokenSeq)

        Returns
        -------
        bottlelab.tensor.Tensor
        """
        src, mask = pad_sequences(sources)
        emb = self.encoder(src, mask=mask)
        return decoder_loss(self.decoder, emb, targets)


def decoder_loss(decoder, embeddings, targets):
    """Teacher-forced cross-entropy of target sequences [tag, y..., EOS]
    given sentence embeddings.
    """
    tgt, _ = pad_sequences(targets)
    logits = decoder(tgt[:, :-1], embeddings)
    return T.cross_entropy(logits, tgt[:, 1:], ignore_index=PAD_ID)


def banned_tokens(vocab):
    """Identifier of tokens that are never generated: all special tokens
    except EOS.

    Returns
    -------
    numpy.ndarray
    """
    return np.array(
        [i for i in range(len(vocab)) if vocab.is_special(i) and i != EOS_ID],
        dtype=np.int64
    )


def _next_log_probs(decoder, prefixes, memory, banned):
    with T.no_grad():
        logits = decoder(np.asarray(prefixes, dtype=np.int64), memory).data[:, -1, :]
    logits = logits.copy()
    if banned is not None and len(banned):
        logits[:, banned] = -np.inf
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def decode_greedy(decoder, embeddings, tag_ids, max_len, banned=None):
    """Batched greedy decoding. Ties are broken toward the lowest token
    identifier.

    Parameters
    ----------
    decoder: bottlelab.model.BottleneckDecoder
    embeddings: numpy.ndarray
        Sentence embeddings of shape (batch, dim).
    tag_ids: list(int)
        Target language tag for each sentence.
    max_len: int
    banned: numpy.ndarray, optional

    Returns
    -------
    list(bottlelab.model.Hypothesis)
    """
    embeddings = np.asarray(embeddings)
    batch = embeddings.shape[0]
    prefixes = np.asarray(tag_ids, dtype=np.int64).reshape(batch, 1)
    scores = np.zeros(batch)
    done = np.zeros(batch, dtype=bool)
    outputs = [list() for _ in range(batch)]
    for _ in range(max_len):
        logp = _next_log_probs(decoder, prefixes, embeddings, banned)
        best = np.argmax(logp, axis=1)
        for i in range(batch):
            if done[i]:
                continue
            scores[i] += logp[i, best[i]]
            if best[i] == EOS_ID:
                done[i] = True
            else:
                outputs[i].append(int(best[i]))
        if done.all():
            break
        prefixes = np.concatenate([prefixes, best[:, None]], axis=1)
    results = list()
    for i in range(batch):
        if not done[i]:
            logger.warning('greedy decode reached max length %d', max_len)
        results.append(Hypothesis(ids=outputs[i], log_prob=float(scores[i]), truncated=not done[i]))
    return results


def decode_beam(decoder, embedding, tag_id, beam=5, max_len=64, banned=None):
    """Beam search from a single sentence embedding without length
    normalization. In each step the beam best extensions over all alive
    hypotheses are kept. Extensions with EOS move to the completed list.
    Search stops when no alive hypothesis can beat the best completed one.
    With beam width 1 the result equals greedy decoding.

    Parameters
    ----------
    decoder: bottlelab.model.BottleneckDecoder
    embedding: numpy.ndarray or bottlelab.model.SentenceEmbedding
    tag_id: int
        Target language tag (first decoder input).
    beam: int, default=5
    max_len: int, default=64
    banned: numpy.ndarray, optional

    Returns
    -------
    bottlelab.model.Hypothesis
    """
    if beam < 1:
        raise BottlelabError('beam width must be positive')
    if isinstance(embedding, SentenceEmbedding):
        embedding = embedding.vector
    embedding = np.asarray(embedding).reshape(1, -1)
    alive = [([tag_id], 0.0)]
    completed = list()
    for _ in range(max_len):
        prefixes = [p for p, _ in alive]
        memory = np.repeat(embedding, len(alive), axis=0)
        logp = _next_log_probs(decoder, prefixes, memory, banned)
        candidates = list()
        for i, (_, score) in enumerate(alive):
            top = np.argsort(-logp[i], kind='stable')[:beam]
            for tok in top:
                if np.isfinite(logp[i, tok]):
                    candidates.append((score + logp[i, tok], i, int(tok)))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_alive = list()
        for score, i, tok in candidates[:beam]:
            prefix = alive[i][0]
            if tok == EOS_ID:
                completed.append((prefix[1:], score))
            else:
                next_alive.append((prefix + [tok], score))
        alive = next_alive
        if not alive:
            break
        if completed and max(s for _, s in completed) >= max(s for _, s in alive):
            break
    if completed:
        ids, score = completed[0]
        for c_ids, c_score in completed[1:]:
            if c_score > score:
                ids, score = c_ids, c_score
        return Hypothesis(ids=list(ids), log_prob=float(score))
    logger.warning('beam search reached max length %d without EOS', max_len)
    ids, score = alive[0]
    return Hypothesis(ids=list(ids[1:]), log_prob=float(score), truncated=True)


def decode_embeddings(decoder, vocab, embeddings, tag, beam=5, max_len=64):
    """Translate sentence embeddings into text of the target language.

    Parameters
    ----------
    decoder: bottlelab.model.BottleneckDecoder
    vocab: bottlelab.tokenizer.VocabPair
    embeddings: numpy.ndarray
        Array of shape (n, dim).
    tag: string
        Target language identifier.
    beam: int, default=5
    max_len: int, default=64

    Returns
    -------
    list(string)
    """
    decoder.eval()
    tag_id = vocab.subword.tag_id(tag)
    banned = banned_tokens(vocab.subword)
    embeddings = np.asarray(embeddings)
    if beam == 1:
        hyps = list()
        for start in range(0, embeddings.shape[0], 64):
            chunk = embeddings[start:start + 64]
            hyps.extend(decode_greedy(decoder, chunk, [tag_id] * chunk.shape[0], max_len, banned))
    else:
        hyps = [
            decode_beam(decoder, e, tag_id, beam=beam, max_len=max_len, banned=banned)
            for e in embeddings
        ]
    return [vocab.decode(h.ids, SUBWORD) for h in hyps]


def encode_texts(encoder, vocab, texts, tags, granularity, batch_size=64):
    """Sentence embeddings for a list of texts (evaluation mode).

    Parameters
    ----------
    encoder: bottlelab.model.BottleneckEncoder
    vocab: bottlelab.tokenizer.VocabPair
    texts: list(string)
    tags: list(string) or string
        Language identifier or family tag per text.
    granularity: string
    batch_size: int, default=64

    Returns
    -------
    numpy.ndarray
    """
    if isinstance(tags, str):
        tags = [tags] * len(texts)
    encoder.eval()
    out = np.zeros((len(texts), encoder.dim))
    with T.no_grad():
        for start in range(0, len(texts), batch_size):
            seqs = [
                vocab.encode(t, g, granularity)
                for t, g in zip(texts[start:start + batch_size], tags[start:start + batch_size])
            ]
            ids, mask = pad_sequences(seqs)
            out[start:start + len(seqs)] = encoder(ids, mask=mask).data
    return out


# -- Teacher training ---------------------------------------------------------

def teacher_languages(corpus):
    """Languages the teacher is trained on. Languages of tier 'new' are
    excluded.
    """
    return [lang for lang in corpus.languages() if corpus.spec(lang).tier != TIER_NEW]


def train_teacher(corpus, vocab, model, config, seed, logfile=None):
    """Train the subword teacher as a multilingual sequence-to-sequence model
    through the bottleneck. Each batch row draws a language by temperature
    sampling, a training pair of that language, and a direction (source to
    pivot or pivot to source). Pivot pairs train autoencoding.

    Parameters
    ----------
    corpus: bottlelab.corpus.Corpus
    vocab: bottlelab.tokenizer.VocabPair
    model: bottlelab.config.ModelConfig
    config: bottlelab.config.TeacherConfig
    seed: int
    logfile: string, optional

    Returns
    -------
    bottlelab.model.Seq2Seq, dict
        Trained model and training manifest (pair counts per language).

    Raises
    ------
    bottlelab.error.TrainingDivergedError
    """
    languages = teacher_languages(corpus)
    pairs = [corpus.pairs(lang) for lang in languages]
    net = Seq2Seq.create(len(vocab.subword), model, butil.derive_rng(seed, 'teacher', 'init'))
    trainer = Trainer('teacher', net, config, logfile=logfile, config=asdict(config))
    rng = butil.derive_rng(seed, 'teacher', 'batches')
    dev_src, dev_tgt = _teacher_dev_set(corpus, vocab, languages, config.dev_pairs, seed)
    both = config.directions == 'both'
    for step in range(1, config.steps + 1):
        net.train()
        draws = temperature_sample([len(p) for p in pairs], config.temperature, rng, config.batch_size)
        sources, targets = list(), list()
        for k in draws:
            lang = languages[k]
            pair = pairs[k][rng.integers(len(pairs[k]))]
            if both and rng.random() < 0.5:
                sources.append(vocab.encode(pair.target, corpus.pivot, SUBWORD))
                targets.append(vocab.encode(pair.source, lang, SUBWORD))
            else:
                sources.append(vocab.encode(pair.source, lang, SUBWORD))
                targets.append(vocab.encode(pair.target, corpus.pivot, SUBWORD))
        trainer.update(step, net.loss(sources, targets))
        if trainer.is_dev_step(step):
            net.eval()
            with T.no_grad():
                dev_loss = net.loss(dev_src, dev_tgt).item()
            trainer.evaluate(step, dev_loss)
    net = trainer.finish()
    manifest = {lang: len(p) for lang, p in zip(languages, pairs)}
    return net, manifest


def _teacher_dev_set(corpus, vocab, languages, size, seed):
    rng = butil.derive_rng(seed, 'teacher', 'dev')
    sources, targets = list(), list()
    for i in range(size):
        lang = languages[i % len(languages)]
        dev = corpus.pairs(lang, SPLIT_DEV)
        pair = dev[rng.integers(len(dev))]
        sources.append(vocab.encode(pair.source, lang, SUBWORD))
        targets.append(vocab.encode(pair.target, corpus.pivot, SUBWORD))
    return sources, targets


# -- Persistence --------------------------------------------------------------

def save_model(module, dirname, name, vocab=None):
    """Write the parameters of a module and its sizes to the given
    directory (files <name>.npz and <name>.json). The fingerprint of the
    vocabulary is stored with the sizes if given.
    """
    util.create_dir(dirname)
    save_checkpoint(module.state_dict(), os.path.join(dirname, name + '.npz'))
    encoder = module.encoder if isinstance(module, Seq2Seq) else module
    doc = dict(encoder.sizes)
    doc['kind'] = 'seq2seq' if isinstance(module, Seq2Seq) else 'encoder'
    if vocab is not None:
        doc['vocab_hash'] = vocab.fingerprint
    util.write_object(obj=doc, filename=os.path.join(dirname, name + '.json'))


def load_model(dirname, name, vocab=None):
    """Read a model that was written by save_model. If a vocabulary is
    given it has to match the vocabulary the model was saved with.

    Returns
    -------
    bottlelab.model.Seq2Seq or bottlelab.model.BottleneckEncoder

    Raises
    ------
    bottlelab.error.CheckpointError
    """
    filename = os.path.join(dirname, name + '.json')
    if not os.path.isfile(filename):
        raise CheckpointError("model '{}' not found".format(filename))
    doc = dict(util.read_object(filename=filename))
    kind = doc.pop('kind')
    vocab_hash = doc.pop('vocab_hash', None)
    if vocab is not None and vocab_hash != vocab.fingerprint:
        raise CheckpointError("model '{}' does not match the vocabulary".format(name))
    if kind == 'seq2seq':
        vocab_size = doc.pop('vocab_size')
        module = Seq2Seq(
            encoder=BottleneckEncoder(vocab_size, **doc),
            decoder=BottleneckDecoder(vocab_size, **doc)
        )
    else:
        module = BottleneckEncoder(**doc)
    module.load_state_dict(load_checkpoint(os.path.join(dirname, name + '.npz')))
    return module.eval()