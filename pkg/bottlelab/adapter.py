# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Cross-modal adapters that map compressed acoustic representations into
the input embedding space of a (frozen) text encoder.

The pretrained adapter makes a soft prediction over the CTC vocabulary of a
language and returns the matching mixture of character embedding rows of
the student. The random adapter is a two-layer network without bias. The
dual adapter mixes both branches with a per-position gate. The subword
pooling adapter averages compressed rows over the subword spans of the
greedy CTC transcript and feeds the subword teacher encoder.
"""

from dataclasses import asdict, dataclass

import logging
import os

import numpy as np

from bottlelab.config import (
    ADAPTER_DUAL, ADAPTER_PRETRAINED, ADAPTER_RANDOM, ADAPTER_SUBWORD
)
from bottlelab.ctc import CompressedRepresentation
from bottlelab.error import BottlelabError, CheckpointError, InsufficientDataError
from bottlelab.checkpoint import load_checkpoint, save_checkpoint
from bottlelab.model import encode_texts
from bottlelab.tokenizer import BLANK_ID, EOS_ID, SUBWORD
from bottlelab.training import Trainer

import bottlelab.nn as nn
import bottlelab.tensor as T
import bottlelab.util as butil
import flowserv.core.util as util


logger = logging.getLogger(__name__)


"""Name of the registry file that maps languages to adapter checkpoints."""
REGISTRY_FILE = 'adapters.json'


@dataclass
class SpeechEmbedding:
    vector: np.ndarray
    utt_id: str = None

    @property
    def dim(self):
        return self.vector.shape[-1]


class SpeechAdapter(nn.Module):
    """Pretrained, random, or dual adapter for one language."""
    def __init__(
        self, kind, frame_dim, labels, dim, hidden=256, gate_hidden=64,
        dropout=0.1, random_dropout=0.3, train_pretrained=True, rng=None
    ):
        """Initialize the adapter parameters. The borrowed matrices of the
        pretrained branch are zero until they are set by from_head.

        Parameters
        ----------
        kind: string
            One of 'pretrained', 'random', or 'dual'.
        frame_dim: int
            Width of the acoustic frames.
        labels: int
            Size of the CTC vocabulary (including blank).
        dim: int
            Width of the encoder input.
        hidden: int, default=256
            Inner width of the random branch.
        gate_hidden: int, default=64
        dropout: float, default=0.1
            Dropout on the output of the pretrained branch.
        random_dropout: float, default=0.3
            Dropout on the output of the random branch.
        train_pretrained: bool, default=True
            If False the borrowed matrices of the pretrained branch are
            frozen.
        rng: numpy.random.Generator, optional
        """
        if kind not in (ADAPTER_PRETRAINED, ADAPTER_RANDOM, ADAPTER_DUAL):
            raise BottlelabError("unknown adapter kind '{}'".format(kind))
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kind = kind
        self.sizes = dict(
            kind=kind,
            frame_dim=frame_dim,
            labels=labels,
            dim=dim,
            hidden=hidden,
            gate_hidden=gate_hidden,
            dropout=dropout,
            random_dropout=random_dropout,
            train_pretrained=train_pretrained
        )
        self.frame_dim = frame_dim
        self.dim = dim
        if kind in (ADAPTER_PRETRAINED, ADAPTER_DUAL):
            self.ctc_weight = nn.Parameter(np.zeros((frame_dim, labels)))
            self.char_embedding = nn.Parameter(np.zeros((labels, dim)))
            self.ctc_weight.requires_grad = train_pretrained
            self.char_embedding.requires_grad = train_pretrained
            self.pt_dropout = nn.Dropout(dropout, rng)
        if kind in (ADAPTER_RANDOM, ADAPTER_DUAL):
            self.u_in = nn.Linear(frame_dim, hidden, rng, bias=False)
            self.u_out = nn.Linear(hidden, dim, rng, bias=False)
            self.rnd_dropout = nn.Dropout(random_dropout, rng)
        if kind == ADAPTER_DUAL:
            self.gate_inner = nn.Linear(2 * dim, gate_hidden, rng)
            self.gate_outer = nn.Linear(gate_hidden, 1, rng)

    @classmethod
    def from_head(cls, kind, head, encoder, config, rng):
        """Create an adapter for a CTC head that feeds the given encoder. The
        pretrained branch copies the head matrix and the encoder embedding
        rows of the head vocabulary (the blank row for the blank label). The
        copies are frozen if the configuration disables training.

        Parameters
        ----------
        kind: string
        head: bottlelab.ctc.CtcHead
        encoder: bottlelab.model.BottleneckEncoder
        config: bottlelab.config.AdapterConfig
        rng: numpy.random.Generator

        Returns
        -------
        bottlelab.adapter.SpeechAdapter
        """
        adapter = cls(
            kind=kind,
            frame_dim=head.dim,
            labels=len(head),
            dim=encoder.dim,
            hidden=config.hidden,
            gate_hidden=config.gate_hidden,
            dropout=config.dropout,
            random_dropout=config.random_dropout,
            train_pretrained=config.train,
            rng=rng
        )
        if kind in (ADAPTER_PRETRAINED, ADAPTER_DUAL):
            rows = [BLANK_ID] + list(head.vc_ids)
            adapter.ctc_weight.data = head.weight.copy()
            adapter.char_embedding.data = encoder.embedding.weight.data[rows].copy()
        return adapter

    def forward(self, rows):
        """Map compressed rows to encoder input rows.

        Parameters
        ----------
        rows: numpy.ndarray
            Compressed representation of shape (n, frame width).

        Returns
        -------
        bottlelab.tensor.Tensor
            Matrix of shape (n, dim).

        Raises
        ------
        bottlelab.error.InsufficientDataError
        """
        if self.kind == ADAPTER_PRETRAINED:
            return self.pt_dropout(self.pretrained(rows))
        elif self.kind == ADAPTER_RANDOM:
            return self.rnd_dropout(self.random(rows))
        e_pt = self.pt_dropout(self.pretrained(rows))
        e_rnd = self.rnd_dropout(self.random(rows))
        v = self.gate(e_pt, e_rnd)
        return v * e_pt + (1.0 - v) * e_rnd

    def gate(self, e_pt, e_rnd):
        """Per-position mixing weights in (0, 1) of shape (n, 1)."""
        x = T.concat([e_pt, e_rnd], axis=-1)
        return T.sigmoid(self.gate_outer(T.relu(self.gate_inner(x))))

    def prepare(self, rep):
        """Encoder-side input rows for a compressed representation."""
        return rep.rows

    def pretrained(self, rows):
        """Soft prediction over the CTC vocabulary: softmax(A W) Emb."""
        a = _check_rows(rows, self.frame_dim)
        return T.matmul(self.weights(a), self.char_embedding)

    def random(self, rows):
        a = _check_rows(rows, self.frame_dim)
        return self.u_out(T.relu(self.u_in(a)))

    def weights(self, rows):
        """Softmax weights over the CTC vocabulary for each row."""
        return T.softmax(T.matmul(_check_rows(rows, self.frame_dim), self.ctc_weight), axis=-1)


class SubwordPoolAdapter(nn.Module):
    """Random adapter over compressed rows that are mean-pooled within the
    subword spans of the greedy CTC transcript. Transcripts that cannot be
    segmented fall back to one span per character.
    """
    def __init__(self, frame_dim, dim, hidden=256, dropout=0.3, rng=None, head=None, vocab=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kind = ADAPTER_SUBWORD
        self.sizes = dict(
            kind=ADAPTER_SUBWORD,
            frame_dim=frame_dim,
            dim=dim,
            hidden=hidden,
            dropout=dropout
        )
        self.frame_dim = frame_dim
        self.dim = dim
        self.head = head
        self.vocab = vocab
        self.u_in = nn.Linear(frame_dim, hidden, rng, bias=False)
        self.u_out = nn.Linear(hidden, dim, rng, bias=False)
        self.rnd_dropout = nn.Dropout(dropout, rng)
        self.fallbacks = 0

    def forward(self, rows):
        a = _check_rows(rows, self.frame_dim)
        return self.rnd_dropout(self.u_out(T.relu(self.u_in(a))))

    def pool(self, rep):
        """Mean-pool compressed rows over subword spans.

        Parameters
        ----------
        rep: bottlelab.ctc.CompressedRepresentation

        Returns
        -------
        numpy.ndarray, bool
            Pooled rows and a flag that is True if the character fallback
            was used.
        """
        return subword_pool(rep, self.head, self.vocab)

    def prepare(self, rep):
        rows, fallback = self.pool(rep)
        if fallback:
            self.fallbacks += 1
        return rows


def subword_pool(rep, head, vocab):
    """Group compressed rows by the subword spans of their greedy-decoded
    label string and average each group.

    Parameters
    ----------
    rep: bottlelab.ctc.CompressedRepresentation
    head: bottlelab.ctc.CtcHead
    vocab: bottlelab.tokenizer.VocabPair

    Returns
    -------
    numpy.ndarray, bool
    """
    if rep.empty:
        return rep.rows, False
    text = head.text(rep.labels)
    spans = vocab.spans(text)
    fallback = spans is None
    if fallback:
        logger.warning("no subword segmentation for '%s'; using characters", text)
        spans = [(i, i + 1) for i in range(len(text))]
    rows = np.stack([rep.rows[s:e].mean(axis=0) for s, e in spans])
    return rows, fallback


def assemble_input(rows, encoder, tag_id):
    """Prepend the tag embedding, append the EOS embedding, and add the
    positional encodings over the full length.

    Parameters
    ----------
    rows: bottlelab.tensor.Tensor
        Adapter output of shape (n, dim).
    encoder: bottlelab.model.BottleneckEncoder
    tag_id: int

    Returns
    -------
    bottlelab.tensor.Tensor
        Matrix of shape (n + 2, dim).
    """
    rows = T.astensor(rows)
    ends = encoder.embedding(np.array([tag_id, EOS_ID], dtype=np.int64))
    x = T.concat([ends[0:1], rows, ends[1:2]], axis=0)
    return x + nn.sinusoidal_positions(x.shape[0], encoder.dim)


def encode_speech(rows, adapter, encoder, tag_id, utt_id=None):
    """Speech embedding for the compressed rows of one utterance.

    Parameters
    ----------
    rows: numpy.ndarray
        Output of adapter.prepare.
    adapter: bottlelab.adapter.SpeechAdapter or SubwordPoolAdapter
    encoder: bottlelab.model.BottleneckEncoder
    tag_id: int
    utt_id: string, optional

    Returns
    -------
    bottlelab.adapter.SpeechEmbedding
    """
    adapter.eval()
    encoder.eval()
    with T.no_grad():
        x = assemble_input(adapter(rows), encoder, tag_id)
        vec = encoder.encode_from_embeddings(x)
    return SpeechEmbedding(vector=vec.data.copy(), utt_id=utt_id)


def speech_batch(adapter, encoder, inputs, tag_id):
    """Sentence embeddings for a batch of adapter inputs. Assembled inputs
    are padded to equal length.

    Returns
    -------
    bottlelab.tensor.Tensor
    """
    assembled = [assemble_input(adapter(rows), encoder, tag_id) for rows in inputs]
    length = max(x.shape[0] for x in assembled)
    mask = np.zeros((len(assembled), length))
    padded = list()
    for i, x in enumerate(assembled):
        mask[i, :x.shape[0]] = 1.0
        if x.shape[0] < length:
            x = T.concat([x, np.zeros((length - x.shape[0], encoder.dim))], axis=0)
        padded.append(x)
    return encoder.encode_from_embeddings(T.stack(padded), mask=mask)


@dataclass
class SpeechData:
    """Adapter inputs for a set of utterances with the teacher targets.
    Utterances whose compressed representation is empty are skipped.
    """
    utt_ids: list
    transcripts: list
    inputs: list
    targets: np.ndarray
    skipped: int = 0

    def __len__(self):
        return len(self.inputs)


def speech_data(adapter, simulator, utterances, teacher, vocab):
    """Compress the simulated frames of utterances and compute the teacher
    embeddings of their (clean) transcripts.

    Parameters
    ----------
    adapter: bottlelab.adapter.SpeechAdapter or SubwordPoolAdapter
    simulator: bottlelab.ctc.FrameSimulator
    utterances: list(bottlelab.ctc.AsrUtterance)
    teacher: bottlelab.model.BottleneckEncoder
    vocab: bottlelab.tokenizer.VocabPair

    Returns
    -------
    bottlelab.adapter.SpeechData
    """
    utt_ids, transcripts, inputs = list(), list(), list()
    skipped = 0
    for utt in utterances:
        rep = simulator.compress(utt)
        if rep.empty:
            skipped += 1
            continue
        utt_ids.append(utt.utt_id)
        transcripts.append(utt.transcript)
        inputs.append(adapter.prepare(rep))
    if not inputs:
        raise InsufficientDataError('no usable utterances for {}'.format(simulator.head.language))
    targets = encode_texts(teacher, vocab, transcripts, simulator.head.language, SUBWORD)
    return SpeechData(
        utt_ids=utt_ids,
        transcripts=transcripts,
        inputs=inputs,
        targets=targets,
        skipped=skipped
    )


def train_adapter(adapter, encoder, tag_id, data, dev, config, seed, logfile=None):
    """Minimize the distance between speech embeddings and the teacher
    embeddings of the transcripts. Only adapter parameters are updated; the
    encoder is frozen. A pretrained adapter with training disabled is
    returned as is.

    Parameters
    ----------
    adapter: bottlelab.adapter.SpeechAdapter or SubwordPoolAdapter
    encoder: bottlelab.model.BottleneckEncoder
        Student encoder (or the teacher encoder for subword pooling).
    tag_id: int
        Language tag of the encoder vocabulary.
    data: bottlelab.adapter.SpeechData
    dev: bottlelab.adapter.SpeechData
    config: bottlelab.config.AdapterConfig
    seed: int
    logfile: string, optional

    Returns
    -------
    bottlelab.adapter.SpeechAdapter or SubwordPoolAdapter, dict

    Raises
    ------
    bottlelab.error.TrainingDivergedError
    """
    encoder.freeze()
    encoder.eval()
    manifest = {'utterances': len(data), 'skipped': data.skipped, 'trained': False}
    if not adapter.trainable_parameters():
        logger.info("adapter '%s' is not trained", config.name)
        return adapter.eval(), manifest
    trainer = Trainer(
        'adapter:{}'.format(config.name),
        adapter,
        config,
        logfile=logfile,
        config=asdict(config)
    )
    rng = butil.derive_rng(seed, 'adapter', config.name, 'batches')
    for step in range(1, config.steps + 1):
        adapter.train()
        batch = rng.integers(len(data), size=config.batch_size)
        c_z = speech_batch(adapter, encoder, [data.inputs[i] for i in batch], tag_id)
        trainer.update(step, T.mse(c_z, data.targets[batch]))
        if trainer.is_dev_step(step):
            adapter.eval()
            with T.no_grad():
                dev_loss = adapter_loss(adapter, encoder, tag_id, dev)
            trainer.evaluate(step, dev_loss)
    manifest['trained'] = True
    return trainer.finish(), manifest


def adapter_loss(adapter, encoder, tag_id, data, batch_size=64):
    """Mean squared error of speech embeddings over a data set."""
    total = 0.0
    with T.no_grad():
        for start in range(0, len(data), batch_size):
            inputs = data.inputs[start:start + batch_size]
            c_z = speech_batch(adapter, encoder, inputs, tag_id)
            total += T.mse(c_z, data.targets[start:start + len(inputs)]).item() * len(inputs)
    return total / max(len(data), 1)


def speech_embeddings(adapter, encoder, tag_id, inputs, batch_size=64):
    """Speech embeddings for a list of adapter inputs.

    Returns
    -------
    numpy.ndarray
    """
    adapter.eval()
    encoder.eval()
    out = np.zeros((len(inputs), encoder.dim))
    with T.no_grad():
        for start in range(0, len(inputs), batch_size):
            chunk = inputs[start:start + batch_size]
            out[start:start + len(chunk)] = speech_batch(adapter, encoder, chunk, tag_id).data
    return out


# -- Persistence --------------------------------------------------------------

def save_adapter(adapter, dirname, name, language):
    """Write adapter parameters and sizes and register the checkpoint for
    the language in the registry file of the directory.
    """
    util.create_dir(dirname)
    save_checkpoint(adapter.state_dict(), os.path.join(dirname, name + '.npz'))
    util.write_object(obj=adapter.sizes, filename=os.path.join(dirname, name + '.json'))
    registry = read_registry(dirname)
    registry[language] = name
    util.write_object(obj=registry, filename=os.path.join(dirname, REGISTRY_FILE))


def read_registry(dirname):
    filename = os.path.join(dirname, REGISTRY_FILE)
    if not os.path.isfile(filename):
        return dict()
    return dict(util.read_object(filename=filename))


def load_adapter(dirname, name, head=None, vocab=None):
    """Read an adapter that was written by save_adapter. Subword pooling
    adapters need the CTC head and the vocabulary.

    Raises
    ------
    bottlelab.error.CheckpointError
    """
    filename = os.path.join(dirname, name + '.json')
    if not os.path.isfile(filename):
        raise CheckpointError("adapter '{}' not found".format(filename))
    sizes = dict(util.read_object(filename=filename))
    kind = sizes.pop('kind')
    if kind == ADAPTER_SUBWORD:
        adapter = SubwordPoolAdapter(head=head, vocab=vocab, **sizes)
    else:
        adapter = SpeechAdapter(kind=kind, **sizes)
    adapter.load_state_dict(load_checkpoint(os.path.join(dirname, name + '.npz')))
    return adapter.eval()


# -- Helper Methods -----------------------------------------------------------

def _check_rows(rows, width):
    if isinstance(rows, CompressedRepresentation):
        rows = rows.rows
    rows = T.astensor(rows)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise InsufficientDataError('empty acoustic representation')
    if rows.shape[1] != width:
        raise BottlelabError('frame width {} != {}'.format(rows.shape[1], width))
    return rows
