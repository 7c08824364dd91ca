# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Simulated acoustic front-end with language-specific CTC heads, and the
CTC-based compression of acoustic frame sequences.

A CTC head is a matrix W of shape (frame width, |B|) over the vocabulary B
of a language: the blank at index 0 followed by the space and the letters of
the language script. Acoustic frames for a transcript are generated from the
normalized head columns plus Gaussian noise. Every character is emitted for
a random number of frames. Blank frames separate repeated characters and are
inserted at random between other characters.
"""

from dataclasses import dataclass, field
from itertools import groupby

import logging

import numpy as np

from bottlelab.corpus import SPLIT_TRAIN
from bottlelab.error import AlphabetError, BottlelabError
from bottlelab.tokenizer import BLANK

import bottlelab.util as butil


logger = logging.getLogger(__name__)


"""Index of the blank label in every CTC head."""
BLANK_INDEX = 0


class CtcHead(object):
    """Language-specific CTC classification layer."""
    def __init__(self, language, chars, weight, vc_ids):
        """Initialize the head.

        Parameters
        ----------
        language: string
        chars: list(string)
            Surface forms of the non-blank labels (label k+1 is chars[k]).
        weight: numpy.ndarray
            Matrix of shape (frame width, len(chars) + 1).
        vc_ids: list(int)
            Identifier in the character vocabulary for each non-blank label.
        """
        if weight.shape[1] != len(chars) + 1 or len(vc_ids) != len(chars):
            raise BottlelabError('head shape does not match vocabulary')
        self.language = language
        self.chars = list(chars)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.vc_ids = list(vc_ids)
        self._index = {c: i + 1 for i, c in enumerate(self.chars)}

    @property
    def dim(self):
        return self.weight.shape[0]

    @property
    def labels(self):
        """Vocabulary of the head including the blank."""
        return [BLANK] + self.chars

    def __len__(self):
        return self.weight.shape[1]

    def index(self, char):
        """Label index of a character.

        Raises
        ------
        bottlelab.error.AlphabetError
        """
        if char not in self._index:
            raise AlphabetError(char)
        return self._index[char]

    def text(self, labels):
        return ''.join(self.chars[k - 1] for k in labels if k != BLANK_INDEX)


def create_head(spec, vocab, dim=48, skew=0.05, seed=0):
    """Create the CTC head for a language. Columns are orthonormal plus a
    small random perturbation, so that label separability is controlled by
    the frame gain and the noise level.

    Parameters
    ----------
    spec: bottlelab.corpus.LanguageSpec
    vocab: bottlelab.tokenizer.VocabPair
    dim: int, default=48
    skew: float, default=0.05
    seed: int, default=0

    Returns
    -------
    bottlelab.ctc.CtcHead

    Raises
    ------
    bottlelab.error.BottlelabError
    """
    chars = [' '] + spec.letters
    if dim < len(chars) + 1:
        raise BottlelabError('frame width {} too small for {} labels'.format(dim, len(chars) + 1))
    vc_ids = list()
    for c in chars:
        i = vocab.character.content_id(c)
        if i is None:
            raise AlphabetError(c)
        vc_ids.append(i)
    rng = butil.derive_rng(seed, 'ctc', spec.language)
    q, _ = np.linalg.qr(rng.normal(size=(dim, len(chars) + 1)))
    weight = q + skew * rng.normal(size=q.shape) / np.sqrt(dim)
    return CtcHead(spec.language, chars, weight, vc_ids)


@dataclass
class FrameRepresentation:
    frames: np.ndarray
    language: str
    transcript: str

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class CompressedRepresentation:
    """Compressed frames (one row per non-blank run) with the run labels and
    the (start, end) frame offsets of each run.
    """
    rows: np.ndarray
    labels: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def empty(self):
        return self.rows.shape[0] == 0


def simulate_frames(transcript, head, gain, noise_sd, dup_range, p_blank, rng):
    """Generate acoustic frames for a transcript. Each character emits a
    number of frames drawn uniformly from dup_range, every frame the scaled
    unit column of its label plus isotropic noise. A blank frame is always
    inserted between repeated characters and with probability p_blank
    between other characters.

    Parameters
    ----------
    transcript: string
    head: bottlelab.ctc.CtcHead
    gain: float
    noise_sd: float
    dup_range: (int, int)
        Inclusive range for the number of frames per character.
    p_blank: float
    rng: numpy.random.Generator

    Returns
    -------
    bottlelab.ctc.FrameRepresentation

    Raises
    ------
    bottlelab.error.AlphabetError
    """
    labels = [head.index(c) for c in transcript]
    units = head.weight / np.linalg.norm(head.weight, axis=0, keepdims=True)
    sequence = list()
    for i, k in enumerate(labels):
        if i > 0 and (k == labels[i - 1] or rng.random() < p_blank):
            sequence.append(BLANK_INDEX)
        sequence.extend([k] * int(rng.integers(dup_range[0], dup_range[1] + 1)))
    frames = np.zeros((len(sequence), head.dim))
    if sequence:
        frames = gain * units[:, sequence].T
        if noise_sd > 0:
            frames = frames + rng.normal(0.0, noise_sd, size=frames.shape)
    return FrameRepresentation(frames=frames, language=head.language, transcript=transcript)


def ctc_labels(frames, head):
    """Per-frame argmax labels. Ties go to the lowest label index.

    Parameters
    ----------
    frames: numpy.ndarray
    head: bottlelab.ctc.CtcHead

    Returns
    -------
    list(int)
    """
    frames = np.asarray(frames)
    if frames.shape[0] == 0:
        return list()
    if frames.shape[1] != head.dim:
        raise BottlelabError('frame width {} != {}'.format(frames.shape[1], head.dim))
    return [int(k) for k in np.argmax(frames @ head.weight, axis=1)]


def ctc_compress(frames, labels):
    """Average consecutive frames that share a label and drop blank runs.

    Parameters
    ----------
    frames: numpy.ndarray
        Matrix of shape (m, width).
    labels: list(int)
        Label for each frame.

    Returns
    -------
    bottlelab.ctc.CompressedRepresentation
    """
    frames = np.asarray(frames)
    if len(labels) != frames.shape[0]:
        raise BottlelabError('{} labels for {} frames'.format(len(labels), frames.shape[0]))
    rows, out_labels, runs = list(), list(), list()
    start = 0
    for label, group in groupby(labels):
        end = start + len(list(group))
        if label != BLANK_INDEX:
            rows.append(frames[start:end].mean(axis=0))
            out_labels.append(int(label))
            runs.append((start, end))
        start = end
    if not rows:
        logger.warning('all-blank utterance of %d frames', frames.shape[0])
        width = frames.shape[1] if frames.ndim == 2 else 0
        return CompressedRepresentation(rows=np.zeros((0, width)))
    return CompressedRepresentation(rows=np.stack(rows), labels=out_labels, runs=runs)


def collapse(labels):
    """Collapse repeated labels and drop blanks."""
    return [k for k, _ in groupby(labels) if k != BLANK_INDEX]


def edit_distance(a, b):
    """Levenshtein distance between two sequences."""
    prev = np.arange(len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j in range(1, len(b) + 1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            )
        prev = cur
    return int(prev[-1])


def character_error_rate(hypothesis, reference):
    if not reference:
        return 0.0 if not hypothesis else 1.0
    return edit_distance(hypothesis, reference) / float(len(reference))


def ctc_greedy_decode(frames, head, gold=None):
    """Greedy CTC decoding with the character error rate against the gold
    transcript (None if no gold transcript is given).

    Returns
    -------
    string, float
    """
    text = head.text(collapse(ctc_labels(frames, head)))
    cer = character_error_rate(text, gold) if gold is not None else None
    return text, cer


# -- Simulated ASR data -------------------------------------------------------

@dataclass
class AsrUtterance:
    """Simulated utterance. Frames are regenerated from the seed."""
    utt_id: str
    language: str
    transcript: str
    seed: int


class FrameSimulator(object):
    """Frame generator with fixed simulation parameters for one head."""
    def __init__(self, head, gain, noise_sd, dup_range, p_blank):
        self.head = head
        self.gain = gain
        self.noise_sd = noise_sd
        self.dup_range = tuple(dup_range)
        self.p_blank = p_blank

    def frames(self, utterance):
        """Frames for an utterance (deterministic per utterance seed).

        Returns
        -------
        bottlelab.ctc.FrameRepresentation
        """
        return simulate_frames(
            utterance.transcript,
            self.head,
            gain=self.gain,
            noise_sd=self.noise_sd,
            dup_range=self.dup_range,
            p_blank=self.p_blank,
            rng=butil.derive_rng(utterance.seed, 'frames')
        )

    def compress(self, utterance):
        rep = self.frames(utterance)
        return ctc_compress(rep.frames, ctc_labels(rep.frames, self.head))

    def cer(self, utterances):
        """Mean character error rate of greedy decoding."""
        if not utterances:
            return 0.0
        errors = list()
        for utt in utterances:
            rep = self.frames(utt)
            _, cer = ctc_greedy_decode(rep.frames, self.head, gold=utt.transcript)
            errors.append(cer)
        return float(np.mean(errors))


def calibrate_noise(head, utterances, gain, dup_range, p_blank, target_cer, iterations=12):
    """Find the noise level that yields the target character error rate by
    bisection (the error rate grows with the noise level).

    Returns
    -------
    float
    """
    low, high = 0.0, float(gain)
    while FrameSimulator(head, gain, high, dup_range, p_blank).cer(utterances) < target_cer:
        high *= 2.0
        if high > 100 * gain:
            break
    for _ in range(iterations):
        mid = (low + high) / 2.0
        cer = FrameSimulator(head, gain, mid, dup_range, p_blank).cer(utterances)
        if cer < target_cer:
            low = mid
        else:
            high = mid
    noise_sd = (low + high) / 2.0
    logger.info('calibrated noise sd %.4f for %s (target CER %.3f)', noise_sd, head.language, target_cer)
    return noise_sd


def asr_utterances(corpus, language, split, size, seed, transform):
    """Simulated utterances for the source sentences of a language. The
    transcript is the transformed (normalized) source sentence.

    Parameters
    ----------
    corpus: bottlelab.corpus.Corpus
    language: string
    split: string
    size: int or None
        Maximum number of utterances.
    seed: int
    transform: callable
        Function that maps a source sentence to its spoken transcript.

    Returns
    -------
    list(bottlelab.ctc.AsrUtterance)
    """
    pairs = corpus.pairs(language, split)
    if split == SPLIT_TRAIN and size is not None and size < len(pairs):
        rng = butil.derive_rng(seed, 'asr', language)
        pairs = [pairs[i] for i in sorted(rng.choice(len(pairs), size=size, replace=False))]
    elif size is not None:
        pairs = pairs[:size]
    utts = list()
    for i, pair in enumerate(pairs):
        utts.append(
            AsrUtterance(
                utt_id=pair.pair_id,
                language=language,
                transcript=transform(pair.source),
                seed=int(butil.derive_rng(seed, 'utterance', pair.pair_id).integers(2 ** 31))
            )
        )
    return utts


def write_asr(utterances, filename):
    """Write utterances as tab-separated lines (utterance id, language,
    transcript, seed).
    """
    butil.write_tsv(
        [[u.utt_id, u.language, u.transcript, u.seed] for u in utterances],
        filename
    )


def read_asr(filename):
    return [
        AsrUtterance(utt_id=r[0], language=r[1], transcript=r[2], seed=int(r[3]))
        for r in butil.read_tsv(filename)
    ]
