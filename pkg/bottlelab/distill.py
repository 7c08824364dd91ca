# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Distillation of a student encoder into the embedding space of the frozen
teacher encoder. The student is trained with mean squared error against
teacher embeddings of the source sentence (reconstruction), of its pivot
translation (translation), or of the midpoint of both (interpolation).

Inputs of the student can be augmented to look like speech recognition
output: normalization removes casing and punctuation, noise deletes,
replaces and inserts single characters.
"""

from collections import Counter
from dataclasses import asdict

import logging
import re
import string

import numpy as np

from bottlelab.config import (
    DIRECTION_BOTH, OBJECTIVE_INTERPOL, OBJECTIVE_RECON, OBJECTIVE_RECON_TRANS,
    OBJECTIVE_TRANS
)
from bottlelab.corpus import SPLIT_DEV, TIER_NEW, temperature_sample
from bottlelab.error import BottlelabError, DimensionError
from bottlelab.model import BottleneckEncoder, encode_texts, teacher_languages
from bottlelab.tokenizer import (
    CLASS_FAMILY, CLASS_LANGUAGE, SUBWORD, pad_sequences, substitute_family_token,
    tag_token
)
from bottlelab.training import Trainer

import bottlelab.tensor as T
import bottlelab.util as butil


logger = logging.getLogger(__name__)


"""Training phases."""
PHASE_PRETRAIN = 'pretrain'
PHASE_TRAIN = 'train'

"""Characters that are removed by normalization."""
PUNCTUATION = set(string.punctuation)


# -- Objectives ---------------------------------------------------------------

def loss_recon(c_x, e_x):
    """Reconstruction objective: distance of the student embedding to the
    teacher embedding of the same sentence.
    """
    return T.mse(c_x, e_x)


def loss_trans(c_x, e_y):
    """Translation objective: distance of the student embedding to the
    teacher embedding of the translation.
    """
    return T.mse(c_x, e_y)


def loss_interpol(c_x, e_x, e_y):
    """Interpolation objective: distance of the student embedding to the
    midpoint of the teacher embeddings of sentence and translation.

    Raises
    ------
    bottlelab.error.DimensionError
    """
    e_x, e_y = _array(e_x), _array(e_y)
    if e_x.shape != e_y.shape:
        raise DimensionError('loss_interpol', e_x.shape, e_y.shape)
    return T.mse(c_x, (e_x + e_y) / 2.0)


def objective_loss(objective, c_x, e_x, e_y):
    """Loss for the named objective. The combination of reconstruction and
    translation weights both terms equally.

    Parameters
    ----------
    objective: string
    c_x: bottlelab.tensor.Tensor
    e_x: numpy.ndarray
    e_y: numpy.ndarray

    Returns
    -------
    bottlelab.tensor.Tensor
    """
    if objective == OBJECTIVE_RECON:
        return loss_recon(c_x, e_x)
    elif objective == OBJECTIVE_TRANS:
        return loss_trans(c_x, e_y)
    elif objective == OBJECTIVE_RECON_TRANS:
        return 0.5 * loss_recon(c_x, e_x) + 0.5 * loss_trans(c_x, e_y)
    elif objective == OBJECTIVE_INTERPOL:
        return loss_interpol(c_x, e_x, e_y)
    raise BottlelabError("unknown objective '{}'".format(objective))


# -- Augmentation -------------------------------------------------------------

def normalize_text(text):
    """Lowercase, remove punctuation and collapse whitespace."""
    text = ''.join(c for c in text.lower() if c not in PUNCTUATION)
    return re.sub(r'\s+', ' ', text).strip()


def augment_normalize(text, p_norm, rng):
    """Normalize text with probability p_norm.

    Parameters
    ----------
    text: string
    p_norm: float
    rng: numpy.random.Generator

    Returns
    -------
    string
    """
    if rng.random() < p_norm:
        return normalize_text(text)
    return text


class CharDistribution(object):
    """Empirical distribution of the non-space characters of a language."""
    def __init__(self, texts):
        counts = Counter(c for t in texts for c in t if c != ' ')
        if not counts:
            raise BottlelabError('no characters for distribution')
        self.chars = sorted(counts)
        total = float(sum(counts.values()))
        self.probs = np.array([counts[c] / total for c in self.chars])

    def sample(self, rng):
        return self.chars[rng.choice(len(self.chars), p=self.probs)]


def noise_text(text, p_delete, p_replace, p_insert, distribution, rng):
    """Independently for every character: delete it, replace it, or insert
    a character after it. Replacement and inserted characters are drawn from
    the character distribution of the language.

    Returns
    -------
    string, int
        Noised text and number of edits.
    """
    out = list()
    edits = 0
    for c in text:
        if rng.random() < p_delete:
            edits += 1
        else:
            if rng.random() < p_replace:
                c = distribution.sample(rng)
                edits += 1
            out.append(c)
        if rng.random() < p_insert:
            out.append(distribution.sample(rng))
            edits += 1
    return ''.join(out), edits


def augment_noise(text, config, distribution, rng):
    """Apply character noise with probability p_noise of the given student
    configuration.

    Parameters
    ----------
    text: string
    config: bottlelab.config.StudentConfig
    distribution: bottlelab.distill.CharDistribution
    rng: numpy.random.Generator

    Returns
    -------
    string
    """
    if rng.random() < config.p_noise:
        text, _ = noise_text(
            text,
            p_delete=config.p_delete,
            p_replace=config.p_replace,
            p_insert=config.p_insert,
            distribution=distribution,
            rng=rng
        )
    return text


# -- Student ------------------------------------------------------------------

def init_student(teacher, vocab, config, seed, known=None):
    """Create the student encoder. Students are initialized from the teacher
    encoder. The embedding table of a character student keeps the teacher
    rows of the character vocabulary (a prefix of the subword vocabulary).
    Family tokens start at the mean of the tag rows of their (known)
    languages.

    Parameters
    ----------
    teacher: bottlelab.model.BottleneckEncoder
    vocab: bottlelab.tokenizer.VocabPair
    config: bottlelab.config.StudentConfig
    seed: int
    known: list(string), optional
        Languages whose tag rows are averaged. Defaults to all languages.

    Returns
    -------
    bottlelab.model.BottleneckEncoder
    """
    table = vocab.vocabulary(config.granularity)
    sizes = dict(teacher.sizes)
    sizes['vocab_size'] = len(table)
    rng = butil.derive_rng(seed, 'student', config.name, 'init')
    student = BottleneckEncoder(rng=rng, **sizes)
    if config.init_from_teacher:
        state = teacher.state_dict()
        state['embedding.weight'] = state['embedding.weight'][:len(table)].copy()
        student.load_state_dict(state)
    weight = student.embedding.weight.data
    known = None if known is None else set(tag_token(lang) for lang in known)
    for fam_token, lang_tokens in _family_members(table).items():
        rows = [table.token_id(t) for t in lang_tokens if known is None or t in known]
        if not rows:
            continue
        weight[table.token_id(fam_token)] = weight[rows].mean(axis=0)
    return student


def student_languages(corpus, config):
    """Training languages of a student."""
    if config.languages is not None:
        languages = list(config.languages)
        for lang in languages:
            corpus.spec(lang)
    else:
        languages = corpus.languages()
    if config.zero_shot:
        languages = [lang for lang in languages if corpus.spec(lang).tier != TIER_NEW]
    if not languages:
        raise BottlelabError("no training languages for student '{}'".format(config.name))
    return languages


class TeacherTargets(object):
    """Memoized teacher embeddings of clean sentences. Teacher embeddings of
    languages of tier 'new' are replaced by the embedding of the pivot
    translation because the teacher has never seen these languages.
    """
    def __init__(self, teacher, vocab, corpus):
        self.teacher = teacher
        self.vocab = vocab
        self.corpus = corpus
        self._cache = dict()

    def __len__(self):
        return len(self._cache)

    def embed(self, items):
        """Teacher embeddings for a list of (text, language) pairs.

        Returns
        -------
        numpy.ndarray
        """
        missing = list()
        for item in items:
            if item not in self._cache and item not in missing:
                missing.append(item)
        if missing:
            vecs = encode_texts(
                self.teacher,
                self.vocab,
                [t for t, _ in missing],
                [lang for _, lang in missing],
                SUBWORD
            )
            for item, vec in zip(missing, vecs):
                self._cache[item] = vec
        return np.stack([self._cache[item] for item in items])

    def pair(self, pair):
        """Teacher targets (e_x, e_y) for a parallel pair."""
        e_y = (pair.target, self.corpus.pivot)
        if self.corpus.spec(pair.language).tier == TIER_NEW:
            return e_y, e_y
        return (pair.source, pair.language), e_y


class Example(object):
    """Single training example: input text and tag with the keys of its
    teacher targets.
    """
    def __init__(self, text, language, key_x, key_y):
        self.text = text
        self.language = language
        self.key_x = key_x
        self.key_y = key_y


def train_student(teacher, corpus, vocab, config, seed, logfile=None):
    """Distill a student encoder from the frozen teacher encoder. An optional
    reconstruction phase (pivot sentences and each language's own sentences)
    precedes training with the configured objective. Languages are drawn by
    temperature sampling. Student inputs are augmented and their language
    tags replaced by family tags at the configured rates. The parameters of
    the teacher are never modified.

    Parameters
    ----------
    teacher: bottlelab.model.BottleneckEncoder
    corpus: bottlelab.corpus.Corpus
    vocab: bottlelab.tokenizer.VocabPair
    config: bottlelab.config.StudentConfig
    seed: int
    logfile: string, optional

    Returns
    -------
    bottlelab.model.BottleneckEncoder, dict
        Student encoder and training manifest.

    Raises
    ------
    bottlelab.error.TrainingDivergedError
    """
    teacher.freeze()
    teacher.eval()
    student = init_student(teacher, vocab, config, seed, known=teacher_languages(corpus))
    table = vocab.vocabulary(config.granularity)
    languages = student_languages(corpus, config)
    pairs = [corpus.pairs(lang) for lang in languages]
    targets = TeacherTargets(teacher, vocab, corpus)
    distributions = {
        lang: CharDistribution([p.source for p in pairs[k]])
        for k, lang in enumerate(languages)
    }
    trainer = Trainer(
        'student:{}'.format(config.name),
        student,
        config,
        logfile=logfile,
        config=asdict(config)
    )
    batch_rng = butil.derive_rng(seed, 'student', config.name, 'batches')
    aug_rng = butil.derive_rng(seed, 'student', config.name, 'augment')
    family_rng = butil.derive_rng(seed, 'student', config.name, 'family')
    dev = _dev_examples(corpus, targets, languages, config.dev_pairs, seed)
    pretrain_steps = int(round(config.pretrain_fraction * config.steps)) if config.pretrain else 0
    counts = [len(p) for p in pairs]
    for step in range(1, config.steps + 1):
        phase = PHASE_PRETRAIN if step <= pretrain_steps else PHASE_TRAIN
        student.train()
        examples = list()
        for k in temperature_sample(counts, config.temperature, batch_rng, config.batch_size):
            pair = pairs[k][batch_rng.integers(len(pairs[k]))]
            examples.append(_example(pair, phase, config, corpus, targets, batch_rng))
        augment = phase == PHASE_TRAIN or config.augment_pretrain
        seqs = list()
        for ex in examples:
            text = ex.text
            if augment:
                text = augment_normalize(text, config.p_norm, aug_rng)
                dist = distributions.get(ex.language)
                if dist is not None:
                    text = augment_noise(text, config, dist, aug_rng)
            seq = vocab.encode(text, ex.language, config.granularity)
            seqs.append(substitute_family_token(seq, table, config.p_family, family_rng))
        objective = OBJECTIVE_RECON if phase == PHASE_PRETRAIN else config.objective
        loss = _batch_loss(student, seqs, examples, targets, objective)
        trainer.update(step, loss, phase=phase)
        if trainer.is_dev_step(step):
            student.eval()
            seqs = [vocab.encode(ex.text, ex.language, config.granularity) for ex in dev]
            with T.no_grad():
                dev_loss = _batch_loss(student, seqs, dev, targets, config.objective).item()
            trainer.evaluate(step, dev_loss)
    student = trainer.finish()
    manifest = {lang: n for lang, n in zip(languages, counts)}
    logger.info(
        "student '%s' trained on %d languages (%d teacher embeddings)",
        config.name,
        len(languages),
        len(targets)
    )
    return student, manifest


# -- Helper Methods -----------------------------------------------------------

def _array(value):
    return value.data if isinstance(value, T.Tensor) else np.asarray(value, dtype=T.DTYPE)


def _batch_loss(student, seqs, examples, targets, objective):
    ids, mask = pad_sequences(seqs)
    c_x = student(ids, mask=mask)
    e_x = targets.embed([ex.key_x for ex in examples])
    e_y = targets.embed([ex.key_y for ex in examples])
    return objective_loss(objective, c_x, e_x, e_y)


def _dev_examples(corpus, targets, languages, size, seed):
    rng = butil.derive_rng(seed, 'student', 'dev')
    examples = list()
    for i in range(size):
        lang = languages[i % len(languages)]
        dev = corpus.pairs(lang, SPLIT_DEV)
        pair = dev[rng.integers(len(dev))]
        key_x, key_y = targets.pair(pair)
        examples.append(Example(pair.source, lang, key_x, key_y))
    return examples


def _example(pair, phase, config, corpus, targets, rng):
    """Training example for a pair. In the pretraining phase the example
    reconstructs either the pivot sentence or the source sentence. In the
    main phase the direction may be reversed (pivot input, source language
    translation) if both directions are configured.
    """
    key_x, key_y = targets.pair(pair)
    pivot = corpus.pivot
    if phase == PHASE_PRETRAIN:
        if rng.random() < 0.5:
            return Example(pair.target, pivot, key_y, key_y)
        return Example(pair.source, pair.language, key_x, key_x)
    if config.direction == DIRECTION_BOTH and rng.random() < 0.5:
        return Example(pair.target, pivot, key_y, key_x)
    return Example(pair.source, pair.language, key_x, key_y)


def _family_members(table):
    """Mapping from family tag token to the tag tokens of its languages."""
    members = dict()
    for token, cls in zip(table.tokens, table.classes):
        if cls == CLASS_LANGUAGE and token in table.families:
            members.setdefault(table.families[token], list()).append(token)
    return {
        fam: langs for fam, langs in members.items()
        if fam in table and table.classes[table.token_id(fam)] == CLASS_FAMILY
    }

