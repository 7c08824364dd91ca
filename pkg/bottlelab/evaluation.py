# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Measurements for text and speech encoders: similarity-search retrieval
error against hard negatives, translation quality through the teacher
decoder (character n-gram F-score and exact match), decoding from
interpolated embeddings, and the efficiency of the bottleneck decoder.
"""

from collections import Counter
from dataclasses import dataclass, field

import logging
import time

import numpy as np

from bottlelab.adapter import speech_embeddings
from bottlelab.corpus import (
    ANTONYMS, NOUNS, NUMBERS, SPLIT_TEST, TIER_HIGH, TIER_LOW, TIER_MED,
    derive_language
)
from bottlelab.ctc import ctc_greedy_decode
from bottlelab.distill import normalize_text
from bottlelab.error import InsufficientDataError
from bottlelab.model import decode_embeddings, encode_texts
from bottlelab.tokenizer import (
    CHARACTER, EOS_ID, SUBWORD, TokenSeq, family_tag, pad_sequences
)

import bottlelab.tensor as T
import bottlelab.util as butil


logger = logging.getLogger(__name__)


"""Label of the retrieval rule in reports."""
RULE_COSINE_NN = 'cosine-nn'

"""Aggregate group over all languages of the low, med, and high tiers."""
GROUP_ALL = 'all'

"""Column order of the report files."""
QUALITY_COLUMNS = ['model', 'language', 'group', 'chrf', 'exact', 'retrieval_error', 'pool_size', 'rule']
INTERPOLATION_SCORES = ['emb1', 'emb2', 'avg', 'avg_minus_emb1', 'avg_minus_emb2']
INTERPOLATION_COLUMNS = ['cell'] + INTERPOLATION_SCORES + ['pairs']
EFFICIENCY_COLUMNS = ['model', 'sentences', 'tokens', 'time', 'token_ratio', 'time_ratio']
BOTTLENECK_COLUMNS = ['source_length', 'output_length', 'decoder_flops', 'decode_time']
SPEECH_COLUMNS = [
    'adapter', 'language', 'utterances', 'chrf', 'exact', 'transcript_error',
    'pivot_error', 'cascade_chrf', 'cer', 'pool_size', 'rule'
]


# -- Hard negatives -----------------------------------------------------------

_ANTONYM = dict(ANTONYMS + [(b, a) for a, b in ANTONYMS])
_PUNCT = '.,?!'


def perturb_sentence(sentence, rng):
    """Minimal edit of a pivot sentence: swap two adjacent words, change a
    number word, replace an adjective by its antonym, or replace a noun.
    Punctuation stays in place.

    Parameters
    ----------
    sentence: string
    rng: numpy.random.Generator

    Returns
    -------
    string
    """
    words = sentence.split(' ')
    cores = [w.rstrip(_PUNCT) for w in words]
    suffixes = [w[len(c):] for w, c in zip(words, cores)]
    options = list()
    if len(words) > 1:
        options.append('swap')
    if any(c in NUMBERS for c in cores):
        options.append('number')
    if any(c in _ANTONYM for c in cores):
        options.append('antonym')
    if any(_noun(c) is not None for c in cores):
        options.append('noun')
    op = options[rng.integers(len(options))]
    if op == 'swap':
        i = int(rng.integers(len(words) - 1))
        cores[i], cores[i + 1] = cores[i + 1], cores[i]
    elif op == 'number':
        i = _pick(cores, lambda c: c in NUMBERS, rng)
        cores[i] = _other(NUMBERS, cores[i], rng)
    elif op == 'antonym':
        i = _pick(cores, lambda c: c in _ANTONYM, rng)
        cores[i] = _ANTONYM[cores[i]]
    else:
        i = _pick(cores, lambda c: _noun(c) is not None, rng)
        noun, plural = _noun(cores[i])
        cores[i] = _other(NOUNS, noun, rng) + ('s' if plural else '')
    return ' '.join(c + s for c, s in zip(cores, suffixes))


def hard_negatives(references, size, seed, exclude=None):
    """Generate distinct perturbations of the reference sentences that are
    not equal to any reference (or excluded sentence).

    Parameters
    ----------
    references: list(string)
    size: int
    seed: int
    exclude: iterable(string), optional

    Returns
    -------
    list(string)
    """
    if not references or size <= 0:
        return list()
    rng = butil.derive_rng(seed, 'negatives')
    blocked = set(references) | set(exclude if exclude is not None else [])
    negatives = list()
    seen = set()
    attempts = 0
    while len(negatives) < size and attempts < 20 * size:
        source = references[attempts % len(references)]
        attempts += 1
        sentence = perturb_sentence(source, rng)
        if rng.random() < 0.3:
            sentence = perturb_sentence(sentence, rng)
        if sentence in blocked or sentence in seen:
            continue
        seen.add(sentence)
        negatives.append(sentence)
    if len(negatives) < size:
        logger.warning('generated %d of %d hard negatives', len(negatives), size)
    return negatives


# -- Retrieval ----------------------------------------------------------------

def cosine_similarities(queries, candidates):
    queries = _normalize_rows(queries)
    candidates = _normalize_rows(candidates)
    return queries @ candidates.T


def xsim_error_rate(sources, targets, gold=None, negatives=None):
    """Percentage of source embeddings whose nearest candidate by cosine
    similarity is not their gold target. Candidates are the targets followed
    by the negatives. Ties go to the earlier candidate.

    Parameters
    ----------
    sources: numpy.ndarray
        Matrix of shape (n, dim).
    targets: numpy.ndarray
        Matrix of shape (k, dim).
    gold: list(int), optional
        Index of the gold target for each source (default: identity).
    negatives: numpy.ndarray, optional

    Returns
    -------
    float

    Raises
    ------
    bottlelab.error.InsufficientDataError
    """
    sources = np.asarray(sources, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if sources.shape[0] == 0 or targets.shape[0] == 0:
        raise InsufficientDataError('empty retrieval set')
    gold = np.arange(sources.shape[0]) if gold is None else np.asarray(gold)
    if gold.shape[0] != sources.shape[0]:
        raise InsufficientDataError('{} gold targets for {} sources'.format(gold.shape[0], sources.shape[0]))
    candidates = targets
    if negatives is not None and len(negatives):
        candidates = np.concatenate([targets, np.asarray(negatives, dtype=np.float64)], axis=0)
    nearest = np.argmax(cosine_similarities(sources, candidates), axis=1)
    return 100.0 * float(np.mean(nearest != gold))


@dataclass
class RetrievalReport:
    """Retrieval error (percent) per language."""
    errors: dict = field(default_factory=dict)
    pool_size: int = 0
    rule: str = RULE_COSINE_NN


# -- Translation quality ------------------------------------------------------

def ngram_counts(text, n):
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def chrf_like(hypothesis, reference, n_max=6, beta=2.0):
    """Character n-gram F-score in [0, 100]. Whitespace is removed. The
    F-score of each order from 1 to n_max is averaged over the orders for
    which the reference has n-grams.

    Parameters
    ----------
    hypothesis: string
    reference: string
    n_max: int, default=6
    beta: float, default=2.0

    Returns
    -------
    float
    """
    hyp = ''.join(hypothesis.split())
    ref = ''.join(reference.split())
    if not ref:
        return 100.0 if not hyp else 0.0
    scores = list()
    for n in range(1, n_max + 1):
        ref_counts = ngram_counts(ref, n)
        if not ref_counts:
            break
        hyp_counts = ngram_counts(hyp, n)
        matches = sum((hyp_counts & ref_counts).values())
        if matches == 0:
            scores.append(0.0)
            continue
        p = matches / sum(hyp_counts.values())
        r = matches / sum(ref_counts.values())
        b2 = beta * beta
        scores.append((1 + b2) * p * r / (b2 * p + r))
    return 100.0 * float(np.mean(scores))


def exact_match(hypothesis, reference):
    return float(hypothesis.strip() == reference.strip())


def group_means(values, groups):
    """Unweighted means of per-language values for each group.

    Parameters
    ----------
    values: dict
        Mapping from language to value.
    groups: dict
        Mapping from language to a list of group names.

    Returns
    -------
    dict
    """
    members = dict()
    for lang, value in values.items():
        for g in groups.get(lang, []):
            members.setdefault(g, list()).append(value)
    return {g: float(np.mean(v)) for g, v in sorted(members.items())}


@dataclass
class QualityReport:
    """Translation quality and retrieval error of one model per language
    with aggregates per tier group and per family.
    """
    model: str
    chrf: dict = field(default_factory=dict)
    exact: dict = field(default_factory=dict)
    retrieval: RetrievalReport = field(default_factory=RetrievalReport)
    groups: dict = field(default_factory=dict)

    def aggregates(self):
        """Aggregates for the chrf, exact match, and retrieval columns.

        Returns
        -------
        dict(string: dict)
        """
        return {
            'chrf': group_means(self.chrf, self.groups),
            'exact': group_means(self.exact, self.groups),
            'retrieval_error': group_means(self.retrieval.errors, self.groups)
        }

    def rows(self):
        rows = list()
        languages = sorted(set(self.chrf) | set(self.retrieval.errors))
        for lang in languages:
            rows.append({
                'model': self.model,
                'language': lang,
                'group': '',
                'chrf': self.chrf.get(lang),
                'exact': self.exact.get(lang),
                'retrieval_error': self.retrieval.errors.get(lang),
                'pool_size': self.retrieval.pool_size,
                'rule': self.retrieval.rule
            })
        agg = self.aggregates()
        names = sorted(set(agg['chrf']) | set(agg['retrieval_error']))
        for g in names:
            rows.append({
                'model': self.model,
                'language': '',
                'group': g,
                'chrf': agg['chrf'].get(g),
                'exact': agg['exact'].get(g),
                'retrieval_error': agg['retrieval_error'].get(g),
                'pool_size': self.retrieval.pool_size,
                'rule': self.retrieval.rule
            })
        return rows


def language_groups(corpus):
    """Report groups of every non-pivot language: its tier, the combined
    group of the low, med, and high tiers, and its family.

    Returns
    -------
    dict
    """
    groups = dict()
    for lang in corpus.languages(include_pivot=False):
        spec = corpus.spec(lang)
        names = [spec.tier]
        if spec.tier in (TIER_LOW, TIER_MED, TIER_HIGH):
            names.append(GROUP_ALL)
        names.append('family:' + spec.family)
        groups[lang] = names
    return groups


class EvaluationSet(object):
    """Test sentences and hard negatives that are shared by all models of a
    run. Negatives are perturbed pivot sentences and their translations into
    each language.
    """
    def __init__(self, corpus, config, seed):
        """Initialize the evaluation set.

        Parameters
        ----------
        corpus: bottlelab.corpus.Corpus
        config: bottlelab.config.EvaluationConfig
        seed: int
        """
        self.corpus = corpus
        self.config = config
        self.split = config.split
        self.languages = corpus.languages(include_pivot=False)
        self.pairs = {
            lang: corpus.pairs(lang, self.split)[:config.max_sentences]
            for lang in self.languages
        }
        references = [p.target for p in corpus.pairs(corpus.pivot, self.split)]
        self.negatives = hard_negatives(
            references,
            config.negatives,
            seed,
            exclude=[p.target for p in corpus.pairs(corpus.pivot, SPLIT_TEST)]
        )
        self._cache = dict()

    def negatives_in(self, language):
        """Hard negatives translated into a language (pivot if None)."""
        if language is None or language == self.corpus.pivot:
            return self.negatives
        spec = self.corpus.spec(language)
        return [derive_language(s, spec) for s in self.negatives]

    def teacher_pivot(self, teacher, vocab):
        """Teacher embeddings of the pivot negatives (memoized)."""
        if 'pivot' not in self._cache:
            self._cache['pivot'] = encode_texts(
                teacher,
                vocab,
                self.negatives,
                self.corpus.pivot,
                SUBWORD
            ) if self.negatives else np.zeros((0, teacher.dim))
        return self._cache['pivot']


def encoding_tag(corpus, language, trained):
    """Tag for encoding a language: the language tag if the model was trained
    on the language, else the family tag.
    """
    if trained is None or language in trained:
        return language
    return family_tag(corpus.spec(language).family)


def evaluate_text_model(name, encoder, granularity, teacher, vocab, evalset, trained=None):
    """Retrieval error and translation quality of a text encoder. Source
    sentences are retrieved among the teacher embeddings of their pivot
    translations and the hard negatives. Translations are decoded into the
    pivot language by the teacher decoder.

    Parameters
    ----------
    name: string
    encoder: bottlelab.model.BottleneckEncoder
    granularity: string
    teacher: bottlelab.model.Seq2Seq
    vocab: bottlelab.tokenizer.VocabPair
    evalset: bottlelab.evaluation.EvaluationSet
    trained: list(string), optional
        Languages the encoder was trained on (others use family tags).

    Returns
    -------
    bottlelab.evaluation.QualityReport
    """
    corpus = evalset.corpus
    config = evalset.config
    negatives = evalset.teacher_pivot(teacher.encoder, vocab)
    report = QualityReport(
        model=name,
        retrieval=RetrievalReport(pool_size=negatives.shape[0]),
        groups=language_groups(corpus)
    )
    for lang in evalset.languages:
        pairs = evalset.pairs[lang]
        if not pairs:
            continue
        tag = encoding_tag(corpus, lang, trained)
        sources = encode_texts(encoder, vocab, [p.source for p in pairs], tag, granularity)
        if config.retrieval:
            targets = encode_texts(teacher.encoder, vocab, [p.target for p in pairs], corpus.pivot, SUBWORD)
            report.retrieval.errors[lang] = xsim_error_rate(sources, targets, negatives=negatives)
        if config.translation:
            hyps = decode_embeddings(
                teacher.decoder,
                vocab,
                sources,
                corpus.pivot,
                beam=config.beam,
                max_len=config.max_len
            )
            report.chrf[lang] = float(np.mean([chrf_like(h, p.target) for h, p in zip(hyps, pairs)]))
            report.exact[lang] = float(np.mean([exact_match(h, p.target) for h, p in zip(hyps, pairs)]))
        logger.info(
            '%s %s: chrf %s retrieval error %s',
            name,
            lang,
            butil.format_value(report.chrf.get(lang)),
            butil.format_value(report.retrieval.errors.get(lang))
        )
    return report


# -- Interpolated embeddings --------------------------------------------------

"""Cells of the interpolation study (pairs of tiers)."""
INTERPOLATION_CELLS = [
    ('low-low', TIER_LOW, TIER_LOW),
    ('low-high', TIER_LOW, TIER_HIGH),
    ('high-high', TIER_HIGH, TIER_HIGH)
]


def interpolation_study(teacher, vocab, corpus, pairs_per_cell, seed, beam=1, max_len=64, split=SPLIT_TEST):
    """Decode into the pivot language from the teacher embeddings of two
    translations of the same pivot sentence and from their average. For
    every cell of tier pairs, sentence pairs are drawn from two different
    languages of the respective tiers.

    Parameters
    ----------
    teacher: bottlelab.model.Seq2Seq
    vocab: bottlelab.tokenizer.VocabPair
    corpus: bottlelab.corpus.Corpus
    pairs_per_cell: int
    seed: int
    beam: int, default=1
    max_len: int, default=64
    split: string, default='test'

    Returns
    -------
    list(dict)
        One row per cell with the five chrf columns of INTERPOLATION_SCORES
        and the number of sampled sentence pairs.

    Raises
    ------
    bottlelab.error.InsufficientDataError
    """
    rng = butil.derive_rng(seed, 'interpolation')
    rows = list()
    for cell, tier_a, tier_b in INTERPOLATION_CELLS:
        langs_a = corpus.languages(tiers=[tier_a], include_pivot=False)
        langs_b = corpus.languages(tiers=[tier_b], include_pivot=False)
        choices = [(a, b) for a in langs_a for b in langs_b if a != b]
        if not choices:
            raise InsufficientDataError("no language pair for cell '{}'".format(cell))
        samples = list()
        for _ in range(pairs_per_cell):
            a, b = choices[rng.integers(len(choices))]
            pairs_a = corpus.pairs(a, split)
            pairs_b = corpus.pairs(b, split)
            size = min(len(pairs_a), len(pairs_b))
            if size == 0:
                raise InsufficientDataError("no {} pairs for cell '{}'".format(split, cell))
            k = int(rng.integers(size))
            samples.append((a, pairs_a[k], b, pairs_b[k]))
        emb1 = np.stack([
            encode_texts(teacher.encoder, vocab, [pa.source], a, SUBWORD)[0]
            for a, pa, _, _ in samples
        ])
        emb2 = np.stack([
            encode_texts(teacher.encoder, vocab, [pb.source], b, SUBWORD)[0]
            for _, _, b, pb in samples
        ])
        refs = [pa.target for _, pa, _, _ in samples]
        scores = dict()
        for key, embs in [('emb1', emb1), ('emb2', emb2), ('avg', (emb1 + emb2) / 2.0)]:
            hyps = decode_embeddings(teacher.decoder, vocab, embs, corpus.pivot, beam=beam, max_len=max_len)
            scores[key] = float(np.mean([chrf_like(h, r) for h, r in zip(hyps, refs)]))
        rows.append({
            'cell': cell,
            'emb1': scores['emb1'],
            'emb2': scores['emb2'],
            'avg': scores['avg'],
            'avg_minus_emb1': scores['avg'] - scores['emb1'],
            'avg_minus_emb2': scores['avg'] - scores['emb2'],
            'pairs': len(samples)
        })
        logger.info('interpolation %s: %s', cell, scores)
    return rows


# -- Efficiency ---------------------------------------------------------------

def decoder_flops(decoder, embedding, output_length):
    """Number of matrix product operations for a decoder pass over a fixed
    output prefix given a sentence embedding.
    """
    ids = np.full((1, output_length), 0, dtype=np.int64)
    memory = np.asarray(embedding).reshape(1, -1)
    with T.no_grad():
        with T.count_flops() as counter:
            decoder(ids, memory)
    return counter.matmul


def efficiency_bench(models, teacher, vocab, sentences, tags, pivot, output_length=32, seed=0):
    """Mean source length in tokens and mean translation time (encode and
    greedy decode into the pivot) for each model on the same sentences. The
    first model is the reference for the ratio columns. The second table
    compares the decoder cost for source lengths 10 and 300.

    Parameters
    ----------
    models: list((string, bottlelab.model.BottleneckEncoder, string))
        Model name, encoder, and granularity.
    teacher: bottlelab.model.Seq2Seq
    vocab: bottlelab.tokenizer.VocabPair
    sentences: list(string)
    tags: list(string)
        Language tag for each sentence.
    pivot: string
        Target language of the translations.
    output_length: int, default=32
    seed: int, default=0

    Returns
    -------
    list(dict), list(dict)
    """
    rows = list()
    for name, encoder, granularity in models:
        encoder.eval()
        tokens = [len(vocab.encode(s, t, granularity)) for s, t in zip(sentences, tags)]
        start = time.perf_counter()
        for s, t in zip(sentences, tags):
            emb = encode_texts(encoder, vocab, [s], t, granularity)
            decode_embeddings(teacher.decoder, vocab, emb, pivot, beam=1, max_len=output_length)
        elapsed = (time.perf_counter() - start) / max(len(sentences), 1)
        rows.append({
            'model': name,
            'sentences': len(sentences),
            'tokens': float(np.mean(tokens)) if tokens else 0.0,
            'time': elapsed
        })
    if rows:
        base = rows[0]
        for row in rows:
            row['token_ratio'] = row['tokens'] / base['tokens'] if base['tokens'] else None
            row['time_ratio'] = row['time'] / base['time'] if base['time'] else None
    bottleneck = list()
    if models:
        _, encoder, granularity = models[-1]
        table = vocab.vocabulary(granularity)
        chars = [table.content_id(c) for c in table.characters() if c != ' ']
        rng = butil.derive_rng(seed, 'efficiency')
        for length in (10, 300):
            ids = [table.tag_id(tags[0])] + [chars[i] for i in rng.integers(len(chars), size=length)]
            seq_ids, mask = pad_sequences([TokenSeq(ids=ids + [EOS_ID], granularity=granularity)])
            with T.no_grad():
                emb = encoder(seq_ids, mask=mask).data
            start = time.perf_counter()
            flops = decoder_flops(teacher.decoder, emb, output_length)
            bottleneck.append({
                'source_length': length,
                'output_length': output_length,
                'decoder_flops': flops,
                'decode_time': time.perf_counter() - start
            })
    return rows, bottleneck


# -- Speech -------------------------------------------------------------------

def evaluate_speech(
    name, adapter, encoder, tag_id, simulator, utterances, references,
    student, student_tag, teacher, vocab, evalset
):
    """Speech evaluation for one adapter and language: translation of speech
    embeddings into the pivot, retrieval of the student embeddings of the
    transcripts and of the teacher embeddings of the pivot references among
    hard negatives, and the cascade of greedy CTC decoding and the student
    text encoder.

    Parameters
    ----------
    name: string
        Adapter name.
    adapter: bottlelab.adapter.SpeechAdapter or SubwordPoolAdapter
    encoder: bottlelab.model.BottleneckEncoder
        Encoder that the adapter feeds.
    tag_id: int
    simulator: bottlelab.ctc.FrameSimulator
    utterances: list(bottlelab.ctc.AsrUtterance)
    references: list(string)
        Pivot translation for each utterance.
    student: bottlelab.model.BottleneckEncoder
        Character student for the transcript retrieval and the cascade.
    student_tag: string
    teacher: bottlelab.model.Seq2Seq
    vocab: bottlelab.tokenizer.VocabPair
    evalset: bottlelab.evaluation.EvaluationSet

    Returns
    -------
    dict
    """
    language = simulator.head.language
    config = evalset.config
    inputs, refs, transcripts, decoded, cers = list(), list(), list(), list(), list()
    for utt, ref in zip(utterances, references):
        rep = simulator.frames(utt)
        text, cer = ctc_greedy_decode(rep.frames, simulator.head, gold=utt.transcript)
        decoded.append(text)
        cers.append(cer)
        compressed = simulator.compress(utt)
        if compressed.empty:
            continue
        inputs.append(adapter.prepare(compressed))
        refs.append(ref)
        transcripts.append(utt.transcript)
    if not inputs:
        raise InsufficientDataError('no usable test utterances for {}'.format(language))
    speech = speech_embeddings(adapter, encoder, tag_id, inputs)
    hyps = decode_embeddings(teacher.decoder, vocab, speech, evalset.corpus.pivot, beam=config.beam, max_len=config.max_len)
    row = {
        'adapter': name,
        'language': language,
        'utterances': len(inputs),
        'chrf': float(np.mean([chrf_like(h, r) for h, r in zip(hyps, refs)])),
        'exact': float(np.mean([exact_match(h, r) for h, r in zip(hyps, refs)])),
        'cer': float(np.mean(cers)),
        'rule': RULE_COSINE_NN
    }
    if config.retrieval:
        negatives = [normalize_text(s) for s in evalset.negatives_in(language)]
        neg_student = encode_texts(student, vocab, negatives, student_tag, CHARACTER) if negatives else None
        text_embs = encode_texts(student, vocab, transcripts, student_tag, CHARACTER)
        row['transcript_error'] = xsim_error_rate(speech, text_embs, negatives=neg_student)
        pivots = encode_texts(teacher.encoder, vocab, refs, evalset.corpus.pivot, SUBWORD)
        row['pivot_error'] = xsim_error_rate(speech, pivots, negatives=evalset.teacher_pivot(teacher.encoder, vocab))
        row['pool_size'] = len(negatives)
    cascade = encode_texts(student, vocab, decoded, student_tag, CHARACTER)
    cascade_hyps = decode_embeddings(teacher.decoder, vocab, cascade, evalset.corpus.pivot, beam=config.beam, max_len=config.max_len)
    row['cascade_chrf'] = float(np.mean([
        chrf_like(h, r) for h, r in zip(cascade_hyps, references)
    ]))
    logger.info('speech %s %s: chrf %.2f cascade %.2f', name, language, row['chrf'], row['cascade_chrf'])
    return row


# -- Helper Methods -----------------------------------------------------------

def _normalize_rows(x):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def _noun(core):
    if core in NOUNS:
        return core, False
    if core.endswith('s') and core[:-1] in NOUNS:
        return core[:-1], True
    return None


def _other(words, word, rng):
    choices = [w for w in words if w != word]
    return choices[rng.integers(len(choices))]


def _pick(cores, predicate, rng):
    idx = [i for i, c in enumerate(cores) if predicate(c)]
    return idx[rng.integers(len(idx))]

