# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Synthetic multilingual parallel corpus. Pivot sentences are drawn from a
small subject-verb-object template grammar. Every other language is derived
from the pivot by a word-order rule followed by an invertible character
mapping into the script of the language family, i.e., perfect reference
translations exist by construction.

A language world is a list of LanguageSpec objects. Languages are grouped
into families that share a script. Resource tiers determine the number of
training pairs. Languages of tier 'new' are reserved for zero-shot
experiments.
"""

from dataclasses import asdict, dataclass, field
from functools import cached_property

import logging

import numpy as np

from bottlelab.error import AlphabetError, BottlelabError, InsufficientDataError

import bottlelab.util as butil


logger = logging.getLogger(__name__)


"""Base alphabet of the pivot language."""
BASE_LETTERS = 'abcdefghijklmnopqrstuvwxyz'
PUNCTUATION = '.,?!'
BASE_ALPHABET = BASE_LETTERS + ' ' + PUNCTUATION

"""Letter blocks for the scripts. Each block has one letter per base letter."""
SCRIPTS = {
    'latin': BASE_LETTERS,
    'greek': ''.join(chr(0x3b1 + i) for i in range(26)),
    'cyrillic': ''.join(chr(0x430 + i) for i in range(26)),
    'armenian': ''.join(chr(0x561 + i) for i in range(26))
}

"""Word-order rules."""
ORDER_IDENTITY = 'identity'
ORDER_REVERSE = 'reverse'
ORDER_ROTATE = 'rotate'
WORD_ORDERS = [ORDER_IDENTITY, ORDER_REVERSE, ORDER_ROTATE]

"""Resource tiers."""
TIER_LOW = 'low'
TIER_MED = 'med'
TIER_HIGH = 'high'
TIER_NEW = 'new'
TIERS = [TIER_LOW, TIER_MED, TIER_HIGH, TIER_NEW]

"""Default number of training pairs per tier."""
TIER_PAIRS = {TIER_LOW: 200, TIER_MED: 2000, TIER_HIGH: 20000, TIER_NEW: 200}

"""Data splits."""
SPLIT_TRAIN = 'train'
SPLIT_DEV = 'dev'
SPLIT_TEST = 'test'
SPLITS = [SPLIT_TRAIN, SPLIT_DEV, SPLIT_TEST]

"""Identifier of the pivot language in the default world."""
PIVOT = 'pvt'


# -- Template grammar ---------------------------------------------------------

DETERMINERS = ['the', 'a', 'this', 'that', 'every', 'some', 'no', 'my', 'your', 'our']

NAMES = [
    'anna', 'boris', 'clara', 'david', 'elena', 'felix', 'greta', 'hugo',
    'irina', 'jonas', 'karla', 'leon', 'maria', 'nina', 'oscar'
]

NOUNS = [
    'cat', 'dog', 'bird', 'horse', 'house', 'tree', 'river', 'book', 'table',
    'chair', 'window', 'garden', 'friend', 'teacher', 'doctor', 'farmer',
    'baker', 'singer', 'painter', 'student', 'car', 'boat', 'train', 'road',
    'bridge', 'town', 'market', 'forest', 'mountain', 'lake', 'apple', 'bread',
    'cake', 'flower', 'letter', 'song', 'picture', 'clock', 'lamp', 'door',
    'key', 'shoe', 'hat', 'coat', 'ship', 'island', 'castle', 'king', 'queen',
    'girl', 'boy', 'pen', 'cup', 'plate', 'bottle', 'stone', 'wall', 'field',
    'street', 'village'
]

VERBS = [
    'see', 'like', 'find', 'help', 'call', 'love', 'need', 'want', 'hold',
    'keep', 'read', 'take', 'make', 'paint', 'visit', 'follow', 'meet',
    'bring', 'build', 'clean', 'cook', 'draw', 'open', 'pull', 'sell', 'send',
    'show', 'hear', 'know', 'leave', 'lift', 'move', 'play', 'drop', 'eat',
    'break', 'write', 'feed', 'greet', 'save'
]

ANTONYMS = [
    ('big', 'small'), ('old', 'young'), ('hot', 'cold'), ('happy', 'sad'),
    ('fast', 'slow'), ('good', 'bad'), ('long', 'short'), ('dark', 'bright'),
    ('rich', 'poor'), ('tidy', 'messy'), ('loud', 'quiet'), ('strong', 'weak'),
    ('full', 'empty'), ('heavy', 'light'), ('early', 'late')
]

ADJECTIVES = [w for pair in ANTONYMS for w in pair]

ADVERBS = [
    'slowly', 'quickly', 'often', 'rarely', 'today', 'again', 'quietly',
    'gladly', 'always', 'never', 'sometimes', 'together', 'alone', 'here',
    'there'
]

PREPOSITIONS = ['in', 'on', 'near', 'behind', 'under', 'with', 'without', 'beside', 'above', 'from']

NUMBERS = ['two', 'three', 'four', 'five', 'six', 'seven', 'eight', 'nine', 'ten', 'eleven', 'twelve']

TEMPLATES = [
    '{det} {adj} {noun} {verb}s {det} {adj} {noun}.',
    '{name} {verb}s {det} {noun} {prep} {det} {noun}.',
    '{det} {noun} {verb}s {adv}.',
    '{num} {adj} {noun}s {verb} {det} {noun} {prep} {det} {noun}.',
    'does {det} {noun} {verb} {det} {adj} {noun}?',
    '{name} and {name} {verb} {det} {adj} {noun}, {adv}.',
    '{name} {verb}s {num} {noun}s {adv}!'
]

_SLOTS = {
    'det': DETERMINERS,
    'name': NAMES,
    'noun': NOUNS,
    'verb': VERBS,
    'adj': ADJECTIVES,
    'adv': ADVERBS,
    'prep': PREPOSITIONS,
    'num': NUMBERS
}


def _fill(template, rng):
    """Fill template slots left to right. Every slot occurrence is drawn
    independently.
    """
    out = list()
    rest = template
    while '{' in rest:
        pre, _, tail = rest.partition('{')
        slot, _, rest = tail.partition('}')
        words = _SLOTS[slot]
        out.append(pre)
        out.append(words[rng.integers(len(words))])
    out.append(rest)
    return ''.join(out)


def generate_base_sentences(n, seed):
    """Generate n distinct pivot sentences from the template grammar. The
    result is a deterministic function of n and seed.

    Parameters
    ----------
    n: int
        Number of sentences.
    seed: int
        Random seed.

    Returns
    -------
    list(string)

    Raises
    ------
    bottlelab.error.InsufficientDataError
    """
    if n < 1:
        raise BottlelabError('number of sentences must be positive')
    rng = butil.derive_rng(seed, 'sentences')
    seen = set()
    sentences = list()
    attempts = 0
    while len(sentences) < n:
        attempts += 1
        if attempts > 50 * n + 1000:
            raise InsufficientDataError(
                'could not generate {} distinct sentences'.format(n)
            )
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        sentence = _fill(template, rng)
        if sentence not in seen:
            seen.add(sentence)
            sentences.append(sentence)
    return sentences


# -- Languages ----------------------------------------------------------------

@dataclass
class LanguageSpec:
    """Description of a synthetic language. The script transform maps each
    base letter by (i) exchanging the letters of each swap pair, (ii)
    rotating by shift positions, and (iii) writing the result in the letter
    block of the script. Space and punctuation are kept.
    """
    language: str
    family: str
    script: str = 'latin'
    shift: int = 0
    swaps: list = field(default_factory=list)
    word_order: str = ORDER_IDENTITY
    tier: str = TIER_HIGH
    pairs: int = TIER_PAIRS[TIER_HIGH]

    def __post_init__(self):
        if self.script not in SCRIPTS:
            raise BottlelabError("unknown script '{}'".format(self.script))
        if self.word_order not in WORD_ORDERS:
            raise BottlelabError("unknown word order '{}'".format(self.word_order))
        if self.tier not in TIERS:
            raise BottlelabError("unknown tier '{}'".format(self.tier))
        if self.pairs < 1:
            raise BottlelabError('pair count must be positive')
        self.swaps = [list(pair) for pair in self.swaps]
        letters = [c for pair in self.swaps for c in pair]
        if len(set(letters)) != len(letters) or any(c not in BASE_LETTERS for c in letters):
            raise BottlelabError('invalid swap pairs {}'.format(self.swaps))

    @cached_property
    def mapping(self):
        """Character mapping from the base alphabet to the language alphabet.

        Returns
        -------
        dict
        """
        exchange = {c: c for c in BASE_LETTERS}
        for a, b in self.swaps:
            exchange[a], exchange[b] = b, a
        block = SCRIPTS[self.script]
        table = {c: c for c in ' ' + PUNCTUATION}
        for c in BASE_LETTERS:
            i = (BASE_LETTERS.index(exchange[c]) + self.shift) % len(BASE_LETTERS)
            table[c] = block[i]
        return table

    @cached_property
    def inverse(self):
        return {v: k for k, v in self.mapping.items()}

    @property
    def letters(self):
        """Letters of the language alphabet in base letter order.

        Returns
        -------
        list(string)
        """
        return [self.mapping[c] for c in BASE_LETTERS]

    def to_dict(self):
        return asdict(self)


def apply_word_order(words, rule, inverse=False):
    """Reorder a list of words.

    Parameters
    ----------
    words: list(string)
    rule: string
        One of 'identity', 'reverse', or 'rotate' (move first word to end).
    inverse: bool, default=False
        Apply the inverse rule.

    Returns
    -------
    list(string)
    """
    if rule == ORDER_REVERSE:
        return list(reversed(words))
    if rule == ORDER_ROTATE and words:
        if inverse:
            return words[-1:] + words[:-1]
        return words[1:] + words[:1]
    return list(words)


def derive_language(pivot, spec):
    """Translate a pivot sentence into the language of the given spec. Applies
    the word-order rule and then the per-character script transform.

    Parameters
    ----------
    pivot: string
    spec: bottlelab.corpus.LanguageSpec

    Returns
    -------
    string

    Raises
    ------
    bottlelab.error.AlphabetError
    """
    table = spec.mapping
    for c in pivot:
        if c not in table:
            raise AlphabetError(c, pivot)
    words = apply_word_order(pivot.split(' '), spec.word_order)
    return ''.join(table[c] for c in ' '.join(words))


def invert_language(text, spec):
    """Recover the pivot sentence from a derived sentence.

    Parameters
    ----------
    text: string
    spec: bottlelab.corpus.LanguageSpec

    Returns
    -------
    string

    Raises
    ------
    bottlelab.error.AlphabetError
    """
    table = spec.inverse
    chars = list()
    for c in text:
        if c not in table:
            raise AlphabetError(c, text)
        chars.append(table[c])
    words = ''.join(chars).split(' ')
    return ' '.join(apply_word_order(words, spec.word_order, inverse=True))


def default_world(scale=1.0):
    """Default language world: a pivot language plus four families with one
    script each. Every family has a low, med, and high resource language.
    Two families have an additional new language for zero-shot experiments.
    Family members share script and rotation; they differ in letter swaps and
    word order.

    Parameters
    ----------
    scale: float, default=1.0
        Factor for the number of training pairs per language.

    Returns
    -------
    list(bottlelab.corpus.LanguageSpec)
    """
    def count(tier):
        return max(8, int(round(TIER_PAIRS[tier] * scale)))

    members = [
        (TIER_HIGH, 'hi', [], ORDER_IDENTITY),
        (TIER_MED, 'md', [['a', 'o']], ORDER_REVERSE),
        (TIER_LOW, 'lo', [['e', 'i'], ['s', 'z']], ORDER_ROTATE)
    ]
    families = [
        ('alpha', 'latin', 3, True),
        ('beta', 'greek', 0, False),
        ('gamma', 'cyrillic', 5, True),
        ('delta', 'armenian', 11, False)
    ]
    world = [
        LanguageSpec(
            language=PIVOT,
            family='pivot',
            script='latin',
            tier=TIER_HIGH,
            pairs=count(TIER_HIGH)
        )
    ]
    for family, script, shift, has_new in families:
        extra = [(TIER_NEW, 'nw', [['a', 'u'], ['t', 'd']], ORDER_IDENTITY)] if has_new else []
        for tier, suffix, swaps, order in members + extra:
            world.append(
                LanguageSpec(
                    language='{}-{}'.format(family[:2], suffix),
                    family=family,
                    script=script,
                    shift=shift,
                    swaps=swaps,
                    word_order=order,
                    tier=tier,
                    pairs=count(tier)
                )
            )
    return world


def temperature_probabilities(counts, temperature):
    """Sampling probabilities proportional to counts raised to the given
    temperature exponent.

    Parameters
    ----------
    counts: list(int)
    temperature: float
        Exponent in (0, 1].

    Returns
    -------
    numpy.ndarray

    Raises
    ------
    bottlelab.error.BottlelabError
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise BottlelabError('empty counts')
    if np.any(counts <= 0):
        raise BottlelabError('counts must be positive')
    if not 0 < temperature <= 1:
        raise BottlelabError('temperature must be in (0, 1]')
    weights = np.power(counts, temperature)
    return weights / weights.sum()


def temperature_sample(counts, temperature, rng, size):
    """Draw a stream of language indices with probability proportional to
    counts ** temperature.

    Parameters
    ----------
    counts: list(int)
    temperature: float
    rng: numpy.random.Generator
    size: int

    Returns
    -------
    numpy.ndarray
    """
    probs = temperature_probabilities(counts, temperature)
    return rng.choice(len(probs), size=size, p=probs)


# -- Corpus -------------------------------------------------------------------

@dataclass
class ParallelPair:
    """Source sentence in some language with its pivot translation."""
    pair_id: str
    language: str
    source: str
    target: str
    split: str


class Corpus(object):
    """Collection of parallel pairs for a language world. Dev and test splits
    are multi-way parallel: every language has a translation of the same
    pivot sentences.
    """
    def __init__(self, specs, pairs, seed, pivot=PIVOT):
        """Initialize the corpus.

        Parameters
        ----------
        specs: list(bottlelab.corpus.LanguageSpec)
        pairs: list(bottlelab.corpus.ParallelPair)
        seed: int
        pivot: string, default='pvt'
        """
        self.specs = list(specs)
        self.seed = seed
        self.pivot = pivot
        self._specs = {s.language: s for s in self.specs}
        if pivot not in self._specs:
            raise BottlelabError("pivot '{}' not in language world".format(pivot))
        self._pairs = dict()
        for pair in pairs:
            key = (pair.language, pair.split)
            self._pairs.setdefault(key, list()).append(pair)

    def families(self):
        """Mapping from language identifier to family identifier."""
        return {s.language: s.family for s in self.specs}

    def languages(self, tiers=None, include_pivot=True):
        """Get identifier of languages in the world.

        Parameters
        ----------
        tiers: list(string), optional
            Only include languages from the given tiers.
        include_pivot: bool, default=True

        Returns
        -------
        list(string)
        """
        result = list()
        for spec in self.specs:
            if spec.language == self.pivot and not include_pivot:
                continue
            if tiers is not None and spec.tier not in tiers:
                continue
            result.append(spec.language)
        return result

    def pairs(self, language, split=SPLIT_TRAIN):
        return list(self._pairs.get((language, split), list()))

    def spec(self, language):
        return self._specs[language]

    def texts(self, languages=None, split=SPLIT_TRAIN):
        """Get all source and pivot texts for the given languages (default
        all) in a data split. Pivot sentences that appear in multiple pairs are
        included once.

        Returns
        -------
        list(string)
        """
        languages = self.languages() if languages is None else languages
        texts = list()
        pivots = set()
        for lang in languages:
            for pair in self.pairs(lang, split):
                if lang != self.pivot:
                    texts.append(pair.source)
                if pair.target not in pivots:
                    pivots.add(pair.target)
                    texts.append(pair.target)
        return texts

    def write(self, filename):
        """Write the corpus as a tab-separated file with one pair per line:
        pair id, language id, source text, pivot text, split.

        Parameters
        ----------
        filename: string
        """
        rows = list()
        for spec in self.specs:
            for split in SPLITS:
                for p in self.pairs(spec.language, split):
                    rows.append([p.pair_id, p.language, p.source, p.target, p.split])
        butil.write_tsv(rows, filename)


def generate_corpus(specs, seed, dev_size=100, test_size=100, pivot=PIVOT):
    """Generate the parallel corpus for a language world. Dev and test pivot
    sentences are shared by all languages. Training pairs for each language
    are drawn from the remaining pivot sentences with a language-specific
    random stream. The result is a pure function of (specs, seed).

    Parameters
    ----------
    specs: list(bottlelab.corpus.LanguageSpec)
    seed: int
    dev_size: int, default=100
    test_size: int, default=100
    pivot: string, default='pvt'

    Returns
    -------
    bottlelab.corpus.Corpus
    """
    train_size = max(s.pairs for s in specs)
    base = generate_base_sentences(train_size + dev_size + test_size, seed)
    held_out = {
        SPLIT_DEV: base[:dev_size],
        SPLIT_TEST: base[dev_size:dev_size + test_size]
    }
    pool = base[dev_size + test_size:]
    pairs = list()
    for spec in specs:
        rng = butil.derive_rng(seed, 'corpus', spec.language)
        selected = rng.choice(len(pool), size=spec.pairs, replace=False)
        for k, i in enumerate(selected):
            pairs.append(
                ParallelPair(
                    pair_id='{}-{}-{}'.format(spec.language, SPLIT_TRAIN, k),
                    language=spec.language,
                    source=derive_language(pool[i], spec),
                    target=pool[i],
                    split=SPLIT_TRAIN
                )
            )
        for split, sentences in held_out.items():
            for k, s in enumerate(sentences):
                pairs.append(
                    ParallelPair(
                        pair_id='{}-{}-{}'.format(spec.language, split, k),
                        language=spec.language,
                        source=derive_language(s, spec),
                        target=s,
                        split=split
                    )
                )
    logger.info('generated corpus with %d pairs for %d languages', len(pairs), len(specs))
    return Corpus(specs=specs, pairs=pairs, seed=seed, pivot=pivot)


def read_corpus(filename, specs, seed, pivot=PIVOT):
    """Read a corpus file that was written by Corpus.write().

    Parameters
    ----------
    filename: string
    specs: list(bottlelab.corpus.LanguageSpec)
    seed: int
    pivot: string, default='pvt'

    Returns
    -------
    bottlelab.corpus.Corpus
    """
    pairs = [
        ParallelPair(pair_id=r[0], language=r[1], source=r[2], target=r[3], split=r[4])
        for r in butil.read_tsv(filename)
    ]
    return Corpus(specs=specs, pairs=pairs, seed=seed, pivot=pivot)
