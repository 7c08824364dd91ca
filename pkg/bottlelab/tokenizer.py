# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Subword and character vocabularies. The subword vocabulary is built by
greedy pair merges over word types. Token identifiers are ordered as special
tokens, language tags, family tags, single characters, and merged subwords.
The character vocabulary is the prefix of the subword vocabulary that ends
with the last single character, i.e., both vocabularies assign the same
identifier to every token they share.
"""

from collections import Counter
from dataclasses import dataclass, field

import logging
import os

import numpy as np

from bottlelab.error import BottlelabError, UnknownTokenError

import bottlelab.util as butil


logger = logging.getLogger(__name__)


"""Special tokens. The blank token is reserved for CTC heads."""
PAD = '<pad>'
UNK = '<unk>'
EOS = '</s>'
BLANK = '<blank>'
SPECIALS = [PAD, UNK, EOS, BLANK]

PAD_ID = 0
UNK_ID = 1
EOS_ID = 2
BLANK_ID = 3

"""Token classes in vocabulary files."""
CLASS_SPECIAL = 'special'
CLASS_LANGUAGE = 'language'
CLASS_FAMILY = 'family'
CLASS_CHAR = 'char'
CLASS_SUBWORD = 'subword'

"""Segmentation granularities."""
SUBWORD = 'subword'
CHARACTER = 'character'
GRANULARITIES = [SUBWORD, CHARACTER]

"""Prefix for tags that refer to a language family."""
FAMILY_PREFIX = 'family:'

"""Surface form for unknown tokens when decoding."""
UNK_SURFACE = '\ufffd'


def family_tag(family):
    """Get the tag name for a language family (to be used wherever a language
    identifier is accepted as tag).
    """
    return FAMILY_PREFIX + family


def tag_token(tag):
    return '<{}>'.format(tag)


class Vocabulary(object):
    """Ordered token table. Each token has a class (special, language,
    family, char, or subword). Language tokens know the family token of their
    family.
    """
    def __init__(self, tokens, classes, families=None):
        """Initialize the token table.

        Parameters
        ----------
        tokens: list(string)
            Token surface forms in identifier order.
        classes: list(string)
            Token class for each token.
        families: dict, optional
            Mapping from language tag token to family tag token.
        """
        if len(tokens) != len(classes):
            raise BottlelabError('tokens and classes differ in length')
        if tokens[:len(SPECIALS)] != SPECIALS:
            raise BottlelabError('vocabulary must start with special tokens')
        self.tokens = list(tokens)
        self.classes = list(classes)
        self.families = dict(families) if families is not None else dict()
        self._ids = dict()
        for i, t in enumerate(self.tokens):
            if t in self._ids:
                raise BottlelabError("duplicate token '{}'".format(t))
            self._ids[t] = i
        self._content = {
            t: i for i, (t, c) in enumerate(zip(self.tokens, self.classes))
            if c in (CLASS_CHAR, CLASS_SUBWORD)
        }
        self.max_length = max([len(t) for t in self._content] + [1])

    def __contains__(self, token):
        return token in self._ids

    def __len__(self):
        return len(self.tokens)

    def content_tokens(self):
        """Get all character and subword tokens.

        Returns
        -------
        list(string)
        """
        return [t for t in self.tokens if t in self._content]

    def characters(self):
        return [t for t, c in zip(self.tokens, self.classes) if c == CLASS_CHAR]

    def content_id(self, token):
        """Identifier of a content token or None."""
        return self._content.get(token)

    def family_tag_id(self, tag_id):
        """Get the identifier of the family token for a language tag
        identifier.

        Raises
        ------
        bottlelab.error.UnknownTokenError
        """
        token = self.tokens[tag_id]
        if token not in self.families:
            raise UnknownTokenError("no family for tag '{}'".format(token))
        return self._ids[self.families[token]]

    def is_special(self, token_id):
        return self.classes[token_id] in (CLASS_SPECIAL, CLASS_LANGUAGE, CLASS_FAMILY)

    def tag_id(self, tag):
        """Get the identifier of a language tag or of a family tag (given as
        'family:<name>').

        Parameters
        ----------
        tag: string

        Returns
        -------
        int

        Raises
        ------
        bottlelab.error.UnknownTokenError
        """
        token = tag_token(tag)
        token_id = self._ids.get(token)
        if token_id is None or self.classes[token_id] not in (CLASS_LANGUAGE, CLASS_FAMILY):
            raise UnknownTokenError("unknown tag '{}'".format(tag))
        return token_id

    def token_id(self, token):
        if token not in self._ids:
            raise UnknownTokenError("unknown token '{}'".format(token))
        return self._ids[token]

    def to_rows(self):
        rows = list()
        for i, (t, c) in enumerate(zip(self.tokens, self.classes)):
            row = [i, c, t]
            if t in self.families:
                row.append(self.families[t])
            rows.append(row)
        return rows


@dataclass
class TokenSeq:
    """Encoded sentence: [tag, content ids..., EOS]."""
    ids: list
    granularity: str = SUBWORD

    def __len__(self):
        return len(self.ids)

    @property
    def tag(self):
        return self.ids[0]


@dataclass
class VocabPair:
    """Subword vocabulary V_t and the derived character vocabulary V_c."""
    subword: Vocabulary
    character: Vocabulary
    languages: dict = field(default_factory=dict)

    def vocabulary(self, granularity):
        if granularity == SUBWORD:
            return self.subword
        elif granularity == CHARACTER:
            return self.character
        raise BottlelabError("unknown granularity '{}'".format(granularity))

    @property
    def fingerprint(self):
        return butil.stable_hash(self.subword.to_rows())

    def encode(self, text, tag, granularity=SUBWORD):
        """Encode text as [tag, tokens..., EOS]. Subword segmentation uses
        greedy longest match. Characters that are not in the vocabulary are
        mapped to UNK.

        Parameters
        ----------
        text: string
        tag: string
            Language identifier or family tag.
        granularity: string, default='subword'

        Returns
        -------
        bottlelab.tokenizer.TokenSeq

        Raises
        ------
        bottlelab.error.UnknownTokenError
        """
        vocab = self.vocabulary(granularity)
        ids = [vocab.tag_id(tag)]
        ids.extend(segment(text, vocab))
        ids.append(EOS_ID)
        return TokenSeq(ids=ids, granularity=granularity)

    def decode(self, ids, granularity=SUBWORD):
        """Map content identifier to text. Special tokens are skipped."""
        vocab = self.vocabulary(granularity)
        out = list()
        for i in ids:
            i = int(i)
            if i == UNK_ID:
                out.append(UNK_SURFACE)
            elif not vocab.is_special(i):
                out.append(vocab.tokens[i])
        return ''.join(out)

    def spans(self, text):
        """Greedy longest-match subword segmentation of text as a list of
        (start, end) character offsets. Returns None if the text contains a
        character that is not in the vocabulary.
        """
        vocab = self.subword
        spans = list()
        pos = 0
        while pos < len(text):
            end = _longest_match(text, pos, vocab)
            if end is None:
                return None
            spans.append((pos, end))
            pos = end
        return spans


def segment(text, vocab):
    """Greedy longest-match segmentation into content token identifier.

    Parameters
    ----------
    text: string
    vocab: bottlelab.tokenizer.Vocabulary

    Returns
    -------
    list(int)
    """
    ids = list()
    pos = 0
    while pos < len(text):
        end = _longest_match(text, pos, vocab)
        if end is None:
            ids.append(UNK_ID)
            pos += 1
        else:
            ids.append(vocab.content_id(text[pos:end]))
            pos = end
    return ids


def substitute_family_token(seq, vocab, p, rng):
    """Replace the leading language tag by its family tag with probability
    p.

    Parameters
    ----------
    seq: bottlelab.tokenizer.TokenSeq
    vocab: bottlelab.tokenizer.Vocabulary
    p: float
    rng: numpy.random.Generator

    Returns
    -------
    bottlelab.tokenizer.TokenSeq
    """
    if p <= 0 or rng.random() >= p:
        return seq
    ids = list(seq.ids)
    ids[0] = vocab.family_tag_id(ids[0])
    return TokenSeq(ids=ids, granularity=seq.granularity)


def pad_sequences(seqs):
    """Stack token sequences into a padded (batch, length) identifier array
    and a matching mask with 1 for non-pad positions.

    Returns
    -------
    numpy.ndarray, numpy.ndarray
    """
    length = max(len(s) for s in seqs)
    ids = np.full((len(seqs), length), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), length), dtype=np.float64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s.ids
        mask[i, :len(s)] = 1.0
    return ids, mask


def train_subword_vocab(texts, target_size, languages, alphabet=None):
    """Build the subword vocabulary by greedy pair merges over word types.
    Every word after the first carries its leading space. In each round the
    most frequent adjacent symbol pair is merged; ties go to the
    lexicographically smallest pair.

    Parameters
    ----------
    texts: list(string)
        Training texts.
    target_size: int
        Number of content tokens (single characters plus merges).
    languages: dict
        Mapping from language identifier to family identifier.
    alphabet: iterable(string), optional
        Characters of the character vocabulary. Defaults to all characters
        in texts.

    Returns
    -------
    bottlelab.tokenizer.VocabPair

    Raises
    ------
    bottlelab.error.BottlelabError
    """
    if not texts:
        raise BottlelabError('empty corpus')
    chars = set(alphabet) if alphabet is not None else set()
    for text in texts:
        chars.update(text)
    chars = sorted(chars)
    if target_size < len(chars):
        raise BottlelabError(
            'vocabulary size {} cannot hold {} characters'.format(target_size, len(chars))
        )
    for lang in languages:
        if ':' in lang:
            raise BottlelabError("invalid language identifier '{}'".format(lang))
    merges = _learn_merges(_word_types(texts), target_size - len(chars))
    if len(chars) + len(merges) < target_size:
        logger.warning(
            'corpus supports %d of %d content tokens',
            len(chars) + len(merges),
            target_size
        )
    families = sorted(set(languages.values()))
    tokens = list(SPECIALS)
    classes = [CLASS_SPECIAL] * len(SPECIALS)
    for lang in languages:
        tokens.append(tag_token(lang))
        classes.append(CLASS_LANGUAGE)
    for fam in families:
        tokens.append(tag_token(family_tag(fam)))
        classes.append(CLASS_FAMILY)
    family_map = {
        tag_token(lang): tag_token(family_tag(fam)) for lang, fam in languages.items()
    }
    tokens.extend(chars)
    classes.extend([CLASS_CHAR] * len(chars))
    character = Vocabulary(tokens, classes, families=family_map)
    subword = Vocabulary(
        tokens + merges,
        classes + [CLASS_SUBWORD] * len(merges),
        families=family_map
    )
    logger.info(
        'vocabulary with %d characters and %d subwords',
        len(chars),
        len(merges)
    )
    return VocabPair(subword=subword, character=character, languages=dict(languages))


def write_vocab(pair, dirname):
    """Write the vocabulary pair as two files (vocab-subword.tsv and
    vocab-character.tsv) with lines 'id, class, token[, family]'.
    """
    butil.write_tsv(pair.subword.to_rows(), os.path.join(dirname, 'vocab-subword.tsv'))
    butil.write_tsv(pair.character.to_rows(), os.path.join(dirname, 'vocab-character.tsv'))


def read_vocab(dirname, languages):
    """Read a vocabulary pair that was written by write_vocab.

    Parameters
    ----------
    dirname: string
    languages: dict
        Mapping from language identifier to family identifier.

    Returns
    -------
    bottlelab.tokenizer.VocabPair
    """
    def read(filename):
        rows = butil.read_tsv(os.path.join(dirname, filename))
        families = {r[2]: r[3] for r in rows if len(r) > 3}
        return Vocabulary([r[2] for r in rows], [r[1] for r in rows], families=families)

    return VocabPair(
        subword=read('vocab-subword.tsv'),
        character=read('vocab-character.tsv'),
        languages=dict(languages)
    )


# -- Helper Methods -----------------------------------------------------------

def _learn_merges(words, count):
    """Run up to count merge rounds over a Counter of word types (as symbol
    tuples). Returns the list of merged tokens in creation order.
    """
    words = [(list(w), n) for w, n in words.items()]
    pairs = Counter()
    where = dict()
    for idx, (symbols, n) in enumerate(words):
        for a, b in zip(symbols, symbols[1:]):
            pairs[(a, b)] += n
            where.setdefault((a, b), set()).add(idx)
    merges = list()
    known = set(s for symbols, _ in words for s in symbols)
    while len(merges) < count:
        candidates = [(-n, p) for p, n in pairs.items() if n > 0]
        if not candidates:
            break
        _, best = min(candidates)
        token = best[0] + best[1]
        for idx in sorted(where.pop(best, set())):
            symbols, n = words[idx]
            for a, b in zip(symbols, symbols[1:]):
                pairs[(a, b)] -= n
            merged = list()
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    merged.append(token)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            words[idx] = (merged, n)
            for a, b in zip(merged, merged[1:]):
                pairs[(a, b)] += n
                where.setdefault((a, b), set()).add(idx)
        del pairs[best]
        if token not in known:
            known.add(token)
            merges.append(token)
    return merges


def _longest_match(text, pos, vocab):
    for end in range(min(len(text), pos + vocab.max_length), pos, -1):
        if vocab.content_id(text[pos:end]) is not None:
            return end
    return None


def _word_types(texts):
    words = Counter()
    for text in texts:
        for i, w in enumerate(text.split(' ')):
            w = w if i == 0 else ' ' + w
            if w:
                words[tuple(w)] += 1
    return words
