# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Canonical experiment recipes at toy scale and the directional checks
that are evaluated on the reports of a recipe run.

Each recipe is a configuration dictionary that is validated by
bottlelab.config.from_dict. The checks compare aggregate values from the
report files in the run directory and never retrain anything.
"""

from dataclasses import dataclass

import copy
import logging
import os

from bottlelab.config import (
    ADAPTER_DUAL, ADAPTER_PRETRAINED, ADAPTER_RANDOM, OBJECTIVE_INTERPOL,
    OBJECTIVE_RECON, OBJECTIVE_RECON_TRANS, OBJECTIVE_TRANS, from_dict
)
from bottlelab.corpus import PIVOT
from bottlelab.error import BottlelabError, InvalidConfigError

import bottlelab.util as butil


logger = logging.getLogger(__name__)


"""Recipe names."""
TABLE1_ABLATION = 'table1-ablation'
TABLE2_INTERPOLATION = 'table2-interpolation'
ZERO_SHOT = 'zero-shot-family-tokens'
SINGLE_LANGUAGE = 'single-language-control'
TABLE4_EFFICIENCY = 'table4-efficiency'
TABLE5_ADAPTERS = 'table5-adapters'

"""Augmentation rates of robust students and the family token rate."""
P_NORM = 0.25
P_NOISE = 0.125
P_FAMILY = 0.2

"""Maximal retrieval error difference (in points) that counts as 'does not
hurt', and maximal chrf difference between the models of the control.
"""
RETRIEVAL_TOLERANCE = 1.0
CONTROL_TOLERANCE = 5.0

"""Upper bound for the speech-transcript retrieval error and the size of
the negative pool it is measured against.
"""
SPEECH_RETRIEVAL_BOUND = 10.0
SPEECH_NEGATIVES = 2000


_BASE = {
    'corpus': {'scale': 0.05, 'dev_size': 50, 'test_size': 50, 'subword_size': 512},
    'model': {'dim': 64, 'layers': 2, 'heads': 4, 'ffn': 128, 'dropout': 0.1},
    'teacher': {
        'steps': 3000,
        'batch_size': 32,
        'learning_rate': 1e-3,
        'warmup_steps': 200,
        'dev_every': 250
    },
    'evaluation': {'negatives': 500, 'max_sentences': 50, 'beam': 1, 'max_len': 48}
}

_STUDENT = {
    'steps': 2000,
    'batch_size': 32,
    'learning_rate': 1e-3,
    'warmup_steps': 200,
    'dev_every': 250,
    'granularity': 'character',
    'objective': OBJECTIVE_INTERPOL
}

_ADAPTER = {
    'steps': 600,
    'batch_size': 16,
    'learning_rate': 5e-4,
    'warmup_steps': 50,
    'dev_every': 100,
    'dev_pairs': 32
}


def _student(name, **kwargs):
    doc = dict(_STUDENT)
    doc['name'] = name
    doc.update(kwargs)
    return doc


def _adapter(name, kind, **kwargs):
    doc = dict(_ADAPTER)
    doc['name'] = name
    doc['kind'] = kind
    doc.update(kwargs)
    return doc


def _table1():
    return {
        'students': [
            _student('recon', objective=OBJECTIVE_RECON),
            _student('trans', objective=OBJECTIVE_TRANS),
            _student('recon+trans', objective=OBJECTIVE_RECON_TRANS),
            _student('interpol'),
            _student('interpol-pretrain', pretrain=True),
            _student('interpol-pretrain-norm', pretrain=True, p_norm=P_NORM),
            _student('interpol-pretrain-norm-noise', pretrain=True, p_norm=P_NORM, p_noise=P_NOISE)
        ],
        'evaluation': {'split': 'dev', 'translation': False}
    }


def _table2():
    return {
        'evaluation': {
            'retrieval': False,
            'translation': False,
            'interpolation': True,
            'pairs_per_cell': 40
        }
    }


def _zero_shot():
    return {
        'students': [
            _student('character', zero_shot=True, p_family=P_FAMILY),
            _student('subword', granularity='subword', zero_shot=True, p_family=P_FAMILY)
        ]
    }


def _single_language():
    return {
        'students': [
            _student('character', languages=[PIVOT]),
            _student('subword', granularity='subword', languages=[PIVOT])
        ]
    }


def _table4():
    return {
        'students': [_student('character')],
        'evaluation': {
            'retrieval': False,
            'translation': False,
            'efficiency': True,
            'efficiency_sentences': 20
        }
    }


def _table5():
    return {
        'students': [
            _student('plain', pretrain=True),
            _student('norm', pretrain=True, p_norm=P_NORM),
            _student('norm-noise', pretrain=True, p_norm=P_NORM, p_noise=P_NOISE)
        ],
        'speech': {'languages': ['al-hi', 'be-hi', 'ga-md', 'de-hi'], 'utterances': 1000},
        'adapters': [
            _adapter('pretrained-frozen', ADAPTER_PRETRAINED, train=False, student='plain'),
            _adapter('pretrained', ADAPTER_PRETRAINED, student='plain'),
            _adapter('random-small', ADAPTER_RANDOM, hidden=64, student='plain'),
            _adapter('random-big', ADAPTER_RANDOM, hidden=256, student='plain'),
            _adapter('random-lowdata', ADAPTER_RANDOM, hidden=256, utterances=200, student='plain'),
            _adapter('dual-small', ADAPTER_DUAL, hidden=64, student='plain'),
            _adapter('dual-big', ADAPTER_DUAL, hidden=256, student='plain'),
            _adapter('dual-norm', ADAPTER_DUAL, hidden=256, student='norm'),
            _adapter('dual-norm-noise', ADAPTER_DUAL, hidden=256, student='norm-noise')
        ],
        'evaluation': {'retrieval': True, 'translation': False, 'negatives': SPEECH_NEGATIVES}
    }


"""Recipe builders in listing order."""
RECIPES = {
    TABLE1_ABLATION: _table1,
    TABLE2_INTERPOLATION: _table2,
    ZERO_SHOT: _zero_shot,
    SINGLE_LANGUAGE: _single_language,
    TABLE4_EFFICIENCY: _table4,
    TABLE5_ADAPTERS: _table5
}


def recipe(name, seed=0):
    """Get the configuration of a canonical recipe.

    Parameters
    ----------
    name: string
    seed: int, default=0

    Returns
    -------
    bottlelab.config.ExperimentConfig

    Raises
    ------
    bottlelab.error.InvalidConfigError
    """
    if name not in RECIPES:
        raise InvalidConfigError("unknown recipe '{}'".format(name))
    doc = copy.deepcopy(_BASE)
    for key, value in RECIPES[name]().items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key].update(value)
        else:
            doc[key] = value
    doc['name'] = name
    doc['seed'] = seed
    return from_dict(doc)


def recipes(seed=0):
    """List of all canonical recipe configurations."""
    return [recipe(name, seed=seed) for name in RECIPES]


# -- Checks -------------------------------------------------------------------

@dataclass
class Check:
    """Outcome of a directional check on the reports of a run."""
    name: str
    passed: bool
    detail: str = ''


def check_reports(name, rundir):
    """Evaluate the directional checks of a recipe on the reports in a run
    directory.

    Parameters
    ----------
    name: string
        Recipe name.
    rundir: string

    Returns
    -------
    list(bottlelab.recipes.Check)

    Raises
    ------
    bottlelab.error.InvalidConfigError
    bottlelab.error.BottlelabError
        If a required report is missing.
    """
    checks = {
        TABLE1_ABLATION: _check_table1,
        TABLE2_INTERPOLATION: _check_table2,
        ZERO_SHOT: _check_zero_shot,
        SINGLE_LANGUAGE: _check_single_language,
        TABLE4_EFFICIENCY: _check_table4,
        TABLE5_ADAPTERS: _check_table5
    }
    if name not in checks:
        raise InvalidConfigError("unknown recipe '{}'".format(name))
    result = checks[name](os.path.join(rundir, 'reports'))
    for check in result:
        logger.info('check %s: %s (%s)', check.name, 'passed' if check.passed else 'failed', check.detail)
    return result


def _check_table1(reports):
    rows = _report(reports, 'quality.csv')
    err = {m: _value(rows, 'retrieval_error', model=m, group='all') for m in _models(rows)}
    checks = list()
    for baseline in ['recon', 'trans', 'recon+trans']:
        checks.append(Check(
            name='interpol <= {}'.format(baseline),
            passed=err['interpol'] <= err[baseline],
            detail='{:.2f} vs {:.2f}'.format(err['interpol'], err[baseline])
        ))
    checks.append(Check(
        name='pretrain does not hurt',
        passed=err['interpol-pretrain'] <= err['interpol'] + RETRIEVAL_TOLERANCE,
        detail='{:.2f} vs {:.2f}'.format(err['interpol-pretrain'], err['interpol'])
    ))
    return checks


def _check_table2(reports):
    rows = _report(reports, 'interpolation.csv')
    low = _value(rows, 'avg_minus_emb1', cell='low-low')
    low2 = _value(rows, 'avg_minus_emb2', cell='low-low')
    return [Check(
        name='averaged embeddings help low-low',
        passed=low > 0 and low2 > 0,
        detail='{:.3f} / {:.3f}'.format(low, low2)
    )]


def _check_zero_shot(reports):
    rows = _report(reports, 'quality.csv')
    checks = list()
    for group in ['low', 'new']:
        c_err = _value(rows, 'retrieval_error', model='character', group=group)
        s_err = _value(rows, 'retrieval_error', model='subword', group=group)
        c_chrf = _value(rows, 'chrf', model='character', group=group)
        s_chrf = _value(rows, 'chrf', model='subword', group=group)
        if group == 'new':
            passed = c_err <= s_err and c_chrf > s_chrf
        else:
            passed = c_err <= s_err and c_chrf >= s_chrf
        checks.append(Check(
            name='character >= subword on {}'.format(group),
            passed=passed,
            detail='error {:.2f} vs {:.2f}, chrf {:.2f} vs {:.2f}'.format(c_err, s_err, c_chrf, s_chrf)
        ))
    return checks


def _check_single_language(reports):
    rows = _report(reports, 'quality.csv')
    c_chrf = _value(rows, 'chrf', model='character', group='all')
    s_chrf = _value(rows, 'chrf', model='subword', group='all')
    return [Check(
        name='no granularity effect on pivot-only training',
        passed=abs(c_chrf - s_chrf) <= CONTROL_TOLERANCE,
        detail='chrf {:.2f} vs {:.2f}'.format(c_chrf, s_chrf)
    )]


def _check_table4(reports):
    rows = _report(reports, 'bottleneck.csv')
    flops = [int(r['decoder_flops']) for r in rows]
    efficiency = _report(reports, 'efficiency.csv')
    ratio = _value(efficiency, 'token_ratio', model='character')
    return [
        Check(
            name='decoder cost independent of source length',
            passed=len(set(flops)) == 1,
            detail=' / '.join(str(f) for f in flops)
        ),
        Check(
            name='character/subword token ratio > 2',
            passed=ratio > 2.0,
            detail='{:.2f}'.format(ratio)
        )
    ]


def _check_table5(reports):
    rows = _report(reports, 'speech.csv')

    def chrf(adapter):
        values = [float(r['chrf']) for r in rows if r['adapter'] == adapter]
        if not values:
            raise BottlelabError("no speech results for '{}'".format(adapter))
        return sum(values) / len(values)

    def order(a, b, strict=False):
        va, vb = chrf(a), chrf(b)
        return Check(
            name='{} {} {}'.format(a, '>' if strict else '>=', b),
            passed=va > vb if strict else va >= vb,
            detail='{:.2f} vs {:.2f}'.format(va, vb)
        )

    errors = [float(r['transcript_error']) for r in rows if r['adapter'] == 'dual-big']
    return [
        order('pretrained-frozen', 'random-lowdata', strict=True),
        order('dual-big', 'pretrained'),
        order('pretrained', 'random-big'),
        order('dual-norm-noise', 'dual-big'),
        Check(
            name='speech-transcript retrieval error < {}'.format(SPEECH_RETRIEVAL_BOUND),
            passed=bool(errors) and max(errors) < SPEECH_RETRIEVAL_BOUND,
            detail=' / '.join('{:.2f}'.format(e) for e in errors)
        )
    ]


# -- Helper Methods -----------------------------------------------------------

def _models(rows):
    return sorted(set(r['model'] for r in rows))


def _report(reports, filename):
    path = os.path.join(reports, filename)
    if not os.path.isfile(path):
        raise BottlelabError("report '{}' not found".format(path))
    return butil.read_report(path)


def _value(rows, column, **match):
    """Float value of a column in the first row that matches all given
    column values.
    """
    for row in rows:
        if all(row.get(k) == v for k, v in match.items()):
            if row.get(column, '') == '':
                break
            return float(row[column])
    raise BottlelabError('no value for {} at {}'.format(column, match))
