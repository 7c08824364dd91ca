# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for experiment configurations, recipes, and report checks."""

import os
import pytest

from bottlelab.config import (
    BOTTLELAB_RESULTS, AdapterConfig, CorpusConfig, adapter_student, config_hash,
    from_dict, load_config, run_directory, save_config
)
from bottlelab.corpus import PIVOT
from bottlelab.error import BottlelabError, InvalidConfigError
from bottlelab.evaluation import (
    BOTTLENECK_COLUMNS, EFFICIENCY_COLUMNS, QUALITY_COLUMNS
)
from bottlelab.recipes import (
    RECIPES, SINGLE_LANGUAGE, SPEECH_NEGATIVES, TABLE4_EFFICIENCY,
    TABLE5_ADAPTERS, check_reports, recipe, recipes
)
from bottlelab.tests import tiny_config

import bottlelab.util as butil


def test_unknown_keys():
    with pytest.raises(InvalidConfigError):
        from_dict({'name': 'x', 'unknown': 1})
    with pytest.raises(InvalidConfigError):
        from_dict({'model': {'width': 3}})
    with pytest.raises(InvalidConfigError):
        from_dict({'students': {'name': 'x'}})
    with pytest.raises(InvalidConfigError):
        from_dict([])


def test_validate():
    with pytest.raises(InvalidConfigError):
        from_dict({'model': {'dim': 10, 'heads': 4}})
    with pytest.raises(InvalidConfigError):
        from_dict({'students': [{'name': 'a'}, {'name': 'a'}]})
    with pytest.raises(InvalidConfigError):
        from_dict({'students': [{'name': 'a', 'objective': 'unknown'}]})
    with pytest.raises(InvalidConfigError):
        from_dict({'students': [{'name': 'a', 'p_noise': 2.0}]})
    # Adapters need a speech configuration and a character student.
    with pytest.raises(InvalidConfigError):
        from_dict({'students': [{'name': 'a'}], 'adapters': [{'name': 'x'}]})
    with pytest.raises(InvalidConfigError):
        from_dict({
            'students': [{'name': 'a', 'granularity': 'subword'}],
            'speech': {},
            'adapters': [{'name': 'x'}]
        })
    with pytest.raises(InvalidConfigError):
        from_dict({'evaluation': {'split': 'train'}})


def test_adapter_student(tmpdir):
    config = tiny_config(str(tmpdir), speech=True)
    assert adapter_student(config, config.adapter('dual')).name == 'char'
    with pytest.raises(InvalidConfigError):
        adapter_student(config, AdapterConfig(name='x', student='unknown'))
    with pytest.raises(InvalidConfigError):
        config.student('unknown')


def test_config_hash(tmpdir):
    config = tiny_config(str(tmpdir))
    other = tiny_config(os.path.join(str(tmpdir), 'other'))
    assert config_hash(config) == config_hash(other)
    doc = config.to_dict()
    doc['seed'] = 1
    assert config_hash(from_dict(doc)) != config_hash(config)


def test_config_hash_normalization(tmpdir):
    """Configurations that differ only in number types or in omitted
    defaults share one hash.
    """
    doc = tiny_config(str(tmpdir)).to_dict()
    doc['corpus']['scale'] = 1
    doc['model']['dropout'] = 0
    doc['seed'] = 0.0
    other = tiny_config(str(tmpdir)).to_dict()
    other['corpus']['scale'] = 1.0
    assert config_hash(from_dict(doc)) == config_hash(from_dict(other))
    assert from_dict(doc).seed == 0
    assert isinstance(from_dict(doc).corpus.scale, float)
    partial = from_dict({'name': 'x', 'corpus': {'scale': 2}})
    full = from_dict(from_dict({'name': 'x'}).to_dict())
    full.corpus.scale = 2
    assert config_hash(partial) == config_hash(full)
    assert config_hash(from_dict({'name': 'x'})) == config_hash(from_dict({'name': 'x', 'corpus': {}}))
    with pytest.raises(InvalidConfigError):
        from_dict({'seed': 1.5})
    with pytest.raises(InvalidConfigError):
        from_dict({'corpus': {'scale': 'large'}})
    with pytest.raises(InvalidConfigError):
        from_dict({'evaluation': {'retrieval': 1}})


def test_default_subword_size():
    assert CorpusConfig().subword_size == 512
    assert from_dict({}).corpus.subword_size == 512


def test_run_directory(tmpdir, monkeypatch):
    config = tiny_config(str(tmpdir))
    assert run_directory(config) == os.path.abspath(str(tmpdir))
    doc = config.to_dict()
    doc['output_dir'] = None
    config = from_dict(doc)
    monkeypatch.setenv(BOTTLELAB_RESULTS, str(tmpdir))
    rundir = run_directory(config)
    assert os.path.dirname(rundir) == os.path.abspath(str(tmpdir))
    assert os.path.basename(rundir) == 'tiny-' + config_hash(config)[:12]


def test_config_files(tmpdir):
    config = tiny_config(str(tmpdir), speech=True)
    filename = os.path.join(str(tmpdir), 'config.json')
    save_config(config, filename)
    assert load_config(filename) == config
    with pytest.raises(InvalidConfigError):
        load_config(os.path.join(str(tmpdir), 'missing.yaml'))


def test_recipes():
    configs = recipes(seed=3)
    assert [c.name for c in configs] == list(RECIPES)
    assert all(c.seed == 3 for c in configs)
    control = recipe(SINGLE_LANGUAGE)
    assert sorted(s.granularity for s in control.students) == ['character', 'subword']
    assert all(s.languages == [PIVOT] for s in control.students)
    table5 = recipe(TABLE5_ADAPTERS)
    kinds = set(a.kind for a in table5.adapters)
    assert kinds == {'pretrained', 'random', 'dual'}
    assert not table5.adapter('pretrained-frozen').train
    assert table5.evaluation.negatives == SPEECH_NEGATIVES == 2000
    assert adapter_student(table5, table5.adapter('dual-norm')).p_norm > 0
    with pytest.raises(InvalidConfigError):
        recipe('unknown')


def test_check_reports(tmpdir):
    rundir = str(tmpdir)
    reports = os.path.join(rundir, 'reports')
    with pytest.raises(BottlelabError):
        check_reports(TABLE4_EFFICIENCY, rundir)
    butil.write_report(
        BOTTLENECK_COLUMNS,
        [
            {'source_length': 10, 'output_length': 32, 'decoder_flops': 1000, 'decode_time': 0.1},
            {'source_length': 300, 'output_length': 32, 'decoder_flops': 1000, 'decode_time': 0.2}
        ],
        os.path.join(reports, 'bottleneck.csv')
    )
    butil.write_report(
        EFFICIENCY_COLUMNS,
        [
            {'model': 'teacher', 'tokens': 10.0, 'token_ratio': 1.0},
            {'model': 'character', 'tokens': 35.0, 'token_ratio': 3.5}
        ],
        os.path.join(reports, 'efficiency.csv')
    )
    checks = check_reports(TABLE4_EFFICIENCY, rundir)
    assert len(checks) == 2
    assert all(c.passed for c in checks)
    butil.write_report(
        QUALITY_COLUMNS,
        [
            {'model': 'character', 'group': 'all', 'chrf': 40.0},
            {'model': 'subword', 'group': 'all', 'chrf': 30.0}
        ],
        os.path.join(reports, 'quality.csv')
    )
    checks = check_reports(SINGLE_LANGUAGE, rundir)
    assert len(checks) == 1
    assert not checks[0].passed
    # The control fails in both directions.
    for c_chrf, passed in [(20.0, False), (33.0, True), (27.5, True)]:
        butil.write_report(
            QUALITY_COLUMNS,
            [
                {'model': 'character', 'group': 'all', 'chrf': c_chrf},
                {'model': 'subword', 'group': 'all', 'chrf': 30.0}
            ],
            os.path.join(reports, 'quality.csv')
        )
        assert check_reports(SINGLE_LANGUAGE, rundir)[0].passed == passed
    with pytest.raises(InvalidConfigError):
        check_reports('unknown', rundir)
