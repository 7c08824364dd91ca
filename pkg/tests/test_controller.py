# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for experiment runs in a run directory."""

import os
import pytest

from flowserv.model.workflow.state import StatePending

from bottlelab.controller import ExperimentRun, StageStore
from bottlelab.error import InvalidConfigError, StageError
from bottlelab.tests import tiny_config

import bottlelab.util as butil
import flowserv.core.util as util
import flowserv.model.workflow.state as st


def test_stage_store(tmpdir):
    filename = os.path.join(str(tmpdir), 'state.json')
    store = StageStore(filename)
    assert store.get('teacher').type_id == st.STATE_PENDING
    state = StatePending().start()
    store.set('teacher', state.error(messages=['boom']))
    store.set('generate', state.success())
    store = StageStore(filename)
    assert store.get('generate').type_id == st.STATE_SUCCESS
    error = store.get('teacher')
    assert error.type_id == st.STATE_ERROR
    assert list(error.messages) == ['boom']
    doc = util.read_object(filename=filename)
    assert doc['generate']['updated'].endswith('+00:00')


def test_text_run(tmpdir):
    """Run all stages of a text-only experiment and re-run it."""
    config = tiny_config(str(tmpdir))
    run = ExperimentRun(config)
    assert run.stages() == ['generate', 'teacher', 'student:char', 'evaluate']
    rundir = run.run()
    assert rundir == os.path.abspath(str(tmpdir))
    for f in ['config.json', 'corpus.tsv', 'world.json', 'vocab-subword.tsv', 'vocab-character.tsv']:
        assert os.path.isfile(os.path.join(rundir, f))
    assert os.path.isfile(os.path.join(rundir, 'models', 'student-char.npz'))
    assert os.path.isfile(os.path.join(rundir, 'logs', 'student-char.csv'))
    states = util.read_object(filename=os.path.join(rundir, 'state.json'))
    assert set(states) == set(run.stages())
    assert all(s['state'] == st.STATE_SUCCESS for s in states.values())
    assert 'aa-nw' not in run.trained_languages('teacher')
    assert 'aa-nw' in run.trained_languages('student:char')
    rows = butil.read_report(os.path.join(rundir, 'reports', 'quality.csv'))
    assert set(r['model'] for r in rows) == {'teacher', 'char'}
    # Completed stages are skipped.
    run = ExperimentRun(config)
    assert not any(run.run_stage(stage) for stage in run.stages())
    run = ExperimentRun(config, force=True)
    assert run.run_stage('evaluate')


def test_stage_errors(tmpdir):
    run = ExperimentRun(tiny_config(str(tmpdir)))
    with pytest.raises(InvalidConfigError):
        run.run(['student:unknown'])
    # The teacher stage needs the generated corpus.
    with pytest.raises(StageError):
        run.run(['teacher'])
    state = run.state('teacher')
    assert state.type_id == st.STATE_ERROR
    assert len(state.messages) == 1


def test_speech_language_errors(tmpdir):
    config = tiny_config(str(tmpdir), speech=True)
    config.speech.languages = ['aa-nw']
    run = ExperimentRun(config)
    run.run(['generate'])
    with pytest.raises(InvalidConfigError):
        run.run(['speech'])
    assert run.state('speech').type_id == st.STATE_ERROR


def test_speech_run(tmpdir):
    config = tiny_config(str(tmpdir), speech=True)
    run = ExperimentRun(config)
    assert run.stages()[-3:] == ['speech', 'adapter:dual', 'evaluate']
    rundir = run.run()
    for split in ['train', 'dev', 'test']:
        assert os.path.isfile(os.path.join(rundir, 'speech', 'asr-aa-hi-{}.tsv'.format(split)))
    noise = util.read_object(filename=os.path.join(rundir, 'speech', 'speech.json'))
    assert noise == {'aa-hi': 0.5}
    registry = util.read_object(filename=os.path.join(rundir, 'adapters', 'dual', 'adapters.json'))
    assert registry == {'aa-hi': 'aa-hi'}
    manifest = run.manifest('adapter:dual')
    assert manifest['aa-hi']['utterances'] + manifest['aa-hi']['skipped'] == 8
    rows = butil.read_report(os.path.join(rundir, 'reports', 'speech.csv'))
    assert len(rows) == 1
    assert rows[0]['adapter'] == 'dual'
    assert rows[0]['language'] == 'aa-hi'
    assert 0.0 <= float(rows[0]['chrf']) <= 100.0
