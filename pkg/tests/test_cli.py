# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for the command line interface."""

from click.testing import CliRunner

import os

from bottlelab.cli import EXIT_CONFIG, cli
from bottlelab.config import save_config
from bottlelab.recipes import RECIPES
from bottlelab.tests import tiny_config

import flowserv.core.util as util


def write_config(tmpdir):
    filename = os.path.join(str(tmpdir), 'experiment.json')
    save_config(tiny_config(os.path.join(str(tmpdir), 'run')), filename)
    return filename


def test_list_recipes():
    result = CliRunner().invoke(cli, ['recipes'])
    assert result.exit_code == 0
    assert result.output.split() == list(RECIPES)


def test_generate(tmpdir):
    filename = write_config(tmpdir)
    result = CliRunner().invoke(cli, ['generate', '-c', filename])
    assert result.exit_code == 0
    rundir = os.path.join(str(tmpdir), 'run')
    assert 'results in {}'.format(rundir) in result.output
    states = util.read_object(filename=os.path.join(rundir, 'state.json'))
    assert list(states) == ['generate']


def test_invalid_config(tmpdir):
    filename = os.path.join(str(tmpdir), 'bad.json')
    util.write_object(obj={'name': 'bad', 'unknown': 1}, filename=filename)
    result = CliRunner().invoke(cli, ['generate', '-c', filename])
    assert result.exit_code == EXIT_CONFIG
    filename = write_config(tmpdir)
    result = CliRunner().invoke(cli, ['distill', '-c', filename, '-s', 'unknown'])
    assert result.exit_code == EXIT_CONFIG
    result = CliRunner().invoke(cli, ['run-recipe', 'unknown'])
    assert result.exit_code == EXIT_CONFIG
