# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Command line interface for experiment runs. Every stage command also
executes the stages it depends on. Stages that completed before are
skipped unless --force is given.

Exit codes are 0 on success, 2 for invalid configurations, 3 for stage
failures, and 4 if an acceptance check of a recipe fails.
"""

import click
import logging
import sys

from bottlelab.config import load_config
from bottlelab.controller import (
    STAGE_EVALUATE, STAGE_GENERATE, STAGE_TEACHER, ExperimentRun, adapter_stage,
    student_stage
)
from bottlelab.error import BottlelabError, InvalidConfigError
from bottlelab.recipes import RECIPES, check_reports, recipe


"""Exit codes."""
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_CHECK = 4


@click.group()
@click.option('-v', '--verbose', is_flag=True, default=False, help='Debug output.')
def cli(verbose):
    """Command Line Interface for the character bottleneck laboratory."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )


config_option = click.option(
    '-c', '--config',
    required=True,
    type=click.Path(exists=True, dir_okay=False, readable=True),
    help='Experiment configuration file.'
)

force_option = click.option(
    '-f', '--force',
    is_flag=True,
    default=False,
    help='Re-run completed stages.'
)


# -- Stage commands -----------------------------------------------------------

@cli.command(name='generate')
@config_option
@force_option
def generate(config, force):
    """Generate corpus and vocabularies."""
    _run(config, force, lambda run: STAGE_GENERATE)


@cli.command(name='train-teacher')
@config_option
@force_option
def train_teacher(config, force):
    """Train the subword teacher."""
    _run(config, force, lambda run: STAGE_TEACHER)


@cli.command(name='distill')
@config_option
@click.option('-s', '--student', required=False, help='Student name (default all).')
@force_option
def distill(config, student, force):
    """Distill character or subword students."""
    def target(run):
        names = [student] if student else [s.name for s in run.config.students]
        return [student_stage(run.config.student(n).name) for n in names]

    _run(config, force, target)


@cli.command(name='train-adapter')
@config_option
@click.option('-a', '--adapter', required=False, help='Adapter name (default all).')
@force_option
def train_adapter(config, adapter, force):
    """Train cross-modal speech adapters."""
    def target(run):
        names = [adapter] if adapter else [a.name for a in run.config.adapters]
        return [adapter_stage(run.config.adapter(n).name) for n in names]

    _run(config, force, target)


@cli.command(name='evaluate')
@config_option
@force_option
def evaluate(config, force):
    """Run all stages and write the reports."""
    _run(config, force, lambda run: STAGE_EVALUATE)


# -- Recipes ------------------------------------------------------------------

@cli.command(name='recipes')
def list_recipes():
    """List the names of the canonical recipes."""
    for name in RECIPES:
        click.echo(name)


@cli.command(name='run-recipe')
@click.argument('name')
@click.option('-s', '--seed', type=int, default=0, show_default=True, help='Random seed.')
@click.option('-o', '--output', required=False, help='Run directory.')
@click.option('--check', is_flag=True, default=False, help='Evaluate acceptance checks.')
@force_option
def run_recipe(name, seed, output, check, force):
    """Run a canonical recipe."""
    try:
        config = recipe(name, seed=seed)
    except InvalidConfigError as ex:
        click.echo('Error: {}'.format(ex), err=True)
        sys.exit(EXIT_CONFIG)
    rundir = _execute(ExperimentRun(config, rundir=output, force=force), None)
    if not check:
        return
    try:
        checks = check_reports(name, rundir)
    except BottlelabError as ex:
        click.echo('Error: {}'.format(ex), err=True)
        sys.exit(EXIT_CHECK)
    for c in checks:
        click.echo('{} {} ({})'.format('PASS' if c.passed else 'FAIL', c.name, c.detail))
    if not all(c.passed for c in checks):
        sys.exit(EXIT_CHECK)


# -- Helper Methods -----------------------------------------------------------

def _execute(run, stages):
    """Execute stages of a run and map errors to exit codes."""
    try:
        rundir = run.run(stages)
    except InvalidConfigError as ex:
        click.echo('Error: {}'.format(ex), err=True)
        sys.exit(EXIT_CONFIG)
    except BottlelabError as ex:
        click.echo('Error: {}'.format(ex), err=True)
        sys.exit(EXIT_STAGE)
    click.echo('results in {}'.format(rundir))
    return rundir


def _run(filename, force, target):
    """Run all stages up to (and including) the target stages of the
    configuration in the given file.
    """
    try:
        run = ExperimentRun(load_config(filename), force=force)
        targets = target(run)
    except InvalidConfigError as ex:
        click.echo('Error: {}'.format(ex), err=True)
        sys.exit(EXIT_CONFIG)
    targets = [targets] if isinstance(targets, str) else targets
    stages = run.stages()
    last = max(stages.index(t) for t in targets) if targets else -1
    selected = [s for s in stages[:last + 1] if not _is_sibling(s, targets)]
    _execute(run, selected)


def _is_sibling(stage, targets):
    """Student and adapter stages other than the targets are not needed
    for the targets. Adapters do need their students.
    """
    if stage in targets:
        return False
    if stage.startswith('student:'):
        return not any(t.startswith('adapter:') or t == STAGE_EVALUATE for t in targets)
    if stage.startswith('adapter:'):
        return not any(t == STAGE_EVALUATE for t in targets)
    return False
