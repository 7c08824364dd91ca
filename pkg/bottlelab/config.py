# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Declarative experiment configuration. An experiment configuration is a
tree of dataclasses that can be read from (and written to) YAML or JSON
files. Unknown keys are rejected. The hash over the canonical serialization
of a configuration identifies the run directory for the experiment.

The root directory for run directories is taken from the environment
variable BOTTLELAB_RESULTS. The default is the sub-folder 'results' of the
current working directory.
"""

from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import List, Optional, Union, get_args, get_origin

import os

from bottlelab.error import InvalidConfigError

import bottlelab.util as butil
import flowserv.core.util as util


"""Environment variable for the results root directory."""
BOTTLELAB_RESULTS = 'BOTTLELAB_RESULTS'
DEFAULT_RESULTS = 'results'

"""Distillation objectives."""
OBJECTIVE_RECON = 'recon'
OBJECTIVE_TRANS = 'trans'
OBJECTIVE_RECON_TRANS = 'recon+trans'
OBJECTIVE_INTERPOL = 'interpol'
OBJECTIVES = [OBJECTIVE_RECON, OBJECTIVE_TRANS, OBJECTIVE_RECON_TRANS, OBJECTIVE_INTERPOL]

"""Adapter kinds."""
ADAPTER_PRETRAINED = 'pretrained'
ADAPTER_RANDOM = 'random'
ADAPTER_DUAL = 'dual'
ADAPTER_SUBWORD = 'subword'
ADAPTER_KINDS = [ADAPTER_PRETRAINED, ADAPTER_RANDOM, ADAPTER_DUAL, ADAPTER_SUBWORD]

"""Direction of parallel data for the translation objective."""
DIRECTION_X2P = 'x2p'
DIRECTION_BOTH = 'both'


@dataclass
class CorpusConfig:
    """Language world and corpus sizes. If languages is given it replaces the
    default world (list of LanguageSpec dictionaries).
    """
    scale: float = 1.0
    dev_size: int = 100
    test_size: int = 100
    subword_size: int = 512
    languages: Optional[list] = None


@dataclass
class ModelConfig:
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ffn: int = 256
    dropout: float = 0.1


@dataclass
class ScheduleConfig:
    """Training schedule that is shared by all training stages."""
    steps: int = 4000
    batch_size: int = 32
    learning_rate: float = 4e-4
    warmup_steps: int = 400
    weight_decay: float = 0.01
    max_grad_norm: float = 1.0
    temperature: float = 0.5
    dev_every: int = 200
    dev_pairs: int = 64
    keep_checkpoints: int = 3
    log_every: int = 50


@dataclass
class TeacherConfig(ScheduleConfig):
    directions: str = DIRECTION_BOTH


@dataclass
class StudentConfig(ScheduleConfig):
    """Distillation of a student encoder. The student is initialized from the
    teacher encoder unless init_from_teacher is False. If languages is given
    the student is trained on these languages only. Zero-shot students never
    see languages of tier new.
    """
    name: str = 'student'
    granularity: str = 'character'
    objective: str = OBJECTIVE_INTERPOL
    direction: str = DIRECTION_X2P
    pretrain: bool = False
    pretrain_fraction: float = 0.25
    augment_pretrain: bool = True
    p_norm: float = 0.0
    p_noise: float = 0.0
    p_delete: float = 0.0025
    p_replace: float = 0.0025
    p_insert: float = 0.0025
    p_family: float = 0.0
    languages: Optional[list] = None
    zero_shot: bool = False
    init_from_teacher: bool = True


@dataclass
class SpeechConfig:
    """Simulated acoustic front-end. If noise_sd is None it is calibrated to
    reach the target character error rate on the dev transcripts.
    """
    languages: Optional[list] = None
    utterances: int = 1000
    frame_dim: int = 48
    gain: float = 8.0
    noise_sd: Optional[float] = None
    target_cer: float = 0.05
    dup_min: int = 1
    dup_max: int = 3
    p_blank: float = 0.3
    skew: float = 0.05


@dataclass
class AdapterConfig(ScheduleConfig):
    """Cross-modal adapter for each language of the speech configuration.
    For kind 'pretrained' the flag train decides whether the adapter is
    fine-tuned at all.
    """
    name: str = 'adapter'
    kind: str = ADAPTER_DUAL
    student: Optional[str] = None
    train: bool = True
    hidden: int = 256
    gate_hidden: int = 64
    dropout: float = 0.1
    random_dropout: float = 0.3
    utterances: Optional[int] = None
    steps: int = 1000
    learning_rate: float = 2e-4
    warmup_steps: int = 100


@dataclass
class EvaluationConfig:
    split: str = 'test'
    negatives: int = 2000
    beam: int = 5
    max_len: int = 64
    max_sentences: int = 100
    retrieval: bool = True
    translation: bool = True
    interpolation: bool = False
    pairs_per_cell: int = 50
    efficiency: bool = False
    efficiency_sentences: int = 20
    speech: bool = True


@dataclass
class ExperimentConfig:
    """Complete description of an experiment run."""
    name: str = 'experiment'
    seed: int = 0
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    students: List[StudentConfig] = field(default_factory=list)
    speech: Optional[SpeechConfig] = None
    adapters: List[AdapterConfig] = field(default_factory=list)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output_dir: Optional[str] = None

    def adapter(self, name):
        return _by_name(self.adapters, name, 'adapter')

    def student(self, name):
        return _by_name(self.students, name, 'student')

    def to_dict(self):
        return asdict(self)


"""Types of list elements and nested sections."""
_SECTIONS = {
    'corpus': CorpusConfig,
    'model': ModelConfig,
    'teacher': TeacherConfig,
    'speech': SpeechConfig,
    'evaluation': EvaluationConfig
}
_LISTS = {'students': StudentConfig, 'adapters': AdapterConfig}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def adapter_student(config, adapter):
    """Get the character student that an adapter feeds into. Defaults to the
    first character student of the experiment.

    Raises
    ------
    bottlelab.error.InvalidConfigError
    """
    if adapter.student is not None:
        student = config.student(adapter.student)
        if student.granularity == 'character':
            return student
    else:
        for student in config.students:
            if student.granularity == 'character':
                return student
    raise InvalidConfigError("adapter '{}' requires a character student".format(adapter.name))


def config_hash(config):
    """Hash over the canonical serialization of a configuration. The output
    directory is not part of the hash.

    Parameters
    ----------
    config: bottlelab.config.ExperimentConfig

    Returns
    -------
    string
    """
    doc = from_dict(config.to_dict()).to_dict()
    doc.pop('output_dir', None)
    return butil.stable_hash(doc)


def from_dict(doc):
    """Create an experiment configuration from a dictionary. Raises an error
    if the dictionary contains unknown keys or invalid values.

    Parameters
    ----------
    doc: dict

    Returns
    -------
    bottlelab.config.ExperimentConfig

    Raises
    ------
    bottlelab.error.InvalidConfigError
    """
    if not isinstance(doc, dict):
        raise InvalidConfigError('configuration must be a dictionary')
    args = dict()
    for key, value in _check_keys(doc, ExperimentConfig, '').items():
        if key in _SECTIONS:
            args[key] = None if value is None else _section(value, _SECTIONS[key], key)
        elif key in _LISTS:
            if not isinstance(value, list):
                raise InvalidConfigError("'{}' must be a list".format(key))
            args[key] = [
                _section(v, _LISTS[key], '{}[{}]'.format(key, i))
                for i, v in enumerate(value)
            ]
        else:
            args[key] = _coerce(value, _FIELD_TYPES[key], key)
    config = ExperimentConfig(**args)
    validate(config)
    return config


def load_config(filename):
    """Read an experiment configuration from a YAML or JSON file.

    Parameters
    ----------
    filename: string

    Returns
    -------
    bottlelab.config.ExperimentConfig

    Raises
    ------
    bottlelab.error.InvalidConfigError
    """
    if not os.path.isfile(filename):
        raise InvalidConfigError("configuration file '{}' not found".format(filename))
    try:
        doc = util.read_object(filename=filename)
    except ValueError as ex:
        raise InvalidConfigError(str(ex))
    return from_dict(doc)


def results_root():
    """Root directory for run directories.

    Returns
    -------
    string
    """
    return os.path.abspath(os.environ.get(BOTTLELAB_RESULTS, DEFAULT_RESULTS))


def run_directory(config):
    """Get the run directory for an experiment. Uses the output directory of
    the configuration if given.

    Returns
    -------
    string
    """
    if config.output_dir:
        return os.path.abspath(config.output_dir)
    name = '{}-{}'.format(config.name, config_hash(config)[:12])
    return os.path.join(results_root(), name)


def save_config(config, filename):
    util.write_object(obj=config.to_dict(), filename=filename)


def validate(config):
    """Check value ranges and cross-references of a configuration.

    Raises
    ------
    bottlelab.error.InvalidConfigError
    """
    if not isinstance(config.seed, int):
        raise InvalidConfigError('seed must be an integer')
    if config.model.dim % config.model.heads != 0:
        raise InvalidConfigError('model dimension must be divisible by number of heads')
    if config.model.dim % 2 != 0:
        raise InvalidConfigError('model dimension must be even')
    schedules = [('teacher', config.teacher)]
    schedules += [('students[{}]'.format(s.name), s) for s in config.students]
    schedules += [('adapters[{}]'.format(a.name), a) for a in config.adapters]
    for path, sched in schedules:
        if sched.steps < 1 or sched.batch_size < 1:
            raise InvalidConfigError('{}: steps and batch size must be positive'.format(path))
        if not 0 < sched.temperature <= 1:
            raise InvalidConfigError('{}: temperature must be in (0, 1]'.format(path))
        if sched.dev_every < 1 or sched.keep_checkpoints < 1:
            raise InvalidConfigError('{}: invalid checkpoint schedule'.format(path))
    names = [s.name for s in config.students]
    if len(set(names)) != len(names):
        raise InvalidConfigError('student names must be unique')
    for s in config.students:
        if s.objective not in OBJECTIVES:
            raise InvalidConfigError("unknown objective '{}'".format(s.objective))
        if s.granularity not in ('character', 'subword'):
            raise InvalidConfigError("unknown granularity '{}'".format(s.granularity))
        if s.direction not in (DIRECTION_X2P, DIRECTION_BOTH):
            raise InvalidConfigError("unknown direction '{}'".format(s.direction))
        for key in ['p_norm', 'p_noise', 'p_delete', 'p_replace', 'p_insert', 'p_family', 'pretrain_fraction']:
            value = getattr(s, key)
            if not 0 <= value <= 1:
                raise InvalidConfigError('{}.{} must be in [0, 1]'.format(s.name, key))
    names = [a.name for a in config.adapters]
    if len(set(names)) != len(names):
        raise InvalidConfigError('adapter names must be unique')
    if config.adapters and config.speech is None:
        raise InvalidConfigError('adapters require a speech configuration')
    for a in config.adapters:
        if a.kind not in ADAPTER_KINDS:
            raise InvalidConfigError("unknown adapter kind '{}'".format(a.kind))
        if a.kind != ADAPTER_SUBWORD:
            adapter_student(config, a)
    if config.speech is not None:
        sp = config.speech
        if sp.dup_min < 1 or sp.dup_max < sp.dup_min:
            raise InvalidConfigError('invalid duplication range')
        if not 0 <= sp.p_blank <= 1:
            raise InvalidConfigError('speech.p_blank must be in [0, 1]')
    if config.evaluation.split not in ('dev', 'test'):
        raise InvalidConfigError("unknown split '{}'".format(config.evaluation.split))
    if config.evaluation.beam < 1:
        raise InvalidConfigError('beam width must be positive')


# -- Helper Methods -----------------------------------------------------------

def _by_name(elements, name, kind):
    for el in elements:
        if el.name == name:
            return el
    raise InvalidConfigError("unknown {} '{}'".format(kind, name))


def _check_keys(doc, cls, path):
    known = set(f.name for f in fields(cls))
    for key in doc:
        if key not in known:
            name = '{}.{}'.format(path, key) if path else key
            raise InvalidConfigError("unknown configuration key '{}'".format(name))
    return doc


def _section(doc, cls, path):
    if is_dataclass(doc):
        return doc
    if not isinstance(doc, dict):
        raise InvalidConfigError("'{}' must be a dictionary".format(path))
    types = {f.name: f.type for f in fields(cls)}
    args = {
        key: _coerce(value, types[key], '{}.{}'.format(path, key))
        for key, value in _check_keys(doc, cls, path).items()
    }
    try:
        return cls(**args)
    except TypeError as ex:
        raise InvalidConfigError('{}: {}'.format(path, ex))


def _coerce(value, annotation, path):
    """Convert numbers to the type of the field annotation so that 1 and
    1.0 give the same configuration.
    """
    if value is None:
        return None
    if get_origin(annotation) is Union:
        annotation = [t for t in get_args(annotation) if t is not type(None)][0]
    if annotation is bool:
        if not isinstance(value, bool):
            raise InvalidConfigError("'{}' must be a boolean".format(path))
        return value
    if annotation in (int, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidConfigError("'{}' must be a number".format(path))
        if annotation is int:
            if float(value) != int(value):
                raise InvalidConfigError("'{}' must be an integer".format(path))
            return int(value)
        return float(value)
    return value
