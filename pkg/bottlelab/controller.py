# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Controller for experiment runs. A run executes the stages generate,
teacher, one stage per student, speech, one stage per adapter, and evaluate
in this order. Each stage moves through the workflow states pending,
running, and success or error. Stage states are persisted in the file
state.json of the run directory. Stages that completed successfully (and
whose outputs exist) are skipped unless the run is forced.
"""

from datetime import datetime, timezone

import logging
import os

from flowserv.model.workflow.state import StatePending

from bottlelab.adapter import (
    SpeechAdapter, SubwordPoolAdapter, load_adapter, read_registry, save_adapter,
    speech_data, train_adapter
)
from bottlelab.config import ADAPTER_SUBWORD, adapter_student, run_directory, save_config
from bottlelab.corpus import (
    BASE_ALPHABET, SPLIT_DEV, SPLIT_TEST, SPLIT_TRAIN, TIER_NEW, LanguageSpec,
    default_world, generate_corpus, read_corpus
)
from bottlelab.ctc import (
    FrameSimulator, asr_utterances, calibrate_noise, create_head, read_asr, write_asr
)
from bottlelab.distill import normalize_text, train_student
from bottlelab.error import BottlelabError, InvalidConfigError, StageError
from bottlelab.evaluation import (
    BOTTLENECK_COLUMNS, EFFICIENCY_COLUMNS, INTERPOLATION_COLUMNS, QUALITY_COLUMNS,
    SPEECH_COLUMNS, EvaluationSet, efficiency_bench, evaluate_speech,
    evaluate_text_model, interpolation_study
)
from bottlelab.model import load_model, save_model, teacher_languages, train_teacher
from bottlelab.tokenizer import CHARACTER, SUBWORD, read_vocab, train_subword_vocab, write_vocab

import bottlelab.util as butil
import flowserv.core.util as util
import flowserv.model.workflow.state as st


logger = logging.getLogger(__name__)


"""Names of the fixed stages."""
STAGE_GENERATE = 'generate'
STAGE_TEACHER = 'teacher'
STAGE_SPEECH = 'speech'
STAGE_EVALUATE = 'evaluate'

"""Files and folders in the run directory."""
CONFIG_FILE = 'config.json'
CORPUS_FILE = 'corpus.tsv'
STATE_FILE = 'state.json'
WORLD_FILE = 'world.json'
SPEECH_FILE = 'speech.json'
ADAPTERS_DIR = 'adapters'
LOGS_DIR = 'logs'
MODELS_DIR = 'models'
REPORTS_DIR = 'reports'
SPEECH_DIR = 'speech'


def adapter_stage(name):
    return 'adapter:{}'.format(name)


def student_stage(name):
    return 'student:{}'.format(name)


def stage_filename(stage):
    """File name component for a stage name."""
    return stage.replace(':', '-')


class StageStore(object):
    """Persistent workflow states of the stages of a run."""
    def __init__(self, filename):
        """Initialize the store. Reads the state file if it exists.

        Parameters
        ----------
        filename: string
        """
        self.filename = filename
        self.doc = dict()
        if os.path.isfile(filename):
            self.doc = dict(util.read_object(filename=filename))

    def get(self, stage):
        """Get the current state of a stage (pending if unknown).

        Parameters
        ----------
        stage: string

        Returns
        -------
        flowserv.model.workflow.state.WorkflowState
        """
        entry = self.doc.get(stage)
        state = StatePending()
        if entry is None:
            return state
        if entry['state'] == st.STATE_SUCCESS:
            return state.start().success()
        elif entry['state'] == st.STATE_ERROR:
            return state.start().error(messages=entry.get('messages', []))
        return state

    def set(self, stage, state):
        """Persist the state of a stage."""
        entry = {'state': state.type_id, 'updated': datetime.now(timezone.utc).isoformat()}
        if state.type_id == st.STATE_ERROR:
            entry['messages'] = list(state.messages)
        self.doc[stage] = entry
        util.write_object(obj=self.doc, filename=self.filename)


class ExperimentRun(object):
    """Execute the stages of an experiment in its run directory. Data that
    was produced by earlier stages is read from the run directory on
    demand.
    """
    def __init__(self, config, rundir=None, force=False):
        """Initialize the run directory and the stage state store.

        Parameters
        ----------
        config: bottlelab.config.ExperimentConfig
        rundir: string, optional
            Defaults to the run directory for the configuration hash.
        force: bool, default=False
            Re-run stages that completed successfully.
        """
        self.config = config
        self.rundir = os.path.abspath(rundir) if rundir else run_directory(config)
        self.force = force
        self.seed = config.seed
        util.create_dir(self.rundir)
        save_config(config, self._path(CONFIG_FILE))
        self.store = StageStore(self._path(STATE_FILE))
        self._cache = dict()

    def stages(self):
        """Names of all stages of the run in execution order.

        Returns
        -------
        list(string)
        """
        stages = [STAGE_GENERATE, STAGE_TEACHER]
        stages.extend(student_stage(s.name) for s in self.config.students)
        if self.config.speech is not None:
            stages.append(STAGE_SPEECH)
            stages.extend(adapter_stage(a.name) for a in self.config.adapters)
        stages.append(STAGE_EVALUATE)
        return stages

    def run(self, stages=None):
        """Execute the given stages (default all) in order.

        Parameters
        ----------
        stages: list(string), optional

        Returns
        -------
        string
            Path to the run directory.

        Raises
        ------
        bottlelab.error.StageError
        bottlelab.error.InvalidConfigError
        """
        known = self.stages()
        selected = known if stages is None else stages
        for stage in selected:
            if stage not in known:
                raise InvalidConfigError("unknown stage '{}'".format(stage))
        for stage in known:
            if stage in selected:
                self.run_stage(stage)
        return self.rundir

    def run_stage(self, stage):
        """Execute a single stage unless it completed before.

        Parameters
        ----------
        stage: string

        Returns
        -------
        bool
            True if the stage was executed, False if it was skipped.

        Raises
        ------
        bottlelab.error.StageError
        bottlelab.error.InvalidConfigError
        """
        state = self.store.get(stage)
        if state.type_id == st.STATE_SUCCESS and not self.force and self._has_outputs(stage):
            logger.info('skip completed stage %s', stage)
            return False
        state = StatePending().start()
        self.store.set(stage, state)
        logger.info('start stage %s in %s', stage, self.rundir)
        try:
            self._execute(stage)
        except InvalidConfigError as ex:
            self.store.set(stage, state.error(messages=[str(ex)]))
            raise
        except Exception as ex:
            logger.error('stage %s failed: %s', stage, ex)
            self.store.set(stage, state.error(messages=[str(ex)]))
            raise StageError(stage, str(ex)) from ex
        self.store.set(stage, state.success())
        logger.info('finished stage %s', stage)
        return True

    def state(self, stage):
        return self.store.get(stage)

    # -- Stages ---------------------------------------------------------------

    def _execute(self, stage):
        if stage == STAGE_GENERATE:
            self.generate()
        elif stage == STAGE_TEACHER:
            self.train_teacher()
        elif stage.startswith('student:'):
            self.distill(stage.split(':', 1)[1])
        elif stage == STAGE_SPEECH:
            self.simulate_speech()
        elif stage.startswith('adapter:'):
            self.train_adapters(stage.split(':', 1)[1])
        elif stage == STAGE_EVALUATE:
            self.evaluate()
        else:
            raise InvalidConfigError("unknown stage '{}'".format(stage))

    def generate(self):
        """Generate the corpus and train the vocabulary pair."""
        specs = self.world()
        corpus = generate_corpus(
            specs,
            self.seed,
            dev_size=self.config.corpus.dev_size,
            test_size=self.config.corpus.test_size
        )
        corpus.write(self._path(CORPUS_FILE))
        util.write_object(obj=[s.to_dict() for s in specs], filename=self._path(WORLD_FILE))
        alphabet = set(BASE_ALPHABET)
        for spec in specs:
            alphabet.update(spec.letters)
        vocab = train_subword_vocab(
            corpus.texts(),
            self.config.corpus.subword_size,
            languages=corpus.families(),
            alphabet=alphabet
        )
        write_vocab(vocab, self.rundir)
        self._cache = {'corpus': corpus, 'vocab': vocab}

    def train_teacher(self):
        teacher, manifest = train_teacher(
            self.corpus,
            self.vocab,
            self.config.model,
            self.config.teacher,
            self.seed,
            logfile=self._log(STAGE_TEACHER)
        )
        save_model(teacher, self._path(MODELS_DIR), STAGE_TEACHER, vocab=self.vocab)
        self._write_manifest(STAGE_TEACHER, manifest)
        self._cache[STAGE_TEACHER] = teacher

    def distill(self, name):
        """Distill the student with the given name from the teacher encoder."""
        config = self.config.student(name)
        stage = student_stage(name)
        student, manifest = train_student(
            self.teacher.encoder,
            self.corpus,
            self.vocab,
            config,
            self.seed,
            logfile=self._log(stage)
        )
        save_model(student, self._path(MODELS_DIR), stage_filename(stage), vocab=self.vocab)
        self._write_manifest(stage, manifest)
        self._cache[stage] = student

    def simulate_speech(self):
        """Write the simulated utterances of every speech language and set
        the noise level of the frame simulator.
        """
        sp = self.config.speech
        noise = dict()
        for lang in self.speech_languages():
            head = self.head(lang)
            for split in (SPLIT_TRAIN, SPLIT_DEV, SPLIT_TEST):
                utts = asr_utterances(
                    self.corpus,
                    lang,
                    split,
                    sp.utterances if split == SPLIT_TRAIN else None,
                    self.seed,
                    normalize_text
                )
                write_asr(utts, self._asr_file(lang, split))
            if sp.noise_sd is not None:
                noise[lang] = float(sp.noise_sd)
            else:
                noise[lang] = calibrate_noise(
                    head,
                    read_asr(self._asr_file(lang, SPLIT_DEV)),
                    gain=sp.gain,
                    dup_range=(sp.dup_min, sp.dup_max),
                    p_blank=sp.p_blank,
                    target_cer=sp.target_cer
                )
        util.write_object(obj=noise, filename=self._path(SPEECH_DIR, SPEECH_FILE))
        self._cache.pop(SPEECH_FILE, None)

    def train_adapters(self, name):
        """Train one adapter of the given configuration per speech
        language.
        """
        config = self.config.adapter(name)
        stage = adapter_stage(name)
        dirname = self._path(ADAPTERS_DIR, stage_filename(name))
        manifest = dict()
        for lang in self.speech_languages():
            simulator = self.simulator(lang)
            adapter, encoder, tag_id = self._create_adapter(config, lang)
            train = read_asr(self._asr_file(lang, SPLIT_TRAIN))
            if config.utterances is not None:
                train = train[:config.utterances]
            dev = read_asr(self._asr_file(lang, SPLIT_DEV))[:config.dev_pairs]
            adapter, manifest[lang] = train_adapter(
                adapter,
                encoder,
                tag_id,
                speech_data(adapter, simulator, train, self.teacher.encoder, self.vocab),
                speech_data(adapter, simulator, dev, self.teacher.encoder, self.vocab),
                config,
                self.seed,
                logfile=self._log('{}-{}'.format(stage, lang))
            )
            save_adapter(adapter, dirname, lang, lang)
        self._write_manifest(stage, manifest)

    def evaluate(self):
        """Write the report files for the evaluation suites of the
        configuration.
        """
        ev = self.config.evaluation
        evalset = EvaluationSet(self.corpus, ev, self.seed)
        reports = self._path(REPORTS_DIR)
        if ev.retrieval or ev.translation:
            rows = list()
            teacher = self.teacher
            report = evaluate_text_model(
                STAGE_TEACHER,
                teacher.encoder,
                SUBWORD,
                teacher,
                self.vocab,
                evalset,
                trained=teacher_languages(self.corpus)
            )
            rows.extend(report.rows())
            for s in self.config.students:
                report = evaluate_text_model(
                    s.name,
                    self.student(s.name),
                    s.granularity,
                    teacher,
                    self.vocab,
                    evalset,
                    trained=self.trained_languages(student_stage(s.name))
                )
                rows.extend(report.rows())
            butil.write_report(QUALITY_COLUMNS, rows, os.path.join(reports, 'quality.csv'))
        if ev.interpolation:
            rows = interpolation_study(
                self.teacher,
                self.vocab,
                self.corpus,
                ev.pairs_per_cell,
                self.seed,
                beam=ev.beam,
                max_len=ev.max_len,
                split=ev.split
            )
            butil.write_report(INTERPOLATION_COLUMNS, rows, os.path.join(reports, 'interpolation.csv'))
        if ev.efficiency:
            self._efficiency(evalset, reports)
        if ev.speech and self.config.speech is not None and self.config.adapters:
            self._speech(evalset, reports)

    # -- Artifacts ------------------------------------------------------------

    @property
    def corpus(self):
        if 'corpus' not in self._cache:
            self._cache['corpus'] = read_corpus(self._path(CORPUS_FILE), self.world(), self.seed)
        return self._cache['corpus']

    @property
    def teacher(self):
        if STAGE_TEACHER not in self._cache:
            self._cache[STAGE_TEACHER] = load_model(self._path(MODELS_DIR), STAGE_TEACHER, vocab=self.vocab)
        return self._cache[STAGE_TEACHER]

    @property
    def vocab(self):
        if 'vocab' not in self._cache:
            self._cache['vocab'] = read_vocab(self.rundir, self.corpus.families())
        return self._cache['vocab']

    def adapter(self, name, language):
        """Load the trained adapter of a configuration for a language."""
        config = self.config.adapter(name)
        dirname = self._path(ADAPTERS_DIR, stage_filename(name))
        registry = read_registry(dirname)
        if language not in registry:
            raise BottlelabError("no adapter '{}' for '{}'".format(name, language))
        if config.kind == ADAPTER_SUBWORD:
            return load_adapter(dirname, registry[language], head=self.head(language), vocab=self.vocab)
        return load_adapter(dirname, registry[language])

    def head(self, language):
        sp = self.config.speech
        return create_head(
            self.corpus.spec(language),
            self.vocab,
            dim=sp.frame_dim,
            skew=sp.skew,
            seed=self.seed
        )

    def simulator(self, language):
        sp = self.config.speech
        if SPEECH_FILE not in self._cache:
            self._cache[SPEECH_FILE] = util.read_object(filename=self._path(SPEECH_DIR, SPEECH_FILE))
        return FrameSimulator(
            self.head(language),
            gain=sp.gain,
            noise_sd=self._cache[SPEECH_FILE][language],
            dup_range=(sp.dup_min, sp.dup_max),
            p_blank=sp.p_blank
        )

    def speech_languages(self):
        """Languages with simulated speech. Defaults to all languages the
        teacher was trained on except the pivot.

        Raises
        ------
        bottlelab.error.InvalidConfigError
        """
        corpus = self.corpus
        if self.config.speech.languages is None:
            return [lang for lang in teacher_languages(corpus) if lang != corpus.pivot]
        languages = list(self.config.speech.languages)
        for lang in languages:
            try:
                spec = corpus.spec(lang)
            except KeyError:
                raise InvalidConfigError("unknown speech language '{}'".format(lang))
            if spec.tier == TIER_NEW or lang == corpus.pivot:
                raise InvalidConfigError("no speech for language '{}'".format(lang))
        return languages

    def student(self, name):
        stage = student_stage(name)
        if stage not in self._cache:
            self._cache[stage] = load_model(self._path(MODELS_DIR), stage_filename(stage), vocab=self.vocab)
        return self._cache[stage]

    def trained_languages(self, stage):
        """Languages in the training manifest of a stage."""
        return list(self.manifest(stage))

    def manifest(self, stage):
        return util.read_object(filename=self._path('manifest-{}.json'.format(stage_filename(stage))))

    def world(self):
        """Language specifications of the configuration (default world
        unless languages are given explicitly).

        Raises
        ------
        bottlelab.error.InvalidConfigError
        """
        cfg = self.config.corpus
        if cfg.languages is None:
            return default_world(cfg.scale)
        try:
            return [LanguageSpec(**doc) for doc in cfg.languages]
        except (TypeError, BottlelabError) as ex:
            raise InvalidConfigError('invalid language specification: {}'.format(ex))

    # -- Helper Methods -------------------------------------------------------

    def _asr_file(self, language, split):
        return self._path(SPEECH_DIR, 'asr-{}-{}.tsv'.format(language, split))

    def _create_adapter(self, config, language):
        rng = butil.derive_rng(self.seed, 'adapter', config.name, language, 'init')
        head = self.head(language)
        if config.kind == ADAPTER_SUBWORD:
            encoder = self.teacher.encoder
            adapter = SubwordPoolAdapter(
                frame_dim=head.dim,
                dim=encoder.dim,
                hidden=config.hidden,
                dropout=config.random_dropout,
                rng=rng,
                head=head,
                vocab=self.vocab
            )
            return adapter, encoder, self.vocab.subword.tag_id(language)
        encoder = self.student(adapter_student(self.config, config).name)
        adapter = SpeechAdapter.from_head(config.kind, head, encoder, config, rng)
        return adapter, encoder, self.vocab.character.tag_id(language)

    def _efficiency(self, evalset, reports):
        ev = self.config.evaluation
        models = [(STAGE_TEACHER, self.teacher.encoder, SUBWORD)]
        models.extend((s.name, self.student(s.name), s.granularity) for s in self.config.students)
        languages = [lang for lang in evalset.languages if evalset.pairs[lang]]
        sentences, tags = list(), list()
        for i in range(ev.efficiency_sentences):
            lang = languages[i % len(languages)]
            pairs = evalset.pairs[lang]
            sentences.append(pairs[(i // len(languages)) % len(pairs)].source)
            tags.append(lang)
        rows, bottleneck = efficiency_bench(
            models,
            self.teacher,
            self.vocab,
            sentences,
            tags,
            self.corpus.pivot,
            output_length=ev.max_len,
            seed=self.seed
        )
        butil.write_report(EFFICIENCY_COLUMNS, rows, os.path.join(reports, 'efficiency.csv'))
        butil.write_report(BOTTLENECK_COLUMNS, bottleneck, os.path.join(reports, 'bottleneck.csv'))

    def _has_outputs(self, stage):
        if stage == STAGE_GENERATE:
            files = [CORPUS_FILE, WORLD_FILE, 'vocab-subword.tsv', 'vocab-character.tsv']
        elif stage == STAGE_TEACHER or stage.startswith('student:'):
            name = stage_filename(stage)
            files = [os.path.join(MODELS_DIR, name + '.npz'), 'manifest-{}.json'.format(name)]
        elif stage == STAGE_SPEECH:
            files = [os.path.join(SPEECH_DIR, SPEECH_FILE)]
        elif stage.startswith('adapter:'):
            files = ['manifest-{}.json'.format(stage_filename(stage))]
        else:
            files = [REPORTS_DIR]
        return all(os.path.exists(self._path(f)) for f in files)

    def _log(self, name):
        return self._path(LOGS_DIR, '{}.csv'.format(stage_filename(name)))

    def _path(self, *names):
        return os.path.join(self.rundir, *names)

    def _speech(self, evalset, reports):
        ev = self.config.evaluation
        rows = list()
        for config in self.config.adapters:
            try:
                student_cfg = adapter_student(self.config, config)
            except InvalidConfigError:
                logger.warning("no character student for speech evaluation of '%s'", config.name)
                continue
            student = self.student(student_cfg.name)
            for lang in self.speech_languages():
                adapter = self.adapter(config.name, lang)
                if config.kind == ADAPTER_SUBWORD:
                    encoder = self.teacher.encoder
                    tag_id = self.vocab.subword.tag_id(lang)
                else:
                    encoder = student
                    tag_id = self.vocab.character.tag_id(lang)
                utterances = read_asr(self._asr_file(lang, ev.split))[:ev.max_sentences]
                targets = {p.pair_id: p.target for p in self.corpus.pairs(lang, ev.split)}
                rows.append(
                    evaluate_speech(
                        config.name,
                        adapter,
                        encoder,
                        tag_id,
                        self.simulator(lang),
                        utterances,
                        [targets[u.utt_id] for u in utterances],
                        student,
                        lang,
                        self.teacher,
                        self.vocab,
                        evalset
                    )
                )
        butil.write_report(SPEECH_COLUMNS, rows, os.path.join(reports, 'speech.csv'))

    def _write_manifest(self, stage, manifest):
        filename = self._path('manifest-{}.json'.format(stage_filename(stage)))
        util.write_object(obj=manifest, filename=filename)
