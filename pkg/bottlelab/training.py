# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Shared parts of the training loops for the teacher, the students, and the
adapters: optimizer updates with gradient clipping, divergence detection,
training logs, and keeping the best checkpoints by dev loss.
"""

import logging

import numpy as np

from bottlelab.checkpoint import CheckpointKeeper
from bottlelab.error import TrainingDivergedError
from bottlelab.optim import AdamW, clip_grad_norm
from bottlelab.util import TrainingLog


logger = logging.getLogger(__name__)


"""Phase name for dev loss entries in training logs."""
PHASE_DEV = 'dev'


class Trainer(object):
    """Optimizer, log and checkpoint keeper for one training run of a
    module.
    """
    def __init__(self, name, module, schedule, logfile=None, config=None):
        """Initialize the trainer for the trainable parameters of the given
        module.

        Parameters
        ----------
        name: string
            Stage name for log messages and errors.
        module: bottlelab.nn.Module
        schedule: bottlelab.config.ScheduleConfig
        logfile: string, optional
            Path to the CSV training log.
        config: dict, optional
            Serialized stage configuration for the log header.
        """
        self.name = name
        self.module = module
        self.schedule = schedule
        self.params = module.trainable_parameters()
        self.optimizer = AdamW(
            self.params,
            learning_rate=schedule.learning_rate,
            warmup_steps=schedule.warmup_steps,
            weight_decay=schedule.weight_decay
        )
        self.log = TrainingLog(filename=logfile, config=config)
        self.keeper = CheckpointKeeper(k=schedule.keep_checkpoints)

    def update(self, step, loss, phase='train'):
        """Backpropagate the loss and update the parameters.

        Parameters
        ----------
        step: int
        loss: bottlelab.tensor.Tensor
        phase: string, default='train'

        Returns
        -------
        float

        Raises
        ------
        bottlelab.error.TrainingDivergedError
        """
        value = loss.item()
        if not np.isfinite(value):
            logger.error('%s diverged at step %d (%s)', self.name, step, phase)
            raise TrainingDivergedError('{}/{}'.format(self.name, phase), step, value)
        self.optimizer.zero_grad()
        loss.backward()
        clip_grad_norm(self.params, self.schedule.max_grad_norm)
        lr = self.optimizer.lr
        self.optimizer.step()
        self.log.append(step, phase, value, lr)
        if step % self.schedule.log_every == 0:
            logger.info('%s step %d %s loss %.6f lr %.2e', self.name, step, phase, value, lr)
        return value

    def is_dev_step(self, step):
        return step % self.schedule.dev_every == 0 or step == self.schedule.steps

    def evaluate(self, step, loss):
        """Record the dev loss for the current parameters and offer them to
        the checkpoint keeper.

        Raises
        ------
        bottlelab.error.TrainingDivergedError
        """
        if not np.isfinite(loss):
            raise TrainingDivergedError('{}/{}'.format(self.name, PHASE_DEV), step, loss)
        self.log.append(step, PHASE_DEV, loss, self.optimizer.lr)
        self.keeper.offer(step, loss, self.module.state_dict())
        logger.info('%s step %d dev loss %.6f', self.name, step, loss)

    def finish(self):
        """Load the average of the kept checkpoints into the module.

        Returns
        -------
        bottlelab.nn.Module
        """
        if len(self.keeper):
            logger.info('%s averaging checkpoints of steps %s', self.name, self.keeper.steps)
            self.module.load_state_dict(self.keeper.average())
        return self.module.eval()
