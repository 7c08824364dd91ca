# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Parameter checkpoints. A checkpoint is an ordered mapping from parameter
names to arrays. On disk checkpoints are numpy .npz archives which store
name, shape, and the raw row-major values, i.e., they round-trip bit-exactly.
"""

from collections import OrderedDict

import logging
import os

import numpy as np

from bottlelab.error import CheckpointError
from bottlelab.tensor import DTYPE

import flowserv.core.util as util


logger = logging.getLogger(__name__)


def average_checkpoints(checkpoints):
    """Elementwise arithmetic mean of a list of checkpoints.

    Parameters
    ----------
    checkpoints: list(dict(string: numpy.ndarray))

    Returns
    -------
    collections.OrderedDict

    Raises
    ------
    bottlelab.error.CheckpointError
    """
    if not checkpoints:
        raise CheckpointError('no checkpoints to average')
    first = checkpoints[0]
    names = list(first.keys())
    for ckpt in checkpoints[1:]:
        if list(ckpt.keys()) != names:
            raise CheckpointError('parameter names differ between checkpoints')
        for name in names:
            if ckpt[name].shape != first[name].shape:
                raise CheckpointError(
                    "shape mismatch for '{}': {} != {}".format(
                        name,
                        ckpt[name].shape,
                        first[name].shape
                    )
                )
    # Average the offsets from the first checkpoint. Identical checkpoints
    # then average to themselves without rounding.
    result = OrderedDict()
    for name in names:
        base = np.asarray(first[name], dtype=DTYPE)
        offset = np.zeros_like(base)
        for ckpt in checkpoints[1:]:
            offset = offset + (ckpt[name] - base)
        result[name] = base + offset / len(checkpoints)
    return result


def load_checkpoint(filename):
    """Read a checkpoint file.

    Parameters
    ----------
    filename: string

    Returns
    -------
    collections.OrderedDict

    Raises
    ------
    bottlelab.error.CheckpointError
    """
    if not os.path.isfile(filename):
        raise CheckpointError("checkpoint '{}' not found".format(filename))
    with np.load(filename, allow_pickle=False) as archive:
        return OrderedDict((name, archive[name]) for name in archive.files)


def save_checkpoint(state, filename):
    """Write a checkpoint file. Parameter order is preserved.

    Parameters
    ----------
    state: dict(string: numpy.ndarray)
    filename: string
    """
    dirname = os.path.dirname(filename)
    if dirname:
        util.create_dir(dirname)
    with open(filename, 'wb') as f:
        np.savez(f, **OrderedDict((k, np.asarray(v)) for k, v in state.items()))
    logger.debug('wrote checkpoint %s (%d tensors)', filename, len(state))


class CheckpointKeeper(object):
    """Keep the k checkpoints with the lowest dev loss seen during training.
    Ties are resolved in favour of the earlier checkpoint.
    """
    def __init__(self, k=3):
        self.k = k
        self.entries = list()

    def __len__(self):
        return len(self.entries)

    def offer(self, step, loss, state):
        """Consider a checkpoint for the kept set.

        Parameters
        ----------
        step: int
        loss: float
        state: dict(string: numpy.ndarray)

        Returns
        -------
        bool
            True if the checkpoint was kept.
        """
        self.entries.append((loss, step, state))
        self.entries.sort(key=lambda e: (e[0], e[1]))
        kept = len(self.entries) <= self.k or self.entries[self.k][1] != step
        self.entries = self.entries[:self.k]
        return kept

    @property
    def steps(self):
        return [step for _, step, _ in self.entries]

    def average(self):
        """Average of the kept checkpoints.

        Returns
        -------
        collections.OrderedDict
        """
        return average_checkpoints([state for _, _, state in self.entries])
