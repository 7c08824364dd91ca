# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Unit tests for checkpoint files, averaging, and the checkpoint keeper."""

import numpy as np
import os
import pytest

from bottlelab.checkpoint import (
    CheckpointKeeper, average_checkpoints, load_checkpoint, save_checkpoint
)
from bottlelab.error import CheckpointError


def checkpoint(seed):
    rng = np.random.default_rng(seed)
    return {'a': rng.normal(size=(3, 2)), 'b': rng.normal(size=4)}


def test_average_identical_is_identity():
    ckpt = checkpoint(0)
    avg = average_checkpoints([ckpt, ckpt, ckpt])
    for name in ckpt:
        assert np.array_equal(avg[name], ckpt[name])


def test_average_values():
    c1, c2 = checkpoint(1), checkpoint(2)
    avg = average_checkpoints([c1, c2])
    assert np.allclose(avg['a'], (c1['a'] + c2['a']) / 2)


def test_average_mismatch():
    c1 = checkpoint(1)
    with pytest.raises(CheckpointError):
        average_checkpoints([c1, {'a': c1['a']}])
    with pytest.raises(CheckpointError):
        average_checkpoints([c1, {'a': np.zeros(6), 'b': c1['b']}])
    with pytest.raises(CheckpointError):
        average_checkpoints([])


def test_checkpoint_file(tmpdir):
    filename = os.path.join(str(tmpdir), 'models', 'ckpt.npz')
    ckpt = checkpoint(3)
    save_checkpoint(ckpt, filename)
    loaded = load_checkpoint(filename)
    assert list(loaded.keys()) == ['a', 'b']
    assert np.array_equal(loaded['a'], ckpt['a'])
    with pytest.raises(CheckpointError):
        load_checkpoint(os.path.join(str(tmpdir), 'missing.npz'))


def test_keeper_keeps_best():
    keeper = CheckpointKeeper(k=2)
    assert keeper.offer(1, 3.0, checkpoint(1))
    assert keeper.offer(2, 1.0, checkpoint(2))
    assert keeper.offer(3, 2.0, checkpoint(3))
    assert not keeper.offer(4, 5.0, checkpoint(4))
    assert keeper.steps == [2, 3]
    # Ties keep the earlier checkpoint.
    assert not keeper.offer(5, 2.0, checkpoint(5))
    assert keeper.steps == [2, 3]
