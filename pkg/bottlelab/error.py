# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Exceptions that are raised by the bottlelab package. All exceptions share
a common base class that keeps the error message as a property.
"""


class BottlelabError(Exception):
    """Base exception for all errors that are raised by bottlelab."""
    def __init__(self, message):
        """Initialize the error message.

        Parameters
        ----------
        message: string
            Error message.
        """
        Exception.__init__(self, message)
        self.message = message

    def __str__(self):
        """Get printable representation of the exception.

        Returns
        -------
        string
        """
        return self.message


class AlphabetError(BottlelabError):
    """Error when a text contains a character outside the base alphabet of the
    synthetic language world.
    """
    def __init__(self, char, text=None):
        msg = "character '{}' not in base alphabet".format(char)
        if text is not None:
            msg = '{} ({!r})'.format(msg, text)
        super(AlphabetError, self).__init__(msg)
        self.char = char


class CheckpointError(BottlelabError):
    """Error for checkpoints that cannot be read, combined or loaded because
    parameter names or shapes do not match.
    """
    pass


class DimensionError(BottlelabError):
    """Error for operations on tensors of incompatible shapes."""
    def __init__(self, op, shape_a, shape_b):
        msg = '{}: incompatible shapes {} and {}'.format(
            op,
            tuple(shape_a),
            tuple(shape_b)
        )
        super(DimensionError, self).__init__(msg)
        self.shapes = (tuple(shape_a), tuple(shape_b))


class InsufficientDataError(BottlelabError):
    """Error when an evaluation or sampling procedure does not have enough
    input data.
    """
    pass


class InvalidConfigError(BottlelabError):
    """Error for experiment configurations that violate the configuration
    schema.
    """
    pass


class StageError(BottlelabError):
    """Error raised by the experiment controller when one of the pipeline
    stages fails. Keeps the name of the failing stage.
    """
    def __init__(self, stage, message):
        super(StageError, self).__init__(
            "stage '{}' failed: {}".format(stage, message)
        )
        self.stage = stage


class TrainingDivergedError(BottlelabError):
    """Error when a training loop encounters a non-finite loss value."""
    def __init__(self, phase, step, loss):
        super(TrainingDivergedError, self).__init__(
            'non-finite loss {} at step {} ({})'.format(loss, step, phase)
        )
        self.phase = phase
        self.step = step
        self.loss = loss


class UnknownTokenError(BottlelabError):
    """Error for references to unknown language or family tags and for token
    identifier that are outside of a vocabulary.
    """
    pass
