# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.

"""Collection of helper methods for random number streams, hashing, and
tabular result files. File and directory handling is delegated to the
flowserv utility module.
"""

import csv
import hashlib
import json
import os
import zlib

import numpy as np

import flowserv.core.util as util


def derive_rng(seed, *keys):
    """Get a random generator for a stream that is derived from a base seed
    and a sequence of keys (e.g., stage name and language identifier). The
    same seed and keys always produce the same stream.

    Parameters
    ----------
    seed: int
        Base seed.
    keys: list(string or int)
        Keys that identify the derived stream.

    Returns
    -------
    numpy.random.Generator
    """
    entropy = [int(seed)]
    for key in keys:
        if isinstance(key, (int, np.integer)):
            entropy.append(int(key))
        else:
            entropy.append(zlib.crc32(str(key).encode('utf-8')))
    return np.random.default_rng(entropy)


def stable_hash(obj):
    """SHA-256 over the canonical JSON serialization (sorted keys, no
    whitespace) of a JSON-serializable object.

    Parameters
    ----------
    obj: dict or list

    Returns
    -------
    string
    """
    doc = json.dumps(obj, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(doc.encode('utf-8')).hexdigest()


def read_tsv(filename):
    """Read rows from a tab-separated UTF-8 file. Lines starting with '#' are
    skipped.

    Parameters
    ----------
    filename: string

    Returns
    -------
    list(list(string))
    """
    rows = list()
    with open(filename, 'rt', encoding='utf-8') as f:
        for line in f:
            line = line.rstrip('\n')
            if not line or line.startswith('#'):
                continue
            rows.append(line.split('\t'))
    return rows


def write_tsv(rows, filename):
    """Write rows to a tab-separated UTF-8 file.

    Parameters
    ----------
    rows: list(list)
    filename: string
    """
    dirname = os.path.dirname(filename)
    if dirname:
        util.create_dir(dirname)
    with open(filename, 'wt', encoding='utf-8') as f:
        for row in rows:
            f.write('\t'.join(str(v) for v in row) + '\n')


def write_report(columns, rows, filename):
    """Write a report as CSV with a fixed column order. Floats are written
    with six decimal places.

    Parameters
    ----------
    columns: list(string)
        Column names in output order.
    rows: list(dict)
        Report rows. Missing values are written as empty cells.
    filename: string
    """
    dirname = os.path.dirname(filename)
    if dirname:
        util.create_dir(dirname)
    with open(filename, 'wt', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(col)) for col in columns])


def read_report(filename):
    """Read a CSV report that was written by write_report. All values are
    returned as strings.

    Parameters
    ----------
    filename: string

    Returns
    -------
    list(dict)
    """
    with open(filename, 'rt', encoding='utf-8', newline='') as f:
        return [dict(row) for row in csv.DictReader(f)]


def format_value(value):
    if value is None:
        return ''
    if isinstance(value, (float, np.floating)):
        return '{:.6f}'.format(float(value))
    return str(value)


class TrainingLog(object):
    """Append-only CSV log for training loops. The first line of a new log is
    a comment that contains the serialized configuration of the training
    stage.
    """
    COLUMNS = ['step', 'phase', 'loss', 'lr']

    def __init__(self, filename=None, config=None):
        """Initialize the log. If no filename is given entries are only kept
        in memory.

        Parameters
        ----------
        filename: string, optional
        config: dict, optional
        """
        self.filename = filename
        self.entries = list()
        if filename is not None:
            dirname = os.path.dirname(filename)
            if dirname:
                util.create_dir(dirname)
            if not os.path.isfile(filename):
                with open(filename, 'wt', encoding='utf-8') as f:
                    header = json.dumps(config if config is not None else {}, sort_keys=True)
                    f.write('# config: {}\n'.format(header))
                    f.write(','.join(self.COLUMNS) + '\n')

    def append(self, step, phase, loss, lr):
        entry = (int(step), phase, float(loss), float(lr))
        self.entries.append(entry)
        if self.filename is not None:
            with open(self.filename, 'at', encoding='utf-8') as f:
                f.write('{},{},{:.8f},{:.8g}\n'.format(*entry))

    def losses(self, phase=None):
        return [e[2] for e in self.entries if phase is None or e[1] == phase]
