"""Full-precision CSV and JSON helpers

Floats are written with 17 significant digits so that every file read back with :func:`read_csv`
or :func:`read_json` reproduces the written doubles bit for bit.
"""
import csv
import json
import os

import numpy as np

__all__ = ['fmt', 'write_csv', 'read_csv', 'write_json', 'read_json', 'to_jsonable', 'dumps']


def fmt(value):
    """Format a number with round-trip precision; strings pass through"""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), '.17g')


def write_csv(path, header, columns):
    """Write equally long `columns` under `header`

    :param str path: destination file
    :param list header: column names
    :param list columns: sequences of numbers, one per header entry
    """
    columns = [np.asarray(c) for c in columns]
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError('columns differ in length')

    _ensure_dir(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for i in range(n):
            writer.writerow([fmt(c[i]) for c in columns])


def read_csv(path):
    """Read a numeric CSV file written by :func:`write_csv`

    :return: mapping of column name to float array
    :rtype: dict
    """
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and infinities into JSON-friendly values"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        if obj != obj:
            return 'nan'
        if obj in (float('inf'), float('-inf')):
            return 'inf' if obj > 0 else '-inf'
        return obj
    return obj


def from_jsonable(value):
    """Inverse of the infinity/NaN encoding of :func:`to_jsonable` for a single value"""
    if value in ('inf', '-inf', 'nan'):
        return float(value)
    return value


def dumps(obj, **kwargs):
    return json.dumps(to_jsonable(obj), **kwargs)


def write_json(path, obj):
    _ensure_dir(path)
    with open(path, 'w') as f:
        f.write(dumps(obj, indent=1, sort_keys=True))
        f.write('\n')


def read_json(path):
    with open(path) as f:
        return json.load(f)


def _ensure_dir(path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
