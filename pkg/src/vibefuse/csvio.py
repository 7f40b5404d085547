"""Small CSV helpers with round-trip-exact float formatting.

Floats are written with ``repr``, which numpy/python parse back to the
identical double, so persisted artifacts are bitwise reproducible.
Comment lines start with '#' and carry provenance such as the config
hash; readers skip them.
"""

import csv

import numpy as np


def format_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows, comments=()):
    """Write rows (iterable of sequences) with an optional comment block."""
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(path):
    """Read a CSV written by ``write_csv``.

    Returns
    -------
    header : list of str
    rows : list of list of str
    comments : list of str
    """
    comments = []
    rows = []
    header = None
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if record and record[0].startswith("#"):
                comments.append(",".join(record).lstrip("# "))
                continue
            if header is None:
                header = record
            else:
                rows.append(record)
    if header is None:
        raise ValueError(f"{path} has no header row")
    return header, rows, comments


def column(header, rows, name, dtype=float):
    """One named column as an ndarray."""
    idx = header.index(name)
    return np.array([r[idx] for r in rows], dtype=dtype)
