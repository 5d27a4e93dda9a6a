"""Plain-text persistence: key=value header blocks and numeric tables.

All floats are written with 17 significant digits, which round-trips
IEEE doubles exactly.
"""

import csv
import io as _io

import numpy as np


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path, header, names, data):
    """Header lines ``key=value``, a ``columns=`` line, then whitespace rows."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w") as fh:
        for k, v in header.items():
            fh.write(f"{k}={fmt(v)}\n")
        fh.write("columns=" + " ".join(names) + "\n")
        for row in data:
            fh.write(" ".join(fmt(x) for x in row) + "\n")


def read_table(path):
    header = {}
    names = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if names is None:
                key, sep, val = line.partition("=")
                if not sep:
                    raise ValueError(f"{path}: expected key=value header line, got {line!r}")
                if key == "columns":
                    names = val.split()
                else:
                    header[key] = val
            else:
                rows.append([float(t) for t in line.split()])
    if names is None:
        raise ValueError(f"{path}: missing columns= line")
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return header, names, data


def write_csv(path, names, rows, config_hash=None):
    """CSV with an optional ``# config_hash=...`` comment before the header."""
    buf = _io.StringIO()
    if config_hash is not None:
        buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """Return ``(config_hash or None, names, float array)``."""
    config_hash = None
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        key, _, val = lines[0][1:].strip().partition("=")
        if key == "config_hash":
            config_hash = val
        lines = lines[1:]
    reader = csv.reader(lines)
    names = next(reader)
    data = np.array([[float(x) for x in r] for r in reader], dtype=float)
    return config_hash, names, data.reshape(-1, len(names))
