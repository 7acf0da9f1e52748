"""Versioned structured-text serialization for model artifacts.

Every persisted model is a plain text document:

    pcgkit-<kind> version: <int>
    <key>: <value>
    ...
    tensor <name> <dim0> [<dim1>]
    <row of values>
    ...
    end

Floats are written with 17 significant digits so float64 round-trips exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def format_float(x: float) -> str:
    return "%.17g" % float(x)


def _parse_row(line):
    return np.array([float(tok) for tok in line.split()], dtype=np.float64)


def write_document(path, kind, meta, arrays, version=1):
    """Write metadata and named arrays to a versioned text document.

    meta is an ordered mapping of scalar values; arrays maps names to 1-D or
    2-D float arrays. Key order is preserved so identical inputs produce
    byte-identical files.
    """
    lines = ["pcgkit-%s version: %d" % (kind, version)]
    for key, value in meta.items():
        if isinstance(value, float):
            value = format_float(value)
        lines.append("%s: %s" % (key, value))
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1:
            lines.append("tensor %s %d" % (name, arr.shape[0]))
            lines.append(" ".join(format_float(v) for v in arr))
        elif arr.ndim == 2:
            lines.append("tensor %s %d %d" % (name, arr.shape[0], arr.shape[1]))
            for row in arr:
                lines.append(" ".join(format_float(v) for v in row))
        else:
            raise ValueError("only 1-D and 2-D tensors are supported")
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def document_kind(path):
    """Kind tag of a structured-text document, from its header line."""
    with open(path) as fh:
        head = fh.readline().rstrip("\n")
    if not head.startswith("pcgkit-") or " version: " not in head:
        raise DataError("%s: not a structured-text document" % path)
    return head[len("pcgkit-"):head.index(" version: ")]


def read_document(path, kind, expect_version=1):
    """Read a document written by write_document; returns (meta, arrays)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise DataError("%s: empty document" % path)
    head = lines[0]
    prefix = "pcgkit-%s version: " % kind
    if not head.startswith(prefix):
        raise DataError("%s: expected a %r document, got %r" % (path, kind, head))
    version = int(head[len(prefix):])
    if expect_version is not None and version != expect_version:
        raise DataError("%s: unsupported version %d" % (path, version))
    meta = {}
    arrays = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line == "end":
            return meta, arrays
        if line.startswith("tensor "):
            parts = line.split()
            name = parts[1]
            dims = [int(p) for p in parts[2:]]
            if len(dims) == 1:
                i += 1
                row = _parse_row(lines[i])
                if row.size != dims[0]:
                    raise DataError("%s: tensor %s has wrong length" % (path, name))
                arrays[name] = row
            else:
                rows = []
                for r in range(dims[0]):
                    i += 1
                    rows.append(_parse_row(lines[i]))
                arr = np.vstack(rows) if rows else np.zeros(dims)
                if arr.shape != tuple(dims):
                    raise DataError("%s: tensor %s has wrong shape" % (path, name))
                arrays[name] = arr
        elif ": " in line:
            key, value = line.split(": ", 1)
            meta[key] = value
        elif line.strip():
            raise DataError("%s: unparseable line %r" % (path, line))
        i += 1
    raise DataError("%s: missing end marker" % path)
