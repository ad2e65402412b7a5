"""Flat binary layout for fields and kernels, plus small CSV/JSON helpers.

A binary file is an ASCII header of `key = value` lines closed by a line
`end`, followed by little-endian complex doubles in row-major order.
"""

import csv
import json
import math

import numpy as np

from .errors import ConfigError

MAGIC = "gpfluct-binary"


def _format_value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(str(int(x)) for x in v)
    return str(v)


def write_binary(path, kind, meta, array):
    array = np.ascontiguousarray(array, dtype="<c16")
    lines = [MAGIC, f"kind = {kind}", f"shape = {_format_value(array.shape)}"]
    lines += [f"{key} = {_format_value(value)}" for key, value in meta.items()]
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(array.tobytes())


def read_binary(path):
    """Return (kind, meta, array) with the array reshaped to the stored shape."""
    meta = {}
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii", "replace").strip()
        if first != MAGIC:
            raise ConfigError(f"{path} is not a gpfluct binary file")
        while True:
            line = fh.readline()
            if not line:
                raise ConfigError(f"{path}: header is not terminated")
            text = line.decode("ascii").strip()
            if text == "end":
                break
            key, sep, value = text.partition(" = ")
            if not sep:
                raise ConfigError(f"{path}: malformed header line {text!r}")
            meta[key] = value
        body = fh.read()
    shape = tuple(int(x) for x in meta.pop("shape").split())
    kind = meta.pop("kind")
    for key, value in meta.items():
        try:
            meta[key] = float(value)
        except ValueError:
            pass
    count = math.prod(shape)
    if len(body) != 16 * count:
        raise ConfigError(f"{path}: expected {count} complex values, found {len(body) / 16:g}")
    return kind, meta, np.frombuffer(body, dtype="<c16").reshape(shape).copy()


def fmt(x):
    """Deterministic text form of a scalar for CSV/JSON output."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
