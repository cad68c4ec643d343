"""JSON emission with floats at full double precision.

Model and report documents must survive a dump/load round trip bit-for-bit,
so every float is rendered in scientific notation with 17 significant
digits (enough to reconstruct any IEEE 754 double exactly). Keys are
emitted sorted for byte-stable output.
"""

from __future__ import annotations

import json
import math

import numpy as np

__all__ = ["dumps", "dump", "loads", "load"]


def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite float {x!r} cannot be serialized")
    return format(x, ".16e")


def _write(obj, parts: list[str], indent: int | None, depth: int) -> None:
    pad = "" if indent is None else "\n" + " " * (indent * (depth + 1))
    end = "" if indent is None else "\n" + " " * (indent * depth)
    sep = "," if indent is None else ","
    colon = ":" if indent is None else ": "
    if obj is None:
        parts.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(_format_float(float(obj)))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _write(obj.tolist(), parts, indent, depth)
    elif isinstance(obj, dict):
        if not obj:
            parts.append("{}")
            return
        parts.append("{")
        keys = sorted(obj)
        for i, k in enumerate(keys):
            if not isinstance(k, str):
                raise TypeError(f"non-string key {k!r}")
            parts.append(pad)
            parts.append(json.dumps(k))
            parts.append(colon)
            _write(obj[k], parts, indent, depth + 1)
            if i != len(keys) - 1:
                parts.append(sep)
        parts.append(end)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        if not len(obj):
            parts.append("[]")
            return
        parts.append("[")
        for i, v in enumerate(obj):
            parts.append(pad)
            _write(v, parts, indent, depth + 1)
            if i != len(obj) - 1:
                parts.append(sep)
        parts.append(end)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int | None = None) -> str:
    parts: list[str] = []
    _write(obj, parts, indent, 0)
    return "".join(parts)


def dump(obj, fh, indent: int | None = None) -> None:
    fh.write(dumps(obj, indent=indent))


def loads(text: str):
    return json.loads(text)


def load(fh):
    return json.load(fh)
