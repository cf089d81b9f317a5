"""Deterministic JSON writing with round-trip-exact floats.

Floats are rendered with 17 significant digits, which is enough to
reconstruct any 64-bit value bit-exactly on parse. Output bytes are a pure
function of the object, so identical runs produce identical files.
"""

from __future__ import annotations

import json
import math
from typing import Any, IO

import numpy as np


def format_float(x: float) -> str:
    if x != x or math.isinf(x):
        raise ValueError(f"non-finite value cannot be serialized: {x!r}")
    if x == int(x) and abs(x) < 1e16:
        # keep e.g. 2.0 readable instead of scientific notation
        return repr(float(x))
    return format(x, ".17g")


def _encode(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(", ")
            _encode(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            if i:
                out.append(", ")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(": ")
            _encode(val, out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    out: list[str] = []
    _encode(obj, out)
    return "".join(out)


def dump(obj: Any, fp: IO[str]) -> None:
    fp.write(dumps(obj))
    fp.write("\n")


def dump_path(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        dump(obj, fp)


def load_path(path) -> Any:
    with open(path, "r", encoding="utf-8") as fp:
        return json.load(fp)
