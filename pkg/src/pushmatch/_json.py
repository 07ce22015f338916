"""JSON text with every float written at 17 significant digits.

The stdlib encoder uses the shortest round-trip repr, which can drop below
17 digits; the file formats here require at least 17.
"""

import json
import math
from pathlib import Path
from typing import Any

import numpy as np


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if not any(c in s for c in ".eE"):
        s += ".0"
    return s


def _encode(obj: Any, indent: int | None, level: int) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        items = [(json.dumps(str(k)), _encode(v, indent, level + 1)) for k, v in obj.items()]
        if not items:
            return "{}"
        if indent is None:
            return "{" + ", ".join(f"{k}: {v}" for k, v in items) + "}"
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        return "{\n" + ",\n".join(f"{pad}{k}: {v}" for k, v in items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        parts = [_encode(v, indent, level + 1) for v in obj]
        if not parts:
            return "[]"
        # numeric leaves stay on one line
        if indent is None or all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int | None = 2) -> str:
    return _encode(obj, indent, 0)


def dump(obj: Any, path: str | Path, indent: int | None = 2) -> None:
    Path(path).write_text(dumps(obj, indent) + "\n", encoding="utf-8")


def load(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
