"""Deterministic JSON with floats written to 17 significant digits."""

import json
import math
from dataclasses import asdict, is_dataclass

import numpy as np


def _fmt_float(v):
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _enc(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if is_dataclass(obj):
        obj = obj.to_json() if hasattr(obj, "to_json") else asdict(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_enc(str(k), indent, level + 1)}: {_enc(v, indent, level + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_enc(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _enc(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent=2) -> str:
    return _enc(obj, indent, 0) + "\n"
