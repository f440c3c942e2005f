"""Deterministic JSON rendering with 17-significant-digit floats.

``json.dumps`` prints floats with ``repr``, which uses the shortest
round-tripping decimal.  Output files are part of the library contract
and must be byte-identical across runs and platforms, so every float is
rendered through the same ``%.17g`` format instead; 17 significant
digits round-trip any IEEE double exactly.  Keys are emitted in sorted
order and containers are indented two spaces.
"""

import json
import math
import numbers

__all__ = ["dumps_17g"]


def _render(obj, level):
    pad = "  " * level
    pad_in = "  " * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(
            f"{pad_in}{json.dumps(str(k))}: {_render(obj[k], level + 1)}"
            for k in sorted(obj, key=str)
        )
        return "{\n" + body + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        body = ",\n".join(f"{pad_in}{_render(v, level + 1)}" for v in obj)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, numbers.Integral):
        return str(int(obj))
    if isinstance(obj, numbers.Real):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return f"{x:.17g}"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot render {type(obj).__name__} as JSON")


def dumps_17g(obj):
    """Serialize ``obj`` to a JSON string with canonical float formatting.

    Parameters
    ----------
    obj : dict, list, scalar
        Tree of dicts, lists/tuples, strings, bools, ``None`` and
        numbers.  Dict keys are sorted; floats are printed with 17
        significant digits; non-finite floats become their string names
        (JSON has no literal for them).

    Returns
    -------
    str
        Canonical JSON text terminated by a newline.
    """
    return _render(obj, 0) + "\n"
