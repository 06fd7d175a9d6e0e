"""JSON-Lines reading and writing with a schema version and fixed numeric precision."""

import json
import math
import sys
from pathlib import Path

import numpy as np

from ._validation import ValidationError

SCHEMA_VERSION = 1
SIG_DIGITS = 6


def round_sig(obj, digits=SIG_DIGITS):
    """Recursively round floats to ``digits`` significant digits (ints and bools untouched)."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValidationError("refusing to write a non-finite number", field="output", value=str(x))
        if x == 0:
            return 0.0
        return float(f"{x:.{digits}g}")
    if isinstance(obj, dict):
        return {str(k): round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist(), digits)
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def dumps(obj):
    return json.dumps(round_sig(obj), sort_keys=True)


def versioned(record):
    return {"v": SCHEMA_VERSION, **record}


def read_jsonl(path):
    """Records from a JSON-Lines file (``-`` for stdin); each must carry ``"v": 1``."""
    if path is None:
        raise ValidationError("no input file given (--in)", field="in")
    stream = sys.stdin if str(path) == "-" else None
    try:
        lines = stream.read().splitlines() if stream else Path(path).read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}", field="in", path=str(path)) from None
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except ValueError as exc:
            raise ValidationError(f"line {lineno} is not valid JSON: {exc}", field="in", line=lineno) from None
        if not isinstance(rec, dict):
            raise ValidationError(f"line {lineno} is not a JSON object", field="in", line=lineno)
        if rec.get("v") != SCHEMA_VERSION:
            raise ValidationError(
                f"line {lineno} has schema version {rec.get('v')!r}, expected {SCHEMA_VERSION}",
                field="v", line=lineno,
            )
        records.append(rec)
    return records


def write_lines(lines, path=None):
    text = "".join(line + "\n" for line in lines)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def write_jsonl(records, path=None):
    write_lines((dumps(r) for r in records), path)


def write_report(report, path=None):
    write_lines([dumps(report)], path)
