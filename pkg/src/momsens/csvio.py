"""CSV output with a reproducibility header.

Every file starts with ``#``-prefixed lines recording the tool version, the
model hash and the full run configuration; the body is plain RFC 4180 CSV
with floats at 17 significant digits and ``NA`` for undefined values.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math


def model_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    f = float(v)
    if math.isnan(f):
        return "NA"
    return format(f, ".17g")


def render_csv(columns, rows, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        if not isinstance(value, str):
            value = json.dumps(value, sort_keys=True)
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def csv_body(text: str) -> str:
    """Drop the ``#`` header block."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(csv_body(text))))
