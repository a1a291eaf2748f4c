"""Machine-readable reports: CSV with a header row, or one JSON object per line."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping

from ..errors import ValidationError

FORMATS = ("csv", "jsonl")


def flatten(row: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested mappings become dotted column names (``time.distance``)."""
    out: dict[str, Any] = {}
    for key, value in row.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(v) for v in value)
    return str(value)


def render(rows: Iterable[Mapping[str, Any]], fmt: str = "csv") -> str:
    rows = [flatten(r) for r in rows]
    if not rows:
        raise ValidationError("a report needs at least one row")
    if fmt not in FORMATS:
        raise ValidationError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    if fmt == "jsonl":
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in rows)
    columns: list[str] = []
    for r in rows:
        columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")  # RFC 4180 line endings
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def emit_report(rows: Iterable[Mapping[str, Any]], path, fmt: str = "csv") -> Path:
    """Write ``rows`` to ``path``. Nothing is created when there are no rows.

    Output depends only on the rows, so identical inputs give identical bytes.
    """
    text = render(rows, fmt)
    path = Path(path)
    path.write_bytes(text.encode())
    return path


def read_report(path, fmt: str | None = None) -> list[dict[str, str]]:
    """Parse a report back into rows (CSV cells come back as strings)."""
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    text = path.read_text()
    if fmt == "jsonl":
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    return list(csv.DictReader(io.StringIO(text, newline="")))
