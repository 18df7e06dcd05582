"""
CSV output for evaluation records.

The first line names the schema version, the second is the column header.
Floats use '%.10g' so reruns with a fixed seed are byte-identical.
"""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Iterable, List

from app.cli.models import CSV_COLUMNS, CSV_SCHEMA, EvalRecord
from app.errors import FormatError
from app.utils.file_utils import PathLike, ensure_parent_dir

logger = logging.getLogger(__name__)

SCHEMA_LINE = f"# schema: {CSV_SCHEMA}"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


def format_records(records: Iterable[EvalRecord], header: bool = True) -> str:
    buffer = io.StringIO()
    if header:
        buffer.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    if header:
        writer.writerow(CSV_COLUMNS)
    for record in records:
        row = record.model_dump()
        writer.writerow([_cell(row[column]) for column in CSV_COLUMNS])
    return buffer.getvalue()


def write_records(path: PathLike, records: List[EvalRecord], append: bool = True) -> Path:
    """Write records, appending to an existing file with the same schema.

    Raises:
        FormatError: If the existing file has another schema line
    """
    path = ensure_parent_dir(path)
    exists = append and path.exists() and path.stat().st_size > 0
    if exists:
        with open(path, "r", encoding="utf-8") as handle:
            first = handle.readline().rstrip("\n")
        if first != SCHEMA_LINE:
            raise FormatError(f"{path} has schema line {first!r}, expected {SCHEMA_LINE!r}", offset=0)
    with open(path, "a" if exists else "w", encoding="utf-8", newline="") as handle:
        handle.write(format_records(records, header=not exists))
    logger.info(f"Wrote {len(records)} rows to {path}")
    return path


def read_records(path: PathLike) -> List[EvalRecord]:
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().rstrip("\n")
        if first != SCHEMA_LINE:
            raise FormatError(f"unexpected schema line {first!r}", offset=0)
        rows = list(csv.DictReader(handle))
    records = []
    for row in rows:
        data = {key: (value if value != "" else None) for key, value in row.items()}
        data["budget"] = data["budget"] or ""
        seed = data["seed"]
        data["seed"] = int(seed) if seed is not None and seed.lstrip("-").isdigit() else seed
        records.append(EvalRecord(**data))
    return records
