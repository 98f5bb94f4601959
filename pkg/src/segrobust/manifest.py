"""Cohort manifest ingestion.

A manifest is a CSV with header ``patient_id,pred_path,ref_path`` plus
optional channel columns ``t1,t1ce,t2,flair``. Explicit pairing of
prediction and reference paths prevents silent mismatches between the two
inference scenarios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

from .errors import DuplicatePatient, MissingColumn, ParseError

REQUIRED_COLUMNS = ("patient_id", "pred_path", "ref_path")
CHANNEL_COLUMNS = {"t1": "T1", "t1ce": "T1CE", "t2": "T2", "flair": "FLAIR"}


@dataclass(frozen=True)
class ManifestRow:
    patient_id: str
    pred_path: str
    ref_path: str
    channel_paths: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Manifest:
    rows: tuple[ManifestRow, ...]
    columns: tuple[str, ...]

    @property
    def has_channel_columns(self) -> bool:
        return any(c in CHANNEL_COLUMNS for c in self.columns)


def ingest_manifest(path) -> Manifest:
    """Parse and validate a cohort manifest CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty manifest") from None
        header = [h.strip() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise MissingColumn(f"manifest lacks required column {col!r}")
        col_idx = {name: header.index(name) for name in header}

        rows: list[ManifestRow] = []
        seen: set[str] = set()
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) < len(header):
                raise ParseError(lineno, f"expected {len(header)} cells, got {len(raw)}")

            def cell(name: str) -> str:
                return raw[col_idx[name]].strip()

            pid = cell("patient_id")
            pred = cell("pred_path")
            ref = cell("ref_path")
            if not pid:
                raise ParseError(lineno, "empty patient_id")
            if not pred or not ref:
                raise ParseError(lineno, "pred_path and ref_path must be non-empty")
            if pid in seen:
                raise DuplicatePatient(f"patient_id {pid!r} appears more than once")
            seen.add(pid)

            channels = {}
            for col, channel in CHANNEL_COLUMNS.items():
                if col in col_idx and cell(col):
                    channels[channel] = cell(col)
            rows.append(ManifestRow(pid, pred, ref, channels))

    return Manifest(tuple(rows), tuple(header))
