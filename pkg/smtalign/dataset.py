"""CSV reading and writing of placement records."""

import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from smtalign.domain import (
    ComponentDirectory, PasteState, PlacementRecord, PlacementSetting, PostOffsets,
)
from smtalign.pandasutils import PandasUtils

logger = logging.getLogger(__name__)

DIRECTORY_COLUMNS = ["comp_size", "comp_type", "pad_size", "pad_gap", "pad_length", "pad_width"]
PASTE_COLUMNS = ["vol_avg", "vol_diff", "paste_x1", "paste_y1", "paste_x2", "paste_y2"]
PLACEMENT_COLUMNS = ["pre_x", "pre_y", "pre_theta"]
TARGET_COLUMNS = ["post_x", "post_y", "post_theta"]
INPUT_COLUMNS = DIRECTORY_COLUMNS + PASTE_COLUMNS + PLACEMENT_COLUMNS
ALL_COLUMNS = INPUT_COLUMNS + TARGET_COLUMNS


class SchemaError(ValueError):
    """CSV layout or cell content does not match the record schema."""


def record_to_row(record: PlacementRecord) -> dict:
    d, p, c = record.directory, record.paste, record.placement
    row = {
        "comp_size": d.component_size_class, "comp_type": d.component_type,
        "pad_size": d.pad_size_class, "pad_gap": d.pad_gap,
        "pad_length": d.pad_length, "pad_width": d.pad_width,
        "vol_avg": p.volume_avg_pct, "vol_diff": p.volume_diff_pct,
        "paste_x1": p.paste_offset_x1, "paste_y1": p.paste_offset_y1,
        "paste_x2": p.paste_offset_x2, "paste_y2": p.paste_offset_y2,
        "pre_x": c.pre_offset_x, "pre_y": c.pre_offset_y, "pre_theta": c.pre_offset_theta,
    }
    if record.is_labeled:
        row.update(post_x=record.targets.post_x, post_y=record.targets.post_y,
                   post_theta=record.targets.post_theta)
    return row


def records_to_frame(records: Sequence[PlacementRecord]) -> pd.DataFrame:
    labeled = any(record.is_labeled for record in records)
    columns = ALL_COLUMNS if labeled else INPUT_COLUMNS
    return pd.DataFrame([record_to_row(record) for record in records], columns=columns)


def write_records(records: Sequence[PlacementRecord], path) -> None:
    """Write records as CSV: one header row, one record per row, targets only when labeled."""
    records_to_frame(records).to_csv(path, index=False)
    logger.info("Wrote %d records to %s", len(records), path)


def _row_to_record(row: pd.Series, row_number: int, has_targets: bool) -> PlacementRecord:
    def f(column):
        return PandasUtils.as_float(row[column], column, row_number)

    def i(column):
        return PandasUtils.as_int(row[column], column, row_number)

    directory = ComponentDirectory(
        component_size_class=i("comp_size"),
        component_type=PandasUtils.as_string(row["comp_type"]),
        pad_size_class=i("pad_size"),
        pad_gap=i("pad_gap"),
        pad_length=f("pad_length"),
        pad_width=f("pad_width"),
    )
    paste = PasteState(*(f(column) for column in PASTE_COLUMNS))
    placement = PlacementSetting(*(f(column) for column in PLACEMENT_COLUMNS))
    targets = None
    if has_targets:
        present = [PandasUtils.is_not_empty(row[column]) for column in TARGET_COLUMNS]
        if all(present):
            targets = PostOffsets(*(f(column) for column in TARGET_COLUMNS))
        elif any(present):
            raise ValueError(f"Row {row_number}: post offsets must be all present or all empty")
    return PlacementRecord(directory, paste, placement, targets)


def read_records(path, require_labels: bool = False) -> list[PlacementRecord]:
    """
    Read a placement CSV. Target columns are optional as a group; with require_labels every
    row must carry all three.
    """
    path = Path(path)
    frame = pd.read_csv(path, dtype={"comp_type": str}, float_precision="round_trip")
    problems = PandasUtils.column_problems(frame, INPUT_COLUMNS, TARGET_COLUMNS)
    if problems:
        raise SchemaError(f"{path}: {problems[0]}")
    present_targets = [column for column in TARGET_COLUMNS if column in frame.columns]
    if present_targets and len(present_targets) != len(TARGET_COLUMNS):
        missing = [column for column in TARGET_COLUMNS if column not in present_targets]
        raise SchemaError(f"{path}: missing column '{missing[0]}'")
    if require_labels and not present_targets:
        raise SchemaError(f"{path}: missing column '{TARGET_COLUMNS[0]}' (labeled data required)")

    records = []
    for position, (_, row) in enumerate(frame.iterrows()):
        try:
            records.append(_row_to_record(row, position + 1, bool(present_targets)))
        except ValueError as e:
            raise SchemaError(f"{path}: {e}") from e
    if require_labels:
        unlabeled = [n for n, record in enumerate(records, start=1) if not record.is_labeled]
        if unlabeled:
            raise SchemaError(f"{path}: row {unlabeled[0]} has no post offsets (labeled data required)")
    logger.info("Read %d records from %s", len(records), path)
    return records
