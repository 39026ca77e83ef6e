# svl/export_utils.py
"""
Shared utilities for report-writing commands.
Centralizes output validation, CSV/JSON writing and text tables, so every
report lands on disk as a file and on stdout as a table.
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Sequence

from .exceptions import ConfigError
from .utils import as_plain


def validate_output_dir(output_dir_str, create: bool = True) -> Path:
    """
    Validate (and optionally create) a report directory.

    Args:
        output_dir_str (str): Directory path
        create (bool): Create the directory when its parent exists

    Returns:
        Path: Validated pathlib.Path object

    Raises:
        ConfigError: If the parent directory doesn't exist
    """
    output_dir = Path(output_dir_str)
    if output_dir.exists():
        if not output_dir.is_dir():
            raise ConfigError(f"Output path is not a directory: {output_dir}")
        return output_dir
    if not output_dir.parent.exists():
        raise ConfigError(f"Directory does not exist: {output_dir.parent}")
    if create:
        output_dir.mkdir()
    return output_dir


def format_float(value, digits: int = 6):
    """Round floats for reports; empty string for None."""
    if value is None:
        return ""
    return round(float(value), digits)


def write_csv(output_path, fieldnames, rows, encoding="utf-8"):
    """
    Write rows to CSV file with standard formatting.

    Args:
        output_path (Path): Output file path
        fieldnames (list): CSV header field names
        rows (list): List of dicts with row data
        encoding (str): File encoding (default: utf-8)
    """
    with Path(output_path).open("w", newline="", encoding=encoding) as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def write_json(output_path, payload: Dict[str, Any], encoding="utf-8"):
    """Write a JSON report with sorted keys, so equal runs give equal bytes."""
    Path(output_path).write_text(
        json.dumps(as_plain(payload), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding=encoding,
    )


def render_table(fieldnames: Sequence[str], rows: List[Dict[str, Any]]) -> str:
    """Left-aligned plain-text table with a header rule."""
    cells = [[str(name) for name in fieldnames]]
    cells += [[str(row.get(name, "")) for name in fieldnames] for row in rows]
    widths = [max(len(line[i]) for line in cells) for i in range(len(fieldnames))]

    def fmt(line):
        return "  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip()

    rule = "  ".join("-" * width for width in widths)
    return "\n".join([fmt(cells[0]), rule] + [fmt(line) for line in cells[1:]])


def export_success_message(output_path):
    """Return a standard success message for exports."""
    return f"Export complete: {output_path}"


# Standardized field lists for report files
LOSS_HISTORY_FIELDS = [
    "epoch",
    "lr",
    "total",
    "spike_text",
    "spike_image",
    "mse",
    "log_temp",
]

ACCURACY_CURVE_FIELDS = [
    "epoch",
    "lr",
    "loss",
    "train_accuracy",
    "test_accuracy",
]

ZEROSHOT_FIELDS = [
    "label",
    "correct",
    "total",
    "accuracy",
]

ENERGY_FIELDS = [
    "layer",
    "kind",
    "flops",
    "fr",
    "pJ",
]
