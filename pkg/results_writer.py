"""
Writes result tables to CSV and the resolved config to a JSON sidecar.
The sidecar write is atomic (temp file then rename) so a reader never sees a partial file.
"""
import json
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np
import pandas as pd

from models import ResultRow

# Header is a stability contract for downstream readers.
CSV_COLUMNS = ["lambda", "t", "order", "method_a", "method_b", "metric", "value"]
SIDECAR_SUFFIX = ".config.json"


def _cell(value: Any) -> str:
    """Empty for missing, repr for floats (exact round-trip), str otherwise."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def rows_to_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    records = [[_cell(row.as_record()[column]) for column in CSV_COLUMNS] for row in rows]
    return pd.DataFrame(records, columns=CSV_COLUMNS, dtype=object)


def table_to_csv_text(rows: Sequence[ResultRow]) -> str:
    return rows_to_frame(rows).to_csv(index=False, lineterminator="\n")


def sidecar_path(out_path: Union[str, Path]) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + SIDECAR_SUFFIX)


def _write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    try:
        tmp.replace(path)
    except PermissionError:
        # Windows refuses replace while a reader holds the target open.
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        try:
            tmp.unlink(missing_ok=True)
        except OSError:
            pass


def write_table(rows: Sequence[ResultRow], out_path: Union[str, Path]) -> Path:
    out_path = Path(out_path)
    _write_text_atomic(out_path, table_to_csv_text(rows))
    return out_path


def write_sidecar(out_path: Union[str, Path], document: dict[str, Any]) -> Path:
    """<out>.config.json with the resolved config."""
    path = sidecar_path(out_path)
    _write_text_atomic(path, json.dumps(document, indent=2, sort_keys=True, default=str) + "\n")
    return path
