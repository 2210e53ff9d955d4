"""
Dataset I/O Service Module
CSV datasets (header f0..f{d-1}, optional label column), JSON reports and
per-iteration trace files
"""
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import ConfigError, DatasetFormatError
from logic.em_engine import IterationRecord
from logic.gmm import Dataset, GmmParams

logger = logging.getLogger("QemLab")

FLOAT_FORMAT = "%.17g"
LABEL_COLUMN = "label"

PathLike = Union[str, Path]


def _expected_header(d: int) -> List[str]:
    return [f"f{i}" for i in range(d)]


def read_dataset_csv(path: PathLike) -> Tuple[Dataset, Optional[np.ndarray]]:
    """
    Read a dataset CSV

    Args:
        path: CSV file with header f0,...,f{d-1} and an optional trailing label column

    Returns:
        (Dataset, labels or None)

    Raises:
        FileNotFoundError: If the file is missing
        DatasetFormatError: On malformed content (message carries the file line number)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")

    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DatasetFormatError("empty file", line=1)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetFormatError(str(e), line=int(match.group(1)) if match else None)

    columns = [str(c).strip() for c in df.columns]
    has_labels = bool(columns) and columns[-1] == LABEL_COLUMN
    feature_columns = columns[:-1] if has_labels else columns
    if not feature_columns or feature_columns != _expected_header(len(feature_columns)):
        raise DatasetFormatError("header must be f0,...,f{d-1} with an optional label column", line=1)
    if df.empty:
        raise DatasetFormatError("no samples", line=2)

    df.columns = columns
    values = np.empty((len(df), len(feature_columns)))
    for c, column in enumerate(feature_columns):
        raw = df[column]
        parsed = pd.to_numeric(raw.str.strip(), errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(parsed))
        if bad.size:
            row = int(bad[0])
            # header is line 1
            raise DatasetFormatError(f"invalid number '{raw.iloc[row]}' in column {column}", line=row + 2)
        values[:, c] = parsed

    labels = None
    if has_labels:
        raw_labels = df[LABEL_COLUMN].str.strip()
        parsed = pd.to_numeric(raw_labels, errors="coerce")
        labels = parsed.to_numpy() if not parsed.isna().any() else raw_labels.to_numpy()
        if labels.dtype.kind == "f" and np.all(labels == np.round(labels)):
            labels = labels.astype(int)

    logger.debug(f"Read {values.shape[0]} x {values.shape[1]} dataset from {path}")
    return Dataset(values), labels


def write_dataset_csv(path: PathLike, data: Dataset, labels: Optional[np.ndarray] = None):
    """Write a dataset with 17 significant digits, UTF-8, LF line endings"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(data.points, columns=_expected_header(data.d))
    if labels is not None:
        df[LABEL_COLUMN] = np.asarray(labels)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")


def write_json(path: PathLike, payload: Dict[str, Any]):
    """Deterministic JSON: sorted keys, two-space indent, trailing newline"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, sort_keys=True, indent=2, ensure_ascii=False)
        f.write("\n")


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return payload


def load_model(path: PathLike) -> GmmParams:
    return GmmParams.from_dict(read_json(path))


def trace_frame(trace: List[IterationRecord]) -> pd.DataFrame:
    return pd.DataFrame({
        "iter": [r.iteration for r in trace],
        "log_likelihood": [r.log_likelihood for r in trace],
        "mean_probability": [r.mean_probability for r in trace],
        "wall_ms": [r.wall_ms for r in trace],
        "non_monotone": [r.non_monotone for r in trace],
    })


def write_trace_csv(path: PathLike, trace: List[IterationRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(trace).to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8",
                              lineterminator="\n")


def write_frame_csv(path: PathLike, frame: pd.DataFrame):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
