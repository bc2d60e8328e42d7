"""Dataset ingestion: KEEL ``.dat`` and CSV parsing, validation, and
min-max feature normalization."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    DatasetError,
    ParseError,
    validate_two_class,
)


class ColumnKind(Enum):
    REAL = "real"
    INTEGER = "integer"
    CLASS = "class"


@dataclass(frozen=True)
class ColumnSpec:
    """Per-column metadata; for feature columns the observed range allows
    the normalization to be inverted exactly."""

    name: str
    kind: ColumnKind
    observed_min: float
    observed_max: float


def _to_float(token: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ValueError(token)


def _assign_labels(
    class_values: list[str],
    declared_order: list[str] | None,
    minority_value: str | None,
) -> np.ndarray:
    """Map raw class strings to a minority mask.

    Minority is the explicitly requested value, else the less frequent one;
    an exact tie falls back to the first value in the declaration (KEEL) or
    is rejected (CSV, where no declaration order exists).
    """
    distinct = list(dict.fromkeys(class_values))  # first-seen order
    if len(distinct) != 2:
        raise DatasetError(
            f"binary task requires exactly two class values, found {len(distinct)}: "
            f"{distinct[:5]}"
        )
    counts = {v: class_values.count(v) for v in distinct}
    if minority_value is not None:
        if minority_value not in counts:
            raise ConfigError(
                f"minority value {minority_value!r} does not occur in the data"
            )
        minority = minority_value
        other = next(v for v in distinct if v != minority)
        if counts[minority] > counts[other]:
            raise ConfigError(
                f"designated minority class {minority!r} is the larger class "
                f"(ir = {counts[other] / counts[minority]:.3g} < 1)"
            )
    else:
        a, b = distinct
        if counts[a] == counts[b]:
            if declared_order is None:
                raise ConfigError(
                    "class counts are equal; pass an explicit minority value"
                )
            minority = next(v for v in declared_order if v in counts)
        else:
            minority = a if counts[a] < counts[b] else b
    return np.array([v == minority for v in class_values], dtype=bool)


_ATTR_RE = re.compile(
    r"@attribute\s+(?P<name>\S+)\s*(?P<rest>.*)", re.IGNORECASE
)


def parse_keel(path: str | Path) -> Dataset:
    """Parse a KEEL ``.dat`` file into a Dataset.

    Keywords are case-insensitive; the class column is taken from
    ``@outputs`` (default: last attribute) and the less frequent class
    value becomes the minority label. Missing values (``?``) and
    non-numeric input attributes are rejected.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()

    relation = ""
    attributes: list[tuple[str, str, list[str] | None]] = []  # (name, kind, domain)
    inputs: list[str] | None = None
    outputs: list[str] | None = None
    data_start = None

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        low = line.lower()
        if low.startswith("@relation"):
            parts = line.split(None, 1)
            if len(parts) < 2:
                raise ParseError(f"{path}:{lineno}: @relation without a name")
            relation = parts[1].strip()
        elif low.startswith("@attribute"):
            m = _ATTR_RE.match(line)
            if not m:
                raise ParseError(f"{path}:{lineno}: malformed @attribute line")
            name = m.group("name")
            rest = m.group("rest").strip()
            if rest.startswith("{"):
                domain = [v.strip() for v in rest.strip("{} ").split(",")]
                attributes.append((name, "nominal", domain))
            else:
                kind = rest.split("[")[0].split("(")[0].strip().lower()
                if kind not in ("real", "integer", ""):
                    raise ParseError(
                        f"{path}:{lineno}: unsupported attribute type {kind!r}"
                    )
                attributes.append((name, kind or "real", None))
        elif low.startswith("@inputs"):
            inputs = [v.strip() for v in line.split(None, 1)[1].split(",")]
        elif low.startswith("@outputs") or low.startswith("@output"):
            outputs = [v.strip() for v in line.split(None, 1)[1].split(",")]
        elif low.startswith("@data"):
            data_start = lineno
            break
        else:
            raise ParseError(f"{path}:{lineno}: unrecognized header line {line!r}")

    if data_start is None:
        raise ParseError(f"{path}: no @data section")
    if not attributes:
        raise ParseError(f"{path}: no @attribute declarations")

    names = [a[0] for a in attributes]
    if outputs is None:
        outputs = [names[-1]]
    if len(outputs) != 1:
        raise ParseError(f"{path}: exactly one output (class) column expected")
    class_name = outputs[0]
    if class_name not in names:
        raise ParseError(f"{path}: output column {class_name!r} not declared")
    if inputs is None:
        inputs = [n for n in names if n != class_name]
    for n in inputs:
        if n not in names:
            raise ParseError(f"{path}: input column {n!r} not declared")

    by_name = {a[0]: a for a in attributes}
    for n in inputs:
        if by_name[n][1] == "nominal":
            raise DatasetError(
                f"{path}: input attribute {n!r} is nominal; only numeric "
                f"features are supported"
            )
    class_domain = by_name[class_name][2]

    col_index = {n: names.index(n) for n in names}
    rows: list[list[float]] = []
    class_values: list[str] = []
    missing_rows = 0

    for lineno in range(data_start + 1, len(lines) + 1):
        line = lines[lineno - 1].strip()
        if not line or line.startswith("%"):
            continue
        tokens = [t.strip() for t in line.split(",")]
        if len(tokens) != len(names):
            raise ParseError(
                f"{path}:{lineno}: row has {len(tokens)} values, expected "
                f"{len(names)}"
            )
        if "?" in tokens:
            missing_rows += 1
            continue
        try:
            rows.append([_to_float(tokens[col_index[n]]) for n in inputs])
        except ValueError as exc:
            raise ParseError(
                f"{path}:{lineno}: non-numeric feature value {exc.args[0]!r}"
            )
        class_values.append(tokens[col_index[class_name]])

    if missing_rows:
        raise DatasetError(
            f"{path}: {missing_rows} row(s) contain missing values ('?'); "
            f"imputation is not supported"
        )
    if not rows:
        raise ParseError(f"{path}: @data section is empty")

    feats = np.array(rows, dtype=np.float64)
    if not np.isfinite(feats).all():
        bad = np.flatnonzero(~np.isfinite(feats).all(axis=1))
        raise DatasetError(f"{path}: non-finite feature values in rows {bad.tolist()}")
    mask = _assign_labels(class_values, class_domain, None)
    ds = Dataset(feats, mask, name=relation or path.stem)
    validate_two_class(ds)
    return ds


def parse_csv(
    path: str | Path,
    label_column: str,
    minority_value: str | None = None,
) -> Dataset:
    """Parse a headered CSV file; all non-label columns become features."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ConfigError(
                f"{path}: label column {label_column!r} not in header {header}"
            )
        label_idx = header.index(label_column)
        feature_idx = [i for i in range(len(header)) if i != label_idx]

        rows: list[list[float]] = []
        class_values: list[str] = []
        for rowno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"{path}: row {rowno} has {len(record)} values, expected "
                    f"{len(header)}"
                )
            vals = []
            for i in feature_idx:
                token = record[i].strip()
                if token == "":
                    raise DatasetError(f"{path}: row {rowno} has an empty cell")
                try:
                    v = float(token)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {rowno}: non-numeric value {token!r} in "
                        f"column {header[i]!r}"
                    )
                if math.isnan(v) or math.isinf(v):
                    raise DatasetError(
                        f"{path}: row {rowno} contains a non-finite value in "
                        f"column {header[i]!r}"
                    )
                vals.append(v)
            rows.append(vals)
            class_values.append(record[label_idx].strip())

    if not rows:
        raise ParseError(f"{path}: no data rows")
    feats = np.array(rows, dtype=np.float64)
    mask = _assign_labels(class_values, None, minority_value)
    ds = Dataset(feats, mask, name=path.stem)
    validate_two_class(ds)
    return ds


def normalize_minmax(dataset: Dataset) -> tuple[Dataset, list[ColumnSpec]]:
    """Rescale every feature column to [0, 1]; constant columns map to 0.

    Returns the normalized dataset and the per-column ranges needed to
    invert the mapping.
    """
    lo = dataset.features.min(axis=0)
    hi = dataset.features.max(axis=0)
    specs = [
        ColumnSpec(f"f{i}", ColumnKind.REAL, float(lo[i]), float(hi[i]))
        for i in range(dataset.n)
    ]
    normed = Dataset(
        _affine_to_unit(dataset.features, lo, hi),
        dataset.minority_mask.copy(),
        dataset.ids.copy(),
        name=dataset.name,
    )
    return normed, specs


def apply_minmax(features: np.ndarray, specs: list[ColumnSpec]) -> np.ndarray:
    """Apply an existing normalization (e.g. train-fold ranges) to new rows.

    Values outside the recorded range land outside [0, 1]; they are not
    clipped, so held-out data cannot influence the fitted parameters.
    """
    lo = np.array([s.observed_min for s in specs])
    hi = np.array([s.observed_max for s in specs])
    return _affine_to_unit(np.asarray(features, dtype=np.float64), lo, hi)


def denormalize(features: np.ndarray, specs: list[ColumnSpec]) -> np.ndarray:
    lo = np.array([s.observed_min for s in specs])
    hi = np.array([s.observed_max for s in specs])
    return np.asarray(features, dtype=np.float64) * (hi - lo) + lo


def _affine_to_unit(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    scale = hi - lo
    safe = np.where(scale == 0, 1.0, scale)
    out = (x - lo) / safe
    return np.where(scale == 0, 0.0, out)
