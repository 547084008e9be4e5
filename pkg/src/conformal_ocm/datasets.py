"""CSV datasets with an optional JSON sidecar, and the bundled fixtures.

A dataset file is a CSV with a header row.  One column holds the label; the
feature columns must be numeric.  A sidecar ``<name>.json`` next to the CSV
may set::

    {"label_column": "species",
     "features": ["sepal"],
     "columns": {"species": {"kind": "categorical", "label_space": ["s", "v"]},
                 "petal": {"kind": "real", "grid_step": 0.1}}}
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["Dataset", "DatasetError", "ingest", "emit", "bundled_path", "load_bundled", "BUNDLED"]

BUNDLED = ("czuber.csv", "czuber20.csv", "iris25.csv")


class DatasetError(ValueError):
    """Malformed input, with row/column coordinates where they apply."""


@dataclass(frozen=True)
class Dataset:
    features: tuple[str, ...]
    label_column: str
    X: np.ndarray
    y: np.ndarray
    label_kind: str  # "real" or "categorical"
    grid_step: float | None = None
    label_space: tuple = ()
    columns: dict = field(default_factory=dict, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.y)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.features == other.features
            and self.label_column == other.label_column
            and self.label_kind == other.label_kind
            and self.grid_step == other.grid_step
            and tuple(self.label_space) == tuple(other.label_space)
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and list(self.y) == list(other.y)
        )

    __hash__ = None


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("conformal_ocm") / "data" / name))


def load_bundled(name: str, **options) -> Dataset:
    return ingest(bundled_path(name), **options)


def _resolve(path: str | Path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    if p.name in BUNDLED and not p.parent.parts:
        return bundled_path(p.name)
    raise DatasetError(f"{path}: no such file (bundled fixtures: {', '.join(BUNDLED)})")


def _as_float(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def ingest(
    path: str | Path,
    label_column: str | None = None,
    features: Sequence[str] | None = None,
    label_kind: str | None = None,
    grid_step: float | None = None,
) -> Dataset:
    """Read and validate a dataset.  Explicit arguments override the sidecar."""
    path = _resolve(path)
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DatasetError(f"{path}: duplicate column names in header")
    body = rows[1:]
    if not body:
        raise DatasetError(f"{path}: header but no rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DatasetError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")

    label = label_column or meta.get("label_column") or header[-1]
    if label not in header:
        raise DatasetError(f"{path}: no column named {label!r} (columns: {', '.join(header)})")
    col_meta = meta.get("columns", {}).get(label, {})
    if features is None and "features" in meta:
        features = [f for f in meta["features"] if f != label]
    if features is None:
        features = [h for h in header if h != label]
    features = list(features)
    for f in features:
        if f not in header:
            raise DatasetError(f"{path}: no feature column {f!r}")
        if f == label:
            raise DatasetError(f"{path}: column {f!r} is both feature and label")

    X = np.empty((len(body), len(features)))
    for j, f in enumerate(features):
        c = header.index(f)
        for i, r in enumerate(body):
            v = _as_float(r[c].strip())
            if v is None:
                raise DatasetError(f"{path}: row {i + 2}, column {c + 1} ({f}): not a number: {r[c]!r}")
            X[i, j] = v

    c = header.index(label)
    raw = [r[c].strip() for r in body]
    for i, v in enumerate(raw):
        if v == "":
            raise DatasetError(f"{path}: row {i + 2}, column {c + 1} ({label}): missing label")
    kind = label_kind or col_meta.get("kind")
    numeric = [_as_float(v) for v in raw]
    if kind is None:
        n_num = sum(v is not None for v in numeric)
        if 0 < n_num < len(raw):
            bad = next(i for i, v in enumerate(numeric) if (v is None) != (numeric[0] is None))
            raise DatasetError(
                f"{path}: row {bad + 2}, column {c + 1} ({label}): mixed label kinds (numbers and symbols)"
            )
        kind = "real" if n_num == len(raw) else "categorical"
    if kind == "real":
        for i, v in enumerate(numeric):
            if v is None:
                raise DatasetError(f"{path}: row {i + 2}, column {c + 1} ({label}): not a number: {raw[i]!r}")
        y = np.array(numeric, dtype=float)
        space: tuple = ()
    elif kind == "categorical":
        y = np.array(raw, dtype=object)
        space = tuple(col_meta.get("label_space") or sorted(set(raw)))
        extra = set(raw) - set(space)
        if extra:
            raise DatasetError(f"{path}: labels {sorted(extra)} outside the declared label space")
    else:
        raise DatasetError(f"{path}: unknown label kind {kind!r} (choose real or categorical)")
    step = grid_step if grid_step is not None else col_meta.get("grid_step")
    return Dataset(tuple(features), label, X, y, kind, step, space, meta.get("columns", {}))


def _cell(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def emit(dataset: Dataset, path: str | Path) -> Path:
    """Write ``dataset`` as CSV plus sidecar so that :func:`ingest` reads it back."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*dataset.features, dataset.label_column])
        for row, lab in zip(dataset.X, dataset.y):
            w.writerow([*(_cell(v) for v in row), _cell(lab)])
    col: dict = {"kind": dataset.label_kind}
    if dataset.grid_step is not None:
        col["grid_step"] = dataset.grid_step
    if dataset.label_space:
        col["label_space"] = list(dataset.label_space)
    meta = {"label_column": dataset.label_column, "features": list(dataset.features), "columns": {dataset.label_column: col}}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path
