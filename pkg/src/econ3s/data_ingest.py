"""Dataset parsing and preparation.

Readers for the sparse LIBSVM text format, CSV with a small role schema, and
the big-endian IDX image/label pair, plus the 2:1 split with protected-group
partition and the signed intercept augmentation the fairness problems use.
Datasets are immutable after construction and cache the row-norm statistics
the constant calculators need.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .core import Array

__all__ = [
    "Dataset",
    "ParseError",
    "parse_libsvm",
    "parse_schema",
    "parse_csv",
    "parse_idx",
    "split_and_partition",
    "augment_first_coordinate",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class ParseError(ValueError):
    """Malformed input, with the offending location in the message."""

    def __init__(self, path, where, msg):
        super().__init__(f"{path}:{where}: {msg}")
        self.path = str(path)
        self.where = where


@dataclass
class Dataset:
    """Dense feature matrix with labels and an optional binary group attribute."""

    features: Array
    labels: Array
    group: Optional[Array] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length does not match feature rows")
        if self.group is not None:
            self.group = np.asarray(self.group, dtype=np.int8)
            if self.group.shape != (self.features.shape[0],):
                raise ValueError("group length does not match feature rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @cached_property
    def row_norms(self) -> Array:
        return np.linalg.norm(self.features, axis=1)

    @cached_property
    def sum_norms(self) -> float:
        return float(np.sum(self.row_norms))

    @cached_property
    def sum_sq_norms(self) -> float:
        return float(np.sum(self.row_norms ** 2))

    @cached_property
    def min_row_norm(self) -> float:
        return float(np.min(self.row_norms)) if self.n else 0.0

    @cached_property
    def max_row_norm(self) -> float:
        return float(np.max(self.row_norms)) if self.n else 0.0

    def subset(self, idx) -> "Dataset":
        g = None if self.group is None else self.group[idx]
        return Dataset(self.features[idx], self.labels[idx], g)


def parse_libsvm(path) -> Dataset:
    """Read sparse `label idx:val ...` lines into a dense dataset.

    Indices are 1-based; index 0 is rejected.  A bare label line is a valid
    all-zero row.  The dimension is the largest index seen.
    """
    rows = []
    labels = []
    dim = 0
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise ParseError(path, ln, f"bad label {parts[0]!r}") from None
            entries = []
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(path, ln, f"bad feature token {tok!r}")
                try:
                    i = int(idx)
                    v = float(val)
                except ValueError:
                    raise ParseError(path, ln, f"bad feature token {tok!r}") from None
                if i < 1:
                    raise ParseError(path, ln, f"feature index {i} must be >= 1")
                entries.append((i, v))
                dim = max(dim, i)
            rows.append(entries)
    X = np.zeros((len(rows), dim))
    for r, entries in enumerate(rows):
        for i, v in entries:
            X[r, i - 1] = v
    return Dataset(X, np.asarray(labels))


def parse_schema(path) -> dict:
    """Read a column-role schema: `feature COL`, `label COL POSVALUE`,
    `group COL PROTECTEDVALUE`, one per line, # comments allowed."""
    schema = {"features": [], "label": None, "group": None}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            role = parts[0]
            if role == "feature" and len(parts) == 2:
                schema["features"].append(parts[1])
            elif role == "label" and len(parts) == 3:
                schema["label"] = (parts[1], parts[2])
            elif role == "group" and len(parts) == 3:
                schema["group"] = (parts[1], parts[2])
            else:
                raise ParseError(path, ln, f"bad schema line {line!r}")
    if not schema["features"] or schema["label"] is None:
        raise ParseError(path, "eof", "schema needs features and a label")
    return schema


def parse_csv(path, schema) -> Dataset:
    """Read a CSV using a role schema (dict or schema-file path).

    Feature cells must be numeric.  The label maps to +1 when equal to the
    schema's positive value and -1 otherwise; the group flag maps to 1 for the
    protected value.  A header-only file yields an empty dataset.
    """
    if not isinstance(schema, dict):
        schema = parse_schema(schema)
    feats, labs, grps = [], [], []
    label_col, pos_val = schema["label"]
    group_spec = schema.get("group")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(path, 1, "missing header row")
        needed = list(schema["features"]) + [label_col] + ([group_spec[0]] if group_spec else [])
        for col in needed:
            if col not in reader.fieldnames:
                raise ParseError(path, 1, f"missing column {col!r}")
        for ln, row in enumerate(reader, start=2):
            vals = []
            for col in schema["features"]:
                cell = row[col]
                try:
                    vals.append(float(cell))
                except (TypeError, ValueError):
                    raise ParseError(path, ln, f"non-numeric cell {cell!r} in column {col!r}") from None
            feats.append(vals)
            labs.append(1.0 if row[label_col] == pos_val else -1.0)
            if group_spec:
                grps.append(1 if row[group_spec[0]] == group_spec[1] else 0)
    X = np.asarray(feats, dtype=np.float64).reshape(len(feats), len(schema["features"]))
    return Dataset(X, np.asarray(labs), np.asarray(grps, dtype=np.int8) if group_spec else None)


def _read_exact(fh, nbytes, path, what):
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise ParseError(path, fh.tell(), f"truncated file while reading {what}")
    return buf


def parse_idx(images_path, labels_path) -> Dataset:
    """Decode a big-endian IDX image/label pair; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise ParseError(images_path, 0, f"bad image magic 0x{magic:08x}")
        raw = _read_exact(fh, n * rows * cols, images_path, "pixels")
    X = np.frombuffer(raw, dtype=np.uint8).astype(np.float64).reshape(n, rows * cols) / 255.0
    with open(labels_path, "rb") as fh:
        magic, nl = struct.unpack(">II", _read_exact(fh, 8, labels_path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise ParseError(labels_path, 0, f"bad label magic 0x{magic:08x}")
        lab = np.frombuffer(_read_exact(fh, nl, labels_path, "labels"), dtype=np.uint8)
    if nl != n:
        raise ParseError(labels_path, 0, f"label count {nl} does not match image count {n}")
    return Dataset(X, lab.astype(np.float64))


def split_and_partition(ds: Dataset, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded 2:1 split; the smaller share is partitioned by the group flag.

    Returns (main, protected, unprotected): the larger two-thirds share, then
    the smaller share's group==1 and group==0 rows.  Both group parts must be
    nonempty.
    """
    if ds.group is None:
        raise ValueError("partition needs a group attribute")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_small = ds.n // 3
    big, small = perm[: ds.n - n_small], perm[ds.n - n_small:]
    rest = ds.subset(small)
    p_idx = np.flatnonzero(rest.group == 1)
    u_idx = np.flatnonzero(rest.group == 0)
    if len(p_idx) == 0 or len(u_idx) == 0:
        raise ValueError("degenerate partition: a group is empty in the smaller share")
    return ds.subset(big), rest.subset(p_idx), rest.subset(u_idx)


def augment_first_coordinate(ds: Dataset, sign_by_group: bool = True) -> Dataset:
    """Prepend an intercept coordinate: +1/-1 by group flag, or +1 for all rows."""
    if sign_by_group:
        if ds.group is None:
            raise ValueError("signed augmentation needs a group attribute")
        first = np.where(ds.group == 1, 1.0, -1.0)
    else:
        first = np.ones(ds.n)
    X = np.column_stack([first, ds.features])
    return Dataset(X, ds.labels, ds.group)
