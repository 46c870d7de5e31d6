"""Longitudinal dataset container and wide-format CSV ingestion.

CSV layout (UTF-8, comma separated, header required)::

    subject_id, x0_<item>..., z_<cov>..., xt<label>_<item>...

An empty cell inside a follow-up block masks that subject at that time
point (the whole visit is treated as missing). Baseline cells may not be
empty.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import (
    BaselineMissing,
    InvalidSpec,
    NonFinite,
    ParseError,
    SchemaMismatch,
    ShapeMismatch,
    UnknownTimePoint,
)

log = logging.getLogger(__name__)

_FOLLOWUP_COL = re.compile(r"^xt([^_]+)_(.+)$")


def normalize_label(t) -> str:
    """Canonical string form of a time label: ``2``, ``2.0`` and ``"2"`` all map to ``"2"``."""
    if isinstance(t, (int, np.integer)):
        return str(int(t))
    try:
        x = float(t)
    except (TypeError, ValueError):
        raise InvalidSpec(f"time label {t!r} is not numeric") from None
    if not math.isfinite(x):
        raise InvalidSpec(f"time label {t!r} is not finite")
    return str(int(x)) if x.is_integer() else repr(x)


@dataclass(frozen=True)
class DatasetSchema:
    d: int
    q: int
    time_labels: tuple
    item_names: tuple = ()
    covariate_names: tuple = ()

    def __post_init__(self):
        labels = tuple(normalize_label(t) for t in self.time_labels)
        object.__setattr__(self, "time_labels", labels)
        if not self.item_names:
            object.__setattr__(self, "item_names", tuple(f"i{j + 1}" for j in range(self.d)))
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", tuple(f"c{j + 1}" for j in range(self.q)))
        object.__setattr__(self, "item_names", tuple(self.item_names))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.d < 1 or self.q < 0:
            raise InvalidSpec(f"need d >= 1 and q >= 0, got d={self.d}, q={self.q}")
        values = [float(t) for t in labels]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InvalidSpec(f"time labels must be strictly increasing: {labels}")
        if len(self.item_names) != self.d or len(self.covariate_names) != self.q:
            raise InvalidSpec("name lists do not match d/q")
        if len(set(self.item_names)) != self.d or len(set(self.covariate_names)) != self.q:
            raise InvalidSpec("item and covariate names must be unique")

    @property
    def p(self) -> int:
        return self.d + self.q

    @property
    def T(self) -> int:
        return len(self.time_labels)

    def label(self, t) -> str:
        lab = normalize_label(t)
        if lab not in self.time_labels:
            raise UnknownTimePoint(f"unknown time point {t!r}; known: {list(self.time_labels)}")
        return lab

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "q": self.q,
            "time_labels": list(self.time_labels),
            "item_names": list(self.item_names),
            "covariate_names": list(self.covariate_names),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetSchema":
        return cls(
            d=int(data["d"]),
            q=int(data["q"]),
            time_labels=tuple(data["time_labels"]),
            item_names=tuple(data.get("item_names") or ()),
            covariate_names=tuple(data.get("covariate_names") or ()),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class LongitudinalDataset:
    """Fully observed baseline plus per-time follow-up blocks with row masks.

    ``followups[t]`` is ``n x d`` with NaN in every masked-out row;
    ``masks[t][i]`` is True when subject ``i`` was observed at ``t``.
    """

    schema: DatasetSchema
    X0: np.ndarray
    Z: np.ndarray
    followups: Dict[str, np.ndarray]
    masks: Dict[str, np.ndarray]
    subject_ids: Optional[tuple] = None

    def __post_init__(self):
        s = self.schema
        X0 = np.asarray(self.X0, dtype=np.float64)
        n = X0.shape[0]
        Z = np.asarray(self.Z, dtype=np.float64)
        if Z.size == 0:
            Z = np.zeros((n, 0))
        if X0.ndim != 2 or X0.shape[1] != s.d:
            raise ShapeMismatch(f"X0 must be n x {s.d}, got {X0.shape}")
        if Z.shape != (n, s.q):
            raise ShapeMismatch(f"Z must be {n} x {s.q}, got {Z.shape}")
        if not (np.all(np.isfinite(X0)) and np.all(np.isfinite(Z))):
            raise NonFinite("baseline X0 and Z must be fully observed and finite")
        if set(self.followups) != set(s.time_labels):
            raise SchemaMismatch(
                f"follow-up labels {sorted(self.followups)} do not match schema {list(s.time_labels)}"
            )
        followups, masks = {}, {}
        for t in s.time_labels:
            Xt = np.array(self.followups[t], dtype=np.float64)
            if Xt.shape != (n, s.d):
                raise ShapeMismatch(f"follow-up {t} must be {n} x {s.d}, got {Xt.shape}")
            mask = self.masks.get(t) if self.masks else None
            mask = np.all(np.isfinite(Xt), axis=1) if mask is None else np.array(mask, dtype=bool)
            if mask.shape != (n,):
                raise ShapeMismatch(f"mask for {t} must have length {n}")
            if not np.all(np.isfinite(Xt[mask])):
                raise NonFinite(f"observed rows of follow-up {t} contain non-finite values")
            Xt[~mask] = np.nan
            Xt.setflags(write=False)
            mask.setflags(write=False)
            followups[t] = Xt
            masks[t] = mask
        if self.subject_ids is not None and len(self.subject_ids) != n:
            raise ShapeMismatch("subject_ids length does not match row count")
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "followups", followups)
        object.__setattr__(self, "masks", masks)

    @property
    def n(self) -> int:
        return self.X0.shape[0]

    @property
    def features(self) -> np.ndarray:
        """Baseline design ``[X0, Z]``."""
        return np.hstack([self.X0, self.Z])

    def n_observed(self, t) -> int:
        return int(self.masks[self.schema.label(t)].sum())

    def complete_cases(self, t):
        """``(X0, Z, Xt)`` restricted to subjects observed at ``t``."""
        lab = self.schema.label(t)
        m = self.masks[lab]
        return self.X0[m], self.Z[m], self.followups[lab][m]

    def subset(self, rows) -> "LongitudinalDataset":
        """Row subset; repeated indices (bootstrap draws) are allowed."""
        rows = np.asarray(rows, dtype=np.int64)
        ids = None if self.subject_ids is None else tuple(self.subject_ids[i] for i in rows)
        return LongitudinalDataset(
            schema=self.schema,
            X0=self.X0[rows],
            Z=self.Z[rows],
            followups={t: v[rows] for t, v in self.followups.items()},
            masks={t: m[rows] for t, m in self.masks.items()},
            subject_ids=ids,
        )

    def with_time_points(self, labels: Sequence) -> "LongitudinalDataset":
        labels = [self.schema.label(t) for t in labels]
        schema = DatasetSchema(
            d=self.schema.d,
            q=self.schema.q,
            time_labels=tuple(labels),
            item_names=self.schema.item_names,
            covariate_names=self.schema.covariate_names,
        )
        return LongitudinalDataset(
            schema=schema,
            X0=self.X0,
            Z=self.Z,
            followups={t: self.followups[t] for t in labels},
            masks={t: self.masks[t] for t in labels},
            subject_ids=self.subject_ids,
        )

    def equals(self, other: "LongitudinalDataset") -> bool:
        if self.schema != other.schema or self.n != other.n:
            return False
        if not (np.array_equal(self.X0, other.X0) and np.array_equal(self.Z, other.Z)):
            return False
        for t in self.schema.time_labels:
            if not np.array_equal(self.masks[t], other.masks[t]):
                return False
            if not np.array_equal(self.followups[t], other.followups[t], equal_nan=True):
                return False
        return True


def _header(schema: DatasetSchema) -> List[str]:
    cols = ["subject_id"]
    cols += [f"x0_{name}" for name in schema.item_names]
    cols += [f"z_{name}" for name in schema.covariate_names]
    for t in schema.time_labels:
        cols += [f"xt{t}_{name}" for name in schema.item_names]
    return cols


def save_csv(dataset: LongitudinalDataset, path) -> None:
    """Write the wide format. Floats use ``repr`` so reloading is bit-exact."""
    s = dataset.schema
    ids = dataset.subject_ids or tuple(str(i + 1) for i in range(dataset.n))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_header(s))
        for i in range(dataset.n):
            row = [ids[i]]
            row += [repr(float(v)) for v in dataset.X0[i]]
            row += [repr(float(v)) for v in dataset.Z[i]]
            for t in s.time_labels:
                if dataset.masks[t][i]:
                    row += [repr(float(v)) for v in dataset.followups[t][i]]
                else:
                    row += [""] * s.d
            w.writerow(row)


def _infer_schema(header: List[str]) -> DatasetSchema:
    items, covs, labels = [], [], []
    per_label: Dict[str, List[str]] = {}
    for col in header[1:]:
        if col.startswith("x0_"):
            items.append(col[3:])
        elif col.startswith("z_"):
            covs.append(col[2:])
        else:
            m = _FOLLOWUP_COL.match(col)
            if not m:
                raise SchemaMismatch(f"unrecognized column {col!r}")
            lab = normalize_label(m.group(1))
            if lab not in per_label:
                labels.append(lab)
                per_label[lab] = []
            per_label[lab].append(m.group(2))
    if not labels:
        raise SchemaMismatch("no follow-up columns (xt<label>_<item>) found")
    return DatasetSchema(
        d=len(items),
        q=len(covs),
        time_labels=tuple(sorted(labels, key=float)),
        item_names=tuple(items),
        covariate_names=tuple(covs),
    )


def load_csv(path, schema: Optional[DatasetSchema] = None) -> LongitudinalDataset:
    """Read the wide CSV format, inferring the schema from the header if not given.

    Raises ``ParseError`` (with line number and column) on malformed cells,
    ``BaselineMissing`` on an empty baseline cell, and ``SchemaMismatch``
    when the header disagrees with ``schema``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: header row required", line=1) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "subject_id":
            raise SchemaMismatch("first column must be 'subject_id'")
        inferred = _infer_schema(header)
        if schema is None:
            schema = inferred
        elif _header(schema) != header:
            raise SchemaMismatch("CSV header does not match the supplied schema")
        col_index = {c: k for k, c in enumerate(header)}
        base_cols = [col_index[f"x0_{n}"] for n in schema.item_names] + [
            col_index[f"z_{n}"] for n in schema.covariate_names
        ]
        fu_cols = {t: [col_index[f"xt{t}_{n}"] for n in schema.item_names] for t in schema.time_labels}

        ids, base, fus = [], [], {t: [] for t in schema.time_labels}
        partial = {t: 0 for t in schema.time_labels}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line)
            ids.append(row[0].strip())
            vals = []
            for k in base_cols:
                cell = row[k].strip()
                if cell == "":
                    raise BaselineMissing("baseline value missing", line=line, column=header[k])
                vals.append(_parse_float(cell, line, header[k]))
            base.append(vals)
            for t, cols in fu_cols.items():
                cells = [row[k].strip() for k in cols]
                empty = [c == "" for c in cells]
                if all(empty):
                    fus[t].append([np.nan] * schema.d)
                    continue
                parsed = [np.nan if e else _parse_float(c, line, header[k]) for c, e, k in zip(cells, empty, cols)]
                if any(empty):
                    partial[t] += 1
                    parsed = [np.nan] * schema.d
                fus[t].append(parsed)

    for t, count in partial.items():
        if count:
            log.warning("time %s: %d partially answered visit(s) masked as missing", t, count)
    n = len(base)
    base = np.asarray(base, dtype=np.float64).reshape(n, schema.p)
    followups = {t: np.asarray(v, dtype=np.float64).reshape(n, schema.d) for t, v in fus.items()}
    return LongitudinalDataset(
        schema=schema,
        X0=base[:, : schema.d],
        Z=base[:, schema.d :],
        followups=followups,
        masks={t: np.all(np.isfinite(v), axis=1) for t, v in followups.items()},
        subject_ids=tuple(ids),
    )


def _parse_float(cell, line, column):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"malformed numeric value {cell!r}", line=line, column=column) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {cell!r}", line=line, column=column)
    return v


def load_baseline_csv(path, schema: DatasetSchema):
    """Read ``subject_id`` plus the baseline and covariate columns of ``schema``.

    Any other columns (follow-ups, for instance) are ignored. Returns
    ``(subject_ids, X0, Z)``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file: header row required", line=1) from None
        if not header or header[0] != "subject_id":
            raise SchemaMismatch("first column must be 'subject_id'")
        wanted = [f"x0_{n}" for n in schema.item_names] + [f"z_{n}" for n in schema.covariate_names]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaMismatch(f"missing baseline columns: {', '.join(missing)}")
        cols = [header.index(c) for c in wanted]
        ids, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line)
            ids.append(row[0].strip())
            vals = []
            for k in cols:
                cell = row[k].strip()
                if cell == "":
                    raise BaselineMissing("baseline value missing", line=line, column=header[k])
                vals.append(_parse_float(cell, line, header[k]))
            rows.append(vals)
    base = np.asarray(rows, dtype=np.float64).reshape(len(rows), schema.p)
    return tuple(ids), base[:, : schema.d], base[:, schema.d :]
