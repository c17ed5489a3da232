"""Dataset container, per-variable schema, missingness mask, and CSV/JSON ingestion.

Category codes are 1-based integers (a value of variable ``j`` lies in
``{1, ..., levels_j}``) both on disk and in memory.  Masked (missing) cells
hold the internal sentinel 0 and must never be read as data; serialization
always emits "NA" for them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

MISSING_SENTINEL = 0

_KINDS = ("ordinal", "nominal")
_GROUPS = ("focus", "remainder")


class DataValidationError(ValueError):
    """Raised when a schema, config, or data file violates its contract."""


@dataclass(frozen=True)
class VariableSchema:
    """One categorical variable: name, scale type, level count, block assignment.

    Ordinal focus variables enter the latent-normal block, nominal focus
    variables the focus multinomial block, and remainder variables the
    remainder multinomial block (remainder ordinals are modeled as nominal).
    """

    name: str
    kind: str
    levels: int
    group: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DataValidationError(f"variable {self.name!r}: kind must be one of {_KINDS}, got {self.kind!r}")
        if self.group not in _GROUPS:
            raise DataValidationError(f"variable {self.name!r}: group must be one of {_GROUPS}, got {self.group!r}")
        if int(self.levels) < 2:
            raise DataValidationError(f"variable {self.name!r}: levels must be >= 2, got {self.levels}")


@dataclass(frozen=True)
class PartitionedView:
    """Column indices of the three variable blocks, in canonical role order."""

    ordinal_focus: np.ndarray
    nominal_focus: np.ndarray
    remainder: np.ndarray

    @property
    def n_ordinal_focus(self):
        return len(self.ordinal_focus)

    @property
    def n_focus(self):
        return len(self.ordinal_focus) + len(self.nominal_focus)

    @property
    def covariate_columns(self):
        """Columns feeding the design vector: nominal focus then remainder."""
        return np.concatenate([self.nominal_focus, self.remainder])


@dataclass
class Dataset:
    """Rectangular table of 1-based category codes with a missingness mask.

    ``values`` is n x p int, ``mask`` n x p bool (True = missing).  Masked
    entries of ``values`` hold ``MISSING_SENTINEL``.  Immutable by
    convention after construction; safe for shared reads across chains.
    """

    schemas: tuple
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.schemas = tuple(self.schemas)
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 2:
            raise DataValidationError("values must be a 2-D integer array")
        n, p = self.values.shape
        if p != len(self.schemas):
            raise DataValidationError(f"values has {p} columns but schema lists {len(self.schemas)} variables")
        if n < 1:
            raise DataValidationError("dataset must contain at least one row")
        names = [s.name for s in self.schemas]
        if len(set(names)) != len(names):
            raise DataValidationError("variable names must be unique")
        if self.mask is None:
            self.mask = np.zeros((n, p), dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (n, p):
            raise DataValidationError("mask shape must match values")
        for j, s in enumerate(self.schemas):
            col = self.values[:, j]
            obs = ~self.mask[:, j]
            bad = obs & ((col < 1) | (col > s.levels))
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise DataValidationError(
                    f"row {i + 1}, column {s.name!r}: code {col[i]} outside 1..{s.levels}"
                )
        self.values = self.values.copy()
        self.values[self.mask] = MISSING_SENTINEL

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def levels(self):
        return np.array([s.levels for s in self.schemas])

    @property
    def names(self):
        return [s.name for s in self.schemas]

    def column_index(self, name):
        for j, s in enumerate(self.schemas):
            if s.name == name:
                return j
        raise KeyError(name)

    def is_complete(self):
        return not self.mask.any()

    def with_values(self, completed_values):
        """A fully observed copy of this dataset carrying ``completed_values``."""
        return Dataset(self.schemas, np.asarray(completed_values, dtype=np.int64), None)

    def reordered(self, order):
        order = np.asarray(order)
        return Dataset(tuple(self.schemas[j] for j in order), self.values[:, order], self.mask[:, order])


def canonical_order(schemas):
    """Column permutation: ordinal focus first, nominal focus second, remainder last."""
    ranks = []
    for s in schemas:
        if s.group == "focus":
            ranks.append(0 if s.kind == "ordinal" else 1)
        else:
            ranks.append(2)
    return np.argsort(np.asarray(ranks), kind="stable")


def partition(dataset_or_schemas):
    """Index sets of the three blocks; errors when no focus variable exists."""
    schemas = getattr(dataset_or_schemas, "schemas", dataset_or_schemas)
    ordinal_focus = [j for j, s in enumerate(schemas) if s.group == "focus" and s.kind == "ordinal"]
    nominal_focus = [j for j, s in enumerate(schemas) if s.group == "focus" and s.kind == "nominal"]
    remainder = [j for j, s in enumerate(schemas) if s.group == "remainder"]
    if not ordinal_focus and not nominal_focus:
        raise DataValidationError("at least one focus variable is required (remainder-only schemas are invalid)")
    return PartitionedView(
        np.array(ordinal_focus, dtype=int),
        np.array(nominal_focus, dtype=int),
        np.array(remainder, dtype=int),
    )


def load_schema(path):
    """Read a JSON list of {name, kind, levels, group} records."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list) or not raw:
        raise DataValidationError("schema file must be a non-empty JSON list")
    schemas = []
    for k, rec in enumerate(raw):
        try:
            schemas.append(
                VariableSchema(
                    name=str(rec["name"]),
                    kind=str(rec["kind"]),
                    levels=int(rec["levels"]),
                    group=str(rec["group"]),
                )
            )
        except KeyError as exc:
            raise DataValidationError(f"schema entry {k}: missing field {exc}") from None
    return schemas


def write_schema(schemas, path):
    recs = [{"name": s.name, "kind": s.kind, "levels": s.levels, "group": s.group} for s in schemas]
    with open(path, "w") as fh:
        json.dump(recs, fh, indent=1)
        fh.write("\n")


def load_dataset(path, schemas):
    """Read a CSV with header into a Dataset in canonical column order.

    Missing cells are encoded as "" or "NA".  Codes are validated against the
    per-variable level counts; errors report the offending row and column.
    """
    names = [s.name for s in schemas]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in names]
        if unknown:
            raise DataValidationError(f"{path}: unknown column(s) {unknown}")
        missing_cols = [nm for nm in names if nm not in header]
        if missing_cols:
            raise DataValidationError(f"{path}: column(s) {missing_cols} absent from header")
        col_of = {nm: header.index(nm) for nm in names}
        rows = []
        mask_rows = []
        for i, rec in enumerate(reader):
            if len(rec) != len(header):
                raise DataValidationError(f"{path}: row {i + 1}: expected {len(header)} cells, got {len(rec)}")
            vals = np.zeros(len(names), dtype=np.int64)
            msk = np.zeros(len(names), dtype=bool)
            for j, nm in enumerate(names):
                cell = rec[col_of[nm]].strip()
                if cell == "" or cell.upper() == "NA":
                    msk[j] = True
                    continue
                try:
                    code = int(cell)
                except ValueError:
                    raise DataValidationError(f"{path}: row {i + 1}, column {nm!r}: non-integer cell {cell!r}") from None
                if not 1 <= code <= schemas[j].levels:
                    raise DataValidationError(
                        f"{path}: row {i + 1}, column {nm!r}: code {code} outside 1..{schemas[j].levels}"
                    )
                vals[j] = code
            rows.append(vals)
            mask_rows.append(msk)
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    data = Dataset(tuple(schemas), np.stack(rows), np.stack(mask_rows))
    return data.reordered(canonical_order(data.schemas))


def write_dataset(dataset, path):
    """Write a Dataset as CSV; masked cells emitted as "NA"."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.names)
        for i in range(dataset.n):
            row = [
                "NA" if dataset.mask[i, j] else str(int(dataset.values[i, j]))
                for j in range(dataset.p)
            ]
            writer.writerow(row)
