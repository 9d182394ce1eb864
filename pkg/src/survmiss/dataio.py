"""CSV loading, validation, and design-matrix encoding for survival tables.

A dataset is a column-typed table with an explicit missingness mask. Exactly
one column holds follow-up time and one holds the event indicator; the rest
are continuous or categorical covariates, or auxiliary numeric columns
(weights, indicators) that never enter a design matrix. Missing cells are
written and read as the literal token ``NA``; an empty field is a parse
error, never a missing value.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

KINDS = ("time", "event", "continuous", "categorical", "auxiliary")

MISSING_TOKEN = "NA"


@dataclass(frozen=True)
class ColumnSchema:
    """Declared kind of one column, plus an optional categorical reference level."""

    kind: str
    reference: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown column kind {self.kind!r}; expected one of {KINDS}")
        if self.reference is not None and self.kind != "categorical":
            raise DataError("reference level only applies to categorical columns")


def _normalize_schema(schema) -> dict[str, ColumnSchema]:
    out = {}
    for name, decl in schema.items():
        if isinstance(decl, ColumnSchema):
            out[name] = decl
        elif isinstance(decl, str):
            out[name] = ColumnSchema(decl)
        elif isinstance(decl, dict):
            out[name] = ColumnSchema(decl["kind"], decl.get("reference"))
        else:
            raise DataError(f"cannot interpret schema entry for column {name!r}")
    return out


def load_schema(path) -> dict[str, ColumnSchema]:
    """Read a JSON schema file mapping column name -> kind or {kind, reference}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DataError("schema file must hold a JSON object of column declarations")
    return _normalize_schema(raw)


@dataclass(frozen=True)
class Dataset:
    """Immutable column-typed table with survival triplet and missingness mask.

    Attributes
    ----------
    columns : tuple of (name, kind)
        Column order as it appeared in the source file.
    values : dict
        Per-column arrays. Numeric kinds hold float64; categorical columns
        hold integer level codes, with -1 at missing cells.
    missing : dict
        Per-column boolean masks; always all-False on time/event columns.
    levels : dict
        Ordered level labels per categorical column. The first entry is the
        reference level.
    """

    columns: tuple[tuple[str, str], ...]
    values: dict[str, np.ndarray]
    missing: dict[str, np.ndarray]
    levels: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for arr in self.values.values():
            arr.flags.writeable = False
        for arr in self.missing.values():
            arr.flags.writeable = False

    @property
    def n_rows(self) -> int:
        name = self.columns[0][0]
        return len(self.values[name])

    def kind_of(self, name: str) -> str:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise DataError(f"no column named {name!r}")

    @property
    def time_name(self) -> str:
        return next(n for n, k in self.columns if k == "time")

    @property
    def event_name(self) -> str:
        return next(n for n, k in self.columns if k == "event")

    @property
    def times(self) -> np.ndarray:
        return self.values[self.time_name]

    @property
    def events(self) -> np.ndarray:
        return self.values[self.event_name]

    def covariate_names(self) -> tuple[str, ...]:
        return tuple(n for n, k in self.columns if k in ("continuous", "categorical"))

    def observed_mask(self, name: str) -> np.ndarray:
        """True where the named column is observed."""
        return ~self.missing[name]

    def complete_mask(self, names=None) -> np.ndarray:
        """True on rows with no missing cell among `names` (default: all columns)."""
        if names is None:
            names = [n for n, _ in self.columns]
        out = np.ones(self.n_rows, dtype=bool)
        for n in names:
            out &= ~self.missing[n]
        return out

    def labels(self, name: str) -> np.ndarray:
        """Decode a categorical column to its string labels ('NA' at missing cells)."""
        codes = self.values[name]
        lv = self.levels[name]
        out = np.array([lv[c] if c >= 0 else MISSING_TOKEN for c in codes], dtype=object)
        return out

    def take(self, index) -> "Dataset":
        """Row subset (boolean mask or integer index array), preserving column metadata."""
        values = {n: v[index].copy() for n, v in self.values.items()}
        missing = {n: m[index].copy() for n, m in self.missing.items()}
        return Dataset(self.columns, values, missing, dict(self.levels))

    def replace_column(self, name: str, codes: np.ndarray, missing: np.ndarray) -> "Dataset":
        """New dataset with one column's codes and mask swapped out."""
        if len(codes) != self.n_rows:
            raise DataError("replacement column length mismatch")
        values = dict(self.values)
        missing_map = dict(self.missing)
        values[name] = np.asarray(codes).copy()
        missing_map[name] = np.asarray(missing, dtype=bool).copy()
        return Dataset(self.columns, values, missing_map, dict(self.levels))


def _parse_numeric(token: str, col: str, row: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataError(
            f"non-numeric token {token!r} in numeric column {col!r} (row {row})"
        ) from None


def load_dataset(path, schema) -> Dataset:
    """Load a CSV file into a Dataset under the given column-kind schema.

    The file must have a header row naming exactly the schema's columns.
    ``NA`` marks a missing cell (allowed only on covariate columns); any other
    token must parse according to the column kind. Categorical levels are
    recorded in sorted label order with the first level as reference, unless
    the schema declares a reference level explicitly.
    """
    schema = _normalize_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")

    for col in header:
        if col not in schema:
            raise DataError(f"column {col!r} present in file but not in schema")
    for col in schema:
        if col not in header:
            raise DataError(f"schema names unknown column {col!r}")

    kinds = [schema[c].kind for c in header]
    if kinds.count("time") != 1 or kinds.count("event") != 1:
        raise DataError("schema must declare exactly one time and one event column")

    n = len(rows)
    raw = {c: [None] * n for c in header}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {i}: expected {len(header)} fields, got {len(row)}")
        for c, token in zip(header, row):
            if token == "":
                raise DataError(f"empty field in column {c!r} (row {i}); use {MISSING_TOKEN!r} for missing")
            raw[c][i] = token

    values: dict[str, np.ndarray] = {}
    missing: dict[str, np.ndarray] = {}
    levels: dict[str, tuple[str, ...]] = {}

    for col, kind in zip(header, kinds):
        tokens = raw[col]
        if kind in ("time", "event"):
            for i, t in enumerate(tokens):
                if t == MISSING_TOKEN:
                    raise DataError(f"{MISSING_TOKEN} not allowed in {kind} column {col!r} (row {i})")
            arr = np.array([_parse_numeric(t, col, i) for i, t in enumerate(tokens)])
            if kind == "time":
                if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                    raise DataError(f"time column {col!r} must be finite and >= 0")
            else:
                if not np.all(np.isin(arr, (0.0, 1.0))):
                    raise DataError(f"event value outside {{0,1}} in column {col!r}")
            values[col] = arr
            missing[col] = np.zeros(n, dtype=bool)
        elif kind in ("continuous", "auxiliary"):
            # auxiliary columns (weights, response indicators) parse like
            # continuous ones but never enter a design matrix
            mask = np.array([t == MISSING_TOKEN for t in tokens])
            arr = np.array(
                [np.nan if m else _parse_numeric(t, col, i) for i, (t, m) in enumerate(zip(tokens, mask))]
            )
            values[col] = arr
            missing[col] = mask
        else:
            mask = np.array([t == MISSING_TOKEN for t in tokens])
            observed = sorted({t for t, m in zip(tokens, mask) if not m})
            ref = schema[col].reference
            if ref is not None:
                if ref not in observed:
                    raise DataError(f"reference level {ref!r} never observed in column {col!r}")
                observed = [ref] + [lab for lab in observed if lab != ref]
            lv = tuple(observed)
            lookup = {lab: i for i, lab in enumerate(lv)}
            codes = np.array([-1 if m else lookup[t] for t, m in zip(tokens, mask)], dtype=np.int64)
            values[col] = codes
            missing[col] = mask
            levels[col] = lv

    return Dataset(tuple(zip(header, kinds)), values, missing, levels)


def write_dataset(dataset: Dataset, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write a Dataset back to CSV with NA tokens at missing cells.

    Floats are rendered with repr so a reload reproduces identical values.
    `extra` appends fully observed numeric columns (e.g. a response indicator).
    """
    names = [n for n, _ in dataset.columns]
    header = names + (list(extra) if extra else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        cols = []
        for name in names:
            kind = dataset.kind_of(name)
            vals = dataset.values[name]
            mask = dataset.missing[name]
            if kind == "categorical":
                lv = dataset.levels[name]
                cols.append([MISSING_TOKEN if m else lv[c] for c, m in zip(vals, mask)])
            else:
                cols.append([MISSING_TOKEN if m else repr(float(v)) for v, m in zip(vals, mask)])
        if extra:
            for arr in extra.values():
                cols.append([repr(float(v)) for v in arr])
        for row in zip(*cols):
            writer.writerow(row)


@dataclass(frozen=True)
class DesignMatrix:
    """Numeric design matrix with dummy expansion bookkeeping.

    ``dummy_columns`` maps each categorical variable to its level -> column
    index assignment; the reference level has no column.
    """

    matrix: np.ndarray
    names: tuple[str, ...]
    dummy_columns: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.matrix.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]


def encode(dataset: Dataset, covariates=None) -> DesignMatrix:
    """Dummy-expand the named covariates into a numeric design matrix.

    Continuous columns are copied verbatim. A K-level categorical column
    becomes K-1 indicator columns against its reference level. Every named
    cell must be observed; callers complete or drop rows first. With
    ``covariates=None`` all covariate columns are used in schema order.
    """
    blocks = []
    names: list[str] = []
    dummy_columns: dict[str, dict[str, int]] = {}
    if covariates is None:
        covariates = dataset.covariate_names()
    for name in covariates:
        kind = dataset.kind_of(name)
        if kind not in ("continuous", "categorical"):
            raise DataError(f"column {name!r} has kind {kind!r}; only covariates can be encoded")
        if dataset.missing[name].any():
            raise DataError(f"missing cell encountered in column {name!r}; complete or drop rows first")
        if kind == "continuous":
            blocks.append(dataset.values[name][:, None].astype(float))
            names.append(name)
        else:
            lv = dataset.levels[name]
            codes = dataset.values[name]
            assign = {}
            for j, lab in enumerate(lv[1:], start=1):
                blocks.append((codes == j).astype(float)[:, None])
                assign[lab] = len(names)
                names.append(f"{name}:{lab}")
            dummy_columns[name] = assign
    if blocks:
        matrix = np.hstack(blocks)
    else:
        matrix = np.empty((dataset.n_rows, 0))
    return DesignMatrix(matrix, tuple(names), dummy_columns)
