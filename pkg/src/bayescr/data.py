"""Competing-risks datasets: CSV ingest, covariate encoding, standardization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

TIME_UNITS = {"years": 1.0, "months": 1.0 / 12.0, "days": 1.0 / 365.25}
KINDS = ("continuous", "binary", "categorical")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class CovariateEntry:
    """One schema entry.

    ``kind`` is ``continuous``, ``binary`` (0/1 indicator) or ``categorical``.
    Categorical entries list their ``levels`` and name a ``reference`` level;
    they expand into one indicator column per non-reference level.
    """

    name: str
    kind: str = "continuous"
    levels: tuple[str, ...] = ()
    reference: str | None = None
    standardization: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"covariate {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind == "categorical":
            if len(self.levels) < 2:
                raise DataError(f"covariate {self.name!r}: categorical needs >= 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"covariate {self.name!r}: duplicate levels")
            if self.reference is None or str(self.reference) not in self.levels:
                raise DataError(
                    f"covariate {self.name!r}: reference level {self.reference!r} not in levels"
                )
            object.__setattr__(self, "reference", str(self.reference))
        if self.standardization is not None:
            if self.kind != "continuous":
                raise DataError(f"covariate {self.name!r}: only continuous covariates standardize")
            mean, sd = (float(v) for v in self.standardization)
            if not sd > 0:
                raise DataError(f"covariate {self.name!r}: standardization sd must be > 0")
            object.__setattr__(self, "standardization", (mean, sd))

    @property
    def columns(self) -> list[str]:
        if self.kind == "categorical":
            return [f"{self.name}_{lev}" for lev in self.levels if lev != self.reference]
        return [self.name]

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            d["levels"] = list(self.levels)
            d["reference"] = self.reference
        if self.standardization is not None:
            d["standardization"] = {"mean": self.standardization[0], "sd": self.standardization[1]}
        return d


@dataclass(frozen=True)
class CovariateSchema:
    entries: tuple[CovariateEntry, ...] = ()
    time_unit: str = "years"

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate covariate names in schema: {names}")
        if self.time_unit not in TIME_UNITS:
            raise DataError(f"unknown time unit {self.time_unit!r}")

    @property
    def columns(self) -> list[str]:
        """Design-matrix column names after indicator expansion."""
        return [c for e in self.entries for c in e.columns]

    def entry(self, name: str) -> CovariateEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def with_entry(self, new: CovariateEntry) -> "CovariateSchema":
        return replace(self, entries=tuple(new if e.name == new.name else e for e in self.entries))

    def encode(self, values: Mapping[str, object]) -> np.ndarray:
        """Encode one subject's natural-scale values into a design row."""
        row = []
        for e in self.entries:
            if e.name not in values:
                raise DataError(f"missing value for covariate {e.name!r}")
            row.extend(_encode_value(e, values[e.name]))
        return np.array(row, dtype=float)

    def to_dict(self) -> dict:
        return {"time_unit": self.time_unit, "covariates": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CovariateSchema":
        entries = []
        for c in d.get("covariates", []):
            std = c.get("standardization")
            if isinstance(std, Mapping):
                std = (std["mean"], std["sd"])
            kind = c.get("kind", "continuous")
            if kind == "binary-indicator":
                kind = "binary"
            elif kind == "categorical-with-reference":
                kind = "categorical"
            entries.append(
                CovariateEntry(
                    name=c["name"],
                    kind=kind,
                    levels=tuple(c.get("levels", ())),
                    reference=c.get("reference"),
                    standardization=std,
                )
            )
        return cls(entries=tuple(entries), time_unit=d.get("time_unit", "years"))


def _encode_value(e: CovariateEntry, raw) -> list[float]:
    text = str(raw).strip()
    if e.kind == "categorical":
        if text not in e.levels:
            raise DataError(f"unknown level {text!r} for {e.name!r}")
        return [1.0 if text == lev else 0.0 for lev in e.levels if lev != e.reference]
    if e.kind == "binary":
        lowered = text.lower()
        if lowered in ("1", "1.0", "true", "yes"):
            return [1.0]
        if lowered in ("0", "0.0", "false", "no"):
            return [0.0]
        raise DataError(f"binary covariate {e.name!r} has value {text!r}")
    try:
        x = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} for {e.name!r}") from None
    if not math.isfinite(x):
        raise DataError(f"non-finite value for {e.name!r}")
    if e.standardization is not None:
        x = (x - e.standardization[0]) / e.standardization[1]
    return [x]


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    time: float
    cause: int
    covariates: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Subjects as columns: times in years, causes 0..K, design matrix ``X``."""

    ids: tuple[str, ...]
    time: np.ndarray
    cause: np.ndarray
    X: np.ndarray
    schema: CovariateSchema
    cause_labels: tuple[str, ...]

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).reshape(-1)
        cause = np.asarray(self.cause, dtype=int).reshape(-1)
        X = np.asarray(self.X, dtype=float).reshape(len(time), -1) if len(time) else \
            np.zeros((0, len(self.schema.columns)))
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "cause", cause)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "cause_labels", tuple(self.cause_labels))
        n = len(time)
        if len(self.ids) != n or len(cause) != n:
            raise DataError("ids, time and cause lengths differ")
        if X.shape[1] != len(self.schema.columns):
            raise DataError(
                f"design has {X.shape[1]} columns, schema expects {len(self.schema.columns)}"
            )
        if np.any(~(time > 0)):
            i = int(np.flatnonzero(~(time > 0))[0])
            raise DataError(f"nonpositive time at row {i + 1}")
        if np.any((cause < 0) | (cause > self.K)):
            i = int(np.flatnonzero((cause < 0) | (cause > self.K))[0])
            raise DataError(f"unknown cause code {cause[i]} at row {i + 1}")
        if not np.all(np.isfinite(X)):
            raise DataError("missing or non-finite covariate values")

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def K(self) -> int:
        return len(self.cause_labels)

    @property
    def columns(self) -> list[str]:
        return self.schema.columns

    @property
    def records(self) -> list[SubjectRecord]:
        return [SubjectRecord(i, float(t), int(c), x.copy())
                for i, t, c, x in zip(self.ids, self.time, self.cause, self.X)]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, ids=tuple(np.asarray(self.ids, dtype=object)[rows]),
                       time=self.time[rows], cause=self.cause[rows], X=self.X[rows])

    def concat(self, other: "Dataset") -> "Dataset":
        if other.schema != self.schema or other.cause_labels != self.cause_labels:
            raise DataError("cannot concatenate datasets with different schemas")
        return replace(self, ids=self.ids + other.ids,
                       time=np.concatenate([self.time, other.time]),
                       cause=np.concatenate([self.cause, other.cause]),
                       X=np.vstack([self.X, other.X]))

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], schema: CovariateSchema,
                     cause_labels: Sequence[str]) -> "Dataset":
        p = len(schema.columns)
        X = np.array([r.covariates for r in records], dtype=float).reshape(len(records), p)
        return cls(ids=tuple(r.id for r in records),
                   time=np.array([r.time for r in records], dtype=float),
                   cause=np.array([r.cause for r in records], dtype=int),
                   X=X, schema=schema, cause_labels=tuple(cause_labels))


def parse_dataset(csv_text: str, schema: CovariateSchema,
                  column_map: Mapping[str, str] | None = None,
                  cause_labels: Sequence[str] | None = None,
                  n_causes: int | None = None) -> Dataset:
    """Parse CSV text into a :class:`Dataset`.

    ``column_map`` maps logical names (``time``, ``cause``, ``id`` and
    covariate names) to CSV headers; unmapped names are looked up as-is.
    Times are converted from ``schema.time_unit`` to years.  The number of
    causes comes from ``cause_labels``, ``n_causes`` or the largest code seen.
    Errors name the 1-based data row.
    """
    column_map = dict(column_map or {})
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty csv: no header row") from None

    def col(name):
        key = column_map.get(name, name)
        if key not in header:
            raise DataError(f"column {key!r} not found in header")
        return header.index(key)

    i_time, i_cause = col("time"), col("cause")
    i_id = header.index(column_map.get("id", "id")) if column_map.get("id", "id") in header else None
    cov_idx = [col(e.name) for e in schema.entries]
    if cause_labels is not None:
        K = len(cause_labels)
    else:
        K = n_causes
    unit = TIME_UNITS[schema.time_unit]

    ids, times, causes, rows = [], [], [], []
    for rowno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {rowno}: expected {len(header)} cells, got {len(row)}")
        cells = [c.strip() for c in row]
        if any(cells[i] == "" or cells[i].upper() in ("NA", "NAN") for i in
               [i_time, i_cause, *cov_idx]):
            raise DataError(f"missing cell at row {rowno}")
        try:
            t = float(cells[i_time])
        except ValueError:
            raise DataError(f"non-numeric time at row {rowno}") from None
        if not (t > 0 and math.isfinite(t)):
            raise DataError(f"nonpositive time at row {rowno}")
        try:
            c = float(cells[i_cause])
        except ValueError:
            raise DataError(f"unknown cause code {cells[i_cause]!r} at row {rowno}") from None
        if c != int(c) or c < 0 or (K is not None and c > K):
            raise DataError(f"unknown cause code {cells[i_cause]!r} at row {rowno}")
        try:
            x = [v for e, i in zip(schema.entries, cov_idx) for v in _encode_value(e, cells[i])]
        except DataError as exc:
            raise DataError(f"{exc} at row {rowno}") from None
        ids.append(cells[i_id] if i_id is not None else str(rowno))
        times.append(t * unit)
        causes.append(int(c))
        rows.append(x)

    if K is None:
        K = max(causes, default=0)
    labels = tuple(cause_labels) if cause_labels is not None else tuple(
        f"cause{k}" for k in range(1, K + 1))
    out_schema = replace(schema, time_unit="years")
    return Dataset(ids=tuple(ids), time=np.array(times), cause=np.array(causes, dtype=int),
                   X=np.array(rows, dtype=float).reshape(len(rows), len(schema.columns)),
                   schema=out_schema, cause_labels=labels)


def _fmt(x: float) -> str:
    # shortest text that parses back to the same double
    return repr(float(x))


def to_csv(d: Dataset) -> str:
    """Serialize on the natural scale, categorical columns as level labels."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "time", "cause", *[e.name for e in d.schema.entries]])
    for i in range(d.n):
        out, j = [], 0
        for e in d.schema.entries:
            if e.kind == "categorical":
                ncol = len(e.levels) - 1
                ind = d.X[i, j:j + ncol]
                others = [lev for lev in e.levels if lev != e.reference]
                out.append(others[int(np.argmax(ind))] if ind.any() else e.reference)
                j += ncol
            elif e.kind == "binary":
                out.append(str(int(d.X[i, j])))
                j += 1
            else:
                x = d.X[i, j]
                if e.standardization is not None:
                    x = x * e.standardization[1] + e.standardization[0]
                out.append(_fmt(x))
                j += 1
        w.writerow([d.ids[i], _fmt(d.time[i]), int(d.cause[i]), *out])
    return buf.getvalue()


def schema_document(d: Dataset) -> dict:
    """Sidecar schema document describing :func:`to_csv` output."""
    doc = d.schema.to_dict()
    doc["time_unit"] = "years"
    doc["cause_labels"] = list(d.cause_labels)
    return doc


def load_schema(path_or_text: str) -> tuple[CovariateSchema, dict]:
    """Read a JSON schema document; returns the schema and the raw document."""
    text = path_or_text
    if not path_or_text.lstrip().startswith("{"):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    return CovariateSchema.from_dict(doc), doc


def read_dataset(csv_path: str, schema_path: str) -> Dataset:
    schema, doc = load_schema(schema_path)
    with open(csv_path, encoding="utf-8") as fh:
        text = fh.read()
    labels = doc.get("cause_labels")
    return parse_dataset(text, schema, doc.get("column_map"), cause_labels=labels)


def standardize(d: Dataset, which: Sequence[str]) -> tuple[Dataset, CovariateSchema]:
    """Center and scale continuous covariates (sample sd, ``n - 1``).

    The schema keeps the mapping from the natural scale so that profiles
    can be entered in natural units.  Standardizing an already standardized
    column composes the transforms.
    """
    schema = d.schema
    X = d.X.copy()
    for name in which:
        e = schema.entry(name)
        if e.kind != "continuous":
            raise DataError(f"covariate {name!r} is not continuous")
        j = schema.columns.index(name)
        col = X[:, j]
        mean = float(col.mean())
        sd = float(col.std(ddof=1)) if len(col) > 1 else 0.0
        if not sd > 0:
            raise DataError(f"covariate {name!r} has zero sample sd")
        X[:, j] = (col - mean) / sd
        if e.standardization is None:
            new_std = (mean, sd)
        else:
            m0, s0 = e.standardization
            new_std = (m0 + s0 * mean, s0 * sd)
        schema = schema.with_entry(replace(e, standardization=new_std))
    return replace(d, X=X, schema=schema), schema


def destandardize(d: Dataset) -> Dataset:
    """Inverse of :func:`standardize` for every standardized column."""
    X = d.X.copy()
    schema = d.schema
    for e in d.schema.entries:
        if e.standardization is not None:
            j = d.schema.columns.index(e.name)
            X[:, j] = X[:, j] * e.standardization[1] + e.standardization[0]
            schema = schema.with_entry(replace(e, standardization=None))
    return replace(d, X=X, schema=schema)


@dataclass
class ValidationReport:
    n: int
    censored: int
    events: dict[str, int]
    censoring_fraction: float
    covariates: dict[str, dict[str, str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        groups = ["Censored", *self.events, "Total"]
        lines = ["".ljust(24) + "".join(g.rjust(18) for g in groups)]
        counts = [self.censored, *self.events.values(), self.n]
        lines.append("n".ljust(24) + "".join(str(c).rjust(18) for c in counts))
        for name, cells in self.covariates.items():
            lines.append(name.ljust(24) + "".join(cells.get(g, "").rjust(18) for g in groups))
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines) + "\n"


def validate(d: Dataset) -> ValidationReport:
    """Per-cause event counts, censoring fraction and covariate summaries by group."""
    warnings = []
    if d.n == 0:
        warnings.append("empty dataset")
    counts = {lab: int(np.sum(d.cause == k)) for k, lab in enumerate(d.cause_labels, start=1)}
    for k, lab in enumerate(d.cause_labels, start=1):
        if counts[lab] == 0:
            warnings.append(f"cause {k} unobserved")
    censored = int(np.sum(d.cause == 0))
    groups = {"Censored": d.cause == 0}
    groups.update({lab: d.cause == k for k, lab in enumerate(d.cause_labels, start=1)})
    groups["Total"] = np.ones(d.n, dtype=bool)

    summaries: dict[str, dict[str, str]] = {}
    nat = destandardize(d)
    for j, col in enumerate(nat.columns):
        x = nat.X[:, j]
        binary = np.all((x == 0) | (x == 1))
        cells = {}
        for g, mask in groups.items():
            xs = x[mask]
            if len(xs) == 0:
                cells[g] = "-"
            elif binary:
                cells[g] = f"{int(xs.sum())} ({100 * xs.mean():.2f}%)"
            else:
                sd = xs.std(ddof=1) if len(xs) > 1 else float("nan")
                cells[g] = f"{xs.mean():.2f} ({sd:.2f})"
        summaries[col] = cells
    return ValidationReport(
        n=d.n,
        censored=censored,
        events=counts,
        censoring_fraction=censored / d.n if d.n else float("nan"),
        covariates=summaries,
        warnings=warnings,
    )
