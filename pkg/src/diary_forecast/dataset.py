"""Longitudinal diary cohorts: data model, CSV ingestion and feature-set views.

A cohort CSV has one row per (subject, calendar day)::

    subject_id,date,esm_01,...,esm_13,diary_01,...,diary_11,phq2

Empty cells are missing values. PHQ-2 labels use the extended 0-12 scale.
Internally each subject is held column-wise as numpy arrays, with ``nan``
marking missing cells.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateDay,
    MalformedCsv,
    OutOfRangeLabel,
    UnparseableDate,
    UsageError,
)

PHQ2_MIN = 0
PHQ2_MAX = 12
# standard-scale cut-off 3, doubled on the extended scale
INTERVENTION_THRESHOLD = 6

ESM_PREFIX = "esm_"
DIARY_PREFIX = "diary_"
N_ESM = 13
N_DIARY = 11


def default_columns(n_esm: int = N_ESM, n_diary: int = N_DIARY) -> tuple[str, ...]:
    esm = [f"{ESM_PREFIX}{i:02d}" for i in range(1, n_esm + 1)]
    diary = [f"{DIARY_PREFIX}{i:02d}" for i in range(1, n_diary + 1)]
    return tuple(esm + diary)


def csv_header(columns: Sequence[str]) -> tuple[str, ...]:
    return ("subject_id", "date", *columns, "phq2")


DEFAULT_COLUMNS = default_columns()
DEFAULT_HEADER = csv_header(DEFAULT_COLUMNS)


class FeatureSet(str, Enum):
    INTRADAY_ESM = "esm"
    DAILY_DIARY = "diary"
    COMBINED = "combined"

    @classmethod
    def parse(cls, name: "str | FeatureSet") -> "FeatureSet":
        if isinstance(name, FeatureSet):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {
            "esm": cls.INTRADAY_ESM,
            "intraday-esm": cls.INTRADAY_ESM,
            "intraday": cls.INTRADAY_ESM,
            "diary": cls.DAILY_DIARY,
            "daily-diary": cls.DAILY_DIARY,
            "combined": cls.COMBINED,
        }
        try:
            return aliases[key]
        except KeyError:
            raise UsageError(f"unknown feature set {name!r}") from None


def select_columns(columns: Sequence[str], fs: FeatureSet) -> tuple[str, ...]:
    """Columns belonging to ``fs``, ESM block first for the combined view."""
    fs = FeatureSet.parse(fs)
    esm = [c for c in columns if c.startswith(ESM_PREFIX)]
    diary = [c for c in columns if c.startswith(DIARY_PREFIX)]
    if fs is FeatureSet.INTRADAY_ESM:
        return tuple(esm)
    if fs is FeatureSet.DAILY_DIARY:
        return tuple(diary)
    return tuple(esm + diary)


def check_phq2(value: float) -> int:
    """Validate a PHQ-2 score on the 0-12 scale and return it as an int."""
    if isinstance(value, float) and not value.is_integer():
        raise OutOfRangeLabel(f"PHQ-2 score {value!r} is not an integer")
    v = int(value)
    if not PHQ2_MIN <= v <= PHQ2_MAX:
        raise OutOfRangeLabel(f"PHQ-2 score {v} outside {PHQ2_MIN}-{PHQ2_MAX}")
    return v


def to_standard_phq2(score: int) -> float:
    """Convert an extended-scale (0-12) PHQ-2 score to the usual 0-6 scale."""
    return check_phq2(score) / 2


@dataclass(frozen=True)
class DailyRecord:
    subject_id: str
    date: dt.date
    esm: np.ndarray | None
    diary: np.ndarray | None
    phq2: int | None


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SubjectSeries:
    """One subject's daily records, sorted by date.

    ``features`` is ``(n_days, n_columns)`` with ``nan`` for missing cells and
    ``phq2`` is a float vector with ``nan`` where no label was given.
    """

    subject_id: str
    dates: np.ndarray
    features: np.ndarray
    phq2: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        feats = np.asarray(self.features, dtype=np.float64).reshape(len(dates), -1)
        phq2 = np.asarray(self.phq2, dtype=np.float64).reshape(-1)
        if feats.shape[1] != len(self.columns) or len(phq2) != len(dates):
            raise UsageError(
                f"subject {self.subject_id}: array shapes do not match "
                f"{len(dates)} dates x {len(self.columns)} columns"
            )
        order = np.argsort(dates, kind="stable")
        dates, feats, phq2 = dates[order], feats[order], phq2[order]
        if len(dates) > 1 and np.any(dates[1:] == dates[:-1]):
            dup = dates[1:][dates[1:] == dates[:-1]][0]
            raise DuplicateDay(f"subject {self.subject_id}: duplicate day {dup}")
        object.__setattr__(self, "dates", _readonly(dates))
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "phq2", _readonly(phq2))
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def days(self) -> np.ndarray:
        """Dates as integer day numbers (days since 1970-01-01)."""
        return self.dates.astype(np.int64)

    @property
    def available(self) -> np.ndarray:
        """True on days where every column of this series is observed."""
        return ~np.isnan(self.features).any(axis=1)

    @property
    def labeled(self) -> np.ndarray:
        return ~np.isnan(self.phq2)

    def view(self, fs: FeatureSet) -> "SubjectSeries":
        cols = select_columns(self.columns, fs)
        if cols == self.columns:
            return self
        idx = [self.columns.index(c) for c in cols]
        return SubjectSeries(self.subject_id, self.dates, self.features[:, idx], self.phq2, cols)

    def records(self) -> Iterator[DailyRecord]:
        esm_idx = [i for i, c in enumerate(self.columns) if c.startswith(ESM_PREFIX)]
        diary_idx = [i for i, c in enumerate(self.columns) if c.startswith(DIARY_PREFIX)]
        for i, d in enumerate(self.dates.astype(object)):
            row = self.features[i]
            esm = row[esm_idx] if esm_idx and not np.isnan(row[esm_idx]).all() else None
            diary = row[diary_idx] if diary_idx and not np.isnan(row[diary_idx]).all() else None
            label = None if math.isnan(self.phq2[i]) else int(self.phq2[i])
            yield DailyRecord(self.subject_id, d, esm, diary, label)


@dataclass(frozen=True, eq=False)
class Cohort:
    subjects: tuple[SubjectSeries, ...]
    columns: tuple[str, ...]

    def __post_init__(self):
        subjects = sorted(self.subjects, key=lambda s: s.subject_id)
        ids = [s.subject_id for s in subjects]
        if len(set(ids)) != len(ids):
            raise UsageError("cohort contains a subject more than once")
        for s in subjects:
            if s.columns != tuple(self.columns):
                raise UsageError(f"subject {s.subject_id} has mismatching columns")
        object.__setattr__(self, "subjects", tuple(subjects))
        object.__setattr__(self, "columns", tuple(self.columns))

    def __iter__(self) -> Iterator[SubjectSeries]:
        return iter(self.subjects)

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    def subject(self, subject_id: str) -> SubjectSeries:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise KeyError(subject_id)

    @property
    def n_records(self) -> int:
        return sum(len(s) for s in self.subjects)


def feature_view(cohort: Cohort, fs: FeatureSet) -> Cohort:
    """Restrict a cohort to the columns of one feature set."""
    cols = select_columns(cohort.columns, fs)
    if cols == cohort.columns:
        return cohort
    return Cohort(tuple(s.view(fs) for s in cohort.subjects), cols)


def _parse_header(header: list[str], schema: Sequence[str] | None) -> tuple[str, ...]:
    if schema is not None:
        if tuple(header) != tuple(schema):
            raise MalformedCsv(f"header does not match the expected schema: {header}")
        return tuple(header[2:-1])
    if len(header) < 4 or header[:2] != ["subject_id", "date"] or header[-1] != "phq2":
        raise MalformedCsv("header must be subject_id,date,<features...>,phq2")
    columns = tuple(header[2:-1])
    kinds = [0 if c.startswith(ESM_PREFIX) else 1 if c.startswith(DIARY_PREFIX) else 2 for c in columns]
    if 2 in kinds or kinds != sorted(kinds):
        raise MalformedCsv("feature columns must be esm_* columns followed by diary_* columns")
    if len(set(columns)) != len(columns):
        raise MalformedCsv("duplicate column names in header")
    return columns


def _parse_float(cell: str, lineno: int, column: str) -> float:
    if cell == "":
        return math.nan
    try:
        v = float(cell)
    except ValueError:
        raise MalformedCsv(f"line {lineno}: {column}={cell!r} is not a number") from None
    if not math.isfinite(v):
        raise MalformedCsv(f"line {lineno}: {column}={cell!r} is not finite")
    return v


def _parse_label(cell: str, lineno: int) -> float:
    if cell == "":
        return math.nan
    try:
        v = float(cell)
    except ValueError:
        raise MalformedCsv(f"line {lineno}: phq2={cell!r} is not a number") from None
    try:
        return float(check_phq2(v))
    except OutOfRangeLabel as exc:
        raise OutOfRangeLabel(f"line {lineno}: {exc}") from None


def load_cohort(path: str | Path, schema: Sequence[str] | None = DEFAULT_HEADER) -> Cohort:
    """Read and validate a cohort CSV.

    ``schema`` is the exact expected header. Pass ``None`` to accept any
    header of the form ``subject_id,date,esm_*...,diary_*...,phq2``.
    """
    path = Path(path)
    rows: dict[str, list[tuple[np.datetime64, list[float], float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv(f"{path}: empty file") from None
        except csv.Error as exc:
            raise MalformedCsv(f"{path}: {exc}") from None
        columns = _parse_header(header, schema)
        seen: set[tuple[str, np.datetime64]] = set()
        try:
            for row in reader:
                lineno = reader.line_num
                if not row:
                    continue
                if len(row) != len(header):
                    raise MalformedCsv(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                sid = row[0].strip()
                if not sid:
                    raise MalformedCsv(f"line {lineno}: empty subject_id")
                try:
                    day = np.datetime64(dt.date.fromisoformat(row[1].strip()), "D")
                except ValueError:
                    raise UnparseableDate(f"line {lineno}: bad date {row[1]!r}") from None
                if (sid, day) in seen:
                    raise DuplicateDay(f"line {lineno}: duplicate day {day} for subject {sid}")
                seen.add((sid, day))
                feats = [_parse_float(c.strip(), lineno, name) for c, name in zip(row[2:-1], columns)]
                rows.setdefault(sid, []).append((day, feats, _parse_label(row[-1].strip(), lineno)))
        except csv.Error as exc:
            raise MalformedCsv(f"{path}: {exc}") from None

    subjects = []
    for sid, recs in rows.items():
        subjects.append(
            SubjectSeries(
                sid,
                np.array([r[0] for r in recs], dtype="datetime64[D]"),
                np.array([r[1] for r in recs], dtype=np.float64).reshape(len(recs), len(columns)),
                np.array([r[2] for r in recs], dtype=np.float64),
                columns,
            )
        )
    return Cohort(tuple(subjects), columns)


def format_number(v: float) -> str:
    """Shortest round-trip decimal representation, no exponent, no trailing zeros."""
    if math.isnan(v):
        return ""
    return np.format_float_positional(v, trim="-")


def save_cohort(cohort: Cohort, path: str | Path) -> None:
    """Write ``cohort`` in canonical form (sorted, normalized numbers, LF)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(cohort.columns))
        for s in cohort.subjects:
            for d, feats, label in zip(s.dates.astype(str), s.features, s.phq2):
                writer.writerow(
                    [s.subject_id, d, *(format_number(v) for v in feats),
                     "" if math.isnan(label) else str(int(label))]
                )
