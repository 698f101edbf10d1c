"""Tabular data model: schemas, datasets, splits, and few-shot sampling.

A Dataset keeps every row it was loaded with and tracks which rows a learner
may see labels for (labeled_idx) versus which rows contribute features only
(unlabeled_idx).  Ground-truth targets for all rows ride along in raw_targets
so experiment harnesses can split, sample, and score without re-reading the
source file; learners must go through target_of(), which refuses to reveal the
target of a row that is not labeled.

Cells are plain Python values: float for numeric columns, str for categorical
columns, None for missing.  Missing handling is split into two imputation
modes: LLM_FACING leaves numeric gaps in place (they serialize as "Unknown"
and route through majority branches) and rewrites categorical gaps as the
literal category "Unknown"; CLASSICAL additionally fills numeric gaps with
column means.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DatasetError,
    DuplicateHeader,
    InsufficientData,
    NoObservedValues,
    StratifyInfeasible,
)

Cell = float | str | None
Row = tuple[Cell, ...]
Target = str | float

KIND_NUMERIC = "numeric"
KIND_CATEGORICAL = "categorical"

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"

LLM_FACING = "llm_facing"
CLASSICAL = "classical"

MISSING_CATEGORY = "Unknown"


@dataclass(frozen=True)
class Feature:
    """One column: a stable name and its kind (numeric or categorical)."""

    name: str
    kind: str

    def __post_init__(self) -> None:
        if not self.name:
            raise DatasetError("feature name must be non-empty")
        if self.kind not in (KIND_NUMERIC, KIND_CATEGORICAL):
            raise DatasetError(f"unknown feature kind {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    """Column layout plus the prediction task.

    Classification class labels are normalized to lexicographic order on
    construction so that every downstream tie-break and rendering choice sees
    one canonical ordering.
    """

    features: tuple[Feature, ...]
    target_name: str
    task: str
    classes: tuple[str, ...] = ()
    task_description: str = ""

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DatasetError("feature names must be unique")
        if not self.target_name:
            raise DatasetError("target name must be non-empty")
        if self.target_name in names:
            raise DatasetError("target name collides with a feature name")
        if self.task not in (TASK_CLASSIFICATION, TASK_REGRESSION):
            raise DatasetError(f"unknown task {self.task!r}")
        if self.task == TASK_CLASSIFICATION:
            if not self.classes:
                raise DatasetError("classification schema needs class labels")
            if len(set(self.classes)) != len(self.classes):
                raise DatasetError("class labels must be unique")
            object.__setattr__(self, "classes", tuple(sorted(self.classes)))
        elif self.classes:
            raise DatasetError("regression schema must not list classes")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def is_classification(self) -> bool:
        return self.task == TASK_CLASSIFICATION

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise DatasetError(f"unknown feature {name!r}")

    def kind_of(self, index: int) -> str:
        return self.features[index].kind


@dataclass(frozen=True)
class SplitSpec:
    """Test-set fraction, shuffling seed, and whether to stratify by class."""

    test_fraction: float = 0.2
    seed: int = 0
    stratify: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise DatasetError("test_fraction must lie strictly between 0 and 1")


@dataclass(frozen=True)
class Dataset:
    """Rows plus the labeled/unlabeled partition the learner is allowed to see."""

    schema: Schema
    rows: tuple[Row, ...]
    labeled_idx: tuple[int, ...] = ()
    unlabeled_idx: tuple[int, ...] = ()
    raw_targets: tuple[Target | None, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "labeled_idx", tuple(sorted(self.labeled_idx)))
        object.__setattr__(self, "unlabeled_idx", tuple(sorted(self.unlabeled_idx)))
        if not self.raw_targets:
            object.__setattr__(self, "raw_targets", (None,) * len(self.rows))
        n = len(self.rows)
        if len(self.raw_targets) != n:
            raise DatasetError("raw_targets length must match row count")
        labeled = set(self.labeled_idx)
        unlabeled = set(self.unlabeled_idx)
        if labeled & unlabeled:
            raise DatasetError("labeled and unlabeled index sets overlap")
        for i in labeled | unlabeled:
            if not 0 <= i < n:
                raise DatasetError(f"row index {i} out of range")
        for i in self.labeled_idx:
            if self.raw_targets[i] is None:
                raise DatasetError(f"labeled row {i} has no target value")
        width = len(self.schema.features)
        for r, row in enumerate(self.rows):
            if len(row) != width:
                raise DatasetError(f"row {r} has {len(row)} cells, schema has {width}")
            for c, cell in enumerate(row):
                if cell is None:
                    continue
                kind = self.schema.features[c].kind
                if kind == KIND_NUMERIC and not isinstance(cell, float):
                    raise DatasetError(f"row {r} column {c} must be float or None")
                if kind == KIND_CATEGORICAL and not isinstance(cell, str):
                    raise DatasetError(f"row {r} column {c} must be str or None")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def targets(self) -> dict[int, Target]:
        """Targets visible to a learner: defined exactly on labeled_idx."""
        return {i: self.raw_targets[i] for i in self.labeled_idx}

    def target_of(self, index: int) -> Target:
        if index not in set(self.labeled_idx):
            raise DatasetError(f"row {index} is not labeled")
        return self.raw_targets[index]

    def truth_of(self, index: int) -> Target:
        """Ground-truth accessor for evaluation harnesses only."""
        value = self.raw_targets[index]
        if value is None:
            raise DatasetError(f"row {index} has no recorded target")
        return value


def _parse_float(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _infer_kind(column: list[str]) -> str:
    for cell in column:
        if cell and _parse_float(cell) is None:
            return KIND_CATEGORICAL
    return KIND_NUMERIC


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        records = [row for row in reader]
    if len(set(header)) != len(header):
        dupes = sorted(name for name, count in Counter(header).items() if count > 1)
        raise DuplicateHeader(f"{path}: duplicate column names {dupes}")
    for lineno, record in enumerate(records, start=2):
        if len(record) != len(header):
            raise DatasetError(
                f"{path}: line {lineno} has {len(record)} cells, header has {len(header)}"
            )
    return header, records


def _resolve_schema(
    header: list[str],
    records: list[list[str]],
    schema_hint: Schema | dict | None,
    target_name: str | None,
) -> Schema:
    if isinstance(schema_hint, Schema):
        missing = [f.name for f in schema_hint.features if f.name not in header]
        if missing:
            raise DatasetError(f"columns {missing} declared by schema are absent")
        if schema_hint.target_name not in header:
            raise DatasetError(f"target column {schema_hint.target_name!r} is absent")
        known = {f.name for f in schema_hint.features} | {schema_hint.target_name}
        extra = [name for name in header if name not in known]
        if extra:
            raise DatasetError(f"columns {extra} are not declared by the schema")
        ordered = tuple(
            next(f for f in schema_hint.features if f.name == name)
            for name in header
            if name != schema_hint.target_name
        )
        return replace(schema_hint, features=ordered)

    hint = dict(schema_hint) if schema_hint else {}
    target = hint.get("target", target_name)
    if not target:
        raise DatasetError("no target column named; pass a schema hint or target name")
    if target not in header:
        raise DatasetError(f"target column {target!r} is absent from the header")

    kind_hints = {name: str(kind).lower() for name, kind in hint.get("features", {}).items()}
    for name, kind in kind_hints.items():
        if name not in header:
            raise DatasetError(f"hinted feature {name!r} is absent from the header")
        if kind not in (KIND_NUMERIC, KIND_CATEGORICAL):
            raise DatasetError(f"hinted feature {name!r} has unknown kind {kind!r}")

    columns = {name: [record[i] for record in records] for i, name in enumerate(header)}
    features = tuple(
        Feature(name, kind_hints.get(name) or _infer_kind(columns[name]))
        for name in header
        if name != target
    )

    target_cells = [cell for cell in columns[target] if cell]
    task = hint.get("task")
    if task is None:
        numeric_target = bool(target_cells) and all(
            _parse_float(cell) is not None for cell in target_cells
        )
        task = TASK_REGRESSION if numeric_target else TASK_CLASSIFICATION
    classes: tuple[str, ...] = ()
    if task == TASK_CLASSIFICATION:
        classes = tuple(hint.get("classes") or sorted(set(target_cells)))
    description = hint.get("task_description") or f"Predict {target!r} from the other columns."
    return Schema(
        features=features,
        target_name=target,
        task=task,
        classes=classes,
        task_description=description,
    )


def load_csv(
    path: str,
    schema_hint: Schema | dict | None = None,
    *,
    target_name: str | None = None,
) -> Dataset:
    """Read a CSV with a header row into an all-unlabeled Dataset.

    Column kinds come from schema_hint when given; otherwise a column is
    numeric iff every non-empty cell parses as a finite float.  The empty
    string is the missing marker.  Ground-truth targets are parsed and stored
    for later splitting and sampling, but no row starts labeled.
    """
    header, records = _read_table(path)
    schema = _resolve_schema(header, records, schema_hint, target_name)

    target_col = header.index(schema.target_name)
    feature_cols = [header.index(f.name) for f in schema.features]

    rows: list[Row] = []
    raw_targets: list[Target | None] = []
    for lineno, record in enumerate(records, start=2):
        cells: list[Cell] = []
        for col, feat in zip(feature_cols, schema.features):
            text = record[col]
            if text == "":
                cells.append(None)
            elif feat.kind == KIND_NUMERIC:
                value = _parse_float(text)
                if value is None:
                    raise DatasetError(
                        f"{path}: line {lineno}, column {feat.name!r}: "
                        f"{text!r} is not a finite number"
                    )
                cells.append(value)
            else:
                cells.append(text)
        rows.append(tuple(cells))

        target_text = record[target_col]
        if target_text == "":
            raw_targets.append(None)
        elif schema.is_classification:
            if target_text not in schema.classes:
                raise DatasetError(
                    f"{path}: line {lineno}: target {target_text!r} is not "
                    f"among classes {list(schema.classes)}"
                )
            raw_targets.append(target_text)
        else:
            value = _parse_float(target_text)
            if value is None:
                raise DatasetError(
                    f"{path}: line {lineno}: target {target_text!r} is not a finite number"
                )
            raw_targets.append(value)

    return Dataset(
        schema=schema,
        rows=tuple(rows),
        labeled_idx=(),
        unlabeled_idx=tuple(range(len(rows))),
        raw_targets=tuple(raw_targets),
    )


def column_means(ds: Dataset) -> dict[int, float]:
    """Mean of every numeric column over its observed cells; empty columns absent."""
    means: dict[int, float] = {}
    for i, feat in enumerate(ds.schema.features):
        if feat.kind != KIND_NUMERIC:
            continue
        observed = [row[i] for row in ds.rows if row[i] is not None]
        if observed:
            means[i] = float(sum(observed) / len(observed))
    return means


def impute(ds: Dataset, mode: str, stats: dict[int, float] | None = None) -> Dataset:
    """Fill missing cells for the given consumption mode.

    LLM_FACING rewrites categorical gaps as the category "Unknown" and leaves
    numeric gaps as-is: they serialize as "Unknown" and route through majority
    branches, so downstream code still knows the value is absent.  CLASSICAL
    fills categorical gaps the same way and numeric gaps with column means;
    pass stats to reuse means computed on a wider dataset than ds (for
    example, the full table before an experiment split it).  Both modes are
    idempotent.
    """
    if mode not in (LLM_FACING, CLASSICAL):
        raise DatasetError(f"unknown imputation mode {mode!r}")
    means = dict(stats) if stats is not None else column_means(ds)

    new_rows: list[Row] = []
    for r, row in enumerate(ds.rows):
        cells = list(row)
        for c, feat in enumerate(ds.schema.features):
            if cells[c] is not None:
                continue
            if feat.kind == KIND_CATEGORICAL:
                cells[c] = MISSING_CATEGORY
            elif mode == CLASSICAL:
                if c not in means:
                    raise NoObservedValues(
                        f"column {feat.name!r} has no observed values to average"
                    )
                cells[c] = means[c]
        new_rows.append(tuple(cells))
    return replace(ds, rows=tuple(new_rows))


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _subset(ds: Dataset, indices: list[int]) -> Dataset:
    return Dataset(
        schema=ds.schema,
        rows=tuple(ds.rows[i] for i in indices),
        labeled_idx=(),
        unlabeled_idx=tuple(range(len(indices))),
        raw_targets=tuple(ds.raw_targets[i] for i in indices),
    )


def train_test_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition rows into train and test subsets, optionally stratified.

    The test set receives round(test_fraction * N) rows.  Stratified mode
    (classification only) apportions that total across classes so each class
    contributes within one row of its exact proportional share; remainders go
    to classes by descending fractional part, ties broken by class name.  Row
    order within each subset follows the original dataset order, and the same
    seed always yields the same partition.
    """
    n = len(ds)
    if n < 2:
        raise DatasetError("need at least two rows to split")
    total_test = _round_half_up(spec.test_fraction * n)
    if total_test == 0 or total_test == n:
        raise DatasetError("test fraction leaves one side empty")
    rng = np.random.default_rng(spec.seed)

    if not spec.stratify:
        order = rng.permutation(n)
        test = sorted(int(i) for i in order[:total_test])
        train = sorted(int(i) for i in order[total_test:])
        return _subset(ds, train), _subset(ds, test)

    if not ds.schema.is_classification:
        raise StratifyInfeasible("stratification requires classification targets")
    by_class: dict[str, list[int]] = {}
    for i in range(n):
        target = ds.raw_targets[i]
        if target is None:
            raise StratifyInfeasible(f"row {i} has no target to stratify on")
        by_class.setdefault(target, []).append(i)
    for label, members in sorted(by_class.items()):
        if len(members) < 2:
            raise StratifyInfeasible(
                f"class {label!r} has {len(members)} row(s); stratification needs 2"
            )

    labels = sorted(by_class)
    exact = {label: spec.test_fraction * len(by_class[label]) for label in labels}
    counts = {label: int(math.floor(exact[label])) for label in labels}
    remainder = total_test - sum(counts.values())
    leftovers = sorted(labels, key=lambda lbl: (-(exact[lbl] - counts[lbl]), lbl))
    for label in leftovers:
        if remainder <= 0:
            break
        if counts[label] < len(by_class[label]):
            counts[label] += 1
            remainder -= 1
    if remainder > 0:
        raise StratifyInfeasible("class pools cannot absorb the requested test size")

    test: list[int] = []
    for label in labels:
        members = by_class[label]
        order = rng.permutation(len(members))
        test.extend(members[int(i)] for i in order[: counts[label]])
    test_set = set(test)
    train = [i for i in range(n) if i not in test_set]
    return _subset(ds, train), _subset(ds, sorted(test))


def sample_k_shot(train: Dataset, k: int, seed: int) -> Dataset:
    """Mark k rows as the labeled few-shot set; the rest become the unlabeled pool.

    Classification draws per class, keeping class counts within one of each
    other whenever pools allow; surplus slots go round-robin to classes by
    descending pool size, ties broken by class name.  Regression sorts rows by
    target into min(k, 10) equal-frequency bins and cycles over the bins,
    drawing one row per visit.  Rows without a recorded target never enter the
    labeled set.
    """
    if k < 1:
        raise InsufficientData("k must be at least 1")
    candidates = [i for i in range(len(train)) if train.raw_targets[i] is not None]
    if k > len(candidates):
        raise InsufficientData(
            f"asked for {k} labeled rows but only {len(candidates)} have targets"
        )
    rng = np.random.default_rng(seed)

    if train.schema.is_classification:
        by_class: dict[str, list[int]] = {}
        for i in candidates:
            by_class.setdefault(train.raw_targets[i], []).append(i)
        shuffled: dict[str, list[int]] = {}
        for label in sorted(by_class):
            members = by_class[label]
            order = rng.permutation(len(members))
            shuffled[label] = [members[int(i)] for i in order]
        visit_order = sorted(shuffled, key=lambda lbl: (-len(shuffled[lbl]), lbl))
        chosen: list[int] = []
        taken = {label: 0 for label in visit_order}
        while len(chosen) < k:
            progressed = False
            for label in visit_order:
                if len(chosen) >= k:
                    break
                pool = shuffled[label]
                if taken[label] < len(pool):
                    chosen.append(pool[taken[label]])
                    taken[label] += 1
                    progressed = True
            if not progressed:
                raise InsufficientData("class pools exhausted before reaching k")
    else:
        ordered = sorted(candidates, key=lambda i: (train.raw_targets[i], i))
        bins = [list(chunk) for chunk in np.array_split(np.array(ordered), min(k, 10))]
        for b in bins:
            order = rng.permutation(len(b))
            b[:] = [int(b[int(i)]) for i in order]
        chosen = []
        cursor = {bi: 0 for bi in range(len(bins))}
        while len(chosen) < k:
            progressed = False
            for bi, b in enumerate(bins):
                if len(chosen) >= k:
                    break
                if cursor[bi] < len(b):
                    chosen.append(b[cursor[bi]])
                    cursor[bi] += 1
                    progressed = True
            if not progressed:
                raise InsufficientData("target bins exhausted before reaching k")

    labeled = tuple(sorted(chosen))
    unlabeled = tuple(i for i in range(len(train)) if i not in set(labeled))
    return replace(train, labeled_idx=labeled, unlabeled_idx=unlabeled)


def labeled_subset(ds: Dataset) -> Dataset:
    """The labeled rows as a standalone fully-labeled Dataset."""
    rows = tuple(ds.rows[i] for i in ds.labeled_idx)
    targets = tuple(ds.raw_targets[i] for i in ds.labeled_idx)
    return Dataset(
        schema=ds.schema,
        rows=rows,
        labeled_idx=tuple(range(len(rows))),
        unlabeled_idx=(),
        raw_targets=targets,
    )


def unlabeled_subset(ds: Dataset) -> Dataset:
    """The unlabeled pool as a standalone Dataset with all targets dropped."""
    rows = tuple(ds.rows[i] for i in ds.unlabeled_idx)
    return Dataset(
        schema=ds.schema,
        rows=rows,
        labeled_idx=(),
        unlabeled_idx=tuple(range(len(rows))),
        raw_targets=(None,) * len(rows),
    )
