"""Loaders for tabular datasets, validation-curve corpora and result tables.

All loaders are pure functions of their inputs and return frozen structures.
Reals are written back as decimal text that round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TASKS = ("binclass", "multiclass", "regression")
METRICS = ("accuracy", "normalized_rmse")
COLUMN_KINDS = ("numerical", "categorical")
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})

DEFAULT_K = 5


class DataError(ValueError):
    """Raised when an input file violates its format or invariants."""

    def __init__(self, message: str, path: str | Path | None = None):
        super().__init__(message)
        self.path = None if path is None else str(path)


def format_real(x: float) -> str:
    """Decimal text with 17 significant digits (bit-exact on reload)."""
    return format(float(x), ".17g")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# tabular datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    values: np.ndarray


@dataclass(frozen=True)
class DatasetSummary:
    """A cleaned tabular dataset: attribute columns plus an encoded label."""

    id: str
    task: str
    n_instances: int
    n_features: int
    n_classes: int | None
    columns: tuple[Column, ...]
    label: np.ndarray
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.n_instances < 1:
            raise DataError(f"dataset {self.id!r} has no instances")
        if self.n_features != len(self.columns):
            raise DataError(f"dataset {self.id!r}: n_features != number of columns")
        for col in self.columns:
            if col.kind not in COLUMN_KINDS:
                raise DataError(f"column {col.name!r}: unknown kind {col.kind!r}")
            if len(col.values) != self.n_instances:
                raise DataError(f"column {col.name!r} has {len(col.values)} values, "
                                f"expected {self.n_instances}")
            if col.kind == "categorical":
                v = col.values
                if np.any(v < 0) or np.any(v != np.floor(v)):
                    raise DataError(f"categorical column {col.name!r} must hold "
                                    "non-negative integer codes")
        if len(self.label) != self.n_instances:
            raise DataError(f"dataset {self.id!r}: label length mismatch")
        if self.task == "regression":
            if self.n_classes is not None:
                raise DataError("n_classes must be absent for regression")
        elif self.n_classes is None or self.n_classes < 2:
            raise DataError(f"dataset {self.id!r}: classification needs >= 2 classes")

    @property
    def matrix(self) -> np.ndarray:
        """Attribute values as an ``(n_instances, n_features)`` float array."""
        if not self.columns:
            return np.empty((self.n_instances, 0))
        return np.column_stack([c.values for c in self.columns]).astype(float)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(c.kind for c in self.columns)


def _is_missing(token: str) -> bool:
    return token.strip().lower() in MISSING_TOKENS


def _first_appearance_codes(tokens: Sequence[str]) -> np.ndarray:
    mapping: dict[str, int] = {}
    return np.array([mapping.setdefault(t, len(mapping)) for t in tokens], dtype=float)


def load_dataset(
    path: str | Path,
    schema: Mapping[str, str],
    label: str,
    task: str | None = None,
    dataset_id: str | None = None,
) -> DatasetSummary:
    """Read a CSV file into a :class:`DatasetSummary`.

    Args:
        path: CSV with a header row.
        schema: column name -> ``"numerical"`` or ``"categorical"`` for every
            attribute column. The label may be listed too; its kind then
            decides the task when ``task`` is not given.
        label: name of the target column.
        task: ``binclass``, ``multiclass`` or ``regression``. Inferred when
            omitted: a numerical label means regression, otherwise the class
            count picks binclass/multiclass.
        dataset_id: defaults to the file stem.

    Rows holding any missing value are dropped and counted in
    ``dropped_rows``. Categorical columns (and classification labels) are
    ordinal-encoded by first appearance among the kept rows.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}", path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file", path) from None
        raw_rows = [row for row in reader if row]

    if label not in header:
        raise DataError(f"{path}: label column {label!r} not in header", path)
    attrs = [h for h in header if h != label]
    unknown = sorted(set(schema) - set(header))
    unlisted = [h for h in attrs if h not in schema]
    if unknown or unlisted:
        raise DataError(f"{path}: header/schema mismatch (not in header: {unknown}, "
                        f"not in schema: {unlisted})", path)
    for name, kind in schema.items():
        if kind not in COLUMN_KINDS:
            raise DataError(f"{path}: column {name!r} has unknown kind {kind!r}", path)

    width = len(header)
    kept = []
    for i, row in enumerate(raw_rows, start=2):
        if len(row) != width:
            raise DataError(f"{path}: line {i} has {len(row)} fields, expected {width}", path)
        if any(_is_missing(tok) for tok in row):
            continue
        kept.append([tok.strip() for tok in row])
    dropped = len(raw_rows) - len(kept)
    if not kept:
        raise DataError(f"{path}: all {len(raw_rows)} rows dropped", path)

    columns = []
    for name in attrs:
        j = header.index(name)
        tokens = [row[j] for row in kept]
        if schema[name] == "categorical":
            values = _first_appearance_codes(tokens)
        else:
            try:
                values = np.array([float(t) for t in tokens])
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric value in numerical column "
                                f"{name!r}: {exc}", path) from None
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}: non-finite value in column {name!r}", path)
        columns.append(Column(name, schema[name], _readonly(values)))

    j = header.index(label)
    label_tokens = [row[j] for row in kept]
    if task is None:
        task = "regression" if schema.get(label) == "numerical" else None
    if task == "regression":
        try:
            y = np.array([float(t) for t in label_tokens])
        except ValueError:
            raise DataError(f"{path}: non-numeric regression label", path) from None
        n_classes = None
    else:
        y = _first_appearance_codes(label_tokens)
        n_classes = len(set(label_tokens))
        if task is None:
            task = "binclass" if n_classes == 2 else "multiclass"

    return DatasetSummary(
        id=dataset_id or path.stem,
        task=task,
        n_instances=len(kept),
        n_features=len(columns),
        n_classes=n_classes,
        columns=tuple(columns),
        label=_readonly(y),
        dropped_rows=dropped,
    )


# ---------------------------------------------------------------------------
# validation curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationCurve:
    dataset_id: str
    task: str
    metric: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        object.__setattr__(self, "values", _readonly(values))
        where = f"curve {self.dataset_id!r}"
        if self.task not in TASKS:
            raise DataError(f"{where}: field 'task' has unknown value {self.task!r}")
        if self.metric not in METRICS:
            raise DataError(f"{where}: field 'metric' has unknown value {self.metric!r}")
        if values.ndim != 1 or len(values) == 0:
            raise DataError(f"{where}: field 'values' must be a non-empty list")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{where}: field 'values' holds non-finite entries")
        if self.metric == "accuracy" and (values.min() < 0 or values.max() > 1):
            raise DataError(f"{where}: field 'values' has accuracy outside [0, 1]")
        if self.metric == "normalized_rmse" and values.min() < 0:
            raise DataError(f"{where}: field 'values' has negative normalized_rmse")

    def __len__(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "task": self.task,
            "metric": self.metric,
            "values": [float(v) for v in self.values],
        }


def curves_from_records(records: Iterable[Mapping], k: int = DEFAULT_K) -> list[ValidationCurve]:
    curves = []
    short = []
    for i, rec in enumerate(records):
        if not isinstance(rec, Mapping):
            raise DataError(f"curve #{i}: expected an object")
        missing = [f for f in ("dataset_id", "task", "metric", "values") if f not in rec]
        if missing:
            raise DataError(f"curve #{i}: missing field(s) {missing}")
        try:
            curve = ValidationCurve(str(rec["dataset_id"]), rec["task"], rec["metric"],
                                    rec["values"])
        except DataError as exc:
            raise DataError(f"curve #{i}: {exc}") from None
        except (TypeError, ValueError):
            raise DataError(f"curve #{i} ({rec['dataset_id']!r}): field 'values' "
                            "is not a list of reals") from None
        if len(curve) < k + 1:
            short.append(curve.dataset_id)
        curves.append(curve)
    if short:
        raise DataError(f"curves shorter than k+1={k + 1} points: {short}")
    return curves


def load_curves(path: str | Path, k: int = DEFAULT_K) -> list[ValidationCurve]:
    """Load a JSON array of curve objects; every curve needs ``T >= k + 1``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}", path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc})", path) from None
    if not isinstance(doc, list):
        raise DataError(f"{path}: top level must be an array", path)
    try:
        return curves_from_records(doc, k)
    except DataError as exc:
        raise DataError(f"{path}: {exc}", path) from None


def dump_curves(curves: Iterable[ValidationCurve]) -> str:
    return json.dumps([c.to_dict() for c in curves], indent=1) + "\n"


def save_curves(path: str | Path, curves: Iterable[ValidationCurve]) -> None:
    Path(path).write_text(dump_curves(curves), encoding="utf-8")


# ---------------------------------------------------------------------------
# benchmark result tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultsTable:
    """Per-dataset metric values for ``L`` methods over ``D`` datasets."""

    methods: tuple[str, ...]
    datasets: tuple[str, ...]
    values: np.ndarray
    higher_is_better: np.ndarray
    seeds: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = _readonly(np.array(self.values, dtype=float))
        hib = _readonly(np.array(self.higher_is_better, dtype=bool))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "higher_is_better", hib)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "datasets", tuple(self.datasets))
        D, L = len(self.datasets), len(self.methods)
        if values.shape != (D, L):
            raise DataError(f"values shape {values.shape} != ({D}, {L})")
        if hib.shape != (D,):
            raise DataError("higher_is_better needs one flag per dataset")
        if len(set(self.datasets)) != D:
            raise DataError("duplicate dataset IDs")
        if len(set(self.methods)) != L:
            raise DataError("duplicate method names")
        if not np.all(np.isfinite(values)):
            raise DataError("values contain missing or non-finite cells")
        if self.seeds is not None:
            seeds = _readonly(np.array(self.seeds, dtype=float))
            object.__setattr__(self, "seeds", seeds)
            if seeds.ndim != 3 or seeds.shape[:2] != (D, L):
                raise DataError(f"seed array shape {seeds.shape} does not match ({D}, {L}, S)")
            gap = np.abs(seeds.mean(axis=2) - values)
            if np.any(gap > 1e-9):
                d, m = np.unravel_index(np.argmax(gap), gap.shape)
                raise DataError(f"seed mean for ({self.datasets[d]!r}, {self.methods[m]!r}) "
                                f"differs from the value cell by {gap[d, m]:.3g}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def method_index(self, name: str) -> int:
        try:
            return self.methods.index(name)
        except ValueError:
            raise DataError(f"unknown method {name!r}") from None

    def subset_methods(self, names: Sequence[str]) -> "ResultsTable":
        idx = [self.method_index(n) for n in names]
        seeds = None if self.seeds is None else self.seeds[:, idx, :]
        return ResultsTable(tuple(names), self.datasets, self.values[:, idx],
                            self.higher_is_better, seeds)


def _parse_real(token: str, where: str, path: Path) -> float:
    if _is_missing(token):
        raise DataError(f"{path}: missing cell at {where}", path)
    try:
        return float(token)
    except ValueError:
        raise DataError(f"{path}: non-numeric cell {token!r} at {where}", path) from None


def load_results(path: str | Path, seeds_path: str | Path | None = None) -> ResultsTable:
    """Read a results CSV (``dataset_id, higher_is_better, <method>...``).

    The optional seed CSV holds ``dataset_id, method, seed, value`` rows; every
    (dataset, method) cell must have the same number of seeds and their mean
    must equal the results cell within 1e-9.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}", path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file", path) from None
        rows = [row for row in reader if row]
    if header[:2] != ["dataset_id", "higher_is_better"] or len(header) < 3:
        raise DataError(f"{path}: header must start with dataset_id,higher_is_better "
                        "followed by at least one method", path)
    methods = header[2:]
    datasets, values, hib = [], [], []
    seen = set()
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}",
                            path)
        did = row[0].strip()
        if did in seen:
            raise DataError(f"{path}: duplicate dataset ID {did!r} (row {r})", path)
        seen.add(did)
        flag = row[1].strip()
        if flag not in ("0", "1"):
            raise DataError(f"{path}: higher_is_better must be 0/1 at row {r}", path)
        datasets.append(did)
        hib.append(flag == "1")
        values.append([_parse_real(tok, f"row {r}, column {m!r}", path)
                       for tok, m in zip(row[2:], methods)])

    seeds = None
    if seeds_path is not None:
        seeds = _load_seed_array(Path(seeds_path), datasets, methods)
    try:
        return ResultsTable(tuple(methods), tuple(datasets),
                            np.array(values, dtype=float).reshape(len(datasets), len(methods)),
                            np.array(hib), seeds)
    except DataError as exc:
        raise DataError(f"{path}: {exc}", path) from None


def _load_seed_array(path: Path, datasets: Sequence[str], methods: Sequence[str]) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"no such file: {path}", path)
    cells: dict[tuple[str, str], dict[str, float]] = defaultdict(dict)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != \
                ["dataset_id", "method", "seed", "value"]:
            raise DataError(f"{path}: header must be dataset_id,method,seed,value", path)
        for r, row in enumerate(reader, start=2):
            key = (row["dataset_id"].strip(), row["method"].strip())
            seed = row["seed"].strip()
            if seed in cells[key]:
                raise DataError(f"{path}: duplicate seed {seed!r} for {key} (row {r})", path)
            cells[key][seed] = _parse_real(row["value"], f"row {r}", path)
    known = {(d, m) for d in datasets for m in methods}
    extra = sorted(set(cells) - known)
    if extra:
        raise DataError(f"{path}: seed rows for unknown cells {extra[:3]}", path)
    missing = sorted(known - set(cells))
    if missing:
        raise DataError(f"{path}: seed file shape mismatch, no seeds for {missing[:3]}", path)
    counts = {len(v) for v in cells.values()}
    if len(counts) != 1:
        raise DataError(f"{path}: seed file shape mismatch, seed counts {sorted(counts)}", path)
    S = counts.pop()
    out = np.empty((len(datasets), len(methods), S))
    for i, d in enumerate(datasets):
        for j, m in enumerate(methods):
            cell = cells[(d, m)]
            out[i, j] = [cell[s] for s in sorted(cell, key=_seed_sort_key)]
    return out


def _seed_sort_key(s: str):
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)


def dump_results(table: ResultsTable) -> str:
    lines = [",".join(["dataset_id", "higher_is_better", *table.methods])]
    for d, flag, row in zip(table.datasets, table.higher_is_better, table.values):
        lines.append(",".join([d, "1" if flag else "0", *map(format_real, row)]))
    return "\n".join(lines) + "\n"


def dump_seeds(table: ResultsTable) -> str:
    if table.seeds is None:
        raise DataError("table has no seed-level values")
    lines = ["dataset_id,method,seed,value"]
    for i, d in enumerate(table.datasets):
        for j, m in enumerate(table.methods):
            for s, v in enumerate(table.seeds[i, j]):
                lines.append(f"{d},{m},{s},{format_real(v)}")
    return "\n".join(lines) + "\n"


def save_results(path: str | Path, table: ResultsTable, seeds_path: str | Path | None = None) -> None:
    Path(path).write_text(dump_results(table), encoding="utf-8")
    if seeds_path is not None:
        Path(seeds_path).write_text(dump_seeds(table), encoding="utf-8")


# ---------------------------------------------------------------------------
# dataset size table (used for Tree/DNN grouping and per-task quotas)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetInfo:
    dataset_id: str
    task: str
    n_instances: int
    n_features: int
    has_categorical: bool | None = None

    @property
    def size(self) -> int:
        return self.n_instances * self.n_features


def load_sizes(path: str | Path) -> dict[str, DatasetInfo]:
    """Read ``dataset_id, task, n_instances, n_features[, has_categorical]``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}", path)
    out: dict[str, DatasetInfo] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"dataset_id", "task", "n_instances", "n_features"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError(f"{path}: header needs {sorted(need)}", path)
        for r, row in enumerate(reader, start=2):
            did = row["dataset_id"].strip()
            if did in out:
                raise DataError(f"{path}: duplicate dataset ID {did!r} (row {r})", path)
            if row["task"] not in TASKS:
                raise DataError(f"{path}: unknown task {row['task']!r} at row {r}", path)
            try:
                n, d = int(row["n_instances"]), int(row["n_features"])
            except ValueError:
                raise DataError(f"{path}: non-integer size at row {r}", path) from None
            cat = row.get("has_categorical")
            has_cat = None if cat in (None, "") else cat.strip() in ("1", "true", "True")
            out[did] = DatasetInfo(did, row["task"], n, d, has_cat)
    return out
