"""Regression tasks: parameter spaces, datasets, sampling, and splits.

A task couples an ordered parameter space with an objective source, either a
synthetic benchmark function or an offline table of evaluations. All types are
immutable after construction; sampling and splitting are pure functions of
their arguments and a seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import bbob


class UnsupportedSourceError(ValueError):
    """Operation requires a different task source."""


class SchemaError(ValueError):
    """An input file does not match the expected column layout."""


class ValidationError(ValueError):
    """A value does not satisfy the owning task's parameter specs."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class SplitError(ValueError):
    """Requested split would leave a partition empty."""


CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ParamSpec:
    """One named parameter: a bounded real or a categorical choice."""

    name: str
    kind: str
    lo: float | None = None
    hi: float | None = None
    choices: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("param name must be non-empty")
        if self.kind == CONTINUOUS:
            if self.lo is None or self.hi is None or not (self.lo < self.hi):
                raise ValueError(f"param {self.name!r}: continuous bounds require lo < hi")
            if self.choices is not None:
                raise ValueError(f"param {self.name!r}: continuous params take no choices")
        elif self.kind == CATEGORICAL:
            if not self.choices:
                raise ValueError(f"param {self.name!r}: categorical params need choices")
            if len(set(self.choices)) != len(self.choices):
                raise ValueError(f"param {self.name!r}: duplicate choices")
            if self.lo is not None or self.hi is not None:
                raise ValueError(f"param {self.name!r}: categorical params take no bounds")
        else:
            raise ValueError(f"param {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def continuous(cls, name: str, lo: float, hi: float) -> "ParamSpec":
        return cls(name=name, kind=CONTINUOUS, lo=float(lo), hi=float(hi))

    @classmethod
    def categorical(cls, name: str, choices) -> "ParamSpec":
        return cls(name=name, kind=CATEGORICAL, choices=tuple(choices))


@dataclass(frozen=True)
class TaskSource:
    kind: str  # "synthetic" | "offline"
    function: str | None = None
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "synthetic":
            if not self.function:
                raise ValueError("synthetic source needs a function id")
        elif self.kind == "offline":
            pass  # path is optional; data may be supplied at ingest time
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")


@dataclass(frozen=True)
class RegressionTask:
    """An objective over an ordered parameter space.

    The declaration order of ``params`` is canonical: featurization and string
    serialization both follow it, so every representation of an input uses one
    consistent key ordering.
    """

    id: str
    params: tuple[ParamSpec, ...]
    source: TaskSource

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("task id must be non-empty")
        if not self.params:
            raise ValueError("task needs at least one param")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("param names must be unique within a task")
        if self.source.kind == "synthetic":
            bbob.get(self.source.function)  # unknown ids fail at construction
            for p in self.params:
                if p.kind != CONTINUOUS or p.lo != bbob.LOWER_BOUND or p.hi != bbob.UPPER_BOUND:
                    raise ValueError(
                        "synthetic tasks require continuous params bounded "
                        f"[{bbob.LOWER_BOUND}, {bbob.UPPER_BOUND}]"
                    )

    @property
    def dof(self) -> int:
        return len(self.params)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)


def synthetic_task(function_id: str, dof: int, task_id: str | None = None) -> RegressionTask:
    """Build a task for a registered benchmark function at the given dimension."""
    bbob.make(function_id, dof)  # validates id and dof
    params = tuple(
        ParamSpec.continuous(f"x{i}", bbob.LOWER_BOUND, bbob.UPPER_BOUND) for i in range(dof)
    )
    return RegressionTask(
        id=task_id or f"{function_id}-dof{dof}",
        params=params,
        source=TaskSource(kind="synthetic", function=function_id),
    )


@dataclass(frozen=True)
class LabeledExample:
    """One (input assignment, objective value) pair. Treat ``x`` as read-only."""

    x: dict
    y: float


@dataclass(frozen=True)
class Dataset:
    task_id: str
    examples: tuple[LabeledExample, ...]
    split: str | None = None

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def xs(self) -> list[dict]:
        return [ex.x for ex in self.examples]

    @property
    def y(self) -> np.ndarray:
        return np.array([ex.y for ex in self.examples], dtype=np.float64)


def validate_assignment(task: RegressionTask, x: dict, row: int | None = None) -> None:
    """Check that ``x`` assigns every param of ``task`` exactly once, in range."""
    extra = set(x) - set(task.param_names)
    if extra:
        raise ValidationError(f"unknown params: {sorted(extra)}", row)
    missing = set(task.param_names) - set(x)
    if missing:
        raise ValidationError(f"missing params: {sorted(missing)}", row)
    for p in task.params:
        v = x[p.name]
        if p.kind == CONTINUOUS:
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValidationError(f"param {p.name!r}: expected a finite number, got {v!r}", row)
            if not (p.lo <= v <= p.hi):
                raise ValidationError(
                    f"param {p.name!r}: value {v!r} outside [{p.lo}, {p.hi}]", row
                )
        else:
            if v not in p.choices:
                raise ValidationError(f"param {p.name!r}: unknown choice {v!r}", row)


def validate_example(task: RegressionTask, ex: LabeledExample, row: int | None = None) -> None:
    validate_assignment(task, ex.x, row)
    if not isinstance(ex.y, (int, float)) or isinstance(ex.y, bool) or not math.isfinite(ex.y):
        raise ValidationError(f"y must be finite, got {ex.y!r}", row)


def sample_uniform(task: RegressionTask, n: int, seed: int) -> Dataset:
    """Draw n inputs i.i.d. uniform over the box and evaluate the objective.

    Pure function of (task, n, seed): repeated calls return bit-identical data.
    """
    if task.source.kind != "synthetic":
        raise UnsupportedSourceError("sample_uniform requires a synthetic task")
    if n < 1:
        raise ValueError("n must be >= 1")
    fn = bbob.make(task.source.function, task.dof)
    rng = np.random.default_rng(seed)
    lows = np.array([p.lo for p in task.params])
    highs = np.array([p.hi for p in task.params])
    points = rng.uniform(lows, highs, size=(n, task.dof))
    examples = []
    for row in points:
        x = {p.name: float(v) for p, v in zip(task.params, row)}
        examples.append(LabeledExample(x=x, y=fn.evaluate(row)))
    return Dataset(task_id=task.id, examples=tuple(examples))


def split_dataset(
    ds: Dataset, ratios: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle deterministically, then cut into train/validation/test.

    Partition sizes are floor(n * ratio) for validation and test, with the
    remainder going to train. The three outputs are disjoint and together
    contain every input example exactly once.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    n = len(ds)
    if n < 10:
        raise SplitError(f"need at least 10 examples to split, got {n}")
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"split {ratios} of {n} examples leaves an empty partition")
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ds.examples[i] for i in perm]
    parts = (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )
    return tuple(
        replace(ds, examples=tuple(part), split=tag)
        for part, tag in zip(parts, ("train", "validation", "test"))
    )


# ---------------------------------------------------------------------------
# File formats: task spec (JSON) and offline data (CSV, params... then y).


def task_to_dict(task: RegressionTask) -> dict:
    params = []
    for p in task.params:
        if p.kind == CONTINUOUS:
            params.append({"name": p.name, "kind": p.kind, "lo": p.lo, "hi": p.hi})
        else:
            params.append({"name": p.name, "kind": p.kind, "choices": list(p.choices)})
    source = {"kind": task.source.kind}
    if task.source.function is not None:
        source["function"] = task.source.function
    if task.source.path is not None:
        source["path"] = task.source.path
    return {"id": task.id, "params": params, "source": source}


def task_from_dict(d: dict) -> RegressionTask:
    try:
        params = []
        for p in d["params"]:
            if p["kind"] == CONTINUOUS:
                params.append(ParamSpec.continuous(p["name"], p["lo"], p["hi"]))
            else:
                params.append(ParamSpec.categorical(p["name"], p["choices"]))
        source = TaskSource(
            kind=d["source"]["kind"],
            function=d["source"].get("function"),
            path=d["source"].get("path"),
        )
        return RegressionTask(id=d["id"], params=tuple(params), source=source)
    except KeyError as e:
        raise SchemaError(f"task spec missing field: {e}") from None


def load_task(path) -> RegressionTask:
    with open(path, encoding="utf-8") as f:
        return task_from_dict(json.load(f))


def save_task(task: RegressionTask, path) -> None:
    Path(path).write_text(json.dumps(task_to_dict(task), indent=2) + "\n", encoding="utf-8")


def ingest_offline(path, task: RegressionTask) -> Dataset:
    """Read a delimited evaluation table, validating every row against the task.

    Expected layout: a header with one column per param plus a final ``y``
    column. Rows keep their file order. Any unknown column, missing param,
    out-of-range value, or non-finite y aborts with the offending row named;
    nothing is clamped or skipped silently.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("offline data file is empty") from None
        if len(header) != len(set(header)):
            raise SchemaError(f"duplicate columns in header: {header}")
        if not header or header[-1] != "y":
            raise SchemaError("last column must be 'y'")
        param_cols = header[:-1]
        extra = set(param_cols) - set(task.param_names)
        if extra:
            raise SchemaError(f"unknown columns: {sorted(extra)}")
        missing = set(task.param_names) - set(param_cols)
        if missing:
            raise SchemaError(f"missing param columns: {sorted(missing)}")
        specs = {p.name: p for p in task.params}

        examples = []
        for i, cells in enumerate(reader, start=1):
            if len(cells) != len(header):
                raise ValidationError(f"expected {len(header)} cells, got {len(cells)}", row=i)
            x = {}
            for name, cell in zip(param_cols, cells[:-1]):
                if specs[name].kind == CONTINUOUS:
                    try:
                        x[name] = float(cell)
                    except ValueError:
                        raise ValidationError(
                            f"param {name!r}: not a number: {cell!r}", row=i
                        ) from None
                else:
                    x[name] = cell
            try:
                y = float(cells[-1])
            except ValueError:
                raise ValidationError(f"y is not a number: {cells[-1]!r}", row=i) from None
            ex = LabeledExample(x=x, y=y)
            validate_example(task, ex, row=i)
            examples.append(ex)
    return Dataset(task_id=task.id, examples=tuple(examples))


def write_dataset_csv(ds: Dataset, task: RegressionTask, path) -> None:
    """Write a dataset in the offline-data layout (params in declared order, then y)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(task.param_names) + ["y"])
        for ex in ds.examples:
            row = [repr(ex.x[p.name]) if p.kind == CONTINUOUS else ex.x[p.name] for p in task.params]
            writer.writerow(row + [repr(ex.y)])
