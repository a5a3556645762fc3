"""Experiment orchestration: seeded, resumable benchmark runs.

Every experiment is a grid of independent cells (task x embedder x seed, plus
extra axes per experiment type). Cell results append to ``records.jsonl``
inside an output directory keyed by the config hash; re-running skips cells
that already completed, so an interrupted run resumes to the same final state.
Summaries are recomputed from the records on every run and are written as
deterministic CSVs (sorted rows, shortest-roundtrip floats) so identical
configs produce byte-identical summary files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bbob, metrics
from .embedders import build_embedder
from .featurize import StringFormat
from .mlp import TrainConfig, train_and_evaluate
from .nlfd import EmbeddingMatrix, lipschitz_factors, normalize_embeddings
from .tasks import (
    RegressionTask,
    ingest_offline,
    load_task,
    sample_uniform,
    split_dataset,
    synthetic_task,
)

SPLIT_RATIOS = (0.8, 0.1, 0.1)
GAP_BANDS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class ExperimentConfig:
    functions: tuple[str, ...] = bbob.CATALOG
    dofs: tuple[int, ...] = (5, 10, 25, 50, 100)
    offline: tuple[dict, ...] = ()  # entries: {"task": path, "data": path, "family": optional}
    embedders: tuple[dict, ...] = ({"kind": "traditional"},)
    n_samples: int = 500
    seeds: tuple[int, ...] = tuple(range(12))
    string_format: dict = field(
        default_factory=lambda: {"variant": "full_dict", "float_precision": 4}
    )
    train: dict = field(default_factory=dict)
    sizes: tuple[int, ...] = (50, 100, 200, 400)
    bins: int = 20

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        coerced = dict(d)
        for key in ("functions", "dofs", "seeds", "sizes", "embedders", "offline"):
            if key in coerced:
                coerced[key] = tuple(coerced[key])
        return cls(**coerced)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def canonical_json(self) -> str:
        d = {
            "functions": list(self.functions),
            "dofs": list(self.dofs),
            "offline": list(self.offline),
            "embedders": list(self.embedders),
            "n_samples": self.n_samples,
            "seeds": list(self.seeds),
            "string_format": self.string_format,
            "train": self.train,
            "sizes": list(self.sizes),
            "bins": self.bins,
        }
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:12]

    def fmt(self) -> StringFormat:
        return StringFormat(**self.string_format)


class RunStore:
    """Append-only record log with cell-level resume."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / "records.jsonl"
        self.records: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        rec = json.loads(line)
                        self.records[rec["cell"]] = rec

    def completed(self, cell: str) -> bool:
        rec = self.records.get(cell)
        return rec is not None and rec.get("status") == "ok"

    def append(self, rec: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
        self.records[rec["cell"]] = rec

    def ok_records(self) -> list[dict]:
        return [r for r in self.records.values() if r.get("status") == "ok"]

    def failed_records(self) -> list[dict]:
        return [r for r in self.records.values() if r.get("status") != "ok"]


@dataclass(frozen=True)
class TaskInstance:
    family: str
    task: RegressionTask
    data_path: str | None = None  # offline source, sampled when None

    @property
    def label(self) -> str:
        return f"{self.family}/dof{self.task.dof}"


def enumerate_tasks(cfg: ExperimentConfig, synthetic_only: bool = False) -> list[TaskInstance]:
    instances = [
        TaskInstance(family=fn, task=synthetic_task(fn, dof))
        for fn in cfg.functions
        for dof in cfg.dofs
    ]
    if synthetic_only:
        if cfg.offline:
            raise ValueError("this experiment supports synthetic tasks only")
        return instances
    for entry in cfg.offline:
        task = load_task(entry["task"])
        instances.append(
            TaskInstance(
                family=entry.get("family", task.id), task=task, data_path=entry["data"]
            )
        )
    return instances


def _cell_key(**parts) -> str:
    return ";".join(f"{k}={parts[k]}" for k in sorted(parts))


def run_cell(
    instance: TaskInstance,
    embedder_spec: dict,
    seed: int,
    n_samples: int,
    fmt: StringFormat,
    train_overrides: dict,
    slot: int = 0,
) -> dict:
    """Sample (or ingest), split 8-1-1, embed, train, evaluate, and compute the
    roughness-factor summary over the pooled data."""
    started = time.time()
    task = instance.task
    if instance.data_path is None:
        ds = sample_uniform(task, n_samples, seed)
    else:
        ds = ingest_offline(instance.data_path, task)
    train_ds, val_ds, test_ds = split_dataset(ds, SPLIT_RATIOS, seed)

    embedder = build_embedder(embedder_spec, task, fmt)
    m_train = embedder.embed(train_ds.xs)
    m_val = embedder.embed(val_ds.xs)
    m_test = embedder.embed(test_ds.xs)

    cfg = TrainConfig.from_overrides({**train_overrides, "seed": seed})
    _, _, report = train_and_evaluate(
        (m_train, train_ds.y), (m_val, val_ds.y), (m_test, test_ds.y), cfg
    )

    pool = EmbeddingMatrix(
        values=np.vstack([m_train.values, m_val.values, m_test.values]),
        provenance=m_train.provenance,
    )
    pool_y = np.concatenate([train_ds.y, val_ds.y, test_ds.y])
    sample = lipschitz_factors(normalize_embeddings(pool), pool_y)

    return {
        "status": "ok",
        "family": instance.family,
        "task_id": task.id,
        "dof": task.dof,
        "slot": slot,
        "embedder_kind": embedder.kind,
        "embedder": embedder.provenance,
        "seed": seed,
        "n": len(ds),
        "fmt": fmt.variant,
        **report.metrics,
        "chosen_lr": report.chosen_lr,
        "chosen_wd": report.chosen_wd,
        "epochs": report.epochs_run,
        "nlfd_mu": sample.mu,
        "nlfd_sigma": sample.sigma,
        "nlfd_dim": sample.dim,
        "nlfd_excluded": sample.excluded_pairs,
        "elapsed_s": round(time.time() - started, 3),
        "ts": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


def _execute_cells(
    store: RunStore,
    cells: list[tuple[str, dict]],
    runner,
    force: bool,
    workers: int,
    echo=None,
) -> None:
    todo = [(key, spec) for key, spec in cells if force or not store.completed(key)]
    if echo:
        echo(f"{len(cells)} cells total, {len(todo)} to run")

    def run_one(item):
        key, kwargs = item
        try:
            rec = runner(**kwargs)
        except Exception as e:  # cell failures must not sink the sweep
            rec = {"status": "error", "error": f"{type(e).__name__}: {e}", "ts": time.strftime("%Y-%m-%dT%H:%M:%S")}
        rec["cell"] = key
        return rec

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(run_one, todo):
                store.append(rec)
                if echo:
                    echo(f"  {rec['cell']}: {rec['status']}")
    else:
        for item in todo:
            rec = run_one(item)
            store.append(rec)
            if echo:
                echo(f"  {rec['cell']}: {rec['status']}")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    def render(v):
        if isinstance(v, float):
            return repr(v)
        return v

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([render(v) for v in row])


def _write_status(exp_dir: Path, store: RunStore, echo=None) -> None:
    failed = store.failed_records()
    status = {
        "ok": len(store.ok_records()),
        "failed": len(failed),
        "failed_cells": sorted(r["cell"] for r in failed),
    }
    (exp_dir / "status.json").write_text(json.dumps(status, indent=2) + "\n", encoding="utf-8")
    if failed and echo:
        echo(f"warning: {len(failed)} cells failed; see status.json")


def _prepare_dir(out_root, name: str, cfg: ExperimentConfig) -> tuple[Path, RunStore]:
    exp_dir = Path(out_root) / f"{name}-{cfg.config_hash()}"
    exp_dir.mkdir(parents=True, exist_ok=True)
    (exp_dir / "config.json").write_text(cfg.canonical_json() + "\n", encoding="utf-8")
    return exp_dir, RunStore(exp_dir)


def _mean(values) -> float:
    return float(np.mean(np.asarray(list(values), dtype=np.float64)))


def _group(records: list[dict], keys: tuple[str, ...]) -> dict[tuple, list[dict]]:
    grouped: dict[tuple, list[dict]] = {}
    for r in records:
        grouped.setdefault(tuple(r[k] for k in keys), []).append(r)
    return grouped


# ---------------------------------------------------------------------------
# Experiment runners


def _standard_cells(cfg: ExperimentConfig, instances, *, sizes=None, variants=None):
    """Cross product of tasks, embedders, seeds, and optional extra axes."""
    sizes = sizes if sizes is not None else [cfg.n_samples]
    variants = variants if variants is not None else [cfg.string_format.get("variant", "full_dict")]
    cells = []
    for instance in instances:
        for slot, spec in enumerate(cfg.embedders):
            for variant in variants:
                fmt = StringFormat(
                    variant=variant,
                    float_precision=cfg.string_format.get("float_precision", 4),
                )
                for seed in cfg.seeds:
                    for size in sizes:
                        key = _cell_key(
                            family=instance.family,
                            dof=instance.task.dof,
                            slot=slot,
                            seed=seed,
                            n=size,
                            fmt=variant,
                        )
                        cells.append(
                            (
                                key,
                                {
                                    "instance": instance,
                                    "embedder_spec": spec,
                                    "slot": slot,
                                    "seed": seed,
                                    "n_samples": size,
                                    "fmt": fmt,
                                    "train_overrides": cfg.train,
                                },
                            )
                        )
    return cells


def run_dof_sweep(cfg: ExperimentConfig, out_root, force=False, workers=1, echo=None) -> Path:
    """Kendall-tau versus input dimension for every (function, embedder)."""
    instances = enumerate_tasks(cfg, synthetic_only=True)
    exp_dir, store = _prepare_dir(out_root, "sweep-dof", cfg)
    _execute_cells(store, _standard_cells(cfg, instances), run_cell, force, workers, echo)
    summarize_dof_sweep(exp_dir, store)
    _write_status(exp_dir, store, echo)
    return exp_dir


def summarize_dof_sweep(exp_dir: Path, store: RunStore) -> None:
    records = store.ok_records()
    cell_rows = sorted(
        [r["family"], r["dof"], r["slot"], r["embedder_kind"], r["seed"], r["kendall_tau"]]
        for r in records
    )
    _write_csv(
        exp_dir / "dof_sweep_cells.csv",
        ["function", "dof", "embedder_slot", "embedder_kind", "seed", "kendall_tau"],
        cell_rows,
    )
    rows = []
    for (family, dof, slot), group in sorted(
        _group(records, ("family", "dof", "slot")).items()
    ):
        rows.append(
            [
                family,
                dof,
                slot,
                group[0]["embedder_kind"],
                len(group),
                _mean(r["kendall_tau"] for r in group),
            ]
        )
    _write_csv(
        exp_dir / "dof_sweep_summary.csv",
        ["function", "dof", "embedder_slot", "embedder_kind", "runs", "mean_kendall_tau"],
        rows,
    )


def run_comparison(cfg: ExperimentConfig, out_root, force=False, workers=1, echo=None) -> Path:
    """Per-task pairwise embedder comparison with outperformance percentages."""
    if len(cfg.embedders) < 2:
        raise ValueError("comparison needs at least 2 embedder specs")
    instances = enumerate_tasks(cfg)
    exp_dir, store = _prepare_dir(out_root, "compare", cfg)
    _execute_cells(store, _standard_cells(cfg, instances), run_cell, force, workers, echo)
    summarize_comparison(exp_dir, store)
    _write_status(exp_dir, store, echo)
    return exp_dir


def summarize_comparison(exp_dir: Path, store: RunStore) -> None:
    records = store.ok_records()
    _write_csv(
        exp_dir / "comparison_cells.csv",
        ["family", "dof", "embedder_slot", "embedder_kind", "seed", "kendall_tau"],
        sorted(
            [r["family"], r["dof"], r["slot"], r["embedder_kind"], r["seed"], r["kendall_tau"]]
            for r in records
        ),
    )
    # Mean tau per task instance, keyed by embedder slot.
    per_task: dict[tuple, dict[int, float]] = {}
    kinds: dict[int, str] = {}
    for (family, dof, slot), group in _group(records, ("family", "dof", "slot")).items():
        per_task.setdefault((family, dof), {})[slot] = _mean(r["kendall_tau"] for r in group)
        kinds[slot] = group[0]["embedder_kind"]

    slots = sorted(kinds)
    rows = []
    families = sorted({family for family, _ in per_task})
    for family in families:
        task_keys = [k for k in per_task if k[0] == family]
        for i, slot_a in enumerate(slots):
            for slot_b in slots[i + 1 :]:
                paired = [
                    (per_task[k][slot_a], per_task[k][slot_b])
                    for k in sorted(task_keys)
                    if slot_a in per_task[k] and slot_b in per_task[k]
                ]
                if not paired:
                    continue
                a_scores = [p[0] for p in paired]
                b_scores = [p[1] for p in paired]
                rows.append(
                    [
                        family,
                        slot_a,
                        kinds[slot_a],
                        slot_b,
                        kinds[slot_b],
                        len(paired),
                        _mean(a_scores),
                        _mean(b_scores),
                        metrics.outperformance_rate(a_scores, b_scores),
                        metrics.outperformance_rate(b_scores, a_scores),
                    ]
                )
    _write_csv(
        exp_dir / "comparison_summary.csv",
        [
            "family",
            "slot_a",
            "kind_a",
            "slot_b",
            "kind_b",
            "n_tasks",
            "mean_kendall_a",
            "mean_kendall_b",
            "pct_a_outperforms",
            "pct_b_outperforms",
        ],
        rows,
    )


def run_nlfd_correlation(cfg: ExperimentConfig, out_root, force=False, workers=1, echo=None) -> Path:
    """Smoothness gap (z-score) versus performance gap across synthetic tasks.

    The first embedder spec is the reference; positive z and positive gap both
    favor the second spec.
    """
    if len(cfg.embedders) != 2:
        raise ValueError("smoothness correlation needs exactly 2 embedder specs")
    instances = enumerate_tasks(cfg, synthetic_only=True)
    if len(instances) < 3:
        raise ValueError("need at least 3 tasks for a correlation")
    exp_dir, store = _prepare_dir(out_root, "nlfd-corr", cfg)
    _execute_cells(store, _standard_cells(cfg, instances), run_cell, force, workers, echo)
    summarize_nlfd_correlation(exp_dir, store, cfg)
    _write_status(exp_dir, store, echo)
    return exp_dir


def _zscore_from_records(rec_a: dict, rec_b: dict) -> float:
    denom = float(np.sqrt(rec_a["nlfd_sigma"] ** 2 + rec_b["nlfd_sigma"] ** 2))
    return (rec_a["nlfd_mu"] - rec_b["nlfd_mu"]) / denom


def summarize_nlfd_correlation(exp_dir: Path, store: RunStore, cfg: ExperimentConfig) -> None:
    records = store.ok_records()
    by_cell = _group(records, ("family", "dof", "seed", "slot"))
    scatter = []
    for (family, dof), _ in sorted(_group(records, ("family", "dof")).items()):
        zs, gaps = [], []
        for seed in sorted({r["seed"] for r in records}):
            rec_a = by_cell.get((family, dof, seed, 0))
            rec_b = by_cell.get((family, dof, seed, 1))
            if not rec_a or not rec_b:
                continue
            zs.append(_zscore_from_records(rec_a[0], rec_b[0]))
            gaps.append(rec_b[0]["kendall_tau"] - rec_a[0]["kendall_tau"])
        if zs:
            scatter.append([family, dof, _mean(zs), _mean(gaps)])
    _write_csv(
        exp_dir / "nlfd_scatter.csv", ["function", "dof", "zscore", "kendall_gap"], scatter
    )
    if len(scatter) >= 3:
        zs = [row[2] for row in scatter]
        gaps = [row[3] for row in scatter]
        _write_csv(
            exp_dir / "nlfd_correlations.csv",
            ["n_tasks", "kendall_tau", "spearman", "pearson"],
            [
                [
                    len(scatter),
                    metrics.kendall_tau(zs, gaps),
                    metrics.spearman(zs, gaps),
                    metrics.pearson(zs, gaps),
                ]
            ],
        )


def run_data_scaling(cfg: ExperimentConfig, out_root, force=False, workers=1, echo=None) -> Path:
    """Performance gap between two embedders as training data grows."""
    if len(cfg.embedders) != 2:
        raise ValueError("data scaling needs exactly 2 embedder specs")
    instances = enumerate_tasks(cfg)
    exp_dir, store = _prepare_dir(out_root, "scale-data", cfg)
    cells = _standard_cells(cfg, instances, sizes=list(cfg.sizes))
    _execute_cells(store, cells, run_cell, force, workers, echo)
    summarize_data_scaling(exp_dir, store, cfg)
    _write_status(exp_dir, store, echo)
    return exp_dir


def summarize_data_scaling(exp_dir: Path, store: RunStore, cfg: ExperimentConfig) -> None:
    records = store.ok_records()
    by_cell = _group(records, ("family", "dof", "seed", "n", "slot"))

    rows = []
    for size in sorted({r["n"] for r in records}):
        gaps = []
        for (family, dof) in sorted(_group(records, ("family", "dof")).keys()):
            for seed in sorted({r["seed"] for r in records}):
                rec_a = by_cell.get((family, dof, seed, size, 0))
                rec_b = by_cell.get((family, dof, seed, size, 1))
                if rec_a and rec_b:
                    gaps.append(rec_b[0]["kendall_tau"] - rec_a[0]["kendall_tau"])
        if not gaps:
            continue
        arr = np.asarray(gaps, dtype=np.float64)
        mean, std = float(arr.mean()), float(arr.std())
        row = [size, len(gaps), mean, std]
        for band in GAP_BANDS:
            row.extend([mean - band * std, mean + band * std])
        rows.append(row)
    header = ["size", "records", "mean_gap", "std_gap"]
    for band in GAP_BANDS:
        header.extend([f"lo_{band}", f"hi_{band}"])
    _write_csv(exp_dir / "data_scaling_summary.csv", header, rows)


def run_ablation(cfg: ExperimentConfig, out_root, force=False, workers=1, echo=None) -> Path:
    """Same tasks across embedder backends and string formats.

    The first embedder spec under the first format is the baseline that
    deltas are reported against.
    """
    instances = enumerate_tasks(cfg)
    exp_dir, store = _prepare_dir(out_root, "ablate", cfg)
    cells = _standard_cells(cfg, instances, variants=["full_dict", "values_only"])
    _execute_cells(store, cells, run_cell, force, workers, echo)
    summarize_ablation(exp_dir, store, cfg)
    _write_status(exp_dir, store, echo)
    return exp_dir


def summarize_ablation(exp_dir: Path, store: RunStore, cfg: ExperimentConfig) -> None:
    records = store.ok_records()
    grouped = _group(records, ("family", "dof", "slot", "fmt"))
    means = {key: _mean(r["kendall_tau"] for r in group) for key, group in grouped.items()}
    rows = []
    for (family, dof, slot, fmt_variant), mean_tau in sorted(means.items()):
        base = means.get((family, dof, 0, "full_dict"))
        delta = mean_tau - base if base is not None else float("nan")
        kind = grouped[(family, dof, slot, fmt_variant)][0]["embedder_kind"]
        rows.append(
            [family, dof, slot, kind, fmt_variant, len(grouped[(family, dof, slot, fmt_variant)]), mean_tau, delta]
        )
    _write_csv(
        exp_dir / "ablation_summary.csv",
        [
            "family",
            "dof",
            "embedder_slot",
            "embedder_kind",
            "string_format",
            "runs",
            "mean_kendall_tau",
            "delta_vs_baseline",
        ],
        rows,
    )


SUMMARIZERS = {
    "sweep-dof": lambda d, s, c: summarize_dof_sweep(d, s),
    "compare": lambda d, s, c: summarize_comparison(d, s),
    "nlfd-corr": summarize_nlfd_correlation,
    "scale-data": summarize_data_scaling,
    "ablate": lambda d, s, c: summarize_ablation(d, s, c),
}


def regenerate_summaries(exp_dir, clamp_kendall: bool = False) -> None:
    """Rebuild summary CSVs for an existing experiment directory.

    ``clamp_kendall`` clips displayed kendall_tau values into [0, 1]; the
    stored records always keep the raw signed values.
    """
    exp_dir = Path(exp_dir)
    cfg = ExperimentConfig.from_dict(json.loads((exp_dir / "config.json").read_text()))
    store = RunStore(exp_dir)
    if clamp_kendall:
        for rec in store.records.values():
            if rec.get("status") == "ok":
                rec["kendall_tau"] = min(1.0, max(0.0, rec["kendall_tau"]))
    name = exp_dir.name.rsplit("-", 1)[0]
    summarizer = SUMMARIZERS.get(name)
    if summarizer is None:
        raise ValueError(f"cannot infer experiment type from directory name {exp_dir.name!r}")
    summarizer(exp_dir, store, cfg)
    _write_status(exp_dir, store)
