import csv
import json
from pathlib import Path

import numpy as np
import pytest

from embreg import experiments
from embreg.experiments import ExperimentConfig, RunStore

FAST_TRAIN = {
    "learning_rates": [5e-3],
    "weight_decays": [0.0],
    "max_epochs": 12,
    "patience": 5,
}


def _cfg(**overrides):
    base = dict(
        functions=["sphere"],
        dofs=[2],
        embedders=[{"kind": "traditional"}],
        n_samples=40,
        seeds=[0, 1],
        train=FAST_TRAIN,
    )
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config"):
        ExperimentConfig.from_dict({"functons": ["sphere"]})


def test_config_hash_changes_with_config():
    assert _cfg().config_hash() != _cfg(seeds=[0, 1, 2]).config_hash()
    assert _cfg().config_hash() == _cfg().config_hash()


def test_dof_sweep_produces_summary(tmp_path):
    cfg = _cfg(functions=["sphere", "rastrigin"], dofs=[2, 3])
    exp_dir = experiments.run_dof_sweep(cfg, tmp_path)
    rows = _read_csv(exp_dir / "dof_sweep_summary.csv")
    assert rows[0] == ["function", "dof", "embedder_slot", "embedder_kind", "runs", "mean_kendall_tau"]
    assert len(rows) - 1 == 4  # 2 functions x 2 dofs x 1 embedder
    assert all(r[4] == "2" for r in rows[1:])  # both seeds completed
    cells = _read_csv(exp_dir / "dof_sweep_cells.csv")
    assert len(cells) - 1 == 8


def test_dof_sweep_rejects_offline_tasks(tmp_path):
    cfg = _cfg(offline=[{"task": "t.json", "data": "d.csv"}])
    with pytest.raises(ValueError, match="synthetic"):
        experiments.run_dof_sweep(cfg, tmp_path)


def test_rerun_skips_completed_cells(tmp_path):
    cfg = _cfg()
    exp_dir = experiments.run_dof_sweep(cfg, tmp_path)
    first = (exp_dir / "records.jsonl").read_text()
    messages = []
    experiments.run_dof_sweep(cfg, tmp_path, echo=messages.append)
    assert any("2 cells total, 0 to run" in m for m in messages)
    assert (exp_dir / "records.jsonl").read_text() == first


def test_interrupted_run_resumes_to_same_summary(tmp_path):
    cfg = _cfg(functions=["sphere", "rastrigin"])
    exp_dir = experiments.run_dof_sweep(cfg, tmp_path / "full")
    full_summary = (exp_dir / "dof_sweep_summary.csv").read_bytes()

    # Simulate an interruption: re-create the directory with only the first
    # half of the records, then resume.
    part_dir = Path(tmp_path / "part")
    cfg_dir = experiments.run_dof_sweep(cfg, part_dir)
    records = (cfg_dir / "records.jsonl").read_text().strip().splitlines()
    (cfg_dir / "records.jsonl").write_text("\n".join(records[:2]) + "\n")
    resumed = experiments.run_dof_sweep(cfg, part_dir)
    assert (resumed / "dof_sweep_summary.csv").read_bytes() == full_summary


def test_force_reruns_cells(tmp_path):
    cfg = _cfg()
    exp_dir = experiments.run_dof_sweep(cfg, tmp_path)
    messages = []
    experiments.run_dof_sweep(cfg, tmp_path, force=True, echo=messages.append)
    assert any("2 cells total, 2 to run" in m for m in messages)


def test_summary_byte_identical_across_runs(tmp_path):
    cfg = _cfg()
    dir_a = experiments.run_dof_sweep(cfg, tmp_path / "a")
    dir_b = experiments.run_dof_sweep(cfg, tmp_path / "b")
    assert (dir_a / "dof_sweep_summary.csv").read_bytes() == (
        dir_b / "dof_sweep_summary.csv"
    ).read_bytes()
    assert (dir_a / "dof_sweep_cells.csv").read_bytes() == (
        dir_b / "dof_sweep_cells.csv"
    ).read_bytes()


def test_failed_cells_recorded_and_flagged(tmp_path):
    # A remote embedder with an unreachable endpoint fails per cell without
    # sinking the run.
    cfg = _cfg(
        embedders=[
            {"kind": "traditional"},
            {"kind": "remote", "endpoint": "http://127.0.0.1:9/embed", "model": "m",
             "max_attempts": 1, "backoff": 0.01},
        ],
        seeds=[0],
    )
    exp_dir = experiments.run_comparison(cfg, tmp_path)
    status = json.loads((exp_dir / "status.json").read_text())
    assert status["ok"] == 1
    assert status["failed"] == 1
    assert len(status["failed_cells"]) == 1


def test_comparison_summary_shape(tmp_path):
    cfg = _cfg(
        functions=["sphere", "rastrigin"],
        embedders=[{"kind": "traditional"}, {"kind": "scrambled"}],
        seeds=[0],
    )
    exp_dir = experiments.run_comparison(cfg, tmp_path)
    rows = _read_csv(exp_dir / "comparison_summary.csv")
    assert len(rows) - 1 == 2  # one row per family for the single pair
    header = rows[0]
    assert header[:6] == ["family", "slot_a", "kind_a", "slot_b", "kind_b", "n_tasks"]


def test_comparison_self_pair_zero_outperformance(tmp_path):
    cfg = _cfg(embedders=[{"kind": "traditional"}, {"kind": "traditional"}], seeds=[0])
    exp_dir = experiments.run_comparison(cfg, tmp_path)
    rows = _read_csv(exp_dir / "comparison_summary.csv")
    header, row = rows[0], rows[1]
    pct_a = float(row[header.index("pct_a_outperforms")])
    pct_b = float(row[header.index("pct_b_outperforms")])
    assert pct_a == 0.0 and pct_b == 0.0


def test_comparison_needs_two_embedders(tmp_path):
    with pytest.raises(ValueError, match="2 embedder"):
        experiments.run_comparison(_cfg(), tmp_path)


def test_nlfd_correlation_scatter_and_antisymmetry(tmp_path):
    base = dict(
        functions=["sphere", "rastrigin", "discus", "bent_cigar"],
        dofs=[3],
        n_samples=40,
        seeds=[0],
        train=FAST_TRAIN,
    )
    cfg_ab = ExperimentConfig.from_dict(
        dict(base, embedders=[{"kind": "traditional"}, {"kind": "scrambled"}])
    )
    cfg_ba = ExperimentConfig.from_dict(
        dict(base, embedders=[{"kind": "scrambled"}, {"kind": "traditional"}])
    )
    dir_ab = experiments.run_nlfd_correlation(cfg_ab, tmp_path / "ab")
    dir_ba = experiments.run_nlfd_correlation(cfg_ba, tmp_path / "ba")

    scatter_ab = _read_csv(dir_ab / "nlfd_scatter.csv")
    scatter_ba = _read_csv(dir_ba / "nlfd_scatter.csv")
    assert len(scatter_ab) - 1 == 4  # one row per task
    for row_ab, row_ba in zip(scatter_ab[1:], scatter_ba[1:]):
        assert float(row_ba[2]) == pytest.approx(-float(row_ab[2]))
        assert float(row_ba[3]) == pytest.approx(-float(row_ab[3]))

    corr_ab = _read_csv(dir_ab / "nlfd_correlations.csv")
    corr_ba = _read_csv(dir_ba / "nlfd_correlations.csv")
    for col in (1, 2, 3):
        assert float(corr_ba[1][col]) == pytest.approx(float(corr_ab[1][col]), abs=1e-9)


def test_nlfd_correlation_requires_three_tasks(tmp_path):
    cfg = _cfg(
        functions=["sphere"],
        dofs=[2],
        embedders=[{"kind": "traditional"}, {"kind": "scrambled"}],
    )
    with pytest.raises(ValueError, match="3 tasks"):
        experiments.run_nlfd_correlation(cfg, tmp_path)


def test_data_scaling_summary(tmp_path):
    cfg = _cfg(
        embedders=[{"kind": "traditional"}, {"kind": "vocab_pool", "width": 16}],
        sizes=[20, 40],
        seeds=[0, 1],
    )
    exp_dir = experiments.run_data_scaling(cfg, tmp_path)
    rows = _read_csv(exp_dir / "data_scaling_summary.csv")
    assert rows[0][:4] == ["size", "records", "mean_gap", "std_gap"]
    assert [r[0] for r in rows[1:]] == ["20", "40"]
    assert all(r[1] == "2" for r in rows[1:])  # tasks x seeds = 1 x 2
    header = rows[0]
    assert "lo_0.5" in header and "hi_2.0" in header
    row = rows[1]
    mean = float(row[2])
    std = float(row[3])
    assert float(row[header.index("lo_1.0")]) == pytest.approx(mean - std)
    assert float(row[header.index("hi_1.0")]) == pytest.approx(mean + std)


def test_ablation_grid_and_zero_delta_baseline(tmp_path):
    cfg = _cfg(
        embedders=[{"kind": "vocab_pool", "width": 16}, {"kind": "synthetic_transformer", "model_dim": 16, "ff_dim": 32, "heads": 2}],
        seeds=[0],
    )
    exp_dir = experiments.run_ablation(cfg, tmp_path)
    rows = _read_csv(exp_dir / "ablation_summary.csv")
    assert len(rows) - 1 == 4  # 2 backends x 2 formats x 1 task
    header = rows[0]
    for row in rows[1:]:
        if row[header.index("embedder_slot")] == "0" and row[header.index("string_format")] == "full_dict":
            assert float(row[header.index("delta_vs_baseline")]) == 0.0


def test_ablation_formats_serialize_differently(tmp_path):
    cfg = _cfg(
        embedders=[{"kind": "vocab_pool", "width": 16}],
        seeds=[0],
    )
    exp_dir = experiments.run_ablation(cfg, tmp_path)
    records = [json.loads(line) for line in (exp_dir / "records.jsonl").read_text().splitlines()]
    variants = {r["fmt"] for r in records}
    assert variants == {"full_dict", "values_only"}
    # The two variants feed different bytes to string-based embedders.
    from embreg import featurize, tasks

    task = tasks.synthetic_task("sphere", 2)
    x = {"x0": 1.0, "x1": 2.0}
    full = featurize.serialize(task, x, featurize.StringFormat(variant="full_dict"))
    values = featurize.serialize(task, x, featurize.StringFormat(variant="values_only"))
    assert hash(full) != hash(values) and full != values


def test_report_regenerates_summaries(tmp_path):
    cfg = _cfg()
    exp_dir = experiments.run_dof_sweep(cfg, tmp_path)
    summary = exp_dir / "dof_sweep_summary.csv"
    original = summary.read_bytes()
    summary.unlink()
    experiments.regenerate_summaries(exp_dir)
    assert summary.read_bytes() == original


def test_offline_tasks_flow_through_comparison(tmp_path):
    from embreg import tasks

    task = tasks.synthetic_task("sphere", 2, task_id="offline-sphere")
    ds = tasks.sample_uniform(task, 30, seed=5)
    offline_task = tasks.RegressionTask(
        id="offline-sphere",
        params=task.params,
        source=tasks.TaskSource(kind="offline"),
    )
    tasks.save_task(offline_task, tmp_path / "task.json")
    tasks.write_dataset_csv(ds, offline_task, tmp_path / "data.csv")

    cfg = _cfg(
        functions=[],
        dofs=[],
        offline=[{"task": str(tmp_path / "task.json"), "data": str(tmp_path / "data.csv")}],
        embedders=[{"kind": "traditional"}, {"kind": "scrambled"}],
        seeds=[0],
    )
    exp_dir = experiments.run_comparison(cfg, tmp_path / "out")
    rows = _read_csv(exp_dir / "comparison_summary.csv")
    assert rows[1][0] == "offline-sphere"


def test_workers_parallel_matches_sequential_summary(tmp_path):
    cfg = _cfg(functions=["sphere", "rastrigin"], seeds=[0, 1])
    seq = experiments.run_dof_sweep(cfg, tmp_path / "seq", workers=1)
    par = experiments.run_dof_sweep(cfg, tmp_path / "par", workers=4)
    assert (seq / "dof_sweep_summary.csv").read_bytes() == (
        par / "dof_sweep_summary.csv"
    ).read_bytes()
