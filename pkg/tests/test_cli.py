import hashlib
import json

import numpy as np
import pytest

from cclearn import cli
from cclearn.report import read_accuracy_csv


def _gen(tmp_path, name="bench.clds", classes=8, per_class=15, seed=5):
    path = tmp_path / name
    code = cli.main(
        ["gen", "--classes", str(classes), "--per-class", str(per_class),
         "--dim", "6", "--seed", str(seed), "-o", str(path)]
    )
    assert code == 0
    return path


def _config_doc(data_path, out_dir, method="gcl", **run_overrides):
    run_section = {
        "method": method, "epochs_per_task": 4, "memory_capacity": 12, "seed": 7,
        "embed_dim": 6, "tau": 0.2, "batch_size": 16, "eta": 0.5, "log_every": 5,
    }
    run_section.update(run_overrides)
    return {
        "dataset": {"path": str(data_path)},
        "split": {"mode": "cil", "num_tasks": 4, "test_fraction": 0.2, "seed": 1},
        "run": run_section,
        "output_dir": str(out_dir),
    }


def _write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_gen_writes_expected_sample_count(tmp_path, capsys):
    path = _gen(tmp_path, classes=20, per_class=50)
    out = capsys.readouterr().out
    assert "1000 samples" in out
    from cclearn.data import load

    assert len(load(path).samples) == 1000


def test_gen_deterministic_file_hash(tmp_path):
    a = _gen(tmp_path, name="a.clds", seed=7)
    b = _gen(tmp_path, name="b.clds", seed=7)
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_gen_invalid_dim_exits_2(tmp_path, capsys):
    code = cli.main(
        ["gen", "--classes", "3", "--per-class", "4", "--dim", "0", "-o", str(tmp_path / "x.clds")]
    )
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_run_produces_outputs(tmp_path, capsys):
    data = _gen(tmp_path)
    out_dir = tmp_path / "run1"
    cfg = _write_config(tmp_path, _config_doc(data, out_dir))
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert (out_dir / "accuracy.csv").exists()
    assert (out_dir / "log.jsonl").exists()
    assert (out_dir / "curve.svg").exists()
    assert (out_dir / "run_meta.json").exists()

    entries, aggregate, cfg_hash = read_accuracy_csv(out_dir / "accuracy.csv")
    assert len(entries) == 4 + 3 + 2 + 1
    assert sorted(aggregate) == [0, 1, 2, 3]
    assert len(cfg_hash) == 64

    svg = (out_dir / "curve.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg

    first_log_line = (out_dir / "log.jsonl").read_text().splitlines()[0]
    assert json.loads(first_log_line)["config_sha256"] == cfg_hash


def test_run_twice_is_byte_identical(tmp_path):
    data = _gen(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg_a = _write_config(tmp_path, _config_doc(data, out_a), "a.json")
    cfg_b = _write_config(tmp_path, _config_doc(data, out_b), "b.json")
    assert cli.main(["run", "--config", str(cfg_a)]) == 0
    assert cli.main(["run", "--config", str(cfg_b)]) == 0
    assert (out_a / "accuracy.csv").read_bytes() == (out_b / "accuracy.csv").read_bytes()
    assert (out_a / "log.jsonl").read_bytes() == (out_b / "log.jsonl").read_bytes()
    assert (out_a / "curve.svg").read_bytes() == (out_b / "curve.svg").read_bytes()


def test_run_rejects_unknown_config_keys(tmp_path, capsys):
    data = _gen(tmp_path)
    doc = _config_doc(data, tmp_path / "out")
    doc["run"]["learning_rate"] = 0.1  # not a RunConfig field
    cfg = _write_config(tmp_path, doc)
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "unknown keys" in capsys.readouterr().err


def test_run_rejects_missing_required_keys(tmp_path, capsys):
    data = _gen(tmp_path)
    doc = _config_doc(data, tmp_path / "out")
    del doc["run"]["method"]
    cfg = _write_config(tmp_path, doc)
    assert cli.main(["run", "--config", str(cfg)]) == 2


def test_run_rejects_bad_method(tmp_path):
    data = _gen(tmp_path)
    doc = _config_doc(data, tmp_path / "out")
    doc["run"]["method"] = "ewc"
    cfg = _write_config(tmp_path, doc)
    assert cli.main(["run", "--config", str(cfg)]) == 2


def test_run_missing_dataset_exits_3(tmp_path, capsys):
    doc = _config_doc(tmp_path / "nope.clds", tmp_path / "out")
    cfg = _write_config(tmp_path, doc)
    assert cli.main(["run", "--config", str(cfg)]) == 3


def test_run_corrupt_dataset_exits_3(tmp_path):
    bad = tmp_path / "bad.clds"
    bad.write_bytes(b"JUNKJUNKJUNK")
    doc = _config_doc(bad, tmp_path / "out")
    cfg = _write_config(tmp_path, doc)
    assert cli.main(["run", "--config", str(cfg)]) == 3


def test_run_divergence_exits_4(tmp_path, capsys):
    data = _gen(tmp_path)
    doc = _config_doc(data, tmp_path / "out", eta=1e308)
    cfg = _write_config(tmp_path, doc)
    with np.errstate(over="ignore", invalid="ignore"):
        assert cli.main(["run", "--config", str(cfg)]) == 4
    assert "diverged" in capsys.readouterr().err


def test_run_output_dir_from_env(tmp_path, monkeypatch):
    data = _gen(tmp_path)
    doc = _config_doc(data, tmp_path / "ignored")
    del doc["output_dir"]
    cfg = _write_config(tmp_path, doc)
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(env_dir))
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert (env_dir / "accuracy.csv").exists()


def _run_once(tmp_path, out_name, method="gcl", seed=7, memory=12):
    data = tmp_path / "bench.clds"
    if not data.exists():
        _gen(tmp_path)
    out_dir = tmp_path / out_name
    doc = _config_doc(data, out_dir, method=method, seed=seed, memory_capacity=memory)
    if method == "gdro":
        doc["run"].update({"batch_classes": 3, "batch_per_class": 4, "margin": 0.5,
                          "dro_lambda": 1.0, "eta": 0.2})
    cfg = _write_config(tmp_path, doc, f"{out_name}.json")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    return out_dir


def test_run_zero_shot_completes_with_flat_model(tmp_path):
    data = _gen(tmp_path)
    out_dir = tmp_path / "zs"
    doc = _config_doc(data, out_dir, method="zero-shot")
    cfg = _write_config(tmp_path, doc, "zs.json")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    _, aggregate, _ = read_accuracy_csv(out_dir / "accuracy.csv")
    assert sorted(aggregate) == [0, 1, 2, 3]  # evaluated at every stage, no training


def test_compare_run_with_itself_has_zero_std(tmp_path):
    out = _run_once(tmp_path, "r1")
    cmp_dir = tmp_path / "cmp"
    assert cli.main(["compare", str(out), str(out), "-o", str(cmp_dir)]) == 0
    lines = (cmp_dir / "comparison.csv").read_text().splitlines()
    assert lines[1] == "method,memory,n_runs,final_mean,final_std"
    row = lines[2].split(",")
    assert row[0] == "gcl" and row[2] == "2"
    assert float(row[4]) == 0.0


def test_compare_groups_methods_and_recomputes_std(tmp_path):
    runs = [
        _run_once(tmp_path, "g1", "gcl", seed=7),
        _run_once(tmp_path, "g2", "gcl", seed=8),
        _run_once(tmp_path, "g3", "gcl", seed=9),
        _run_once(tmp_path, "d1", "gdro", seed=7),
        _run_once(tmp_path, "d2", "gdro", seed=8),
        _run_once(tmp_path, "d3", "gdro", seed=9),
    ]
    cmp_dir = tmp_path / "cmp"
    assert cli.main(["compare", *map(str, runs), "-o", str(cmp_dir)]) == 0
    lines = (cmp_dir / "comparison.csv").read_text().splitlines()
    rows = [l.split(",") for l in lines[2:]]
    assert len(rows) == 2  # gcl and gdro groups

    # independent recomputation from the per-run accuracy CSVs
    for row in rows:
        method = row[0]
        finals = []
        for name in ("g1", "g2", "g3") if method == "gcl" else ("d1", "d2", "d3"):
            _, aggregate, _ = read_accuracy_csv(tmp_path / name / "accuracy.csv")
            finals.append(aggregate[max(aggregate)])
        assert float(row[3]) == pytest.approx(np.mean(finals), abs=1e-12)
        assert float(row[4]) == pytest.approx(np.std(finals), abs=1e-12)
    assert (cmp_dir / "comparison.svg").exists()


def test_compare_rejects_single_directory(tmp_path):
    out = _run_once(tmp_path, "solo")
    assert cli.main(["compare", str(out), "-o", str(tmp_path / "cmp")]) == 2


def test_compare_rejects_incompatible_streams(tmp_path):
    out1 = _run_once(tmp_path, "s1")
    other_data = _gen(tmp_path, name="other.clds", seed=99)
    out2 = tmp_path / "s2"
    cfg = _write_config(tmp_path, _config_doc(other_data, out2), "other.json")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert cli.main(["compare", str(out1), str(out2), "-o", str(tmp_path / "cmp")]) == 2


def test_compare_missing_meta_exits_2(tmp_path):
    out = _run_once(tmp_path, "ok")
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["compare", str(out), str(empty), "-o", str(tmp_path / "cmp")]) == 2
