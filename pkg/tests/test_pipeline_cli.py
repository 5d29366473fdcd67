import csv
import hashlib
import json
from pathlib import Path

import pytest

from reportnoise import pipeline
from reportnoise.cli import main
from reportnoise.gbdt import GbdtModel
from reportnoise.presets import preset

N = "800"


def digests(root: Path, skip_manifest=True):
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file() and not (skip_manifest and p.name == pipeline.MANIFEST)
    }


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    assert main(["synth", "--preset", "ig-us", "--n-content", N, "--seed", "3", "--out", str(root / "s")]) == 0
    assert main(["analyze", "--events", str(root / "s/events.jsonl"), "--contents", str(root / "s/contents.csv"),
                 "--out", str(root / "a")]) == 0
    assert main(["train-eval", "--features", str(root / "a/features.csv"), "--contents",
                 str(root / "s/contents.csv"), "--seed", "3", "--n-trees", "40", "--out", str(root / "t")]) == 0
    return root


def test_module_seed_is_stable_and_distinct():
    assert pipeline.module_seed(0, "split") == pipeline.module_seed(0, "split")
    assert pipeline.module_seed(0, "split") != pipeline.module_seed(0, "gbdt")
    assert pipeline.module_seed(0, "split") != pipeline.module_seed(1, "split")
    expect = int.from_bytes(hashlib.sha256(b"7:gbdt").digest()[:8], "little")
    assert pipeline.module_seed(7, "gbdt") == expect


def test_stage_outputs_present(run):
    assert {"events.jsonl", "contents.csv", "config.json"} <= set(digests(run / "s"))
    assert {"features.csv", "metrics.json", "distribution.csv", "partial_order.dot", "partial_order.csv",
            "stats.csv", "clipping.json"} <= set(digests(run / "a"))
    assert {"model.json", "eval.json"} <= set(digests(run / "t"))


def test_one_manifest_per_output_directory(run):
    for stage in ("s", "a", "t"):
        assert len(list((run / stage).glob(pipeline.MANIFEST))) == 1
        manifest = json.loads((run / stage / pipeline.MANIFEST).read_text())
        assert set(manifest["outputs"]) == set(digests(run / stage))
        assert manifest["command"] and len(manifest["config_digest"]) == 64


def test_per_country_pr_csvs(run):
    pr = sorted(p.name for p in (run / "t").glob("pr_*.csv"))
    assert any("_ALL" in name for name in pr) and any("_US" in name for name in pr)
    with open(run / "t" / pr[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["threshold", "precision", "recall"]
    assert float(rows[1][2]) == 1.0


def test_synth_and_model_are_deterministic(run, tmp_path):
    assert main(["synth", "--preset", "ig-us", "--n-content", N, "--seed", "3", "--out", str(tmp_path / "s")]) == 0
    assert digests(tmp_path / "s") == digests(run / "s")
    assert main(["train-eval", "--features", str(run / "a/features.csv"), "--contents",
                 str(run / "s/contents.csv"), "--seed", "3", "--n-trees", "40", "--out", str(tmp_path / "t")]) == 0
    m1 = GbdtModel.from_json((run / "t/model.json").read_text())
    m2 = GbdtModel.from_json((tmp_path / "t/model.json").read_text())
    assert m1.digest() == m2.digest()
    assert digests(tmp_path / "t") == digests(run / "t")


def test_commands_do_not_mutate_inputs(run, tmp_path):
    before = digests(run / "s")
    assert main(["analyze", "--events", str(run / "s/events.jsonl"), "--contents", str(run / "s/contents.csv"),
                 "--format", "csv", "--out", str(tmp_path / "a")]) == 0
    assert digests(run / "s") == before
    assert (tmp_path / "a/metrics.csv").is_file()


def test_quantile_one_excludes_nothing(run, tmp_path):
    assert main(["analyze", "--events", str(run / "s/events.jsonl"), "--contents", str(run / "s/contents.csv"),
                 "--quantile", "1.0", "--out", str(tmp_path / "a")]) == 0
    clip = json.loads((tmp_path / "a/clipping.json").read_text())
    assert clip["excluded"] == []


def test_bad_config_exits_2_without_output(tmp_path, capsys):
    cfg = json.loads(preset("ig-us", n_content=100).to_json())
    cfg["n_content"] = -5
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["synth", "--config", str(path), "--out", str(out)]) == 2
    assert "n_content" in capsys.readouterr().err
    assert not out.exists()


def test_bad_hyperparams_and_quantile_exit_2(run, tmp_path):
    args = ["--features", str(run / "a/features.csv"), "--contents", str(run / "s/contents.csv")]
    assert main(["train-eval", *args, "--min-leaf", "0", "--out", str(tmp_path / "x")]) == 2
    assert main(["analyze", "--events", str(run / "s/events.jsonl"), "--contents", str(run / "s/contents.csv"),
                 "--quantile", "1.5", "--out", str(tmp_path / "y")]) == 2


def test_unlabelled_contents_exit_3(run, tmp_path, capsys):
    lines = (run / "s/contents.csv").read_text().splitlines()
    header, first = lines[0].split(","), lines[1].split(",")
    first[header.index("gcrc")] = ""
    first[header.index("verification")] = ""
    path = tmp_path / "contents.csv"
    path.write_text("\n".join([lines[0], ",".join(first), *lines[2:]]) + "\n")
    code = main(["analyze", "--events", str(run / "s/events.jsonl"), "--contents", str(path),
                 "--out", str(tmp_path / "a")])
    assert code == 3
    assert first[0] in capsys.readouterr().err


def test_malformed_events_exit_3(run, tmp_path):
    path = tmp_path / "events.jsonl"
    path.write_text("{broken\n")
    assert main(["analyze", "--events", str(path), "--contents", str(run / "s/contents.csv"),
                 "--out", str(tmp_path / "a")]) == 3


def test_single_class_input_exit_4(run, tmp_path, capsys):
    lines = (run / "s/contents.csv").read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        cells[header.index("gcrc")] = "I"
        cells[header.index("verification")] = ""
        rows.append(",".join(cells))
    path = tmp_path / "contents.csv"
    path.write_text("\n".join([lines[0], *rows]) + "\n")
    code = main(["train-eval", "--features", str(run / "a/features.csv"), "--contents", str(path),
                 "--out", str(tmp_path / "t")])
    assert code == 4
    assert "DegenerateTargets" in capsys.readouterr().err


def test_missing_input_exit_1(tmp_path):
    assert main(["analyze", "--events", str(tmp_path / "nope.jsonl"), "--contents", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "a")]) == 1


def test_unwritable_output_exit_1_before_compute(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("x")

    def boom(*a, **k):
        raise AssertionError("computed before checking the output directory")

    monkeypatch.setattr(pipeline, "reproduce_seed", boom)
    assert main(["reproduce", "--out", str(blocker / "sub")]) == 1


def test_reproduce_table(tmp_path, capsys):
    out = tmp_path / "r"
    main(["reproduce", "--seed", "0", "--out", str(out)])
    table = capsys.readouterr().out
    rows = [line for line in table.splitlines() if line.endswith(("PASS", "FAIL"))]
    assert len(rows) >= 8
    with open(out / "targets.csv") as fh:
        assert len(list(csv.DictReader(fh))) == len(rows)
    for stage in ("synth", "analyze", "train-eval"):
        assert (out / "seed-0000" / stage / pipeline.MANIFEST).is_file()


def test_atomic_write_leaves_no_temp_files(tmp_path):
    pipeline.atomic_write(tmp_path / "a.txt", b"one")
    pipeline.atomic_write(tmp_path / "a.txt", b"two")
    assert (tmp_path / "a.txt").read_bytes() == b"two"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
