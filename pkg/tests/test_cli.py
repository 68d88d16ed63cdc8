import json
import re

import numpy as np
import pytest
from click.testing import CliRunner

from sea.cli import main
from sea.runstore import RunStore
from sea.testee import ErrorLandscape

from conftest import make_doc, write_corpus

CATS = ["cat0", "cat1", "cat2"]

CONFIG_TOML = """
model_tag = "sim"
landscape_path = "{landscape}"

[engine]
variant = "full"
seed = 0
initial_mode = "fully-random"
max_steps = {max_steps}
min_para_len = 10
n_centroids = 3
categories = ["cat0", "cat1", "cat2"]

[retrieval]
k = 20
k_doc = 4
batch_size = 5
n_probe = 3

[qa]
n_base = 1
n_variants = 4

[testee]
kind = "simulated"

[embedding]
dimension = 32

[budget]
mode = "api-calls"
limit = 100000.0
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path):
    """Raw corpus file, landscape json, and a config toml."""
    rng = np.random.default_rng(0)
    docs = []
    for i in range(9):
        vocab = [f"d{i}w{j}" for j in range(20)]
        doc = make_doc(f"doc{i}", n_paras=0, category=CATS[i % 3])
        doc["abstract"] = " ".join(vocab[:10])
        doc["paragraphs"] = [
            {"section_path": [f"S{p}"],
             "text": " ".join(vocab[rng.integers(0, 20)] for _ in range(25))}
            for p in range(6)
        ]
        docs.append(doc)
    raw = write_corpus(tmp_path / "raw.jsonl", docs)
    land = tmp_path / "land.json"
    land.write_text(json.dumps(
        ErrorLandscape(base_error_prob=0.5, seed=4).as_dict()
    ))
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONFIG_TOML.format(landscape=land, max_steps=3))
    return tmp_path, raw, cfg


def ingest_and_index(runner, ws):
    tmp_path, raw, cfg = ws
    store = tmp_path / "store"
    r = runner.invoke(main, ["ingest", "--input", str(raw),
                             "--min-para-len", "10", "--out", str(store)])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["index", "--store", str(store),
                             "--config", str(cfg)])
    assert r.exit_code == 0, r.output
    return store


def test_ingest_reports_stats(runner, workspace):
    tmp_path, raw, cfg = workspace
    r = runner.invoke(main, ["ingest", "--input", str(raw),
                             "--min-para-len", "10",
                             "--out", str(tmp_path / "store")])
    assert r.exit_code == 0
    stats = json.loads(r.output)
    assert stats["docs"] == 9 and stats["paragraphs"] == 54
    assert (tmp_path / "store" / "corpus.jsonl").exists()


def test_index_writes_artifacts(runner, workspace):
    store = ingest_and_index(runner, workspace)
    assert (store / "index.npz").exists()
    manifest = json.loads((store / "index.manifest.json").read_text())
    assert manifest["dimension"] == 32
    assert manifest["n_centroids"] == 3


def test_run_produces_run_store(runner, workspace):
    tmp_path, raw, cfg = workspace
    store = ingest_and_index(runner, workspace)
    run_dir = tmp_path / "run1"
    r = runner.invoke(main, ["run", "--config", str(cfg),
                             "--store", str(store), "--run-dir", str(run_dir)])
    assert r.exit_code == 0, r.output
    summary = json.loads(r.output)
    assert summary["status"] == "done" and summary["steps"] == 3
    for name in ("manifest.json", "config.json", "steps.jsonl", "state.json",
                 "dag.json", "qa_items.jsonl", "answers.jsonl", "usage.jsonl"):
        assert (run_dir / name).exists(), name
    assert not (run_dir / ".lock").exists()  # released after the run


def test_config_error_exits_2(runner, workspace, tmp_path):
    _tmp, _raw, _cfg = workspace
    bad = tmp_path / "bad.toml"
    bad.write_text("[engine]\nnonsense_key = 1\n")
    store = ingest_and_index(runner, workspace)
    r = runner.invoke(main, ["run", "--config", str(bad),
                             "--store", str(store),
                             "--run-dir", str(tmp_path / "r")])
    assert r.exit_code == 2
    assert "config error" in r.output


def test_runtime_error_exits_1(runner, workspace, tmp_path):
    _tmp, _raw, cfg = workspace
    empty_store = tmp_path / "empty"
    empty_store.mkdir()
    r = runner.invoke(main, ["run", "--config", str(cfg),
                             "--store", str(empty_store),
                             "--run-dir", str(tmp_path / "r")])
    assert r.exit_code == 1
    assert "error" in r.output


def test_locked_run_dir_exits_1(runner, workspace, tmp_path):
    store = ingest_and_index(runner, workspace)
    run_dir = tmp_path / "locked"
    run_dir.mkdir()
    (run_dir / ".lock").write_text("999999")
    r = runner.invoke(main, ["run", "--config", str(workspace[2]),
                             "--store", str(store), "--run-dir", str(run_dir)])
    assert r.exit_code == 1
    assert "locked" in r.output


def strip_wall_time(path):
    out = []
    for line in path.read_text().splitlines():
        out.append(re.sub(r',?"wall_time_s":[0-9.e+-]+', "", line))
    return "\n".join(out)


def test_kill_and_resume_byte_identical(runner, workspace, tmp_path, monkeypatch):
    tmp_path_, raw, _ = workspace
    land = tmp_path_ / "land.json"
    cfg4 = tmp_path_ / "cfg4.toml"
    cfg4.write_text(CONFIG_TOML.format(landscape=land, max_steps=4))
    store = ingest_and_index(runner, workspace)

    ref_dir = tmp_path_ / "ref"
    r = runner.invoke(main, ["run", "--config", str(cfg4),
                             "--store", str(store), "--run-dir", str(ref_dir)])
    assert r.exit_code == 0, r.output

    # crash the second run mid-step-3, after its jsonl rows are appended but
    # before the checkpoint lands
    killed_dir = tmp_path_ / "killed"
    orig = RunStore.write_json

    def flaky(self, name, obj):
        if name == "state.json" and obj.get("t_completed") == 3:
            raise RuntimeError("simulated kill")
        orig(self, name, obj)

    monkeypatch.setattr(RunStore, "write_json", flaky)
    r = runner.invoke(main, ["run", "--config", str(cfg4),
                             "--store", str(store), "--run-dir", str(killed_dir)])
    monkeypatch.setattr(RunStore, "write_json", orig)
    assert r.exit_code != 0
    state = json.loads((killed_dir / "state.json").read_text())
    assert state["t_completed"] == 2          # checkpoint is pre-crash
    steps_t = [json.loads(l)["t"] for l in
               (killed_dir / "steps.jsonl").read_text().splitlines()]
    assert steps_t == [1, 2, 3]               # partial step-3 rows exist
    assert not (killed_dir / ".lock").exists()

    r = runner.invoke(main, ["resume", "--run", str(killed_dir),
                             "--store", str(store)])
    assert r.exit_code == 0, r.output
    assert json.loads(r.output)["steps"] == 4

    for name in ("steps.jsonl", "qa_items.jsonl", "answers.jsonl",
                 "usage.jsonl", "transcripts.jsonl"):
        assert strip_wall_time(killed_dir / name) == strip_wall_time(ref_dir / name), name
    assert (killed_dir / "state.json").read_bytes() == (ref_dir / "state.json").read_bytes()
    assert (killed_dir / "dag.json").read_bytes() == (ref_dir / "dag.json").read_bytes()


def test_report_command(runner, workspace, tmp_path):
    tmp_path_, _raw, cfg = workspace
    store = ingest_and_index(runner, workspace)
    run_dir = tmp_path_ / "run1"
    runner.invoke(main, ["run", "--config", str(cfg), "--store", str(store),
                         "--run-dir", str(run_dir)])
    r = runner.invoke(main, ["report", "--run", str(run_dir)])
    assert r.exit_code == 0, r.output
    assert (run_dir / "report.json").exists()
    totals = json.loads(r.output)
    assert totals["questions"] == totals["subset_size"] * 5


def test_export_command(runner, workspace, tmp_path):
    tmp_path_, _raw, cfg = workspace
    store = ingest_and_index(runner, workspace)
    run_dir = tmp_path_ / "run1"
    runner.invoke(main, ["run", "--config", str(cfg), "--store", str(store),
                         "--run-dir", str(run_dir)])
    out = tmp_path_ / "bundle"
    r = runner.invoke(main, ["export", "--run", str(run_dir),
                             "--store", str(store), "--out", str(out)])
    assert r.exit_code == 0, r.output
    dag = json.loads((run_dir / "dag.json").read_text())
    rows = [json.loads(l) for l in (out / "sources.jsonl").read_text().splitlines()]
    assert len(rows) == len(dag["nodes"])
    assert all(len(row["embedding"]) == 32 for row in rows)
    assert json.loads((out / "bundle.json").read_text())["partial"] is False


def test_crossval_command(runner, workspace, tmp_path):
    tmp_path_, _raw, cfg = workspace
    store = ingest_and_index(runner, workspace)
    run_dir = tmp_path_ / "run1"
    runner.invoke(main, ["run", "--config", str(cfg), "--store", str(store),
                         "--run-dir", str(run_dir)])
    out = tmp_path_ / "cell.json"
    r = runner.invoke(main, ["crossval", "--provider-run", str(run_dir),
                             "--testee-config", str(cfg),
                             "--store", str(store), "--out", str(out)])
    assert r.exit_code == 0, r.output
    cell = json.loads(out.read_text())
    # same config = same simulated testee: perfect self-agreement
    assert cell["provider"] == cell["testee"] == "sim"
    assert cell["correlation"] == pytest.approx(1.0)


def test_ablate_command(runner, workspace, tmp_path):
    tmp_path_, _raw, cfg = workspace
    store = ingest_and_index(runner, workspace)
    out = tmp_path_ / "ablation"
    r = runner.invoke(main, ["ablate", "--config", str(cfg),
                             "--store", str(store), "--out", str(out),
                             "--variants", "full,random_select", "--seeds", "2"])
    assert r.exit_code == 0, r.output
    results = json.loads(r.output)
    assert len(results) == 4
    for v in ("full", "random_select"):
        for s in (0, 1):
            d = out / f"{v}-seed{s}"
            assert (d / "steps.jsonl").exists()
            manifest = json.loads((d / "manifest.json").read_text())
            assert manifest["variant"] == v and manifest["seed"] == s


def test_ablate_rejects_unknown_variant(runner, workspace, tmp_path):
    tmp_path_, _raw, cfg = workspace
    store = ingest_and_index(runner, workspace)
    r = runner.invoke(main, ["ablate", "--config", str(cfg),
                             "--store", str(store),
                             "--out", str(tmp_path_ / "x"),
                             "--variants", "full,bogus"])
    assert r.exit_code == 2


def test_simulate_command(runner, tmp_path):
    spec = tmp_path / "sim.json"
    spec.write_text(json.dumps({
        "synth": {"n_clusters": 3, "docs_per_cluster": 4, "paras_per_doc": 3,
                  "words_per_para": 20, "vocab_per_cluster": 20,
                  "shared_vocab": 8, "seed": 1},
        "landscape": {"cluster": 0, "error_prob": 0.9,
                      "base_error_prob": 0.1, "seed": 2},
    }))
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("""
model_tag = "sim"

[engine]
variant = "full"
initial_mode = "fully-random"
max_steps = 2
min_para_len = 10
n_centroids = 3

[retrieval]
k = 10
k_doc = 3
batch_size = 4
n_probe = 3

[qa]
n_base = 1
n_variants = 4

[testee]
kind = "simulated"

[embedding]
dimension = 32

[budget]
mode = "api-calls"
limit = 100000.0
""")
    r = runner.invoke(main, ["simulate", "--landscape", str(spec),
                             "--out", str(tmp_path / "sim"),
                             "--config", str(cfg)])
    assert r.exit_code == 0, r.output
    summary = json.loads(r.output)
    assert summary["steps"] == 2
    assert (tmp_path / "sim" / "store" / "corpus.jsonl").exists()
    assert (tmp_path / "sim" / "store" / "para_embeddings.npz").exists()
    assert (tmp_path / "sim" / "run" / "steps.jsonl").exists()


@pytest.fixture
def tmp_path_factory_runner():
    return CliRunner()


def test_help_lists_all_commands(runner):
    r = runner.invoke(main, ["--help"])
    for cmd in ("ingest", "index", "run", "resume", "ablate", "crossval",
                "report", "export", "simulate"):
        assert cmd in r.output
