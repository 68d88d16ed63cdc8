import json

import pytest

from sea.budget import BudgetLedger
from sea.reporting import build_report, load_qa_items, provider_correctness, run_crossval
from sea.runstore import RunStore
from sea.session import build_engine
from sea.testee import ErrorLandscape, SimulatedTestee

from test_engine import make_cfg, make_store


@pytest.fixture
def finished_run(tmp_path):
    land = ErrorLandscape(base_error_prob=0.4, seed=9)
    store = make_store(tmp_path)
    eng = build_engine(make_cfg(max_steps=3), store, tmp_path / "run",
                       landscape=land)
    eng.run()
    return tmp_path / "run"


def test_build_report_series_and_totals(finished_run):
    store = RunStore(finished_run)
    rep = build_report(store)
    assert rep["status"] == "done"
    assert rep["variant"] == "full"
    assert rep["series"]["t"] == [1, 2, 3]
    assert len(rep["series"]["cumulative_error"]) == 3
    state = store.read_json("state.json")
    assert rep["totals"]["questions"] == state["total_questions"]
    assert rep["totals"]["subset_error"] == pytest.approx(
        state["total_wrong"] / state["total_questions"]
    )
    assert rep["totals"]["subset_size"] == 15
    epc = rep["errors_per_cost"]
    if epc["n_source_errors"]:
        assert epc["cost_per_error"] == pytest.approx(
            epc["consumed"] / epc["n_source_errors"]
        )
    # the report was persisted
    assert json.loads((finished_run / "report.json").read_text()) == rep


def test_build_report_requires_steps(tmp_path):
    from sea.errors import RunStoreError

    store = RunStore(tmp_path / "empty", create=True)
    with pytest.raises(RunStoreError):
        build_report(store)


def test_load_qa_items_roundtrip(finished_run):
    store = RunStore(finished_run)
    items = load_qa_items(store)
    answers = provider_correctness(store)
    assert len(items) == len(answers)
    assert {i.qa_id for i in items} == set(answers)
    for i in items[:10]:
        assert i.answer in "ABCD" and len(i.options) == 4


def test_run_crossval_same_landscape_high_agreement(finished_run, tmp_path):
    store = RunStore(finished_run)
    # identical landscape and seed reproduce the provider's answers exactly
    same = SimulatedTestee(ErrorLandscape(base_error_prob=0.4, seed=9))
    from sea.corpus import Corpus
    from sea.embedding import DeterministicProvider, EmbeddingProviderConfig

    corpus = Corpus.load(tmp_path / "store" / "corpus.jsonl", min_para_len=10)
    provider = DeterministicProvider(EmbeddingProviderConfig(dimension=32))
    paras = sorted({i.para_id for i in load_qa_items(store)})
    embs = dict(zip(paras, provider.embed(
        [corpus.paragraphs[p].text for p in paras]
    )))
    ledger = BudgetLedger(mode="api-calls", limit=1e9)
    cell = run_crossval(store, same, "clone", ledger=ledger,
                        topic_by_para={}, para_embeddings=embs)
    assert cell["provider"] == "sim"
    assert cell["testee"] == "clone"
    assert cell["n_questions"] == 75
    assert cell["correlation"] == pytest.approx(1.0)
    assert ledger.total("testee") == 75


def test_run_crossval_independent_seed_low_agreement(finished_run, tmp_path):
    store = RunStore(finished_run)
    other = SimulatedTestee(ErrorLandscape(base_error_prob=0.4, seed=999))
    from sea.corpus import Corpus
    from sea.embedding import DeterministicProvider, EmbeddingProviderConfig

    corpus = Corpus.load(tmp_path / "store" / "corpus.jsonl", min_para_len=10)
    provider = DeterministicProvider(EmbeddingProviderConfig(dimension=32))
    paras = sorted({i.para_id for i in load_qa_items(store)})
    embs = dict(zip(paras, provider.embed(
        [corpus.paragraphs[p].text for p in paras]
    )))
    cell = run_crossval(store, other, "indep", para_embeddings=embs)
    assert cell["correlation"] is None or abs(cell["correlation"]) < 0.4
