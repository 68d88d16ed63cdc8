"""Offline report and cross-validation builders over persisted run artifacts."""

from __future__ import annotations

from .budget import cross_validate_cell, errors_per_cost, subset_error
from .errors import RunStoreError
from .qa import QaItem
from .runstore import RunStore


def build_report(store: RunStore) -> dict:
    """Per-step series, totals, and cost-per-error for one run."""
    steps = store.read_lines("steps.jsonl")
    if not steps:
        raise RunStoreError("run has no completed steps")
    state = store.read_json("state.json")
    manifest = store.read_json("manifest.json")
    dag = store.read_json("dag.json")
    n_sources = len(dag["nodes"])
    series = {
        "t": [s["t"] for s in steps],
        "step_error": [s["step_error"] for s in steps],
        "cumulative_error": [s["cumulative_error"] for s in steps],
        "n_sources_total": [s["n_sources_total"] for s in steps],
        "n_sources_active": [s["n_sources_active"] for s in steps],
        "consumed": [s["consumed"] for s in steps],
    }
    totals = {
        "questions": state["total_questions"],
        "wrong": state["total_wrong"],
        "subset_error": (
            subset_error(state["total_wrong"], state["total_questions"])
            if state["total_questions"]
            else None
        ),
        "subset_size": len(state["s"]),
        "steps": len(steps),
        "ledger": state["ledger_totals"],
    }
    consumed = steps[-1]["consumed"]
    report = {
        "run_id": manifest["run_id"],
        "model_tag": manifest["model_tag"],
        "variant": manifest["variant"],
        "status": manifest["status"],
        "series": series,
        "totals": totals,
        "errors_per_cost": errors_per_cost(n_sources, consumed),
    }
    store.write_json("report.json", report)
    return report


def load_qa_items(store: RunStore) -> list[QaItem]:
    rows = store.read_lines("qa_items.jsonl")
    if not rows:
        raise RunStoreError("run has no persisted questions")
    return [
        QaItem(
            qa_id=r["qa_id"],
            para_id=r["para_id"],
            base_index=r["base_index"],
            variant_index=r["variant_index"],
            question=r["question"],
            options=tuple(r["options"]),
            answer=r["answer"],
            statement=r["statement"],
        )
        for r in rows
    ]


def provider_correctness(store: RunStore) -> dict[str, bool]:
    return {
        r["qa_id"]: bool(r["correct"]) for r in store.read_lines("answers.jsonl")
    }


def run_crossval(
    provider_store: RunStore,
    testee,
    testee_tag: str,
    ledger=None,
    topic_by_para: dict[str, str] | None = None,
    para_embeddings=None,
) -> dict:
    """Answer every question of the provider's subset with the given testee
    and build one cross-validation cell."""
    provider_manifest = provider_store.read_json("manifest.json")
    items = load_qa_items(provider_store)
    prov_correct = provider_correctness(provider_store)
    testee_correct: dict[str, bool] = {}
    for qa in items:
        topic = (topic_by_para or {}).get(qa.para_id, "general")
        emb = para_embeddings.get(qa.para_id) if para_embeddings else None
        rec = testee.answer(qa, topic=topic, para_embedding=emb)
        if ledger is not None:
            ledger.charge("testee", testee_tag, rec.prompt_tokens,
                          rec.completion_tokens, calls=1)
        testee_correct[qa.qa_id] = rec.correct
    cell = cross_validate_cell(
        provider_tag=provider_manifest["model_tag"],
        testee_tag=testee_tag,
        provider_correct=prov_correct,
        testee_correct=testee_correct,
    )
    return cell.as_dict()
