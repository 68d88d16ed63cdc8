"""The search control loop.

One step: assemble an error-related batch (or the initial/random batch),
generate and evaluate 25 questions per paragraph, admit high-error
paragraphs as sources, remove them from the knowledge base (loop
prevention), update the relation DAG, and prune. The loop guard checks the
budget before a step, so overshoot is bounded by one step's committed cost.

Variants: "full" runs everything; "no_prune" skips pruning; "random_select"
replaces retrieval with uniform sampling and keeps the DAG empty.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from .budget import BudgetLedger
from .config import RunConfig
from .corpus import (
    Corpus,
    KnowledgeBaseView,
    sample_uniform,
    sample_uniform_by_category,
)
from .dag import RelationDag
from .embedding import EmbeddingCache
from .errors import CorpusExhausted, ExhaustedNeighborhood
from .index import AbstractIndex
from .qa import build_qa_set
from .retrieval import (
    BatchResult,
    CandidateSet,
    assemble_batch,
    hierarchical_retrieve,
)
from .runstore import RunStore
from .testee import UNPARSABLE

# Child-stream purposes, combined with (master seed, step).
_RNG_INITIAL = 1
_RNG_BATCH = 2
_RNG_RANDOM_SELECT = 3
_RNG_FALLBACK = 4

STATUS_RUNNING = "running"
STATUS_DONE = "done"
STATUS_EXHAUSTED = "exhausted"
STATUS_FAILED = "failed"


def per_paragraph_error(records: list) -> float:
    """Wrong-count / record-count; UNPARSABLE counts as wrong."""
    if not records:
        raise ValueError("need at least one record")
    wrong = sum(1 for r in records if not r.correct)
    return wrong / len(records)


@dataclass
class SearchState:
    t: int = 1                     # next step to execute
    s: list[str] = field(default_factory=list)   # evaluated subset, ordered
    total_questions: int = 0
    total_wrong: int = 0
    status: str = STATUS_RUNNING


class Engine:
    def __init__(
        self,
        cfg: RunConfig,
        corpus: Corpus,
        index: AbstractIndex,
        provider,
        cache: EmbeddingCache,
        generator,
        testee,
        ledger: BudgetLedger,
        store: RunStore,
        run_id: str | None = None,
    ):
        self.cfg = cfg
        self.corpus = corpus
        self.index = index
        self.provider = provider
        self.cache = cache
        self.generator = generator
        self.testee = testee
        self.ledger = ledger
        self.store = store
        self.run_id = run_id or uuid.uuid4().hex[:12]
        self.view = KnowledgeBaseView(corpus)
        self.dag = RelationDag()
        self.state = SearchState()

    # -- persistence ----------------------------------------------------

    def write_manifest(self, status: str = STATUS_RUNNING) -> None:
        self.store.write_json(
            "manifest.json",
            {
                "run_id": self.run_id,
                "status": status,
                "model_tag": self.cfg.model_tag,
                "corpus_fingerprint": self.corpus.fingerprint(),
                "embedding_dimension": self.provider.cfg.dimension,
                "provider_fingerprint": self.provider.cfg.fingerprint(),
                "index_fingerprint": self.index.provider_fingerprint,
                "variant": self.cfg.engine.variant,
                "seed": self.cfg.engine.seed,
            },
        )

    def _checkpoint(self) -> None:
        # The DAG snapshot lives inside state.json so the checkpoint is one
        # atomic write; a crash can never leave state and DAG out of sync.
        # dag.json is re-derived from it as a standalone artifact.
        dag_dict = self.dag.as_dict()
        self.store.write_json(
            "state.json",
            {
                "t_completed": self.state.t - 1,
                "s": self.state.s,
                "removed": sorted(self.view.removed),
                "total_questions": self.state.total_questions,
                "total_wrong": self.state.total_wrong,
                "ledger_totals": dict(self.ledger.totals),
                "status": self.state.status,
                "dag": dag_dict,
            },
        )
        self.store.write_json("dag.json", dag_dict)

    @classmethod
    def resume(cls, cfg: RunConfig, corpus, index, provider, cache, generator,
               testee, ledger, store: RunStore) -> "Engine":
        """Rebuild an engine from a checkpoint, discarding any partial step."""
        manifest = store.read_json("manifest.json")
        eng = cls(cfg, corpus, index, provider, cache, generator, testee,
                  ledger, store, run_id=manifest["run_id"])
        state = store.read_json("state.json")
        t_completed = state["t_completed"]
        store.truncate_after_step(t_completed)
        eng.state.t = t_completed + 1
        eng.state.s = list(state["s"])
        eng.state.total_questions = state["total_questions"]
        eng.state.total_wrong = state["total_wrong"]
        eng.state.status = state.get("status", STATUS_RUNNING)
        eng.view.removed = set(state["removed"])
        eng.dag = RelationDag.from_dict(state["dag"])
        ledger.restore_totals(state["ledger_totals"])
        return eng

    # -- batch selection --------------------------------------------------

    def _select_batch(self, t: int) -> BatchResult:
        ecfg = self.cfg.engine
        rcfg = self.cfg.retrieval
        s_set = set(self.state.s)

        if t == 1:
            if ecfg.initial_mode == "category-uniform":
                paras, short = sample_uniform_by_category(
                    rcfg.batch_size, ecfg.categories,
                    [ecfg.seed, t, _RNG_INITIAL], self.view,
                )
            else:
                paras, short = sample_uniform(
                    rcfg.batch_size, [ecfg.seed, t, _RNG_INITIAL], self.view,
                )
            if not paras:
                raise CorpusExhausted("no active paragraphs for initial batch")
            return BatchResult(paragraphs=paras, fallback_ids=set(), provenance={})

        if ecfg.variant == "random_select":
            paras, _short = sample_uniform(
                rcfg.batch_size, [ecfg.seed, t, _RNG_RANDOM_SELECT],
                self.view, exclude=s_set,
            )
            if not paras:
                raise CorpusExhausted("corpus exhausted")
            return BatchResult(paragraphs=paras, fallback_ids=set(), provenance={})

        source_ids = sorted(self.dag.active_ids())
        if source_ids:
            self.cache.ensure(
                source_ids,
                {pid: self.corpus.paragraphs[pid].text for pid in source_ids},
                self.provider,
            )
            sources = [(pid, self.cache.get(pid)) for pid in source_ids]
            try:
                cands = hierarchical_retrieve(
                    sources, self.view, self.index, rcfg, self.cache,
                    self.provider, exclude=s_set,
                )
            except ExhaustedNeighborhood:
                cands = CandidateSet()
            self.dag.mark_retrieval_round(source_ids)
            rng = np.random.default_rng([ecfg.seed, t, _RNG_BATCH])
            return assemble_batch(cands, rcfg.batch_size, rng, self.view,
                                  exclude=s_set)

        # No active sources: flagged fallback batch.
        paras, _short = sample_uniform(
            rcfg.batch_size, [ecfg.seed, t, _RNG_FALLBACK],
            self.view, exclude=s_set,
        )
        if not paras:
            raise CorpusExhausted("corpus exhausted")
        return BatchResult(
            paragraphs=paras,
            fallback_ids={p.para_id for p in paras},
            provenance={},
        )

    # -- one step ---------------------------------------------------------

    def step(self) -> dict:
        t = self.state.t
        ecfg = self.cfg.engine
        started = time.monotonic()
        consumed_before = self.ledger.consumed

        batch = self._select_batch(t)
        batch_ids = [p.para_id for p in batch.paragraphs]

        # Simulated testees score against paragraph embeddings.
        self.cache.ensure(
            batch_ids,
            {pid: self.corpus.paragraphs[pid].text for pid in batch_ids},
            self.provider,
        )

        gen_model = self.cfg.qa.model or "generator"
        testee_model = self.cfg.testee.model or self.cfg.model_tag
        qa_rows: list[dict] = []
        answer_rows: list[dict] = []
        transcript_rows: list[dict] = []
        per_para_error_map: dict[str, float | None] = {}
        step_wrong = 0
        step_questions = 0
        unparsable = 0
        qa_failed: list[str] = []

        for para in batch.paragraphs:
            title = self.corpus.title_path(para.para_id)
            qa_set = build_qa_set(
                title, para.para_id, para.text, self.cfg.qa, self.generator,
                charge=lambda usage: self.ledger.charge(
                    "generation", gen_model,
                    usage.get("prompt_tokens", 0),
                    usage.get("completion_tokens", 0),
                    usage.get("calls", 1),
                ),
            )
            for tr in qa_set.transcripts:
                transcript_rows.append({"t": t, "para_id": para.para_id, **tr})
            if qa_set.failed or not qa_set.items:
                qa_failed.append(para.para_id)
                per_para_error_map[para.para_id] = None
                continue
            records = []
            emb = self.cache.get(para.para_id)
            for qa in qa_set.items:
                qa_rows.append(
                    {
                        "t": t,
                        "qa_id": qa.qa_id,
                        "para_id": qa.para_id,
                        "base_index": qa.base_index,
                        "variant_index": qa.variant_index,
                        "question": qa.question,
                        "options": list(qa.options),
                        "answer": qa.answer,
                        "statement": qa.statement,
                    }
                )
                rec = self.testee.answer(qa, topic=para.category or "general",
                                         para_embedding=emb)
                self.ledger.charge(
                    "testee", testee_model, rec.prompt_tokens,
                    rec.completion_tokens, calls=1,
                )
                records.append(rec)
                answer_rows.append({"t": t, **rec.as_dict()})
                if rec.parsed == UNPARSABLE:
                    unparsable += 1
            err = per_paragraph_error(records)
            per_para_error_map[para.para_id] = err
            step_wrong += sum(1 for r in records if not r.correct)
            step_questions += len(records)

        # Admission, loop prevention, DAG update, pruning.
        admitted: list[dict] = []
        pruned: list[str] = []
        retired: list[str] = []
        if ecfg.variant != "random_select":
            new_sources = [
                (pid, err, batch.provenance.get(pid, set()))
                for pid, err in per_para_error_map.items()
                if err is not None and err > ecfg.xi
            ]
            if new_sources:
                self.view.remove_paragraphs({pid for pid, _, _ in new_sources})
                self.dag.add_sources(new_sources, t)
                admitted = [
                    {"para_id": pid, "error": err, "provenance": sorted(prov)}
                    for pid, err, prov in new_sources
                ]
            if ecfg.variant == "full":
                pruned = sorted(self.dag.prune(ecfg.gamma))
                retired = sorted(self.dag.retire_stale(ecfg.stale_source_rounds))

        self.state.s.extend(batch_ids)
        self.state.total_questions += step_questions
        self.state.total_wrong += step_wrong
        consumed_after = self.ledger.consumed

        record = {
            "t": t,
            "batch": [
                {"para_id": pid, "fallback": pid in batch.fallback_ids}
                for pid in batch_ids
            ],
            "per_para_error": {
                pid: per_para_error_map[pid] for pid in batch_ids
            },
            "qa_failed": qa_failed,
            "step_error": (step_wrong / step_questions) if step_questions else None,
            "cumulative_error": (
                self.state.total_wrong / self.state.total_questions
                if self.state.total_questions
                else None
            ),
            "questions": step_questions,
            "wrong": step_wrong,
            "unparsable": unparsable,
            "admitted": admitted,
            "pruned": pruned,
            "retired": retired,
            "n_sources_active": len(self.dag.active_ids()),
            "n_sources_total": len(self.dag),
            "cost_delta": consumed_after - consumed_before,
            "consumed": consumed_after,
            "fallback_used": bool(batch.fallback_ids),
            "wall_time_s": time.monotonic() - started,
        }

        self.store.append_lines("transcripts.jsonl", transcript_rows)
        self.store.append_lines("qa_items.jsonl", qa_rows)
        self.store.append_lines("answers.jsonl", answer_rows)
        self.store.append_lines(
            "usage.jsonl",
            [
                {"t": t, **r.as_dict()}
                for r in self.ledger.records
            ],
        )
        self.ledger.records.clear()
        self.store.append_lines("steps.jsonl", [record])

        self.state.t = t + 1
        self._checkpoint()
        return record

    # -- full run -----------------------------------------------------------

    def run(self) -> dict:
        if self.state.t == 1:
            self.write_manifest(STATUS_RUNNING)
            self.store.write_json("config.json", self.cfg.as_dict())
        status = STATUS_DONE
        try:
            while self.ledger.has_budget():
                if self.cfg.engine.max_steps and self.state.t > self.cfg.engine.max_steps:
                    break
                self.step()
        except CorpusExhausted:
            status = STATUS_EXHAUSTED
        self.state.status = status
        self._checkpoint()
        self.write_manifest(status)
        return {
            "run_id": self.run_id,
            "status": status,
            "steps": self.state.t - 1,
            "subset_size": len(self.state.s),
            "n_sources": len(self.dag),
            "consumed": self.ledger.consumed,
        }
