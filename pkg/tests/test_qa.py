import json

import pytest

from sea.errors import QaGenerationError, QaValidationError
from sea.qa import (
    LETTERS,
    DeterministicQaGenerator,
    QaConfig,
    build_qa_set,
    load_prompt,
    parse_reply,
    render_prompt,
)

PARA = (
    "The aqueduct carried water across the valley for three centuries. "
    "Its arches were built from local limestone and repaired twice. "
    "Engineers later reused the foundations for a railway viaduct."
)


def valid_items(n):
    return [
        {
            "question": f"Question number {i}?",
            "options": [f"A: opt{i}a", f"B: opt{i}b", f"C: opt{i}c", f"D: opt{i}d"],
            "statement": f"Statement {i}.",
            "answer": LETTERS[i % 4],
        }
        for i in range(n)
    ]


def test_parse_reply_accepts_valid():
    parsed = parse_reply(json.dumps(valid_items(5)), 5)
    assert len(parsed) == 5
    assert parsed[0]["options"] == ["opt0a", "opt0b", "opt0c", "opt0d"]
    assert parsed[2]["answer"] == "C"


def test_parse_reply_accepts_fenced_and_unlabeled_options():
    items = valid_items(2)
    items[0]["options"] = ["plain one", "plain two", "plain three", "plain four"]
    raw = "```json\n" + json.dumps(items) + "\n```"
    parsed = parse_reply(raw, 2)
    assert parsed[0]["options"][0] == "plain one"


MALFORMED = [
    "not json at all",
    "{}",                                     # object, not array
    "[]",                                     # wrong count
    json.dumps(valid_items(3)),               # wrong count (expected 2)
    json.dumps(["just a string", "another"]),  # items not objects
    json.dumps([{k: v for k, v in it.items() if k != "answer"}
                for it in valid_items(2)]),   # missing answer
    json.dumps([dict(it, options=it["options"][:3]) for it in valid_items(2)]),
    json.dumps([dict(it, options=["B: x", "A: y", "C: z", "D: w"])
                for it in valid_items(2)]),   # labels out of order
    json.dumps([dict(it, answer="E") for it in valid_items(2)]),
    json.dumps([dict(it, question="   ") for it in valid_items(2)]),
    json.dumps([dict(it, options=["A: ", "B: x", "C: y", "D: z"])
                for it in valid_items(2)]),   # empty option body
    json.dumps([dict(it, options=["A: x", 7, "C: y", "D: z"])
                for it in valid_items(2)]),   # non-string option
]


@pytest.mark.parametrize("raw", MALFORMED)
def test_parse_reply_rejects_malformed(raw):
    with pytest.raises(QaValidationError):
        parse_reply(raw, 2)


def test_render_prompt_fills_placeholders():
    tpl = load_prompt("qa_generation")
    out = render_prompt(tpl, num_of_qa=5, title="T", context="C")
    assert "{num_of_qa}" not in out and "{title}" not in out and "{context}" not in out
    assert "5" in out


def test_build_qa_set_counts_and_ids():
    cfg = QaConfig(seed=1)
    qs = build_qa_set("Title", "d#0000", PARA, cfg, DeterministicQaGenerator(cfg))
    assert not qs.failed
    assert len(qs.items) == cfg.target_total == 25
    ids = [it.qa_id for it in qs.items]
    assert len(set(ids)) == 25
    assert "d#0000::q0v0" in ids and "d#0000::q4v4" in ids
    for it in qs.items:
        assert it.answer in LETTERS
        assert len(it.options) == 4


def test_build_qa_set_deterministic():
    cfg = QaConfig(seed=7)
    a = build_qa_set("T", "p#0001", PARA, cfg, DeterministicQaGenerator(cfg))
    b = build_qa_set("T", "p#0001", PARA, cfg, DeterministicQaGenerator(cfg))
    assert [it.__dict__ for it in a.items] == [it.__dict__ for it in b.items]


def test_build_qa_set_seed_sensitivity():
    a = build_qa_set("T", "p#0001", PARA, QaConfig(seed=1),
                     DeterministicQaGenerator(QaConfig(seed=1)))
    b = build_qa_set("T", "p#0001", PARA, QaConfig(seed=2),
                     DeterministicQaGenerator(QaConfig(seed=2)))
    assert [it.answer for it in a.items] != [it.answer for it in b.items]


def test_rephrase_preserves_correct_text():
    cfg = QaConfig(seed=3)
    qs = build_qa_set("T", "p#0002", PARA, cfg, DeterministicQaGenerator(cfg))
    by_base = {}
    for it in qs.items:
        by_base.setdefault(it.base_index, []).append(it)
    for base_idx, group in by_base.items():
        texts = {it.options[LETTERS.index(it.answer)] for it in group}
        assert len(texts) == 1  # same correct option text across all variants
        base = next(it for it in group if it.variant_index == 0)
        for it in group:
            assert sorted(it.options) == sorted(base.options)


def test_transcripts_record_usage():
    cfg = QaConfig(seed=0)
    charges = []
    qs = build_qa_set("T", "p#0003", PARA, cfg, DeterministicQaGenerator(cfg),
                      charge=charges.append)
    # one base call + one rephrase call per base question
    assert len(qs.transcripts) == 1 + cfg.n_base
    assert all(t["ok"] for t in qs.transcripts)
    assert len(charges) == len(qs.transcripts)
    assert all(c["calls"] == 1 for c in charges)


class FlakyGenerator:
    """Fails validation for the first `bad` calls, then delegates."""

    def __init__(self, cfg, bad):
        self.inner = DeterministicQaGenerator(cfg)
        self.bad = bad
        self.calls = 0

    def generate(self, *args):
        self.calls += 1
        if self.calls <= self.bad:
            return "garbled {", {"prompt_tokens": 1, "completion_tokens": 1, "calls": 1}
        return self.inner.generate(*args)

    def rephrase(self, *args):
        return self.inner.rephrase(*args)


def test_retry_then_success_keeps_failed_transcript():
    cfg = QaConfig(seed=0, max_retries=3)
    gen = FlakyGenerator(cfg, bad=2)
    qs = build_qa_set("T", "p#0004", PARA, cfg, gen)
    assert not qs.failed
    assert sum(1 for t in qs.transcripts if not t["ok"]) == 2


def test_exhausted_retries_marks_paragraph_failed():
    cfg = QaConfig(seed=0, max_retries=1)
    gen = FlakyGenerator(cfg, bad=99)
    qs = build_qa_set("T", "p#0005", PARA, cfg, gen)
    assert qs.failed
    assert qs.items == []


class HalfBrokenGenerator:
    """Base generation works; every rephrase reply is malformed."""

    def __init__(self, cfg):
        self.inner = DeterministicQaGenerator(cfg)

    def generate(self, *args):
        return self.inner.generate(*args)

    def rephrase(self, *args):
        return "[]", {"prompt_tokens": 0, "completion_tokens": 0, "calls": 1}


def test_floor_applies_to_partial_sets():
    cfg = QaConfig(seed=0, max_retries=0, floor=0.6)
    qs = build_qa_set("T", "p#0006", PARA, cfg, HalfBrokenGenerator(cfg))
    # only the 5 base questions survive: 5 < 0.6 * 25
    assert len(qs.items) == 5
    assert qs.failed


def test_charge_called_even_on_failed_validation():
    cfg = QaConfig(seed=0, max_retries=1)

    class AlwaysBad:
        def generate(self, *a):
            return "nope", {"prompt_tokens": 3, "completion_tokens": 1, "calls": 1}

        def rephrase(self, *a):
            raise AssertionError("unreachable")

    charges = []
    qs = build_qa_set("T", "p", PARA, cfg, AlwaysBad(), charge=charges.append)
    assert qs.failed
    # tokens were spent on every attempt, so every attempt is charged
    assert len(charges) == cfg.max_retries + 1
    assert all(c["prompt_tokens"] == 3 for c in charges)
    assert all(t["usage"]["prompt_tokens"] == 3 for t in qs.transcripts)
