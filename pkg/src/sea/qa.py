"""Multiple-choice question generation and rephrasing.

A QaSet for a paragraph is n_base base questions, each with n_variants
semantically-equivalent rephrases (variant 0 is the original). Generators
reply in a mandated JSON array-of-objects format; every reply is validated
against the schema and the raw transcript is retained for audit.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, QaGenerationError, QaValidationError

LETTERS = ("A", "B", "C", "D")


def load_prompt(name: str) -> str:
    return resources.files("sea.prompts").joinpath(f"{name}.txt").read_text()


def render_prompt(template: str, **values: str) -> str:
    out = template
    for key, val in values.items():
        out = out.replace("{" + key + "}", str(val))
    return out


@dataclass(frozen=True)
class QaItem:
    qa_id: str
    para_id: str
    base_index: int
    variant_index: int  # 0 = original, >=1 = rephrase
    question: str
    options: tuple[str, str, str, str]  # texts for A..D, labels stripped
    answer: str  # one of A/B/C/D
    statement: str

    def options_block(self) -> str:
        return "\n".join(f"{l}: {t}" for l, t in zip(LETTERS, self.options))


@dataclass
class QaSet:
    para_id: str
    items: list[QaItem]
    target_total: int
    failed: bool = False
    transcripts: list[dict] = field(default_factory=list)


@dataclass
class QaConfig:
    n_base: int = 5
    n_variants: int = 4  # rephrases per base question; total = n_base*(1+n_variants)
    max_retries: int = 3
    floor: float = 0.6   # fail the paragraph below floor*target_total items
    kind: str = "deterministic-test"  # or "remote"
    model: str = ""
    base_url: str = ""
    temperature: float = 0.7
    timeout_s: float = 60.0
    seed: int = 0

    @property
    def target_total(self) -> int:
        return self.n_base * (1 + self.n_variants)


def parse_reply(raw: str, expected_n: int) -> list[dict]:
    """Validate a generator reply against the mandated array-of-objects format.

    Returns the parsed objects with options normalized to label-stripped
    texts. Raises QaValidationError on any schema violation.
    """
    text = raw.strip()
    # Tolerate fenced replies from chat models.
    fence = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fence:
        text = fence.group(1).strip()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QaValidationError(f"reply is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise QaValidationError("reply must be a JSON array")
    if len(data) != expected_n:
        raise QaValidationError(f"expected {expected_n} items, got {len(data)}")
    out = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise QaValidationError(f"item {i} is not an object")
        for key in ("question", "options", "statement", "answer"):
            if key not in obj:
                raise QaValidationError(f"item {i} missing key {key!r}")
        question = obj["question"]
        options = obj["options"]
        statement = obj["statement"]
        answer = obj["answer"]
        if not isinstance(question, str) or not question.strip():
            raise QaValidationError(f"item {i}: question must be non-empty text")
        if not isinstance(statement, str):
            raise QaValidationError(f"item {i}: statement must be text")
        if not isinstance(options, list) or len(options) != 4:
            raise QaValidationError(f"item {i}: exactly 4 options required")
        texts: list[str] = []
        for j, (label, opt) in enumerate(zip(LETTERS, options)):
            if not isinstance(opt, str):
                raise QaValidationError(f"item {i}: option {j} must be text")
            m = re.match(r"\s*([A-D])\s*[:.)]\s*(.*)$", opt, re.DOTALL)
            if m:
                if m.group(1) != label:
                    raise QaValidationError(
                        f"item {i}: option {j} labeled {m.group(1)}, expected {label}"
                    )
                body = m.group(2).strip()
            else:
                body = opt.strip()
            if not body:
                raise QaValidationError(f"item {i}: option {label} is empty")
            texts.append(body)
        if not isinstance(answer, str):
            raise QaValidationError(f"item {i}: answer must be text")
        m = re.match(r"\s*([A-D])\b", answer)
        if not m:
            raise QaValidationError(f"item {i}: answer {answer!r} not in A-D")
        out.append(
            {
                "question": question.strip(),
                "options": texts,
                "statement": statement.strip(),
                "answer": m.group(1),
            }
        )
    return out


def _item_rng(seed: int, *parts) -> np.random.Generator:
    digest = hashlib.blake2b(
        ("|".join(str(p) for p in parts)).encode(), digest_size=8,
        key=seed.to_bytes(8, "big", signed=False),
    ).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


class DeterministicQaGenerator:
    """Offline template generator; byte-identical output per (paragraph, seed).

    Questions quote snippets of the paragraph; distractors are snippets with
    scrambled word order, and option positions are shuffled with a seed
    derived from the run seed and the paragraph id, exercising answer-letter
    bookkeeping the same way a remote generator would.
    """

    def __init__(self, cfg: QaConfig):
        self.cfg = cfg

    def _snippets(self, text: str, n: int) -> list[str]:
        words = text.split()
        if not words:
            words = ["(empty)"]
        size = max(4, min(12, len(words) // max(n, 1)))
        out = []
        for i in range(n):
            start = (i * size) % len(words)
            chunk = words[start : start + size]
            if not chunk:
                chunk = words[:size]
            out.append(" ".join(chunk))
        return out

    def _scramble(self, snippet: str, rng: np.random.Generator) -> str:
        words = snippet.split()
        if len(words) < 2:
            return snippet + " (altered)"
        idx = rng.permutation(len(words))
        scrambled = [words[i] for i in idx]
        if scrambled == words:
            scrambled = list(reversed(words))
        return " ".join(scrambled)

    def _reply(self, title: str, para_id: str, text: str, n: int,
               base_offset: int, tag: str) -> str:
        items = []
        snippets = self._snippets(text, n + base_offset + 1)
        for i in range(n):
            rng = self._item_rng(para_id, tag, base_offset + i)
            correct = snippets[base_offset + i]
            distractors = [
                self._scramble(correct, rng),
                self._scramble(" ".join(reversed(correct.split())), rng),
                self._scramble(correct.upper().lower(), rng),
            ]
            # De-duplicate textually; uniqueness matters for grading clarity.
            seen = {correct}
            for j, d in enumerate(distractors):
                while d in seen:
                    d = d + " ."
                distractors[j] = d
                seen.add(d)
            pos = int(rng.integers(0, 4))
            texts = list(distractors)
            texts.insert(pos, correct)
            items.append(
                {
                    "question": (
                        f"In the passage titled '{title}', which of the "
                        f"following phrases appears verbatim (question "
                        f"{base_offset + i + 1})?"
                    ),
                    "options": [f"{l}: {t}" for l, t in zip(LETTERS, texts)],
                    "statement": f"The passage contains the phrase: {correct}",
                    "answer": LETTERS[pos],
                }
            )
        return json.dumps(items, ensure_ascii=False)

    def _item_rng(self, para_id: str, tag: str, i: int) -> np.random.Generator:
        return _item_rng(self.cfg.seed, para_id, tag, i)

    def generate(self, title: str, para_id: str, context: str, n: int) -> tuple[str, dict]:
        raw = self._reply(title, para_id, context, n, 0, "base")
        return raw, {"prompt_tokens": 0, "completion_tokens": 0, "calls": 1}

    def rephrase(self, title: str, para_id: str, context: str,
                 base: QaItem, n: int) -> tuple[str, dict]:
        items = []
        correct = base.options[LETTERS.index(base.answer)]
        distractors = [t for l, t in zip(LETTERS, base.options) if l != base.answer]
        for v in range(n):
            rng = self._item_rng(para_id, f"rephrase{base.base_index}", v)
            pos = int(rng.integers(0, 4))
            texts = list(distractors)
            texts.insert(pos, correct)
            items.append(
                {
                    "question": f"Restated (variant {v + 1}): {base.question}",
                    "options": [f"{l}: {t}" for l, t in zip(LETTERS, texts)],
                    "statement": base.statement,
                    "answer": LETTERS[pos],
                }
            )
        raw = json.dumps(items, ensure_ascii=False)
        return raw, {"prompt_tokens": 0, "completion_tokens": 0, "calls": 1}


class RemoteQaGenerator:
    """OpenAI-compatible chat generator using the versioned prompt templates."""

    def __init__(self, cfg: QaConfig, api_key: str | None = None):
        if not cfg.base_url or not cfg.model:
            raise ConfigError("remote QA generator requires base_url and model")
        self.cfg = cfg
        self.api_key = api_key or os.environ.get("SEA_GEN_API_KEY", "")
        self._gen_template = load_prompt("qa_generation")
        self._rephrase_template = load_prompt("rephrase")
        import httpx

        self._client = httpx.Client(timeout=cfg.timeout_s)

    def _chat(self, prompt: str) -> tuple[str, dict]:
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_exc: Exception | None = None
        for attempt in range(3):
            try:
                resp = self._client.post(
                    f"{self.cfg.base_url.rstrip('/')}/chat/completions",
                    json=payload,
                    headers=headers,
                )
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                usage = body.get("usage") or {}
                est = not usage
                return text, {
                    "prompt_tokens": usage.get("prompt_tokens", len(prompt) // 4),
                    "completion_tokens": usage.get("completion_tokens", len(text) // 4),
                    "calls": 1,
                    "estimated": est,
                }
            except Exception as exc:
                last_exc = exc
                time.sleep(min(2.0**attempt, 8.0))
        raise QaGenerationError(f"generator transport failure: {last_exc}")

    def generate(self, title: str, para_id: str, context: str, n: int) -> tuple[str, dict]:
        prompt = render_prompt(
            self._gen_template, num_of_qa=n, title=title, context=context
        )
        return self._chat(prompt)

    def rephrase(self, title: str, para_id: str, context: str,
                 base: QaItem, n: int) -> tuple[str, dict]:
        prompt = render_prompt(
            self._rephrase_template,
            num_of_qa=n,
            title=title,
            context=context,
            question=f"{base.question}\nOptions:\n{base.options_block()}",
        )
        return self._chat(prompt)


def make_generator(cfg: QaConfig):
    if cfg.kind == "deterministic-test":
        return DeterministicQaGenerator(cfg)
    if cfg.kind == "remote":
        return RemoteQaGenerator(cfg)
    raise ConfigError(f"unknown QA generator kind: {cfg.kind!r}")


def _qa_id(para_id: str, base_index: int, variant_index: int) -> str:
    return f"{para_id}::q{base_index}v{variant_index}"


def _call_with_retries(fn, cfg: QaConfig, expected_n: int, transcripts: list[dict],
                       label: str, charge=None):
    """Run a generator call, validating the reply, with up to max_retries.

    Every attempt is charged, including ones whose reply fails validation:
    the tokens were spent either way.
    """
    last_err = None
    for attempt in range(cfg.max_retries + 1):
        raw, usage = fn()
        if charge:
            charge(usage)
        try:
            parsed = parse_reply(raw, expected_n)
            transcripts.append(
                {"label": label, "attempt": attempt, "raw": raw, "ok": True,
                 "usage": usage}
            )
            return parsed, usage
        except QaValidationError as exc:
            last_err = exc
            transcripts.append(
                {"label": label, "attempt": attempt, "raw": raw, "ok": False,
                 "error": str(exc), "usage": usage}
            )
    raise QaGenerationError(f"{label}: reply malformed after retries: {last_err}")


def generate_base_questions(
    title: str, para_id: str, context: str, n_base: int, generator, cfg: QaConfig,
    transcripts: list[dict], charge=None,
) -> list[QaItem]:
    parsed, usage = _call_with_retries(
        lambda: generator.generate(title, para_id, context, n_base),
        cfg, n_base, transcripts, f"{para_id}:base", charge,
    )
    return [
        QaItem(
            qa_id=_qa_id(para_id, i, 0),
            para_id=para_id,
            base_index=i,
            variant_index=0,
            question=obj["question"],
            options=tuple(obj["options"]),
            answer=obj["answer"],
            statement=obj["statement"],
        )
        for i, obj in enumerate(parsed)
    ]


def rephrase_question(
    title: str, para_id: str, context: str, base: QaItem, n_variants: int,
    generator, cfg: QaConfig, transcripts: list[dict], charge=None,
) -> list[QaItem]:
    parsed, usage = _call_with_retries(
        lambda: generator.rephrase(title, para_id, context, base, n_variants),
        cfg, n_variants, transcripts, f"{para_id}:rephrase{base.base_index}", charge,
    )
    return [
        QaItem(
            qa_id=_qa_id(para_id, base.base_index, v + 1),
            para_id=para_id,
            base_index=base.base_index,
            variant_index=v + 1,
            question=obj["question"],
            options=tuple(obj["options"]),
            answer=obj["answer"],
            statement=obj["statement"],
        )
        for v, obj in enumerate(parsed)
    ]


def build_qa_set(
    title: str, para_id: str, context: str, cfg: QaConfig, generator, charge=None,
) -> QaSet:
    """Generate base questions then rephrase each; partial failure below the
    floor marks the whole paragraph failed (never silently dropped)."""
    transcripts: list[dict] = []
    items: list[QaItem] = []
    try:
        bases = generate_base_questions(
            title, para_id, context, cfg.n_base, generator, cfg, transcripts, charge
        )
    except QaGenerationError:
        return QaSet(para_id=para_id, items=[], target_total=cfg.target_total,
                     failed=True, transcripts=transcripts)
    for base in bases:
        items.append(base)
        if cfg.n_variants < 1:
            continue
        try:
            items.extend(
                rephrase_question(title, para_id, context, base, cfg.n_variants,
                                  generator, cfg, transcripts, charge)
            )
        except QaGenerationError:
            continue
    failed = len(items) < cfg.floor * cfg.target_total
    return QaSet(para_id=para_id, items=items, target_total=cfg.target_total,
                 failed=failed, transcripts=transcripts)
