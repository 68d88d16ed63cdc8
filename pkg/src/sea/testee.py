"""The black-box testee: remote chat endpoint or simulated oracle.

The simulated testee carries a planted error landscape in embedding space:
inside any region, the per-question error probability is the max of the
covering regions' probabilities; elsewhere the base probability applies.
Answers are deterministic per (landscape seed, qa_id), so whole runs are
reproducible end to end.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .qa import LETTERS, QaItem, load_prompt, render_prompt

UNPARSABLE = "UNPARSABLE"

_BOX_RE = re.compile(r"(?i)\\box\{\s*([A-D])\b[^{}]*\}")
_PROSE_RE = re.compile(r"(?i)\banswer\s*(?:is\s*:?|:)\s*[\(\[\*\"'`]*([A-D])\b")


def parse_choice(raw_text: str) -> str:
    """Extract the chosen letter from a testee reply. Total function.

    Order: last \\box{X} occurrence; else last letter following
    "answer is"/"Answer:"; else UNPARSABLE.
    """
    if not isinstance(raw_text, str):
        return UNPARSABLE
    boxes = _BOX_RE.findall(raw_text)
    if boxes:
        return boxes[-1].upper()
    prose = _PROSE_RE.findall(raw_text)
    if prose:
        return prose[-1].upper()
    return UNPARSABLE


@dataclass
class TesteeConfig:
    kind: str = "simulated"  # "simulated" | "remote"
    model: str = ""
    base_url: str = ""
    temperature: float = 0.1
    top_p: float = 0.9
    max_retries: int = 3
    timeout_s: float = 60.0

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 2.0):
            raise ConfigError("temperature out of range")
        if not (0.0 < self.top_p <= 1.0):
            raise ConfigError("top_p out of range")


@dataclass
class AnswerRecord:
    qa_id: str
    raw_text: str
    parsed: str            # A/B/C/D or UNPARSABLE
    correct: bool
    prompt_tokens: int
    completion_tokens: int
    latency_s: float = 0.0
    usage_estimated: bool = False
    error_note: str = ""

    def as_dict(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "parsed": self.parsed,
            "correct": self.correct,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "usage_estimated": self.usage_estimated,
            "error_note": self.error_note,
        }


@dataclass
class ErrorRegion:
    center: np.ndarray        # unit vector
    radius: float             # cosine-distance threshold (1 - cosine)
    error_prob: float

    def covers(self, emb: np.ndarray) -> bool:
        return 1.0 - float(self.center @ emb) <= self.radius


@dataclass
class ErrorLandscape:
    regions: list[ErrorRegion] = field(default_factory=list)
    base_error_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.base_error_prob <= 1.0):
            raise ConfigError("base_error_prob must be in [0,1]")
        for r in self.regions:
            if not (0.0 <= r.error_prob <= 1.0):
                raise ConfigError("region error_prob must be in [0,1]")

    def error_prob(self, emb: np.ndarray) -> float:
        probs = [r.error_prob for r in self.regions if r.covers(emb)]
        return max(probs) if probs else self.base_error_prob

    def as_dict(self) -> dict:
        return {
            "base_error_prob": self.base_error_prob,
            "seed": self.seed,
            "regions": [
                {
                    "center": [float(x) for x in r.center],
                    "radius": r.radius,
                    "error_prob": r.error_prob,
                }
                for r in self.regions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ErrorLandscape":
        return cls(
            regions=[
                ErrorRegion(
                    center=np.asarray(r["center"], dtype=np.float64),
                    radius=float(r["radius"]),
                    error_prob=float(r["error_prob"]),
                )
                for r in data.get("regions", [])
            ],
            base_error_prob=float(data.get("base_error_prob", 0.0)),
            seed=int(data.get("seed", 0)),
        )


class SimulatedTestee:
    """Oracle with a planted error landscape; free of network and cost."""

    kind = "simulated"

    def __init__(self, landscape: ErrorLandscape, cfg: TesteeConfig | None = None):
        self.landscape = landscape
        self.cfg = cfg or TesteeConfig(kind="simulated")

    def _rng(self, qa_id: str) -> np.random.Generator:
        digest = hashlib.blake2b(
            qa_id.encode(), digest_size=8,
            key=self.landscape.seed.to_bytes(8, "big", signed=False),
        ).digest()
        return np.random.default_rng(int.from_bytes(digest, "big"))

    def answer(self, qa: QaItem, topic: str, para_embedding: np.ndarray) -> AnswerRecord:
        p_err = self.landscape.error_prob(para_embedding)
        rng = self._rng(qa.qa_id)
        if rng.random() < p_err:
            wrong = [l for l in LETTERS if l != qa.answer]
            choice = wrong[int(rng.integers(0, 3))]
        else:
            choice = qa.answer
        raw = f"\\box{{{choice}}}"
        parsed = parse_choice(raw)
        return AnswerRecord(
            qa_id=qa.qa_id,
            raw_text=raw,
            parsed=parsed,
            correct=(parsed == qa.answer),
            prompt_tokens=len(qa.question) // 4,
            completion_tokens=len(raw) // 4,
            usage_estimated=True,
        )


class RemoteTestee:
    """OpenAI-compatible chat client; single-turn, stateless per question."""

    kind = "remote"

    def __init__(self, cfg: TesteeConfig, api_key: str | None = None):
        if not cfg.base_url or not cfg.model:
            raise ConfigError("remote testee requires base_url and model")
        self.cfg = cfg
        self.api_key = api_key or os.environ.get("SEA_TESTEE_API_KEY", "")
        self._template = load_prompt("testee")
        import httpx

        self._client = httpx.Client(timeout=cfg.timeout_s)

    def answer(self, qa: QaItem, topic: str, para_embedding=None) -> AnswerRecord:
        prompt = render_prompt(
            self._template, topic=topic, que=qa.question, opts=qa.options_block()
        )
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        start = time.monotonic()
        last_exc: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
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
                estimated = not usage
                parsed = parse_choice(text)
                return AnswerRecord(
                    qa_id=qa.qa_id,
                    raw_text=text,
                    parsed=parsed,
                    correct=(parsed == qa.answer),
                    prompt_tokens=usage.get("prompt_tokens", len(prompt) // 4),
                    completion_tokens=usage.get("completion_tokens", len(text) // 4),
                    latency_s=time.monotonic() - start,
                    usage_estimated=estimated,
                )
            except Exception as exc:
                last_exc = exc
                if attempt < self.cfg.max_retries:
                    time.sleep(min(2.0**attempt, 8.0))
        # Transport failure after retries: UNPARSABLE with a note, zero tokens.
        return AnswerRecord(
            qa_id=qa.qa_id,
            raw_text="",
            parsed=UNPARSABLE,
            correct=False,
            prompt_tokens=0,
            completion_tokens=0,
            latency_s=time.monotonic() - start,
            usage_estimated=True,
            error_note=f"transport failure: {last_exc}",
        )


def make_testee(cfg: TesteeConfig, landscape: ErrorLandscape | None = None):
    if cfg.kind == "simulated":
        if landscape is None:
            raise ConfigError("simulated testee requires an error landscape")
        return SimulatedTestee(landscape, cfg)
    if cfg.kind == "remote":
        return RemoteTestee(cfg)
    raise ConfigError(f"unknown testee kind: {cfg.kind!r}")


def load_landscape(path) -> ErrorLandscape:
    return ErrorLandscape.from_dict(json.loads(open(path).read()))
