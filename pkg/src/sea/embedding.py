"""Text embedding providers and the per-run paragraph embedding cache.

Two providers ship: a remote OpenAI-compatible embeddings client, and a
deterministic offline provider (token-hash bag-of-words, L2-normalized)
whose geometry makes textual overlap imply vector similarity, so retrieval
behavior is testable without a network.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmbeddingError

_TOKEN_RE = re.compile(r"[a-z0-9']+")


@dataclass
class EmbeddingProviderConfig:
    kind: str = "deterministic-test"  # "deterministic-test" | "remote"
    dimension: int = 64
    model: str = ""
    base_url: str = ""
    batch_size: int = 64
    truncate_chars: int = 8000
    max_retries: int = 3
    timeout_s: float = 30.0

    def fingerprint(self) -> str:
        return f"{self.kind}:{self.model or 'bow'}:d{self.dimension}"


class DeterministicProvider:
    """Token-hash bag-of-words embedder projected to d dims, L2-normalized.

    Each token hashes (blake2b) to a bucket and a sign; counts accumulate
    and the vector is normalized. Identical text always embeds identically.
    """

    def __init__(self, cfg: EmbeddingProviderConfig):
        self.cfg = cfg
        self._token_cache: dict[str, tuple[int, float]] = {}

    @property
    def dimension(self) -> int:
        return self.cfg.dimension

    def _token_slot(self, token: str) -> tuple[int, float]:
        hit = self._token_cache.get(token)
        if hit is None:
            h = int.from_bytes(
                hashlib.blake2b(token.encode(), digest_size=8).digest(), "big"
            )
            hit = (h % self.cfg.dimension, 1.0 if (h >> 62) & 1 else -1.0)
            self._token_cache[token] = hit
        return hit

    def embed(self, texts: list[str]) -> np.ndarray:
        d = self.cfg.dimension
        out = np.zeros((len(texts), d), dtype=np.float64)
        for i, text in enumerate(texts):
            text = text[: self.cfg.truncate_chars]
            tokens = _TOKEN_RE.findall(text.lower())
            if not tokens:
                raise EmbeddingError(f"cannot embed empty text (item {i})")
            for tok in tokens:
                slot, sign = self._token_slot(tok)
                out[i, slot] += sign
            norm = np.linalg.norm(out[i])
            if norm == 0.0:
                # All-cancelling token multiset; salt with token count so the
                # zero-vector contract holds for any non-empty text.
                out[i, len(tokens) % d] = 1.0
                norm = 1.0
            out[i] /= norm
        return out


class RemoteProvider:
    """OpenAI-compatible embeddings endpoint client with bounded retries."""

    def __init__(self, cfg: EmbeddingProviderConfig, api_key: str | None = None):
        if not cfg.base_url:
            raise ConfigError("remote embedding provider requires base_url")
        self.cfg = cfg
        self.api_key = api_key or os.environ.get("SEA_EMBED_API_KEY", "")
        import httpx

        self._client = httpx.Client(timeout=cfg.timeout_s)

    @property
    def dimension(self) -> int:
        return self.cfg.dimension

    def embed(self, texts: list[str]) -> np.ndarray:
        for i, t in enumerate(texts):
            if not t.strip():
                raise EmbeddingError(f"cannot embed empty text (item {i})")
        payload = {
            "model": self.cfg.model,
            "input": [t[: self.cfg.truncate_chars] for t in texts],
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_exc: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            try:
                resp = self._client.post(
                    f"{self.cfg.base_url.rstrip('/')}/embeddings",
                    json=payload,
                    headers=headers,
                )
                resp.raise_for_status()
                data = resp.json()["data"]
                vecs = np.array([row["embedding"] for row in data], dtype=np.float64)
                if vecs.shape != (len(texts), self.cfg.dimension):
                    raise EmbeddingError(
                        f"provider returned shape {vecs.shape}, "
                        f"expected ({len(texts)}, {self.cfg.dimension})"
                    )
                norms = np.linalg.norm(vecs, axis=1, keepdims=True)
                if np.any(norms == 0):
                    raise EmbeddingError("provider returned a zero vector")
                return vecs / norms
            except EmbeddingError:
                raise
            except Exception as exc:  # transport / HTTP / schema
                last_exc = exc
                if attempt < self.cfg.max_retries:
                    time.sleep(min(2.0**attempt, 8.0))
        raise EmbeddingError(f"embedding batch failed after retries: {last_exc}")


def make_provider(cfg: EmbeddingProviderConfig):
    if cfg.kind == "deterministic-test":
        return DeterministicProvider(cfg)
    if cfg.kind == "remote":
        return RemoteProvider(cfg)
    raise ConfigError(f"unknown embedding provider kind: {cfg.kind!r}")


def embed_texts(texts: list[str], provider) -> np.ndarray:
    """Embed texts in provider-sized batches, order-preserving."""
    if not texts:
        raise EmbeddingError("texts must be non-empty")
    bs = provider.cfg.batch_size
    chunks = [provider.embed(texts[i : i + bs]) for i in range(0, len(texts), bs)]
    return np.vstack(chunks)


@dataclass
class EmbeddingCache:
    """Per-run cache of paragraph embeddings keyed by id."""

    dimension: int
    _vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def get(self, key: str) -> np.ndarray:
        return self._vectors[key]

    def put(self, key: str, vec: np.ndarray) -> None:
        if vec.shape != (self.dimension,):
            raise EmbeddingError(
                f"cached vector dim {vec.shape} != {self.dimension}"
            )
        self._vectors[key] = vec

    def ensure(self, keys: list[str], texts: dict[str, str], provider) -> None:
        """Embed and cache any keys not present yet."""
        missing = [k for k in keys if k not in self._vectors]
        if not missing:
            return
        vecs = embed_texts([texts[k] for k in missing], provider)
        for k, v in zip(missing, vecs):
            self._vectors[k] = v

    def matrix(self, keys: list[str]) -> np.ndarray:
        return np.vstack([self._vectors[k] for k in keys])

    def save(self, path) -> None:
        keys = sorted(self._vectors)
        np.savez_compressed(
            path,
            keys=np.array(keys, dtype=object),
            vectors=np.vstack([self._vectors[k] for k in keys]) if keys else
            np.zeros((0, self.dimension)),
            dimension=self.dimension,
        )

    @classmethod
    def load(cls, path) -> "EmbeddingCache":
        data = np.load(path, allow_pickle=True)
        cache = cls(dimension=int(data["dimension"]))
        keys = list(data["keys"])
        vecs = data["vectors"]
        for i, k in enumerate(keys):
            cache._vectors[str(k)] = vecs[i]
        return cache
