import json

import pytest

from sea.corpus import ingest_corpus
from sea.embedding import DeterministicProvider, EmbeddingProviderConfig


def make_doc(doc_id, n_paras=5, abstract="an abstract about things", category="Culture and the arts",
             text=None):
    return {
        "doc_id": doc_id,
        "title": f"Title {doc_id}",
        "abstract": abstract,
        "categories": [category],
        "paragraphs": [
            {
                "section_path": [f"Sec{i}"],
                "text": text or (f"paragraph {i} of {doc_id} " * 12),
            }
            for i in range(n_paras)
        ],
    }


def write_corpus(path, docs):
    with open(path, "w") as fh:
        for d in docs:
            fh.write(json.dumps(d) + "\n")
    return path


@pytest.fixture
def tiny_corpus(tmp_path):
    docs = [make_doc(f"doc{i}") for i in range(3)]
    path = write_corpus(tmp_path / "corpus.jsonl", docs)
    corpus, stats = ingest_corpus(path, min_para_len=10)
    return corpus


@pytest.fixture
def provider():
    return DeterministicProvider(EmbeddingProviderConfig(dimension=64))
