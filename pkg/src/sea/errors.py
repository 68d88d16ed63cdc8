"""Exception types shared across the package."""


class SeaError(Exception):
    """Base class for all package errors."""


class ConfigError(SeaError):
    """Invalid or inconsistent configuration."""


class IngestError(SeaError):
    """Unreadable or structurally broken corpus input."""


class EmbeddingError(SeaError):
    """Embedding provider failure or contract violation (e.g. empty text)."""


class QaGenerationError(SeaError):
    """Question generator produced unusable output after retries."""


class QaValidationError(SeaError):
    """A generator reply violates the mandated reply schema."""


class DagError(SeaError):
    """Relation-DAG invariant breach (e.g. duplicate source admission)."""


class ExhaustedNeighborhood(SeaError):
    """Hierarchical retrieval found no candidate documents."""


class CorpusExhausted(SeaError):
    """No active paragraphs remain anywhere in the knowledge base."""


class RunStoreError(SeaError):
    """Run-directory layout, locking, or checkpoint problems."""
