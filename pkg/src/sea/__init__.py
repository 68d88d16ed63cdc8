"""Budget-constrained stochastic search for knowledge deficiencies in
black-box question-answering models.

The package iteratively probes a document corpus: retrieve paragraphs
semantically similar to prior failures, generate multiple-choice questions,
evaluate the testee, grow a source-error set, and prune it via a relation
DAG's cumulative error.
"""

__version__ = "0.1.0"
