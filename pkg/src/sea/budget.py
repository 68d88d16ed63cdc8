"""Budget ledger and error statistics.

The ledger supports two modes: counting API calls, or pricing tokens in
dollars from a user-supplied price table. Charges are category-separated
(testee / generation / embedding) so a budget can cover testee calls plus
generation (the evaluation-style budget) or total spend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MODE_API_CALLS = "api-calls"
MODE_TOKEN_DOLLARS = "token-dollars"

DEFAULT_COUNTED = ("testee", "generation")


@dataclass
class ChargeRecord:
    category: str
    model: str
    prompt_tokens: int
    completion_tokens: int
    calls: int
    amount: float  # in the ledger's unit

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BudgetLedger:
    mode: str = MODE_API_CALLS
    limit: float = 0.0
    # model -> (input $/1e6 tok, output $/1e6 tok)
    price_table: dict[str, tuple[float, float]] = field(default_factory=dict)
    counted_categories: tuple[str, ...] = DEFAULT_COUNTED
    totals: dict[str, float] = field(default_factory=dict)
    records: list[ChargeRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in (MODE_API_CALLS, MODE_TOKEN_DOLLARS):
            raise ConfigError(f"unknown budget mode {self.mode!r}")

    @property
    def consumed(self) -> float:
        return sum(self.totals.get(c, 0.0) for c in self.counted_categories)

    def total(self, category: str) -> float:
        return self.totals.get(category, 0.0)

    def charge(
        self,
        category: str,
        model: str = "",
        prompt_tokens: int = 0,
        completion_tokens: int = 0,
        calls: int = 1,
    ) -> float:
        """Add one charge; returns the new consumed total (counted categories)."""
        if prompt_tokens < 0 or completion_tokens < 0 or calls < 0:
            raise ValueError("charges must be non-negative")
        if self.mode == MODE_API_CALLS:
            amount = float(calls)
        else:
            if model not in self.price_table:
                raise ConfigError(f"model {model!r} missing from price table")
            p_in, p_out = self.price_table[model]
            amount = prompt_tokens * p_in / 1e6 + completion_tokens * p_out / 1e6
        self.totals[category] = self.totals.get(category, 0.0) + amount
        self.records.append(
            ChargeRecord(category, model, prompt_tokens, completion_tokens,
                         calls, amount)
        )
        return self.consumed

    def has_budget(self) -> bool:
        return self.consumed < self.limit

    def reconcile(self) -> bool:
        """Consumed equals the sum of all per-charge records, exactly."""
        by_cat: dict[str, float] = {}
        for r in self.records:
            by_cat[r.category] = by_cat.get(r.category, 0.0) + r.amount
        return all(
            by_cat.get(c, 0.0) == self.totals.get(c, 0.0) for c in
            set(by_cat) | set(self.totals)
        )

    def snapshot(self) -> dict:
        return {"mode": self.mode, "limit": self.limit, "totals": dict(self.totals)}

    def restore_totals(self, totals: dict[str, float]) -> None:
        self.totals = dict(totals)


def subset_error(wrong: int, total: int) -> float:
    """Question-pooled error: total wrong / total questions."""
    if total < 1:
        raise ValueError("need at least one record")
    return wrong / total


def errors_per_cost(n_source_errors: int, consumed: float) -> dict:
    ratio = consumed / n_source_errors if n_source_errors > 0 else None
    return {
        "n_source_errors": n_source_errors,
        "consumed": consumed,
        "cost_per_error": ratio,
    }


def pearson_binary(a: list[bool], b: list[bool]) -> float | None:
    """Pearson correlation of two binary vectors (phi coefficient).

    Returns None when either vector has zero variance.
    """
    if len(a) != len(b) or not a:
        raise ValueError("vectors must be non-empty and equal length")
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.std() == 0.0 or y.std() == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


@dataclass
class CrossValCell:
    provider: str
    testee: str
    n_questions: int
    accuracy: float
    correlation: float | None
    correlation_note: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def cross_validate_cell(
    provider_tag: str,
    testee_tag: str,
    provider_correct: dict[str, bool],
    testee_correct: dict[str, bool],
) -> CrossValCell:
    """One matrix cell: the testee answered every question of the provider's
    subset; correlation is Pearson over per-question binary correctness."""
    shared = sorted(set(provider_correct) & set(testee_correct))
    if not shared:
        raise ValueError("no shared questions between provider and testee")
    a = [provider_correct[q] for q in shared]
    b = [testee_correct[q] for q in shared]
    corr = pearson_binary(a, b)
    note = "" if corr is not None else "zero variance in one correctness vector"
    return CrossValCell(
        provider=provider_tag,
        testee=testee_tag,
        n_questions=len(shared),
        accuracy=sum(b) / len(b),
        correlation=corr,
        correlation_note=note,
    )


def per_paragraph_accuracy_pearson(
    provider_by_para: dict[str, float], testee_by_para: dict[str, float]
) -> float | None:
    """Alternative correlation statistic: Pearson over per-paragraph accuracy."""
    shared = sorted(set(provider_by_para) & set(testee_by_para))
    if len(shared) < 2:
        return None
    x = np.asarray([provider_by_para[p] for p in shared])
    y = np.asarray([testee_by_para[p] for p in shared])
    if x.std() == 0.0 or y.std() == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])
