import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sea.budget import (
    MODE_API_CALLS,
    MODE_TOKEN_DOLLARS,
    BudgetLedger,
    cross_validate_cell,
    errors_per_cost,
    pearson_binary,
    per_paragraph_accuracy_pearson,
    subset_error,
)
from sea.errors import ConfigError


def test_api_calls_mode_counts_calls():
    ledger = BudgetLedger(mode=MODE_API_CALLS, limit=10)
    ledger.charge("testee", calls=3)
    ledger.charge("generation", calls=2)
    ledger.charge("embedding", calls=100)  # not counted by default
    assert ledger.consumed == 5
    assert ledger.total("embedding") == 100
    assert ledger.has_budget()


def test_token_dollars_arithmetic():
    prices = {"m1": (2.0, 6.0)}  # $/1e6 input, $/1e6 output tokens
    ledger = BudgetLedger(mode=MODE_TOKEN_DOLLARS, limit=1.0, price_table=prices)
    ledger.charge("testee", model="m1", prompt_tokens=500_000,
                  completion_tokens=100_000)
    # 0.5M * 2/M + 0.1M * 6/M = 1.0 + 0.6
    assert ledger.consumed == pytest.approx(1.6)
    assert not ledger.has_budget()


def test_unknown_model_fatal_in_dollar_mode():
    ledger = BudgetLedger(mode=MODE_TOKEN_DOLLARS, limit=1.0, price_table={})
    with pytest.raises(ConfigError):
        ledger.charge("testee", model="mystery", prompt_tokens=10)


def test_unknown_mode_fatal():
    with pytest.raises(ConfigError):
        BudgetLedger(mode="per-diem", limit=1)


def test_negative_charge_rejected():
    ledger = BudgetLedger(mode=MODE_API_CALLS, limit=1)
    with pytest.raises(ValueError):
        ledger.charge("testee", prompt_tokens=-1)


def test_counted_categories_override():
    ledger = BudgetLedger(mode=MODE_API_CALLS, limit=10,
                          counted_categories=("testee",))
    ledger.charge("testee", calls=1)
    ledger.charge("generation", calls=5)
    assert ledger.consumed == 1


def test_budget_boundary_is_strict():
    ledger = BudgetLedger(mode=MODE_API_CALLS, limit=2)
    ledger.charge("testee", calls=1)
    assert ledger.has_budget()
    ledger.charge("testee", calls=1)
    assert not ledger.has_budget()  # consumed == limit stops the loop


def test_reconcile_detects_drift():
    ledger = BudgetLedger(mode=MODE_API_CALLS, limit=10)
    ledger.charge("testee", calls=2)
    assert ledger.reconcile()
    ledger.totals["testee"] += 1  # simulated corruption
    assert not ledger.reconcile()


def test_snapshot_restore_roundtrip():
    ledger = BudgetLedger(mode=MODE_API_CALLS, limit=10)
    ledger.charge("testee", calls=4)
    snap = ledger.snapshot()
    other = BudgetLedger(mode=snap["mode"], limit=snap["limit"])
    other.restore_totals(snap["totals"])
    assert other.consumed == ledger.consumed


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["testee", "generation", "embedding"]),
                          st.integers(min_value=0, max_value=5)),
                max_size=20))
def test_incremental_equals_batch_total(charges):
    ledger = BudgetLedger(mode=MODE_API_CALLS, limit=1e9)
    for cat, calls in charges:
        ledger.charge(cat, calls=calls)
    want = sum(c for cat, c in charges if cat in ("testee", "generation"))
    assert ledger.consumed == want
    assert ledger.reconcile()


def test_subset_error_pooled_vs_mean_of_means():
    # Paragraph A: 10 questions, 5 wrong. Paragraph B: 40 questions, 0 wrong.
    pooled = subset_error(5 + 0, 10 + 40)
    assert pooled == pytest.approx(0.1)
    mean_of_means = (5 / 10 + 0 / 40) / 2
    assert mean_of_means == pytest.approx(0.25)
    assert pooled != mean_of_means


def test_subset_error_requires_records():
    with pytest.raises(ValueError):
        subset_error(0, 0)


def test_errors_per_cost_null_ratio():
    out = errors_per_cost(0, 123.0)
    assert out["cost_per_error"] is None
    out = errors_per_cost(4, 100.0)
    assert out["cost_per_error"] == pytest.approx(25.0)


def test_pearson_binary_matches_numpy():
    a = [True, True, False, True, False, False, True, False]
    b = [True, False, False, True, False, True, True, False]
    got = pearson_binary(a, b)
    want = float(np.corrcoef(np.array(a, float), np.array(b, float))[0, 1])
    assert got == pytest.approx(want)


def test_pearson_binary_zero_variance_is_none():
    assert pearson_binary([True, True, True], [True, False, True]) is None
    assert pearson_binary([True, False], [False, False]) is None


def test_pearson_binary_validates_input():
    with pytest.raises(ValueError):
        pearson_binary([], [])
    with pytest.raises(ValueError):
        pearson_binary([True], [True, False])


def test_crossval_cell_accuracy_and_note():
    prov = {f"q{i}": i % 2 == 0 for i in range(10)}
    test = {f"q{i}": i % 2 == 0 for i in range(10)}  # identical model
    cell = cross_validate_cell("provA", "provA", prov, test)
    assert cell.n_questions == 10
    assert cell.accuracy == pytest.approx(0.5)
    assert cell.correlation == pytest.approx(1.0)
    assert cell.correlation_note == ""


def test_crossval_cell_zero_variance_null():
    prov = {f"q{i}": i % 2 == 0 for i in range(6)}
    test = {f"q{i}": True for i in range(6)}
    cell = cross_validate_cell("a", "b", prov, test)
    assert cell.correlation is None
    assert "zero variance" in cell.correlation_note
    assert cell.accuracy == 1.0


def test_crossval_cell_independent_models_near_zero():
    # Two independent coins: |phi| stays small over a large shared set.
    rng = np.random.default_rng(0)
    n = 20_000
    prov = {f"q{i}": bool(rng.random() < 0.5) for i in range(n)}
    test = {f"q{i}": bool(rng.random() < 0.5) for i in range(n)}
    cell = cross_validate_cell("a", "b", prov, test)
    assert abs(cell.correlation) < 0.05


def test_crossval_cell_requires_overlap():
    with pytest.raises(ValueError):
        cross_validate_cell("a", "b", {"q1": True}, {"q2": False})


def test_per_paragraph_accuracy_pearson():
    prov = {"p1": 0.1, "p2": 0.5, "p3": 0.9}
    test = {"p1": 0.2, "p2": 0.6, "p3": 1.0}
    assert per_paragraph_accuracy_pearson(prov, test) == pytest.approx(1.0)
    assert per_paragraph_accuracy_pearson({"p1": 0.1}, {"p1": 0.1}) is None
    assert per_paragraph_accuracy_pearson(
        {"p1": 0.5, "p2": 0.5}, {"p1": 0.1, "p2": 0.9}
    ) is None
