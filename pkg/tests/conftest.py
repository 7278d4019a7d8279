import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ensemble_certainty.domain import TaskKind, VariantSet

# The supplier intent and its fifteen rephrasings.
SUPPLIER_VARIANTS = (
    "Who are the suppliers that I need to pay?",
    "Can you tell me the suppliers I'm currently indebted to?",
    "Which suppliers have outstanding payments from me?",
    "To which suppliers do I have financial obligations?",
    "I'd like to know the suppliers to whom I owe money.",
    "Could you list the suppliers that are awaiting payment from me?",
    "Who are the vendors expecting payments from me?",
    "What are the names of the suppliers I haven't paid yet?",
    "Can you identify the suppliers with unpaid invoices from me?",
    "To whom do I need to make payments among the suppliers?",
    "Which suppliers should I settle accounts with?",
    "Are there any suppliers I'm yet to pay?",
    "Who are the suppliers with pending payments from my side?",
    "Which suppliers am I in debt to currently?",
    "Could you specify the suppliers that I need to pay?",
)

ENDPOINTS = (
    "/contact_balances",
    "/stock_items",
    "/sales_invoices",
    "/services",
    "/contact_persons",
    "/contacts",
    "/products",
    "/financial_settings",
)

STOCK_ITEMS_RESPONSE = (
    "{'endpoint': '/stock_items', 'reason': 'Use the /stock_items endpoint since this "
    "contains the purchase order reorder information <|end|>'}"
)


@pytest.fixture
def supplier_set() -> VariantSet:
    return VariantSet(
        intent_id="suppliers-to-pay",
        intent_text=SUPPLIER_VARIANTS[0],
        variants=SUPPLIER_VARIANTS,
        true_label="/contact_balances",
        candidates=ENDPOINTS,
        task_kind=TaskKind.ENDPOINT,
    )


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(name, records):
        p = tmp_path / name
        p.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
        return p

    return _write


def certainty_result(intent_id: str, k: int, correct: bool, n: int = 15, label: str = "/a"):
    """(EnsembleResult, true_label) whose winner has k of n votes."""
    from fractions import Fraction

    from ensemble_certainty.domain import EnsembleResult

    tally = {label: k, **{f"/zz{i:02d}": 1 for i in range(n - k)}}
    truth = label if correct else "/wrong"
    true_acc = Fraction(k, n) if correct else Fraction(0)
    return EnsembleResult(intent_id, tally, n, 0, label, Fraction(k, n), true_acc), truth


def golden_results():
    """166 correct + 13 incorrect certainties (in fifteenths) chosen so that
    P_correct(U <= u) and P_incorrect(U > u) at u = 0.70, 0.55, 0.85 equal
    19/166, 8/166, 39/166 and 1/13, 6/13, 1/13."""
    correct_k = [7] * 4 + [8] * 4 + [9] * 6 + [10] * 5 + [11] * 10 + [12] * 10 + [13] * 40 + [14] * 45 + [15] * 42
    incorrect_k = [5] * 3 + [6] * 2 + [8] * 2 + [9] * 3 + [10] * 2 + [14]
    assert len(correct_k) == 166 and len(incorrect_k) == 13
    out = [certainty_result(f"c{i}", k, True) for i, k in enumerate(correct_k)]
    out += [certainty_result(f"i{i}", k, False) for i, k in enumerate(incorrect_k)]
    return out


@pytest.fixture
def golden_model():
    from ensemble_certainty.assessment import calibrate

    return calibrate(golden_results(), created="2025-01-01T00:00:00+00:00")


def pytest_terminal_summary(terminalreporter, config):
    from test_acceptance import CRITERIA_KEY

    lines = config.stash.get(CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
