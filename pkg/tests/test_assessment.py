from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import certainty_result
from ensemble_certainty.assessment import (
    CalibrationError,
    Triage,
    Verdict,
    assess,
    assess_result,
    calibrate,
    triage,
    update,
    verdict,
)
from ensemble_certainty.domain import EnsembleResult

GOLDEN_ROWS = [
    # u_new, p_low, p_high, verdict
    (0.70, Fraction(19, 166), Fraction(1, 13), Verdict.SLIGHTLY_MORE_LIKELY_CORRECT),
    (0.55, Fraction(8, 166), Fraction(6, 13), Verdict.MORE_LIKELY_INCORRECT),
    (0.85, Fraction(39, 166), Fraction(1, 13), Verdict.MORE_LIKELY_CORRECT),
]


@pytest.mark.parametrize(
    "p_low,p_high,expected",
    [
        (0.11446, 0.07692, Verdict.SLIGHTLY_MORE_LIKELY_CORRECT),
        (0.04819, 0.46154, Verdict.MORE_LIKELY_INCORRECT),
        (0.23494, 0.07692, Verdict.MORE_LIKELY_CORRECT),
    ],
)
def test_golden_verdicts_from_probabilities(p_low, p_high, expected):
    assert verdict(p_low, p_high) is expected


def test_verdict_edge_cases():
    assert verdict(0.3, 0.3) is Verdict.SLIGHTLY_MORE_LIKELY_CORRECT
    assert verdict(0.0, 0.0) is Verdict.SLIGHTLY_MORE_LIKELY_CORRECT
    assert verdict(0.1, 0.0) is Verdict.MORE_LIKELY_CORRECT
    assert verdict(0.0, 0.1) is Verdict.MORE_LIKELY_INCORRECT
    assert verdict(0.1, 0.15) is Verdict.SLIGHTLY_MORE_LIKELY_INCORRECT
    assert verdict(0.1, 0.2) is Verdict.MORE_LIKELY_INCORRECT


@pytest.mark.parametrize("u,p_low,p_high,expected", GOLDEN_ROWS)
def test_golden_rows_end_to_end(golden_model, u, p_low, p_high, expected):
    a = assess(golden_model, u)
    assert a.p_low_given_correct == float(p_low)
    assert a.p_high_given_incorrect == float(p_high)
    assert a.verdict is expected


def test_golden_model_shape(golden_model):
    assert (golden_model.correct.n, golden_model.incorrect.n) == (166, 13)
    assert golden_model.n_consumed == 179
    assert any("13 incorrect" in w for w in golden_model.warnings)


def test_calibrate_needs_both_sides():
    only_correct = [certainty_result(f"c{i}", 12, True) for i in range(10)]
    with pytest.raises(CalibrationError, match="incorrect side empty"):
        calibrate(only_correct)
    with pytest.raises(CalibrationError, match="single sample"):
        calibrate(only_correct + [certainty_result("x", 5, False)])


def test_calibrate_separated_minimal():
    res = [certainty_result("a", 14, True), certainty_result("b", 15, True),
           certainty_result("c", 5, False), certainty_result("d", 6, False)]
    m = calibrate(res)
    assert m.ks.statistic == 1.0
    assert len([w for w in m.warnings if "small sample" in w]) == 2


def test_calibrate_excludes_all_abstain():
    abstained = EnsembleResult("z", {}, 15, 15, None, Fraction(0), Fraction(0))
    res = [certainty_result(f"c{i}", 13, True) for i in range(3)]
    res += [certainty_result(f"i{i}", 6, False) for i in range(3)] + [(abstained, "/a")]
    m = calibrate(res)
    assert m.n_consumed == 6 and m.n_excluded == 1
    assert any("all-abstain" in w for w in m.warnings)


def test_assess_boundaries(golden_model):
    a = assess(golden_model, 0.0)
    assert a.p_low_given_correct == 0.0 and a.p_high_given_incorrect == 1.0
    assert a.verdict is Verdict.MORE_LIKELY_INCORRECT
    with pytest.raises(ValueError):
        assess(golden_model, 1.5)


def test_zero_probability_guard():
    res = [certainty_result(f"c{i}", 15, True) for i in range(3)]
    res += [certainty_result(f"i{i}", 3, False) for i in range(3)]
    m = calibrate(res)
    a = assess(m, 0.5)  # above every incorrect sample, below every correct one
    assert (a.p_low_given_correct, a.p_high_given_incorrect) == (0.0, 0.0)
    assert a.verdict is Verdict.SLIGHTLY_MORE_LIKELY_CORRECT
    assert a.warnings


def test_assess_monotone_in_u(golden_model):
    us = np.linspace(0, 1, 301)
    lows = [assess(golden_model, u).p_low_given_correct for u in us]
    highs = [assess(golden_model, u).p_high_given_incorrect for u in us]
    assert all(x <= y for x, y in zip(lows, lows[1:]))
    assert all(x >= y for x, y in zip(highs, highs[1:]))


def test_all_abstain_result_scores_as_zero(golden_model):
    r = EnsembleResult("z", {}, 15, 15, None, Fraction(0), Fraction(0))
    a = assess_result(golden_model, r)
    assert a.u_new == 0.0 and any("abstained" in w for w in a.warnings)


class TestPerClass:
    def _results(self):
        res = []
        # class /a: plenty of both sides, low certainties when wrong
        res += [certainty_result(f"a{i}", 10 + i % 5, True, label="/a") for i in range(8)]
        res += [certainty_result(f"ai{i}", 4 + i % 3, False, label="/a") for i in range(6)]
        # class /b: only 2 incorrect samples, so per-class is never used
        res += [certainty_result(f"b{i}", 9, True, label="/b") for i in range(10)]
        res += [certainty_result(f"bi{i}", 12, False, label="/b") for i in range(2)]
        return res

    def test_per_class_used_when_enough_samples(self):
        m = calibrate(self._results(), per_class=True)
        a = assess(m, 0.6, class_hint="/a")
        assert a.per_class
        assert a.p_low_given_correct == 0.0  # no /a correct sample at or below 9/15
        assert a != assess(m, 0.6)

    def test_fallback_equals_global_exactly(self):
        m = calibrate(self._results(), per_class=True)
        for u in np.linspace(0, 1, 31):
            hinted, plain = assess(m, u, class_hint="/b"), assess(m, u)
            assert not hinted.per_class
            assert (hinted.p_low_given_correct, hinted.p_high_given_incorrect, hinted.verdict) == (
                plain.p_low_given_correct, plain.p_high_given_incorrect, plain.verdict)
            assert (hinted.p_low_given_correct, hinted.verdict) == (
                assess(m, u, class_hint="/unknown").p_low_given_correct, assess(m, u, class_hint="/unknown").verdict)

    def test_per_class_off_ignores_hint(self):
        m = calibrate(self._results())
        assert m.per_class is None
        assert assess(m, 0.6, class_hint="/a") == assess(m, 0.6)


class TestUpdate:
    def test_correct_result_grows_correct_side(self, golden_model):
        m2 = update(golden_model, *certainty_result("new", 14, True))
        assert m2.correct.n == golden_model.correct.n + 1
        assert m2.incorrect == golden_model.incorrect

    def test_all_abstain_leaves_distributions(self, golden_model):
        r = EnsembleResult("z", {}, 15, 15, None, Fraction(0), Fraction(0))
        m2 = update(golden_model, r, "/a")
        assert m2.correct == golden_model.correct and m2.ks == golden_model.ks
        assert m2.warnings[-1].startswith("ignored all-abstain")

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.tuples(st.integers(1, 15), st.booleans(), st.sampled_from(["/a", "/b"])), min_size=4, max_size=40),
        st.tuples(st.integers(1, 15), st.booleans(), st.sampled_from(["/a", "/b", "/c"])),
    )
    def test_update_equals_recalibration(self, base, new):
        base = [(2, True, "/a"), (3, True, "/a"), (4, False, "/b"), (5, False, "/b")] + base
        results = [certainty_result(f"q{i}", k, ok, label=lab) for i, (k, ok, lab) in enumerate(base)]
        extra = certainty_result("new", new[0], new[1], label=new[2])
        m = update(calibrate(results, per_class=True), *extra)
        ref = calibrate(results + [extra], per_class=True)
        assert m.correct == ref.correct and m.incorrect == ref.incorrect
        assert m.ks == ref.ks and m.per_class == ref.per_class


class TestTriage:
    def test_cells(self):
        # correct-side median 13/15, below 0.93
        res = [certainty_result(f"c{i}", k, True) for i, k in enumerate([12, 13, 13, 14, 15])]
        res += [certainty_result(f"i{i}", k, False) for i, k in enumerate([5, 6, 8])]
        m = calibrate(res)
        assert triage(m, assess(m, 0.93), True) is Triage.CONFIDENT_CORRECT
        assert triage(m, assess(m, 0.93), False) is Triage.CONFIDENT_INCORRECT
        assert triage(m, assess(m, 0.35), False) is Triage.NOT_CONFIDENT_INCORRECT
        assert triage(m, assess(m, 0.35), True) is Triage.NOT_CONFIDENT_CORRECT
        assert triage(m, assess(m, 0.35), True, threshold=0.3) is Triage.CONFIDENT_CORRECT

    def test_default_threshold_is_correct_side_median(self, golden_model):
        med = float(np.median(golden_model.correct.samples))
        assert triage(golden_model, assess(golden_model, med), False) is Triage.CONFIDENT_INCORRECT
        below = med - 1e-9
        assert triage(golden_model, assess(golden_model, below), False) is Triage.NOT_CONFIDENT_INCORRECT

    def test_needs_ground_truth(self, golden_model):
        with pytest.raises(ValueError):
            triage(golden_model, assess(golden_model, 0.5), None)
