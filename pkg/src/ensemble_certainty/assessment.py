"""Calibration of correct/incorrect certainty distributions and scoring of
new predictions against them.

A new ensemble certainty ``u`` is judged by two tail probabilities: how low
``u`` is among certainties of *correct* predictions (``P_correct(U <= u)``)
and how high it is among certainties of *incorrect* ones
(``P_incorrect(U > u)``). Whichever is larger indicates the distribution
``u`` more plausibly came from.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import ClassLabel, EnsembleResult, TrueLabel, label_key
from .stats import EmpiricalDistribution, KsReport, ks_2samp

log = logging.getLogger(__name__)

SMALL_SAMPLE_N = 20
MIN_CLASS_SAMPLES = 5
STRONG_RATIO = 2.0


class CalibrationError(ValueError):
    pass


class Verdict(str, enum.Enum):
    MORE_LIKELY_CORRECT = "more_likely_correct"
    SLIGHTLY_MORE_LIKELY_CORRECT = "slightly_more_likely_correct"
    SLIGHTLY_MORE_LIKELY_INCORRECT = "slightly_more_likely_incorrect"
    MORE_LIKELY_INCORRECT = "more_likely_incorrect"

    @property
    def text(self) -> str:
        return self.value.replace("_", " ").capitalize()


class Triage(str, enum.Enum):
    CONFIDENT_CORRECT = "confident_correct"
    CONFIDENT_INCORRECT = "confident_incorrect"
    NOT_CONFIDENT_INCORRECT = "not_confident_incorrect"
    NOT_CONFIDENT_CORRECT = "not_confident_correct"


@dataclass(frozen=True)
class ClassDistributions:
    """Raw per-class certainty samples; either side may be empty."""

    correct: tuple[float, ...] = ()
    incorrect: tuple[float, ...] = ()

    def add(self, value: float, was_correct: bool) -> "ClassDistributions":
        if was_correct:
            return ClassDistributions(tuple(sorted(self.correct + (value,))), self.incorrect)
        return ClassDistributions(self.correct, tuple(sorted(self.incorrect + (value,))))

    def usable(self, min_samples: int) -> bool:
        return len(self.correct) >= min_samples and len(self.incorrect) >= min_samples


@dataclass(frozen=True)
class CalibrationModel:
    correct: EmpiricalDistribution
    incorrect: EmpiricalDistribution
    ks: KsReport
    per_class: Mapping[ClassLabel, ClassDistributions] | None = None
    n_consumed: int = 0
    n_excluded: int = 0
    created: str = ""
    min_class_samples: int = MIN_CLASS_SAMPLES
    warnings: tuple[str, ...] = ()

    def distributions_for(
        self, class_hint: ClassLabel | None
    ) -> tuple[EmpiricalDistribution, EmpiricalDistribution, bool]:
        """(correct, incorrect, used_per_class) for the given class."""
        if class_hint is not None and self.per_class:
            cd = self.per_class.get(class_hint)
            if cd is not None and cd.usable(self.min_class_samples):
                return EmpiricalDistribution(cd.correct), EmpiricalDistribution(cd.incorrect), True
        return self.correct, self.incorrect, False


@dataclass(frozen=True)
class Assessment:
    u_new: float
    p_low_given_correct: float
    p_high_given_incorrect: float
    verdict: Verdict
    per_class: bool = False
    warnings: tuple[str, ...] = field(default_factory=tuple)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sample_warnings(n_correct: int, n_incorrect: int) -> list[str]:
    out = []
    if n_correct < SMALL_SAMPLE_N:
        out.append(f"small sample: only {n_correct} correct predictions (< {SMALL_SAMPLE_N})")
    if n_incorrect < SMALL_SAMPLE_N:
        out.append(f"small sample: only {n_incorrect} incorrect predictions (< {SMALL_SAMPLE_N})")
    return out


def _build(
    correct: Sequence[float],
    incorrect: Sequence[float],
    per_class: Mapping[ClassLabel, ClassDistributions] | None,
    n_excluded: int,
    min_class_samples: int,
    extra_warnings: Iterable[str] = (),
    created: str | None = None,
) -> CalibrationModel:
    if len(correct) < 2:
        side = "empty" if not correct else "has a single sample"
        raise CalibrationError(f"correct side {side}; need at least 2 correct predictions")
    if len(incorrect) < 2:
        side = "empty" if not incorrect else "has a single sample"
        raise CalibrationError(f"incorrect side {side}; need at least 2 incorrect predictions")
    dc, di = EmpiricalDistribution(correct), EmpiricalDistribution(incorrect)
    warnings = list(extra_warnings) + _sample_warnings(dc.n, di.n)
    for w in warnings:
        log.warning(w)
    return CalibrationModel(
        correct=dc,
        incorrect=di,
        ks=ks_2samp(dc, di),
        per_class=dict(sorted(per_class.items())) if per_class is not None else None,
        n_consumed=dc.n + di.n,
        n_excluded=n_excluded,
        created=created or _now(),
        min_class_samples=min_class_samples,
        warnings=tuple(warnings),
    )


def calibrate(
    results: Iterable[tuple[EnsembleResult, TrueLabel]],
    per_class: bool = False,
    min_class_samples: int = MIN_CLASS_SAMPLES,
    created: str | None = None,
) -> CalibrationModel:
    """Split ensemble certainties by prediction correctness and fit both ECDFs.

    All-abstain results (null prediction) are skipped with a warning.
    Per-class samples are keyed by the *predicted* class, the only class
    known when a new prediction is assessed. ``created`` defaults to now.
    """
    correct: list[float] = []
    incorrect: list[float] = []
    classes: dict[ClassLabel, ClassDistributions] = {}
    excluded = 0
    seen = 0
    for result, true_label in results:
        seen += 1
        if result.prediction is None:
            excluded += 1
            continue
        u = float(result.ensemble_accuracy)
        ok = result.prediction == label_key(true_label)
        (correct if ok else incorrect).append(u)
        if per_class:
            cd = classes.get(result.prediction, ClassDistributions())
            classes[result.prediction] = cd.add(u, ok)
    if seen == 0:
        raise CalibrationError("no calibration results given")
    extra = [f"excluded {excluded} all-abstain result(s)"] if excluded else []
    return _build(correct, incorrect, classes if per_class else None, excluded, min_class_samples, extra, created)


def update(model: CalibrationModel, result: EnsembleResult, true_label: TrueLabel) -> CalibrationModel:
    """Fold one labelled result into the model; returns a new model."""
    if result.prediction is None:
        w = f"ignored all-abstain result {result.intent_id!r}"
        log.warning(w)
        return replace(model, n_excluded=model.n_excluded + 1, warnings=model.warnings + (w,))
    u = float(result.ensemble_accuracy)
    ok = result.prediction == label_key(true_label)
    correct = list(model.correct.samples) + ([u] if ok else [])
    incorrect = list(model.incorrect.samples) + ([] if ok else [u])
    per_class = None
    if model.per_class is not None:
        per_class = dict(model.per_class)
        per_class[result.prediction] = per_class.get(result.prediction, ClassDistributions()).add(u, ok)
    extra = [f"excluded {model.n_excluded} all-abstain result(s)"] if model.n_excluded else []
    return _build(correct, incorrect, per_class, model.n_excluded, model.min_class_samples, extra)


def verdict(p_low: float, p_high: float, strong_ratio: float = STRONG_RATIO) -> Verdict:
    """Ratio rule: the larger tail probability wins; a ratio of at least
    ``strong_ratio`` makes the call "more likely", otherwise "slightly".
    Equal values lean correct.
    """
    if p_low >= p_high:
        strong = p_low >= strong_ratio * p_high and p_low > 0
        return Verdict.MORE_LIKELY_CORRECT if strong else Verdict.SLIGHTLY_MORE_LIKELY_CORRECT
    strong = p_high >= strong_ratio * p_low
    return Verdict.MORE_LIKELY_INCORRECT if strong else Verdict.SLIGHTLY_MORE_LIKELY_INCORRECT


def assess(
    model: CalibrationModel, u_new: float, class_hint: ClassLabel | None = None
) -> Assessment:
    if not 0.0 <= u_new <= 1.0:
        raise ValueError(f"u_new must be in [0, 1], got {u_new}")
    correct, incorrect, used_class = model.distributions_for(class_hint)
    p_low = correct.cdf(u_new)
    p_high = incorrect.sf(u_new)
    warnings = []
    if p_low == 0.0 and p_high == 0.0:
        warnings.append("certainty lies outside both calibration supports; verdict is a default")
    if class_hint is not None and model.per_class is not None and not used_class:
        warnings.append(f"too few calibration samples for class {class_hint!r}; used global distributions")
    return Assessment(u_new, p_low, p_high, verdict(p_low, p_high), used_class, tuple(warnings))


def assess_result(
    model: CalibrationModel, result: EnsembleResult, per_class: bool = True
) -> Assessment:
    """Assess a stored ensemble result; an all-abstain result scores u=0."""
    if result.prediction is None:
        a = assess(model, 0.0)
        return replace(a, warnings=a.warnings + ("all variants abstained; scored as u=0",))
    return assess(model, float(result.ensemble_accuracy), result.prediction if per_class else None)


def confidence_threshold(model: CalibrationModel) -> float:
    return float(np.median(model.correct.samples))


def triage(
    model: CalibrationModel,
    assessment: Assessment,
    was_correct: bool | None,
    threshold: float | None = None,
) -> Triage:
    """Offline labelling aid for curating training data.

    ``CONFIDENT_INCORRECT`` items are the ones worth adding disambiguating
    training examples for.
    """
    if was_correct is None:
        raise ValueError("triage needs the ground truth (offline use only)")
    if threshold is None:
        threshold = confidence_threshold(model)
    confident = assessment.u_new >= threshold
    if confident:
        return Triage.CONFIDENT_CORRECT if was_correct else Triage.CONFIDENT_INCORRECT
    return Triage.NOT_CONFIDENT_CORRECT if was_correct else Triage.NOT_CONFIDENT_INCORRECT
