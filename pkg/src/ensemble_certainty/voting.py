"""Majority voting over the per-variant answers of one intent."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .domain import (
    ClassifierOutput,
    ClassLabel,
    EnsembleResult,
    Multi,
    Single,
    TrueLabel,
    label_key,
)


@dataclass(frozen=True)
class VoteTally:
    counts: Mapping[ClassLabel, int]
    n_total: int
    n_abstained: int = 0

    def __post_init__(self) -> None:
        if self.n_total < 1:
            raise ValueError("n_total must be >= 1")
        if self.n_abstained < 0:
            raise ValueError("n_abstained must be >= 0")
        if any(c <= 0 for c in self.counts.values()):
            raise ValueError("tally counts must be positive")
        if sum(self.counts.values()) + self.n_abstained != self.n_total:
            raise ValueError(
                f"counts ({sum(self.counts.values())}) + abstained ({self.n_abstained}) "
                f"!= n_total ({self.n_total})"
            )
        object.__setattr__(self, "counts", {k: self.counts[k] for k in sorted(self.counts)})


def tally(outputs: Sequence[ClassifierOutput], n_total: int | None = None) -> VoteTally:
    """Count identical answers; abstentions go to ``n_abstained``."""
    if n_total is None:
        n_total = len(outputs)
    if len(outputs) != n_total:
        raise ValueError(f"got {len(outputs)} outputs for n_total={n_total}")
    counts = Counter(o.vote_key for o in outputs)
    abstained = counts.pop(None, 0)
    return VoteTally(dict(counts), n_total, abstained)


def predict(t: VoteTally) -> tuple[ClassLabel | None, Fraction]:
    """Modal class and its vote share.

    Ties go to the lexicographically smallest label. With no votes at all
    the prediction is ``None`` and the share 0.
    """
    if not t.counts:
        return None, Fraction(0)
    top = max(t.counts.values())
    winner = min(k for k, c in t.counts.items() if c == top)
    return winner, Fraction(top, t.n_total)


def is_tied(t: VoteTally) -> bool:
    if not t.counts:
        return False
    top = max(t.counts.values())
    return sum(1 for c in t.counts.values() if c == top) > 1


def true_label_accuracy(t: VoteTally, label: TrueLabel) -> Fraction:
    return Fraction(t.counts.get(label_key(label), 0), t.n_total)


def marginal_parameter_tally(outputs: Sequence[ClassifierOutput]) -> dict[ClassLabel, float]:
    """Per-parameter inclusion rate over the non-abstaining outputs."""
    included: Counter[str] = Counter()
    voters = 0
    for o in outputs:
        if isinstance(o.answer, Single):
            raise ValueError("marginal tally needs parameter-set answers, got a single label")
        if isinstance(o.answer, Multi):
            voters += 1
            included.update(o.answer.params.params)
    if voters == 0:
        return {}
    return {p: included[p] / voters for p in sorted(included)}


def ensemble_result(
    intent_id: str,
    outputs: Sequence[ClassifierOutput],
    true_label: TrueLabel,
    n_total: int | None = None,
) -> EnsembleResult:
    t = tally(outputs, n_total)
    prediction, acc = predict(t)
    return EnsembleResult(
        intent_id=intent_id,
        tally=dict(t.counts),
        n_total=t.n_total,
        n_abstained=t.n_abstained,
        prediction=prediction,
        ensemble_accuracy=acc,
        true_label_accuracy=true_label_accuracy(t, true_label),
        tied=is_tied(t),
    )
