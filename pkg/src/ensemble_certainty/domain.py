"""Core data model: labels, parameter sets, variant sets, classifier outputs
and ensemble results.

All types are frozen dataclasses. Each has ``to_dict``/``from_dict`` for the
line-oriented persistence in :mod:`ensemble_certainty.dataset`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Union

# Labels are opaque, case-sensitive strings ("None"/"NULL" included).
ClassLabel = str

PARAM_SEPARATOR = "|"
EMPTY_PARAMS_KEY = "<empty>"
DEFAULT_N_VARIANTS = 15


class TaskKind(str, enum.Enum):
    ENDPOINT = "endpoint"
    PARAMETER = "parameter"


class AbstainReason(str, enum.Enum):
    PARSE_FAILURE = "parse_failure"
    NOT_IN_CANDIDATES = "not_in_candidates"
    BACKEND_ERROR = "backend_error"


def is_valid_label(label: object) -> bool:
    return isinstance(label, str) and bool(label.strip())


@dataclass(frozen=True)
class ParameterSet:
    """Canonical (sorted, duplicate-free) set of parameter labels."""

    params: tuple[ClassLabel, ...] = ()

    def __post_init__(self) -> None:
        canonical = tuple(sorted(set(self.params)))
        for p in canonical:
            if not is_valid_label(p):
                raise ValueError(f"invalid parameter label {p!r}")
            if PARAM_SEPARATOR in p:
                raise ValueError(f"parameter label {p!r} contains reserved separator {PARAM_SEPARATOR!r}")
        object.__setattr__(self, "params", canonical)

    @classmethod
    def of(cls, params: Iterable[ClassLabel]) -> "ParameterSet":
        return cls(tuple(params))

    @property
    def key(self) -> str:
        """Tally key: members joined with ``|``, or ``<empty>``."""
        return PARAM_SEPARATOR.join(self.params) if self.params else EMPTY_PARAMS_KEY

    @classmethod
    def from_key(cls, key: str) -> "ParameterSet":
        if key == EMPTY_PARAMS_KEY:
            return cls()
        return cls(tuple(key.split(PARAM_SEPARATOR)))

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def __contains__(self, item: object) -> bool:
        return item in self.params


TrueLabel = Union[ClassLabel, ParameterSet]


def label_key(label: TrueLabel) -> str:
    """The string a label is tallied under."""
    return label.key if isinstance(label, ParameterSet) else label


def label_to_json(label: TrueLabel) -> Any:
    return list(label.params) if isinstance(label, ParameterSet) else label


def label_from_json(value: Any) -> TrueLabel:
    if isinstance(value, list):
        return ParameterSet.of(value)
    if isinstance(value, str):
        return value
    raise ValueError(f"label must be a string or list of strings, got {type(value).__name__}")


# -- classifier answers ------------------------------------------------------


@dataclass(frozen=True)
class Single:
    label: ClassLabel


@dataclass(frozen=True)
class Multi:
    params: ParameterSet


@dataclass(frozen=True)
class Abstain:
    reason: AbstainReason


Answer = Union[Single, Multi, Abstain]


def answer_to_dict(answer: Answer) -> dict[str, Any]:
    if isinstance(answer, Single):
        return {"kind": "single", "label": answer.label}
    if isinstance(answer, Multi):
        return {"kind": "multi", "params": list(answer.params.params)}
    return {"kind": "abstain", "reason": answer.reason.value}


def answer_from_dict(d: Mapping[str, Any]) -> Answer:
    kind = d.get("kind")
    if kind == "single":
        return Single(d["label"])
    if kind == "multi":
        return Multi(ParameterSet.of(d["params"]))
    if kind == "abstain":
        return Abstain(AbstainReason(d["reason"]))
    raise ValueError(f"unknown answer kind {kind!r}")


@dataclass(frozen=True)
class ClassifierOutput:
    variant_index: int
    answer: Answer
    reason_text: str = ""
    raw_text: str = ""

    @property
    def abstained(self) -> bool:
        return isinstance(self.answer, Abstain)

    @property
    def vote_key(self) -> str | None:
        """Tally key for this output; ``None`` for abstentions."""
        if isinstance(self.answer, Single):
            return self.answer.label
        if isinstance(self.answer, Multi):
            return self.answer.params.key
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant_index": self.variant_index,
            "answer": answer_to_dict(self.answer),
            "reason_text": self.reason_text,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ClassifierOutput":
        return cls(
            variant_index=int(d["variant_index"]),
            answer=answer_from_dict(d["answer"]),
            reason_text=d.get("reason_text", ""),
            raw_text=d.get("raw_text", ""),
        )


# -- variant sets ------------------------------------------------------------


@dataclass(frozen=True)
class VariantSet:
    """One latent intent, its phrasings, ground truth and candidate pool.

    ``candidates`` keeps the given order since it is rendered into prompts.
    ``extra`` carries unknown fields from newer file versions.
    """

    intent_id: str
    intent_text: str
    variants: tuple[str, ...]
    true_label: TrueLabel
    candidates: tuple[ClassLabel, ...]
    task_kind: TaskKind = TaskKind.ENDPOINT
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "candidates", tuple(dict.fromkeys(self.candidates)))
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))

    @property
    def n(self) -> int:
        return len(self.variants)

    def deduplicated(self) -> "VariantSet":
        """Drop exact duplicates (after trimming), keeping first occurrences."""
        seen: dict[str, None] = {}
        for v in self.variants:
            seen.setdefault(v.strip(), None)
        return VariantSet(
            self.intent_id, self.intent_text, tuple(seen), self.true_label,
            self.candidates, self.task_kind, dict(self.extra),
        )

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.extra)
        d.update(
            intent_id=self.intent_id,
            intent_text=self.intent_text,
            variants=list(self.variants),
            true_label=label_to_json(self.true_label),
            candidates=list(self.candidates),
            task_kind=self.task_kind.value,
        )
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "VariantSet":
        known = {"intent_id", "intent_text", "variants", "true_label", "candidates", "task_kind", "schema_version"}
        extra = {k: v for k, v in d.items() if k not in known}
        return cls(
            intent_id=str(d["intent_id"]),
            intent_text=d.get("intent_text", ""),
            variants=tuple(d["variants"]),
            true_label=label_from_json(d["true_label"]),
            candidates=tuple(d["candidates"]),
            task_kind=TaskKind(d.get("task_kind", TaskKind.ENDPOINT.value)),
            extra=extra,
        )


def validate_variant_set(vs: VariantSet) -> list[str]:
    """Return every violated invariant as a message; empty list means ok."""
    errors: list[str] = []
    if not str(vs.intent_id).strip():
        errors.append("empty intent_id")
    if not vs.variants:
        errors.append("empty variants")
    if any(not isinstance(v, str) or not v.strip() for v in vs.variants):
        errors.append("blank variant text")
    trimmed = [v.strip() for v in vs.variants if isinstance(v, str)]
    if len(set(trimmed)) != len(trimmed):
        errors.append("duplicate variants")
    if not vs.candidates:
        errors.append("empty candidates")
    bad = [c for c in vs.candidates if not is_valid_label(c)]
    if bad:
        errors.append(f"invalid candidate labels {bad!r}")

    pool = set(vs.candidates)
    if vs.task_kind is TaskKind.ENDPOINT:
        if not isinstance(vs.true_label, str):
            errors.append("endpoint task needs a single true label")
        elif not is_valid_label(vs.true_label):
            errors.append("empty true label")
        elif vs.true_label not in pool:
            errors.append(f"label not in candidates: {vs.true_label!r}")
    else:
        if not isinstance(vs.true_label, ParameterSet):
            errors.append("parameter task needs a parameter-set true label")
        else:
            missing = [p for p in vs.true_label if p not in pool]
            if missing:
                errors.append(f"label not in candidates: {missing!r}")
    return errors


# -- ensemble results --------------------------------------------------------


def fraction_to_json(x: Fraction) -> dict[str, Any]:
    return {"num": x.numerator, "den": x.denominator, "value": float(x)}


def fraction_from_json(d: Mapping[str, Any]) -> Fraction:
    return Fraction(int(d["num"]), int(d["den"]))


@dataclass(frozen=True)
class EnsembleResult:
    """Vote tally and certainty scores for one intent.

    Accuracies are exact fractions of ``n_total`` (abstentions dilute them).
    ``tied`` records that the prediction was settled by the lexicographic
    tie-break.
    """

    intent_id: str
    tally: Mapping[ClassLabel, int]
    n_total: int
    n_abstained: int
    prediction: ClassLabel | None
    ensemble_accuracy: Fraction
    true_label_accuracy: Fraction
    tied: bool = False

    def check(self) -> list[str]:
        errors = []
        if sum(self.tally.values()) + self.n_abstained != self.n_total:
            errors.append("tally counts + abstentions != n_total")
        if self.prediction is None:
            if self.tally:
                errors.append("null prediction with non-empty tally")
        elif self.ensemble_accuracy != Fraction(self.tally.get(self.prediction, 0), self.n_total):
            errors.append("ensemble_accuracy != tally[prediction] / n_total")
        if self.true_label_accuracy > self.ensemble_accuracy:
            errors.append("true_label_accuracy exceeds ensemble_accuracy")
        return errors

    def to_dict(self) -> dict[str, Any]:
        return {
            "intent_id": self.intent_id,
            "tally": {k: self.tally[k] for k in sorted(self.tally)},
            "n_total": self.n_total,
            "n_abstained": self.n_abstained,
            "prediction": self.prediction,
            "ensemble_accuracy": fraction_to_json(self.ensemble_accuracy),
            "true_label_accuracy": fraction_to_json(self.true_label_accuracy),
            "tied": self.tied,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EnsembleResult":
        return cls(
            intent_id=str(d["intent_id"]),
            tally={str(k): int(v) for k, v in d["tally"].items()},
            n_total=int(d["n_total"]),
            n_abstained=int(d["n_abstained"]),
            prediction=d["prediction"],
            ensemble_accuracy=fraction_from_json(d["ensemble_accuracy"]),
            true_label_accuracy=fraction_from_json(d["true_label_accuracy"]),
            tied=bool(d.get("tied", False)),
        )
