"""File formats: variant sets and runs as JSON Lines, calibration snapshots as
a single JSON document.

Every record carries ``schema_version``. Fields this version does not know
are kept in ``extra`` and written back unchanged.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .assessment import CalibrationModel, ClassDistributions
from .backends import REPHRASE_TEMPLATE, load_template
from .domain import (
    ClassifierOutput,
    EnsembleResult,
    TaskKind,
    TrueLabel,
    VariantSet,
    label_from_json,
    label_to_json,
    validate_variant_set,
)
from .stats import EmpiricalDistribution, KsReport, ks_2samp
from .voting import ensemble_result

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUPPORTED_VERSIONS = {1}


class DatasetError(ValueError):
    pass


def _check_version(d: Mapping[str, Any], where: str) -> None:
    if "schema_version" not in d:
        raise DatasetError(f"{where}: missing schema_version")
    if d["schema_version"] not in SUPPORTED_VERSIONS:
        raise DatasetError(f"{where}: unsupported schema_version {d['schema_version']!r}")


def _iter_json_lines(path: str | os.PathLike):
    """Yield (line_number, object) for non-blank lines."""
    p = Path(path)
    try:
        fh = p.open("r", encoding="utf-8-sig", newline=None)
    except OSError as exc:
        raise DatasetError(f"{p}: {exc.strerror or exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{p}:{lineno}: malformed record ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"{p}:{lineno}: record is not an object")
            yield lineno, obj


def _dumps(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _append_lines(path: str | os.PathLike, lines: Iterable[str]) -> int:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    try:
        with p.open("a", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
                n += 1
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise DatasetError(f"{p}: {exc.strerror or exc}") from exc
    return n


# -- variant sets ------------------------------------------------------------


def load_variant_sets(path: str | os.PathLike) -> list[VariantSet]:
    """Read, deduplicate and validate variant sets; fails on the first bad line."""
    out = []
    ids = set()
    for lineno, obj in _iter_json_lines(path):
        where = f"{path}:{lineno}"
        _check_version(obj, where)
        try:
            vs = VariantSet.from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{where}: malformed variant set ({exc})") from exc
        deduped = vs.deduplicated()
        if deduped.n != vs.n:
            log.info("%s: dropped %d duplicate variant(s)", where, vs.n - deduped.n)
        errors = validate_variant_set(deduped)
        if errors:
            raise DatasetError(f"{where}: " + "; ".join(errors))
        if deduped.intent_id in ids:
            raise DatasetError(f"{where}: duplicate intent_id {deduped.intent_id!r}")
        ids.add(deduped.intent_id)
        out.append(deduped)
    return out


def save_variant_sets(path: str | os.PathLike, sets: Iterable[VariantSet]) -> int:
    return _append_lines(path, (_dumps({"schema_version": SCHEMA_VERSION, **vs.to_dict()}) for vs in sets))


# -- runs --------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    intent_id: str
    backend: str
    template_id: str
    task_kind: TaskKind
    true_label: TrueLabel
    outputs: tuple[ClassifierOutput, ...]
    result: EnsembleResult
    timestamp: str = ""
    intent_text: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.extra,
            "schema_version": SCHEMA_VERSION,
            "intent_id": self.intent_id,
            "intent_text": self.intent_text,
            "backend": self.backend,
            "template_id": self.template_id,
            "task_kind": self.task_kind.value,
            "true_label": label_to_json(self.true_label),
            "outputs": [o.to_dict() for o in self.outputs],
            "result": self.result.to_dict(),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunRecord":
        known = {
            "schema_version", "intent_id", "intent_text", "backend", "template_id",
            "task_kind", "true_label", "outputs", "result", "timestamp",
        }
        return cls(
            intent_id=str(d["intent_id"]),
            backend=d["backend"],
            template_id=d["template_id"],
            task_kind=TaskKind(d["task_kind"]),
            true_label=label_from_json(d["true_label"]),
            outputs=tuple(ClassifierOutput.from_dict(o) for o in d["outputs"]),
            result=EnsembleResult.from_dict(d["result"]),
            timestamp=d.get("timestamp", ""),
            intent_text=d.get("intent_text", ""),
            extra={k: v for k, v in d.items() if k not in known},
        )


def make_run_record(
    vs: VariantSet,
    outputs: Sequence[ClassifierOutput],
    backend: str,
    template_id: str,
    timestamp: str | None = None,
) -> RunRecord:
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    result = ensemble_result(vs.intent_id, outputs, vs.true_label, vs.n)
    return RunRecord(
        vs.intent_id, backend, template_id, vs.task_kind, vs.true_label,
        tuple(outputs), result, timestamp, vs.intent_text,
    )


def replay(record: RunRecord) -> EnsembleResult:
    """Re-vote the stored outputs."""
    return ensemble_result(record.intent_id, record.outputs, record.true_label, len(record.outputs))


def save_run(path: str | os.PathLike, records: Iterable[RunRecord]) -> int:
    """Append records; returns how many were written."""
    return _append_lines(path, (_dumps(r.to_dict()) for r in records))


def load_run(path: str | os.PathLike, verify: bool = True) -> list[RunRecord]:
    out = []
    for lineno, obj in _iter_json_lines(path):
        where = f"{path}:{lineno}"
        _check_version(obj, where)
        try:
            rec = RunRecord.from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{where}: malformed run record ({exc})") from exc
        if verify and replay(rec) != rec.result:
            raise DatasetError(f"{where}: stored result does not match re-voted outputs")
        out.append(rec)
    return out


# -- calibration snapshots ---------------------------------------------------


def calibration_to_dict(model: CalibrationModel) -> dict[str, Any]:
    per_class = None
    if model.per_class is not None:
        per_class = {
            k: {"correct": list(v.correct), "incorrect": list(v.incorrect)}
            for k, v in sorted(model.per_class.items())
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "calibration",
        "correct": model.correct.samples.tolist(),
        "incorrect": model.incorrect.samples.tolist(),
        "ks": model.ks.to_dict(),
        "per_class": per_class,
        "min_class_samples": model.min_class_samples,
        "provenance": {
            "n_consumed": model.n_consumed,
            "n_excluded": model.n_excluded,
            "created": model.created,
        },
        "warnings": list(model.warnings),
    }


def calibration_from_dict(d: Mapping[str, Any], per_class: bool = True, where: str = "snapshot") -> CalibrationModel:
    _check_version(d, where)
    if d.get("kind") != "calibration":
        raise DatasetError(f"{where}: not a calibration snapshot")
    try:
        correct = EmpiricalDistribution(d["correct"])
        incorrect = EmpiricalDistribution(d["incorrect"])
        stored_ks = KsReport.from_dict(d["ks"])
        prov = d["provenance"]
        classes = d.get("per_class")
        warnings = list(d.get("warnings", []))
        pc = None
        if classes is not None:
            if per_class:
                pc = {
                    k: ClassDistributions(tuple(map(float, v["correct"])), tuple(map(float, v["incorrect"])))
                    for k, v in classes.items()
                }
            else:
                msg = "snapshot has per-class distributions but per-class mode is off; using global only"
                log.warning(msg)
                warnings.append(msg)
        model = CalibrationModel(
            correct=correct,
            incorrect=incorrect,
            ks=ks_2samp(correct, incorrect),
            per_class=pc,
            n_consumed=int(prov["n_consumed"]),
            n_excluded=int(prov.get("n_excluded", 0)),
            created=prov.get("created", ""),
            min_class_samples=int(d.get("min_class_samples", 5)),
            warnings=tuple(warnings),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{where}: corrupted calibration payload ({exc})") from exc
    if model.ks != stored_ks:
        raise DatasetError(f"{where}: stored KS report does not match the samples")
    if model.n_consumed != correct.n + incorrect.n:
        raise DatasetError(f"{where}: sample counts do not match provenance")
    return model


def save_calibration(path: str | os.PathLike, model: CalibrationModel) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    try:
        p.write_text(json.dumps(calibration_to_dict(model), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"{p}: {exc.strerror or exc}") from exc


def load_calibration(path: str | os.PathLike, per_class: bool = True) -> CalibrationModel:
    p = Path(path)
    try:
        d = json.loads(p.read_text(encoding="utf-8-sig"))
    except OSError as exc:
        raise DatasetError(f"{p}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{p}: corrupted calibration payload ({exc.msg})") from exc
    return calibration_from_dict(d, per_class=per_class, where=str(p))


# -- variant generation ------------------------------------------------------


def _split_listing(text: str) -> list[str]:
    text = text.strip()
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        try:
            items = json.loads(text[start : end + 1])
            if isinstance(items, list) and all(isinstance(s, str) for s in items):
                return items
        except json.JSONDecodeError:
            pass
    lines = []
    for line in text.splitlines():
        line = line.strip().lstrip("-*•").strip()
        head, dot, rest = line.partition(".")
        if dot and head.isdigit():
            line = rest.strip()
        if line:
            lines.append(line.strip("'\""))
    return lines


def generate_variants(backend, intent_text: str, n: int = 15, template_dir: str | None = None) -> list[str]:
    """Ask ``backend`` for up to ``n`` rephrasings of ``intent_text``.

    Exact duplicates (after trimming) are dropped, so fewer than ``n`` may
    come back; the shortfall is logged. Backend failures propagate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    system, user = load_template(REPHRASE_TEMPLATE, template_dir)
    prompt = "\n\n".join(t for t in (system.safe_substitute(n=n, question=intent_text),
                                      user.safe_substitute(n=n, question=intent_text)) if t)
    text = backend.generate(prompt)
    unique = list(dict.fromkeys(s.strip() for s in _split_listing(text) if s.strip()))[:n]
    if len(unique) < n:
        log.warning("generated %d unique variant(s) of %d requested for %r", len(unique), n, intent_text)
    return unique
