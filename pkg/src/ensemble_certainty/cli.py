"""Command-line entry point.

Subcommands:
  run        pose every variant of every intent to a backend, write a run file
  calibrate  build correct/incorrect certainty distributions from run files
  assess     score certainties (or a whole run file) against a calibration
  report     per-question vote histograms and reasoning lengths as CSV
  simulate   theta sweep or synthetic calibration corpus from a simulator config

Exit codes: 0 ok, 1 usage/config, 2 data validation, 3 backend failure.
The backend credential is read from the environment variable named in the
backend config (``api_key_env``), never from a flag.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .assessment import CalibrationError, assess, assess_result, calibrate
from .backends import (
    DEFAULT_TEMPLATES,
    BackendError,
    OpenAICompatBackend,
    ScriptedBackend,
    ensemble_classify,
)
from .dataset import (
    DatasetError,
    load_calibration,
    load_run,
    load_variant_sets,
    make_run_record,
    save_calibration,
    save_run,
    save_variant_sets,
)
from .domain import Abstain, AbstainReason, VariantSet, label_key
from .simulator import (
    IntentModel,
    SimConfig,
    SimulatedBackend,
    hypothesis_sweep,
    make_calibration_corpus,
)

log = logging.getLogger("ensemble_certainty")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3
ABSTAIN_CATEGORY = "<abstained>"


class ConfigError(ValueError):
    pass


def _pct(x: float) -> str:
    return f"{100.0 * float(x):.3f}%"


def _read_json(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc


# -- backends from config ----------------------------------------------------


def _simulated_backend(cfg: dict, vs: VariantSet, stream: int, seed: int) -> SimulatedBackend:
    if not isinstance(vs.true_label, str):
        raise ConfigError("the simulator backend only handles endpoint tasks")
    wrong = [c for c in vs.candidates if c != vs.true_label]
    if not wrong:
        raise ConfigError(f"intent {vs.intent_id!r} has no wrong candidates to simulate")
    diff = cfg.get("difficulty", 0.0)
    difficulty = [float(diff)] * vs.n if isinstance(diff, (int, float)) else [float(e) for e in diff]
    if len(difficulty) != vs.n:
        raise ConfigError(f"difficulty list has {len(difficulty)} entries, intent {vs.intent_id!r} has {vs.n} variants")
    theta = float(cfg.get("theta", 1.0))
    confusion = cfg.get("confusion", "uniform")
    if confusion == "uniform":
        model = IntentModel.uniform(vs.true_label, wrong, theta, difficulty)
    else:
        weights = {w: float(confusion.get(w, 0.0)) for w in wrong}
        total = sum(weights.values())
        if total <= 0:
            raise ConfigError("confusion weights must cover some wrong candidate")
        model = IntentModel(vs.true_label, theta, {k: v / total for k, v in weights.items()}, tuple(difficulty))
    return SimulatedBackend(model, vs.variants, seed, stream)


def backend_factory(cfg: dict, seed: int | None):
    """Returns ``backend_for(vs, index)`` for the configured backend kind."""
    kind = cfg.get("kind")
    if kind == "openai":
        try:
            shared = OpenAICompatBackend(
                base_url=cfg["base_url"],
                model=cfg["model"],
                api_key_env=cfg.get("api_key_env", "OPENAI_API_KEY"),
                timeout=float(cfg.get("timeout", 60.0)),
                retries=int(cfg.get("retries", 2)),
                backoff=float(cfg.get("backoff", 0.5)),
            )
        except KeyError as exc:
            raise ConfigError(f"openai backend config needs {exc}") from exc
        return lambda vs, i: shared
    if kind == "mock":
        shared = ScriptedBackend(cfg.get("responses", {}), default=cfg.get("default"), identity=cfg.get("identity", "mock"))
        return lambda vs, i: shared
    if kind == "simulator":
        s = int(seed if seed is not None else cfg.get("seed", 0))
        return lambda vs, i: _simulated_backend(cfg, vs, i, s)
    raise ConfigError(f"unknown backend kind {kind!r} (expected openai, mock or simulator)")


# -- commands ----------------------------------------------------------------


def cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("run needs --config pointing at a backend config")
    if not args.out:
        raise ConfigError("run needs --out for the run file")
    cfg = _read_json(args.config)
    sets = load_variant_sets(args.dataset)
    backend_for = backend_factory(cfg, args.seed)
    template_id = cfg.get("template_id")
    template_dir = cfg.get("template_dir")
    records = []
    n_outputs = n_backend_err = 0
    for i, vs in enumerate(sets):
        backend = backend_for(vs, i)
        outputs = ensemble_classify(backend, vs, args.parallelism, template_id, template_dir)
        tid = template_id or DEFAULT_TEMPLATES[vs.task_kind]
        rec = make_run_record(vs, outputs, backend.identity, tid, timestamp=cfg.get("timestamp"))
        records.append(rec)
        n_outputs += len(outputs)
        n_backend_err += sum(o.answer == Abstain(AbstainReason.BACKEND_ERROR) for o in outputs)
        r = rec.result
        flag = "  (tie)" if r.tied else ""
        print(
            f"{r.intent_id}\tprediction={r.prediction}\tensemble_accuracy={_pct(r.ensemble_accuracy)}"
            f"\ttrue_label_accuracy={_pct(r.true_label_accuracy)}\tabstained={r.n_abstained}/{r.n_total}{flag}"
        )
    if not args.append:
        Path(args.out).unlink(missing_ok=True)
    save_run(args.out, records)
    if n_outputs and n_backend_err == n_outputs:
        print(f"error: backend unreachable, every call failed ({n_backend_err})", file=sys.stderr)
        return EXIT_BACKEND
    correct = sum(r.result.prediction == label_key(r.true_label) for r in records)
    print(f"{len(records)} intents, {correct} predicted correctly, "
          f"{sum(r.result.n_abstained for r in records)} abstentions")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if not args.out:
        raise ConfigError("calibrate needs --out for the snapshot")
    records = [rec for path in args.runs for rec in load_run(path)]
    # stamp with the newest run record so repeated calls give identical snapshots
    as_of = max((r.timestamp for r in records), default="") or None
    try:
        model = calibrate(((r.result, r.true_label) for r in records), per_class=args.per_class, created=as_of)
    except CalibrationError as exc:
        print(f"error: {exc}. Calibration needs both correct and incorrect predictions; "
              "add more labelled runs or harder questions.", file=sys.stderr)
        return EXIT_DATA
    save_calibration(args.out, model)
    print(f"correct n={model.correct.n}, incorrect n={model.incorrect.n}")
    print(f"KS: {model.ks}")
    for w in model.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def _parse_u(text: str) -> float:
    t = text.strip()
    try:
        u = float(t[:-1]) / 100.0 if t.endswith("%") else float(t)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid certainty {text!r}") from exc
    if not 0.0 <= u <= 1.0:
        raise argparse.ArgumentTypeError(f"certainty {text!r} outside [0, 1]")
    return u


def format_assessment(a, label: str | None = None) -> str:
    head = f"{label}\t" if label else ""
    tail = "".join(f"\twarning: {w}" for w in a.warnings)
    return (
        f"{head}u_new={_pct(a.u_new)}"
        f"\t{_pct(a.p_low_given_correct)} of correct predictions have values <= u_new"
        f"\t{_pct(a.p_high_given_incorrect)} of incorrect predictions have values > u_new"
        f"\t{a.verdict.text}{tail}"
    )


def cmd_assess(args) -> int:
    model = load_calibration(args.calibration, per_class=not args.global_only)
    if not args.u and not args.run:
        raise ConfigError("assess needs --u values or --run")
    for u in args.u or []:
        print(format_assessment(assess(model, u, args.class_hint)))
    if args.run:
        for rec in load_run(args.run):
            a = assess_result(model, rec.result, per_class=not args.global_only)
            print(format_assessment(a, f"{rec.intent_id}\tprediction={rec.result.prediction}"))
    return EXIT_OK


def report_rows(rec) -> list[tuple[str, int, bool]]:
    """(category, count, is_true_label), most votes first, ties by label."""
    true_key = label_key(rec.true_label)
    rows = [(k, c, k == true_key) for k, c in sorted(rec.result.tally.items(), key=lambda kv: (-kv[1], kv[0]))]
    if rec.result.n_abstained:
        rows.append((ABSTAIN_CATEGORY, rec.result.n_abstained, False))
    return rows


def cmd_report(args) -> int:
    out = Path(args.out_dir or args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    records = load_run(args.run)
    with (out / "histograms.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["intent_id", "intent_text", "category", "count", "is_true_label", "true_label_accuracy"])
        for rec in records:
            for cat, count, is_true in report_rows(rec):
                w.writerow([rec.intent_id, rec.intent_text, cat, count, str(is_true).lower(),
                            f"{100 * float(rec.result.true_label_accuracy):.2f}"])
    with (out / "reasoning.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["intent_id", "variant_index", "answer", "reason_length"])
        for rec in records:
            for o in rec.outputs:
                w.writerow([rec.intent_id, o.variant_index, o.vote_key or ABSTAIN_CATEGORY, len(o.reason_text)])
    print(f"wrote {out / 'histograms.csv'} and {out / 'reasoning.csv'} for {len(records)} intents")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate needs --config pointing at a simulator config")
    raw = _read_json(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = SimConfig.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulator config: {exc}") from exc

    if args.mode == "sweep":
        grid = [float(t) for t in args.thetas.split(",")]
        rows = hypothesis_sweep(cfg, grid)
        fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "mean_ensemble_accuracy", "mean_true_label_share", "vote_share_variance"])
            for r in rows:
                w.writerow([f"{r.theta:g}", f"{r.mean_ensemble_accuracy:.6f}",
                            f"{r.mean_true_label_share:.6f}", f"{r.vote_share_variance:.6f}"])
        finally:
            if fh is not sys.stdout:
                fh.close()
        return EXIT_OK

    if not args.out:
        raise ConfigError("corpus mode needs --out DIR")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("variant_sets.jsonl", "run.jsonl"):
        (out / name).unlink(missing_ok=True)
    corpus = make_calibration_corpus(cfg)
    save_variant_sets(out / "variant_sets.jsonl", (vs for vs, _ in corpus))
    records = [
        make_run_record(vs, ensemble_classify(b, vs, args.parallelism), b.identity,
                        DEFAULT_TEMPLATES[vs.task_kind], timestamp="simulated")
        for vs, b in corpus
    ]
    save_run(out / "run.jsonl", records)
    n_ok = sum(r.result.prediction == label_key(r.true_label) for r in records)
    print(f"wrote {len(records)} simulated intents to {out} ({n_ok} predicted correctly)")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="backend config (run) or simulator config (simulate), JSON")
    p.add_argument("--seed", type=int, default=d, help="override the configured seed")
    p.add_argument("--parallelism", type=int, default=argparse.SUPPRESS if suppress else 4,
                   help="concurrent backend calls (default 4); never changes results")
    p.add_argument("--out", default=d, help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ensemble-certainty",
        description="Certainty of LLM classifications from ensembles over paraphrased questions.",
        parents=[_common(False)],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(True)

    p = sub.add_parser("run", parents=[common], help="ensemble-classify every intent in a dataset")
    p.add_argument("dataset", help="variant-set JSONL file")
    p.add_argument("--append", action="store_true", help="append to an existing run file instead of replacing it")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", parents=[common], help="fit certainty distributions from run files")
    p.add_argument("runs", nargs="+", help="run JSONL file(s)")
    p.add_argument("--per-class", action="store_true", help="also keep per-class distributions")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("assess", parents=[common], help="score certainties against a calibration snapshot")
    p.add_argument("calibration", help="calibration snapshot JSON")
    p.add_argument("--u", type=_parse_u, action="append", help="certainty to assess, e.g. 0.7 or 70%%; repeatable")
    p.add_argument("--run", help="assess every intent of a run file")
    p.add_argument("--class-hint", help="predicted class for per-class distributions (with --u)")
    p.add_argument("--global-only", action="store_true", help="ignore per-class distributions")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("report", parents=[common], help="CSV histogram data per question")
    p.add_argument("run", help="run JSONL file")
    p.add_argument("out_dir", nargs="?", help="output directory (or use --out)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", parents=[common], help="simulator theta sweep or synthetic corpus")
    p.add_argument("--mode", choices=["sweep", "corpus"], default="sweep")
    p.add_argument("--thetas", default="0.2,0.4,0.6,0.8,1.0", help="comma-separated theta grid (sweep)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"error: backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
