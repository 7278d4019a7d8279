"""A generative stand-in for an LLM classifier.

Each intent has a *conceptual certainty* ``theta`` (how well the model knows
the concept) and each phrasing a *lexical difficulty* ``eps_j``. Variant ``j``
is answered correctly with probability ``theta * (1 - eps_j)``; otherwise the
answer is drawn from a confusion distribution over the wrong candidates.
With ``theta = 1`` and easy phrasings the answer is immune to rewording;
lowering ``theta`` makes the vote spread across phrasings.

Randomness comes from numpy's PCG64 bit generator. Every draw is keyed by a
``SeedSequence`` built from (seed, stream, ...) so results never depend on
call order or parallelism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .backends import PromptSpec, render_response
from .domain import ClassLabel, TaskKind, VariantSet

RNG_NAME = "numpy.PCG64/SeedSequence"


@dataclass(frozen=True)
class IntentModel:
    true_label: ClassLabel
    theta: float
    confusion: Mapping[ClassLabel, float]
    variant_difficulty: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant_difficulty", tuple(float(e) for e in self.variant_difficulty))
        object.__setattr__(self, "confusion", {k: float(self.confusion[k]) for k in sorted(self.confusion)})
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")
        if self.true_label in self.confusion:
            raise ValueError("confusion must exclude the true label")
        if not self.confusion:
            raise ValueError("confusion needs at least one wrong candidate")
        if any(p < 0 for p in self.confusion.values()) or abs(sum(self.confusion.values()) - 1.0) > 1e-12:
            raise ValueError("confusion must be a probability distribution")
        if not self.variant_difficulty:
            raise ValueError("need one difficulty per variant")
        if any(not 0.0 <= e <= 1.0 for e in self.variant_difficulty):
            raise ValueError("variant difficulties must lie in [0, 1]")

    @classmethod
    def uniform(
        cls, true_label: ClassLabel, wrong: Sequence[ClassLabel], theta: float, difficulty: Sequence[float]
    ) -> "IntentModel":
        return cls(true_label, theta, {w: 1.0 / len(wrong) for w in wrong}, tuple(difficulty))

    @property
    def candidates(self) -> tuple[ClassLabel, ...]:
        return tuple(sorted((self.true_label, *self.confusion)))

    @property
    def n_variants(self) -> int:
        return len(self.variant_difficulty)

    def p_correct(self) -> np.ndarray:
        return self.theta * (1.0 - np.asarray(self.variant_difficulty))

    def with_theta(self, theta: float) -> "IntentModel":
        return IntentModel(self.true_label, theta, self.confusion, self.variant_difficulty)

    def to_dict(self) -> dict[str, Any]:
        return {
            "true_label": self.true_label,
            "theta": self.theta,
            "confusion": dict(self.confusion),
            "variant_difficulty": list(self.variant_difficulty),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "IntentModel":
        return cls(d["true_label"], float(d["theta"]), d["confusion"], tuple(d["variant_difficulty"]))


@dataclass(frozen=True)
class SimConfig:
    intents: tuple[IntentModel, ...]
    n_variants: int = 15
    seed: int = 0
    trials: int = 1000
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "intents", tuple(self.intents))
        if self.n_variants < 1:
            raise ValueError("n_variants must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for m in self.intents:
            if m.n_variants != self.n_variants:
                raise ValueError("every intent needs n_variants difficulties")

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.extra,
            "rng": RNG_NAME,
            "seed": self.seed,
            "n_variants": self.n_variants,
            "trials": self.trials,
            "intents": [m.to_dict() for m in self.intents],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimConfig":
        """Build from a config mapping.

        Either ``intents`` lists explicit intent models, or ``population``
        holds keyword arguments for :func:`mixed_population`.
        """
        if "population" in d:
            kwargs = dict(d["population"])
            kwargs.setdefault("seed", d.get("seed", 0))
            kwargs.setdefault("n_variants", d.get("n_variants", 15))
            kwargs.setdefault("trials", d.get("trials", 1000))
            return mixed_population(**kwargs)
        known = {"rng", "seed", "n_variants", "trials", "intents"}
        return cls(
            intents=tuple(IntentModel.from_dict(m) for m in d["intents"]),
            n_variants=int(d.get("n_variants", 15)),
            seed=int(d.get("seed", 0)),
            trials=int(d.get("trials", 1000)),
            extra={k: v for k, v in d.items() if k not in known},
        )

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def make_rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def sim_classify(m: IntentModel, variant_index: int, rng: np.random.Generator) -> ClassLabel:
    """One simulated answer for variant ``variant_index``."""
    eps = m.variant_difficulty[variant_index]
    if rng.random() < m.theta * (1.0 - eps):
        return m.true_label
    labels = list(m.confusion)
    return labels[int(rng.choice(len(labels), p=list(m.confusion.values())))]


def simulate_votes(m: IntentModel, rng: np.random.Generator, trials: int) -> np.ndarray:
    """Vote counts, shape (trials, 1 + n_wrong); column 0 is the true label.

    Vectorised equivalent of calling :func:`sim_classify` for every variant
    of every trial.
    """
    n = m.n_variants
    hit = rng.random((trials, n)) < m.p_correct()
    wrong = rng.choice(len(m.confusion), size=(trials, n), p=list(m.confusion.values()))
    k = 1 + len(m.confusion)
    codes = np.where(hit, 0, wrong + 1)
    counts = np.zeros((trials, k), dtype=np.int64)
    for c in range(k):
        counts[:, c] = (codes == c).sum(axis=1)
    return counts


@dataclass(frozen=True)
class SweepRow:
    theta: float
    mean_ensemble_accuracy: float
    mean_true_label_share: float
    vote_share_variance: float


def hypothesis_sweep(cfg: SimConfig, theta_grid: Sequence[float]) -> list[SweepRow]:
    """Ensemble statistics as conceptual certainty varies.

    Every intent of ``cfg`` is re-run with each ``theta`` (difficulties and
    confusion held fixed) for ``cfg.trials`` ensembles. Paired seeds: the
    same (intent, trial) uses the same random stream at every theta.
    ``vote_share_variance`` is the variance of the true-label vote share
    across trials, averaged over intents.
    """
    rows = []
    for theta in theta_grid:
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {theta}")
        acc, share, var = [], [], []
        for i, m in enumerate(cfg.intents):
            counts = simulate_votes(m.with_theta(theta), make_rng(cfg.seed, i), cfg.trials)
            acc.append(counts.max(axis=1).mean() / cfg.n_variants)
            true_share = counts[:, 0] / cfg.n_variants
            share.append(true_share.mean())
            var.append(true_share.var())
        rows.append(SweepRow(float(theta), float(np.mean(acc)), float(np.mean(share)), float(np.mean(var))))
    return rows


class SimulatedBackend:
    """Backend answering the variants of one intent from its IntentModel.

    Answers depend only on (seed, stream, variant index), so re-asking the
    same variant returns the same answer, like greedy decoding.
    """

    task_kinds = frozenset({TaskKind.ENDPOINT})

    def __init__(self, model: IntentModel, variants: Sequence[str], seed: int = 0, stream: int = 0):
        if len(variants) != model.n_variants:
            raise ValueError("need one variant text per difficulty")
        self.model = model
        self.index = {v: j for j, v in enumerate(variants)}
        self.seed = seed
        self.stream = stream
        self.identity = f"simulator:theta={model.theta:g}"

    def respond(self, spec: PromptSpec, messages) -> str:
        j = self.index[spec.question]
        label = sim_classify(self.model, j, make_rng(self.seed, self.stream, j))
        return render_response(label, "simulated", TaskKind.ENDPOINT)


def placeholder_variants(intent_id: str, n: int) -> tuple[str, ...]:
    return tuple(f"{intent_id} (phrasing {j})" for j in range(n))


def make_calibration_corpus(cfg: SimConfig) -> list[tuple[VariantSet, SimulatedBackend]]:
    """Labelled variant sets, each paired with a simulated backend bound to it."""
    corpus = []
    for i, m in enumerate(cfg.intents):
        intent_id = f"sim-{i:04d}"
        variants = placeholder_variants(intent_id, cfg.n_variants)
        vs = VariantSet(intent_id, f"{intent_id} (intent)", variants, m.true_label, m.candidates, TaskKind.ENDPOINT)
        corpus.append((vs, SimulatedBackend(m, variants, cfg.seed, i)))
    return corpus


def mixed_population(
    n_intents: int = 179,
    n_classes: int = 10,
    majority_theta: float = 0.9,
    minority_theta: float = 0.3,
    minority_fraction: float = 0.08,
    minority_confusion_peak: float = 0.8,
    max_difficulty: float = 0.2,
    n_variants: int = 15,
    seed: int = 0,
    trials: int = 1000,
) -> SimConfig:
    """Population of well-known intents plus a minority of poorly-known ones.

    Minority intents put ``minority_confusion_peak`` of their confusion mass
    on a single look-alike class (a nebulous concept boundary), so they tend
    to be answered wrongly with middling certainty.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = make_rng(seed, 0xC0FFEE)
    classes = [f"/class_{c:02d}" for c in range(n_classes)]
    n_minor = int(round(minority_fraction * n_intents))
    minority = set(rng.choice(n_intents, size=n_minor, replace=False).tolist())
    intents = []
    for i in range(n_intents):
        true = classes[int(rng.integers(n_classes))]
        wrong = [c for c in classes if c != true]
        difficulty = rng.uniform(0.0, max_difficulty, size=n_variants)
        if i in minority:
            peak = wrong[int(rng.integers(len(wrong)))]
            rest = (1.0 - minority_confusion_peak) / (len(wrong) - 1) if len(wrong) > 1 else 0.0
            confusion = {w: (minority_confusion_peak if w == peak else rest) for w in wrong}
            if len(wrong) == 1:
                confusion = {peak: 1.0}
            # renormalise away float drift so the sum is 1 within 1e-12
            total = sum(confusion.values())
            confusion = {k: v / total for k, v in confusion.items()}
            intents.append(IntentModel(true, minority_theta, confusion, tuple(difficulty)))
        else:
            intents.append(IntentModel.uniform(true, wrong, majority_theta, difficulty))
    return SimConfig(tuple(intents), n_variants, seed, trials)
