"""
Calibrating certainty and judging a new prediction
==================================================

A synthetic corpus (mostly skilled answers, a minority of confused ones) is
voted, split into correct and incorrect predictions, and compared with a
KS test. New certainties are then scored against both sides.
"""

from ensemble_certainty import assess, calibrate, ensemble_classify, ensemble_result
from ensemble_certainty.simulator import make_calibration_corpus, mixed_population

cfg = mixed_population(n_intents=179, seed=0)
results = []
for vs, backend in make_calibration_corpus(cfg):
    outputs = ensemble_classify(backend, vs)
    results.append((ensemble_result(vs.intent_id, outputs, vs.true_label), vs.true_label))

model = calibrate(results)
print(f"{model.correct.n} correct, {model.incorrect.n} incorrect")
print("KS:", model.ks)
for w in model.warnings:
    print("warning:", w)

for u in (0.55, 0.70, 0.85, 1.0):
    a = assess(model, u)
    print(f"u={u:.2f}  P(correct <= u)={a.p_low_given_correct:7.3%}  "
          f"P(incorrect > u)={a.p_high_given_incorrect:7.3%}  -> {a.verdict.text}")
