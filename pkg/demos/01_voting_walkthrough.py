"""
Voting over paraphrases
=======================

Fifteen rephrasings of one question go to a classifier, and the answers
are tallied. The winner's share of the votes is the ensemble's certainty.
"""

from ensemble_certainty import ScriptedBackend, TaskKind, VariantSet, ensemble_classify, ensemble_result
from ensemble_certainty.backends import render_response

variants = [f"Which endpoint lists what I owe suppliers? (wording {j})" for j in range(15)]
vs = VariantSet(
    intent_id="owed-to-suppliers",
    intent_text=variants[0],
    variants=variants,
    true_label="/contact_balances",
    candidates=["/contact_balances", "/contacts", "/sales_invoices"],
    task_kind=TaskKind.ENDPOINT,
)

# a scripted classifier: 8 votes for the right endpoint, 4 and 3 for others
answers = ["/contact_balances"] * 8 + ["/contacts"] * 4 + ["/sales_invoices"] * 3
script = {q: render_response(a, f"picked {a}", TaskKind.ENDPOINT) for q, a in zip(variants, answers)}

outputs = ensemble_classify(ScriptedBackend(script), vs)
result = ensemble_result(vs.intent_id, outputs, vs.true_label)

for label, count in sorted(result.tally.items(), key=lambda kv: -kv[1]):
    print(f"{label:20s} {'#' * count} {count}")

print("prediction:", result.prediction)
print("certainty (exact):", result.ensemble_accuracy)
print(f"certainty: {100 * float(result.ensemble_accuracy):.1f}%")

# an off-list answer is discarded and counts as an abstention
script[variants[0]] = render_response("/purchase_orders", "not offered", TaskKind.ENDPOINT)
diluted = ensemble_result(vs.intent_id, ensemble_classify(ScriptedBackend(script), vs), vs.true_label)
print("after one off-list answer:", diluted.tally, "abstained:", diluted.n_abstained,
      "certainty:", diluted.ensemble_accuracy)
