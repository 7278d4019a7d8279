"""
Does certainty track classifier skill?
======================================

A simulated classifier answers each variant correctly with probability
theta * (1 - difficulty). Sweeping theta shows the ensemble's certainty
rising with it, and collapsing to a unanimous vote at theta = 1.
"""

from ensemble_certainty.simulator import IntentModel, SimConfig, hypothesis_sweep

wrong = ["/contacts", "/sales_invoices", "/services", "/products"]
intents = (
    IntentModel.uniform("/contact_balances", wrong, 0.5, [0.0] * 15),
    IntentModel.uniform("/stock_items", wrong, 0.5, [0.0] * 15),
)
cfg = SimConfig(intents, n_variants=15, seed=7, trials=2000)

# at theta = 0 the votes split over the wrong labels alone, so certainty can
# sit above its theta = 0.2 value; the rise is monotone from there on
print("theta  certainty  true-share  var(true-share)")
for row in hypothesis_sweep(cfg, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]):
    print(f"{row.theta:5.1f}  {row.mean_ensemble_accuracy:9.4f}  {row.mean_true_label_share:10.4f}"
          f"  {row.vote_share_variance:.5f}")

# harder wordings pull the true-label share down at fixed theta
hard = SimConfig(tuple(m.with_theta(0.8) for m in intents), 15, 7, 2000)
harder = SimConfig(tuple(IntentModel.uniform(m.true_label, wrong, 0.8, [0.3] * 15) for m in intents), 15, 7, 2000)
print("easy wording:", hypothesis_sweep(hard, [0.8])[0].mean_true_label_share)
print("hard wording:", hypothesis_sweep(harder, [0.8])[0].mean_true_label_share)
