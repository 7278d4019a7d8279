"""
Step functions and the two-sample KS test
=========================================
"""

import numpy as np

from ensemble_certainty import EmpiricalDistribution, ks_2samp

correct = EmpiricalDistribution(
    np.array([13, 14, 14, 15, 15, 15, 12, 11, 14, 15]) / 15)
incorrect = EmpiricalDistribution(np.array([5, 6, 9, 8, 10, 14]) / 15)

# cdf counts samples at or below x, sf the ones strictly above
grid = np.linspace(0, 1, 11)
print("   x    F_correct  S_incorrect")
for x, c, s in zip(grid, correct.cdf(grid), incorrect.sf(grid)):
    print(f"{x:5.2f}  {c:9.3f}  {s:11.3f}")

# exact permutation p-value for tiny samples, asymptotic series otherwise
print(ks_2samp([0.1, 0.2, 0.3], [0.7, 0.8, 0.9]))
print(ks_2samp(correct, incorrect))

rng = np.random.default_rng(0)
print(ks_2samp(rng.beta(8, 2, 150), rng.beta(3, 3, 15)))
