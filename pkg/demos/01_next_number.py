"""
Predicting the next number of a sequence
========================================

Two intervals for the next value of a short list of counts: the classical
normal-theory one and a distribution-free conformal one.
"""

# %%
import numpy as np

from conformal_ocm import conformal_old_examples, fisher_interval, grid_snap, load_bundled

counts = load_bundled("czuber.csv").y
print(len(counts), "values, mean", counts.mean().round(2), "sd", counts.std(ddof=1).round(3))

# %%
# normal-theory interval at 95%: mean +- t * s * sqrt(n / (n - 1))
normal = fisher_interval(counts, 0.05)
print("normal theory  ", normal, " integers:", grid_snap(normal, 1))

# %%
# conformal interval with "distance from the average" as the strangeness score
conformal = conformal_old_examples(counts, [0.05])[0.05]
print("conformal      ", conformal, " integers:", grid_snap(conformal, 1))

# both say 10..23 once we remember the data are counts

# %%
# the conformal guarantee holds for any exchangeable sequence, so check it on
# something far from normal: exponential draws, predicting each value from the
# ones before it
from conformal_ocm import ConformalRegressor, online_eval

rng = np.random.default_rng(0)
z = rng.exponential(size=300)
ledger = online_eval(np.empty((300, 0)), z, ConformalRegressor("average"), 0.1)
print("error rate at eps=0.1:", round(ledger.error_rate, 3))
