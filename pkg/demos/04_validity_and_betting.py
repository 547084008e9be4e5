"""
Checking validity on-line, and betting against it
=================================================

Run a conformal classifier through a stream, count its errors, then let a
bettor try to make money from them.
"""

# %%
import numpy as np

from conformal_ocm import ConformalClassifier, betting_audit, online_eval, permutation_experiment

rng = np.random.default_rng(1)
N = 1000
labels = rng.integers(0, 2, size=N)
X = rng.normal(loc=1.5 * labels)[:, None]
y = np.where(labels == 1, "b", "a").astype(object)

predictor = ConformalClassifier("label-mean", ("a", "b"))
ledger = online_eval(X, y, predictor, 0.05)
print("error rate:", round(ledger.error_rate, 4))
for key, value in ledger.aggregates().items():
    print(f"  {key:<24} {value}")

# %%
# the bettor stakes on each error at price eps; honest errors leave it poor
audit = betting_audit(ledger.errors, 0.05)
print("final capital on the honest stream:", round(audit.final_capital, 3))

# %%
# a drifting stream: halfway through, the two species swap where they live
flip = np.arange(N) >= N // 2
X_drift = rng.normal(loc=3.0 * (labels ^ flip))[:, None]
drift = online_eval(X_drift, y, predictor, 0.05)
print("error rate on the drifting stream:", round(drift.error_rate, 4))
print("bettor's capital:", round(betting_audit(drift.errors, 0.05).final_capital, 2))

# %%
# shuffling makes the stream exchangeable again, and the error rate falls back to eps
shuffled = permutation_experiment(X_drift, y, predictor, 0.05, trials=3, seed=0)
print("shuffled error rates:", shuffled.error_rates.round(4))
