"""
Classifying a flower from its sepal length
==========================================

25 flowers, two species, one feature.  The last flower is the one to classify.
"""

# %%
from fractions import Fraction

from conformal_ocm import ClassificationTask, conformal_classify, load_bundled

data = load_bundled("iris25.csv")
X_old, y_old, x_new = data.X[:-1], data.y[:-1], data.X[-1]
print("new sepal length:", x_new[0], " true species:", data.y[-1])

# %%
# three strangeness scores: nearest-neighbour ratio, distance to the species
# mean, and the widest separating band
for measure in ("knn-ratio", "label-mean", "band"):
    task = ClassificationTask(X_old, y_old, x_new, data.label_space, measure)
    result = conformal_classify(task, [0.08, 0.05, Fraction(1, 3)])
    ps = {k: f"{v * result.sizes[k]}/{result.sizes[k]}" for k, v in result.pvalues.items()}
    print(f"{measure:>10}  p={ps}  confidence={float(result.confidence):.2f}"
          f"  credibility={float(result.credibility):.2f}")

# %%
# regions shrink as epsilon grows; at 1/3 the nearest-neighbour region is empty,
# a hint that 6.8 is an unusual sepal for either species
task = ClassificationTask(X_old, y_old, x_new, data.label_space, "knn-ratio")
for eps, region in conformal_classify(task, [0.05, 0.08, Fraction(1, 3)]).regions.items():
    print(eps, sorted(region))

# %%
# comparing only with flowers of the candidate species
result = conformal_classify(task, within_label=True)
print("within-species p-values:", {k: str(v) for k, v in result.pvalues.items()})
