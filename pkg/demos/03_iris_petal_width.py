"""
Predicting petal width from sepal length
========================================

The same 25 flowers, now treating petal width as a real-valued label.
"""

# %%
from conformal_ocm import RegressionTask, conformal_regress_exact, gaussian_linear_interval, grid_snap, load_bundled
from conformal_ocm.nonconformity import least_squares_affine
from conformal_ocm.conformal import count_profile

data = load_bundled("iris25.csv", label_column="petal")
X_old, y_old, x_new = data.X[:-1], data.y[:-1], data.X[-1]

# %%
# textbook t-interval from the least-squares line, then three conformal ones
for eps in (0.04, 0.08):
    print(f"-- {round(100 * (1 - eps))}%")
    textbook = gaussian_linear_interval(X_old, y_old, x_new, eps, intercept=True)
    print("  textbook     ", textbook, "->", grid_snap(textbook, 0.1))
    for measure in ("knn-reg", "least-squares", "least-squares-deleted"):
        region = conformal_regress_exact(RegressionTask(X_old, y_old, x_new, measure), [eps])[eps]
        print(f"  {measure:<13}", region, "->", grid_snap(region, 0.1))

# %%
# under the hood: every residual is |c_i y + d_i| in the unknown label y, and
# the p-value only changes where two of these lines cross
form = least_squares_affine(X_old, y_old, x_new)
print("new example's residual: |%.4f y %+.4f|" % (form.c[-1], form.d[-1]))
profile = count_profile(form)
for point, count in list(zip(profile.points, profile.point_counts))[:6]:
    print(f"  y = {point:7.4f}   {count} of 25 scores at least as large")
