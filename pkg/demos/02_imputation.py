"""Chained-equations imputation versus mean filling.

Five strongly correlated columns lose 30% of their cells at random.
Iterated per-column regressions recover them far better than column means,
and the fitted model applies to held-out rows without refitting.
"""

import numpy as np

from icumort.impute import apply_imputation, impute_fit_transform

rng = np.random.default_rng(0)
z = rng.normal(size=1500)
X = np.column_stack([2.0 * z, -1.5 * z + 3.0, 0.7 * z - 1.0,
                     1.1 * z, -0.4 * z + 0.5])
X += 0.05 * rng.normal(size=X.shape)

mask = rng.random(X.shape) < 0.30
Xm = X.copy()
Xm[mask] = np.nan
print(f"masked cells: {mask.sum()} of {X.size}")

filled, model = impute_fit_transform(Xm, seed=1)
rmse = np.sqrt(np.mean((filled[mask] - X[mask]) ** 2))

means = np.nanmean(Xm, axis=0)
baseline = np.where(np.isnan(Xm), means[None, :], Xm)
rmse_mean = np.sqrt(np.mean((baseline[mask] - X[mask]) ** 2))

print(f"chained-equations RMSE: {rmse:.4f}")
print(f"mean-fill RMSE:         {rmse_mean:.4f}")
print(f"ratio: {rmse / rmse_mean:.3f}")

# the fitted column regressions transfer to new rows
z2 = rng.normal(size=300)
H = np.column_stack([2.0 * z2, -1.5 * z2 + 3.0, 0.7 * z2 - 1.0,
                     1.1 * z2, -0.4 * z2 + 0.5])
Hm = H.copy()
hmask = rng.random(H.shape) < 0.30
Hm[hmask] = np.nan
held = apply_imputation(model, Hm)
rmse_held = np.sqrt(np.mean((held[hmask] - H[hmask]) ** 2))
print(f"held-out RMSE with the train-fitted model: {rmse_held:.4f}")
