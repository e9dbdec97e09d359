# # Divergence between two samples, two ways
#
# The representation JSD compares the (unit-trace) covariance matrices of two
# samples after mapping them into a feature space. With an explicit feature
# map we work with D x D covariances; with a kernel we work with the pooled
# (N + M) x (N + M) Gram matrix. Both give the same number.

# %%
import numpy as np

from repjsd.divergence import CovariancePair, rjsd_cov, rjsd_from_gram, rjsd_kernel, upper_bound
from repjsd.features import map_rff, sample_rff

rng = np.random.default_rng(0)
X = rng.standard_normal((200, 2))
Y = rng.standard_normal((150, 2)) + [1.5, 0.0]

# %% [markdown]
# Random Fourier features approximate a Gaussian kernel. Every row of the
# embedding has unit norm, so each covariance has trace one.

# %%
fmap = sample_rff(2, 64, sigma=1.0, seed=1)
px, py = map_rff(fmap, X), map_rff(fmap, Y)
pair = CovariancePair.from_features(px, py)
print("trace of C_X:", np.trace(pair.cx))
print("covariance route:", rjsd_cov(pair))

# %% [markdown]
# The same features through the pooled Gram matrix. Its nonzero spectrum
# matches that of the mixture covariance, so the values agree to round-off.

# %%
pz = np.vstack([px, py])
print("Gram route:      ", rjsd_from_gram(pz @ pz.T, len(px)))

# %% [markdown]
# The exact Gaussian kernel gives a value of the same size; 32 random
# frequencies only approximate it. Neither exceeds the upper bound set by the
# sample sizes.

# %%
print("exact kernel:    ", rjsd_kernel(X, Y, sigma=1.0))
print("upper bound:     ", upper_bound(len(X), len(Y)))
print("X against itself:", rjsd_kernel(X, X, sigma=1.0))
