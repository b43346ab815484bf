"""Closed-form posterior over which index holds the target draw, checked by enumeration.

Run: python3 demos/03_posterior_oracle.py
"""

# %%
import numpy as np

from contrastlab import Categorical, IsotropicGaussian, brute_force_posterior, posterior_supervised, sample_supervised

rng = np.random.default_rng(0)
target, noise = IsotropicGaussian([1.0, 0.0]), IsotropicGaussian([0.0, 0.0])
s = sample_supervised(6, 3, target, noise, rng)
print("anchor", s.anchor, "known partners", s.positives)

# %% given the partners, which remaining index came from the target density?
closed = posterior_supervised(s.data, s.positives, target, noise)
oracle = brute_force_posterior(s.data, 3, target, noise).conditional(s.positives)
print("candidates :", closed.candidates)
print("closed form:", np.round(closed.probabilities, 4))
print("enumeration:", np.round(oracle.probabilities, 4))
print("max gap", np.max(np.abs(closed.probabilities - oracle.probabilities)))

# %% the same on an alphabet of three symbols
ct, cn = Categorical((0.5, 0.3, 0.2)), Categorical((0.2, 0.3, 0.5))
s = sample_supervised(5, 2, ct, cn, rng)
print(np.round(posterior_supervised(s.data, s.positives, ct, cn).probabilities, 4))
print(np.round(brute_force_posterior(s.data, 2, ct, cn).conditional(s.positives).probabilities, 4))
