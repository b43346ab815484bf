"""SupCon can push two same-class embeddings apart; SINCERE never does.

Run: python3 demos/02_repulsion_witness.py
"""

# %%
import numpy as np

from contrastlab.checks import coefficient_suite
from contrastlab.gradients import supcon_factor_bounds, supcon_repulsion_witness

w = supcon_repulsion_witness(tau=0.1, n_pos=4)
print("batch (rows are unit vectors):")
print(np.round(w.Z, 3))
print("labels", w.labels)

# %% the factor multiplies the anchor direction in the gradient wrt the partner.
# A negative factor means descent moves the partner toward the anchor.
print(f"SupCon factor  {w.supcon_factor:+.4f}  (allowed range {supcon_factor_bounds(4)})")
print(f"SINCERE factor {w.sincere_factor:+.2e}  (always in [-1, 0])")

# %% the same holds on random batches
r = coefficient_suite(batches=1000, seed=0)
print(f"random batches: {r['range_violations']} range violations, "
      f"SINCERE factor max {r['sincere_factor_max']:.2e}")
