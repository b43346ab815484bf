"""Loss kernels side by side on one small batch.

Run: python3 demos/01_loss_identities.py
"""

# %%
import numpy as np

from contrastlab import (
    cosine_similarity_matrix, eps_supinfonce_pair_loss, info_nce_loss, partition_for_anchor,
    random_unit_rows, sincere_pair_loss, supcon_pair_loss,
)

rng = np.random.default_rng(3)
Z = random_unit_rows(rng, 7, 4)
labels = np.array([0, 0, 0, 1, 1, 2, 2])
sim = cosine_similarity_matrix(Z)
tau = 0.1

# %% anchor 0 has two same-class partners (1 and 2)
part = partition_for_anchor(labels, 0)
for p in part.positives:
    print(f"p={p}  SINCERE {sincere_pair_loss(sim, part, p, tau):.5f}  "
          f"SupCon {supcon_pair_loss(sim, part, p, tau):.5f}")
# SupCon also puts the other partner in the denominator, so it is never smaller

# %% zero margin reproduces SINCERE; a larger margin shrinks the target term in the
# denominator, so the loss can only go down
for eps in (0.0, 0.1, 0.5):
    print(f"eps={eps}: {eps_supinfonce_pair_loss(sim, part, 1, tau, eps):.5f}")

# %% with a single partner the supervised kernels collapse to InfoNCE
labels1 = np.array([0, 0, 1, 1, 2, 2, 2])
part1 = partition_for_anchor(labels1, 0)
# similarities to the partner: the anchor is the target, the other classes are noise
nce = info_nce_loss(sim[:, 1], 0, list(part1.noise), tau)
print("single partner:", sincere_pair_loss(sim, part1, 1, tau), supcon_pair_loss(sim, part1, 1, tau), nce)
