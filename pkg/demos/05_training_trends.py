"""Train both supervised losses on synthetic clusters and compare loss and margin.

Run: python3 demos/05_training_trends.py   (about a minute)
"""

# %%
import numpy as np

from contrastlab.trainkit import SyntheticDatasetSpec, TrainConfig, generate_dataset, train_and_evaluate

rows = []
for k in (2, 10):
    for loss in ("sincere", "supcon"):
        finals, margins, accs = [], [], []
        for seed in range(2):
            ds = generate_dataset(SyntheticDatasetSpec(k_classes=k, seed=seed))
            res, rep = train_and_evaluate(TrainConfig(loss=loss, seed=seed), ds)
            finals.append(res.epoch_losses[-1])
            margins.append(rep.margin)
            accs.append(rep.knn_accuracy[1])
        rows.append((k, loss, np.mean(finals), np.mean(margins), np.mean(accs)))

# %%
print(" k  loss     final loss  margin  1-NN")
for k, loss, f, m, a in rows:
    print(f"{k:2d}  {loss:8s} {f:10.4f} {m:7.3f} {a:5.3f}")
# SupCon's loss stays high because same-class points sit in its denominator;
# the gap narrows with more classes since each class is a smaller share of the batch.
