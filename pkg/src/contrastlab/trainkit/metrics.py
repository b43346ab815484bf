"""Nearest-neighbor margins, similarity histograms and weighted kNN accuracy."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import ValidationError

HIST_BINS = 40


@dataclass
class Histogram:
    edges: np.ndarray
    target_counts: np.ndarray
    noise_counts: np.ndarray

    def rows(self):
        for i in range(len(self.target_counts)):
            yield (float(self.edges[i]), float(self.edges[i + 1]),
                   int(self.target_counts[i]), int(self.noise_counts[i]))


def similarity_histogram(target_nn, noise_nn, bins: int = HIST_BINS) -> Histogram:
    """Fixed-width bins over [-1, 1]; NaNs are ignored."""
    edges = np.linspace(-1.0, 1.0, bins + 1)
    t = np.clip(np.asarray(target_nn)[np.isfinite(target_nn)], -1, 1)
    n = np.clip(np.asarray(noise_nn)[np.isfinite(noise_nn)], -1, 1)
    return Histogram(edges, np.histogram(t, edges)[0], np.histogram(n, edges)[0])


@dataclass
class MarginReport:
    target_nn: np.ndarray
    noise_nn: np.ndarray
    target_median: float
    noise_median: float
    margin: float
    per_class_margin: dict[int, float | None]
    histogram: Histogram
    per_class_histograms: dict[int, Histogram]


def nearest_neighbor_similarities(train_emb, train_labels, test_emb, test_labels, *, exclude_self: bool = False):
    """Max similarity of each test point to same-class and to other-class train points.

    ``exclude_self`` drops the diagonal when the test set *is* the train set.
    A test point whose class (or whose complement) is absent from the train
    set gets NaN.
    """
    train_emb, test_emb = np.asarray(train_emb), np.asarray(test_emb)
    train_labels, test_labels = np.asarray(train_labels), np.asarray(test_labels)
    sim = test_emb @ train_emb.T
    if exclude_self:
        if sim.shape[0] != sim.shape[1]:
            raise ValidationError("exclude_self needs the test set to be the train set")
        np.fill_diagonal(sim, -np.inf)
    same = test_labels[:, None] == train_labels[None, :]
    tnn = np.where(same, sim, -np.inf).max(axis=1)
    nnn = np.where(~same, sim, -np.inf).max(axis=1)
    return np.where(np.isfinite(tnn), tnn, np.nan), np.where(np.isfinite(nnn), nnn, np.nan)


def _median(a) -> float:
    a = np.asarray(a)
    a = a[np.isfinite(a)]
    return float(np.median(a)) if a.size else float("nan")


def margin_report(train_emb, train_labels, test_emb, test_labels, *, bins: int = HIST_BINS,
                  exclude_self: bool = False) -> MarginReport:
    """Median target-NN similarity minus median noise-NN similarity, pooled and per class."""
    if len(train_emb) == 0 or len(test_emb) == 0:
        raise ValidationError("margin_report needs nonempty train and test sets")
    tnn, nnn = nearest_neighbor_similarities(train_emb, train_labels, test_emb, test_labels,
                                             exclude_self=exclude_self)
    test_labels = np.asarray(test_labels)
    train_classes = set(np.unique(train_labels).tolist())
    per_class, per_hist = {}, {}
    for c in np.unique(test_labels).tolist():
        sel = test_labels == c
        per_hist[c] = similarity_histogram(tnn[sel], nnn[sel], bins)
        if c not in train_classes or not np.isfinite(nnn[sel]).any():
            per_class[c] = None
        else:
            per_class[c] = _median(tnn[sel]) - _median(nnn[sel])
    tm, nm = _median(tnn), _median(nnn)
    return MarginReport(tnn, nnn, tm, nm, tm - nm, per_class, similarity_histogram(tnn, nnn, bins), per_hist)


@dataclass
class KNNResult:
    k: int
    predictions: np.ndarray
    accuracy: float | None


def weighted_knn(train_emb, train_labels, test_emb, k: int, test_labels=None, *,
                 exclude_self: bool = False) -> KNNResult:
    """k nearest train points by cosine similarity; votes weighted by raw similarity.

    Neighbor ties go to the lower train index; class ties go to the smallest class id.
    """
    train_emb, test_emb = np.asarray(train_emb), np.asarray(test_emb)
    train_labels = np.asarray(train_labels)
    n_train = train_emb.shape[0] - (1 if exclude_self else 0)
    if not 1 <= k <= n_train:
        raise ValidationError(f"k must be in [1, {n_train}], got {k}")
    sim = test_emb @ train_emb.T
    if exclude_self:
        np.fill_diagonal(sim, -np.inf)
    classes = np.unique(train_labels)
    nbrs = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    nbr_sim = np.take_along_axis(sim, nbrs, axis=1)
    cls_idx = np.searchsorted(classes, train_labels[nbrs])
    votes = np.zeros((sim.shape[0], classes.size))
    rows = np.repeat(np.arange(sim.shape[0]), k)
    np.add.at(votes, (rows, cls_idx.reshape(-1)), nbr_sim.reshape(-1))
    pred = classes[np.argmax(votes, axis=1)]
    acc = None if test_labels is None else float(np.mean(pred == np.asarray(test_labels)))
    return KNNResult(k, pred, acc)


@dataclass
class MetricsReport:
    train_loss: list[float]
    margin: float
    target_median: float
    noise_median: float
    per_class_margin: dict[int, float | None]
    knn_accuracy: dict[int, float]
    histogram: Histogram | None = field(default=None, repr=False)
    per_class_histograms: dict[int, Histogram] = field(default_factory=dict, repr=False)
    evaluation: str = "heldout"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("histogram")
        d.pop("per_class_histograms")
        d["per_class_margin"] = {str(k): v for k, v in self.per_class_margin.items()}
        d["knn_accuracy"] = {str(k): v for k, v in self.knn_accuracy.items()}
        return d


def evaluate(train_emb, train_labels, test_emb=None, test_labels=None, *, ks=(1, 5),
             train_loss=(), bins: int = HIST_BINS) -> MetricsReport:
    """Margin and kNN metrics; without a test set, leave-one-out on the train set."""
    loo = test_emb is None
    if loo:
        test_emb, test_labels = train_emb, train_labels
    mr = margin_report(train_emb, train_labels, test_emb, test_labels, bins=bins, exclude_self=loo)
    knn = {k: weighted_knn(train_emb, train_labels, test_emb, k, test_labels, exclude_self=loo).accuracy
           for k in ks}
    return MetricsReport(list(train_loss), mr.margin, mr.target_median, mr.noise_median,
                         mr.per_class_margin, knn, mr.histogram, mr.per_class_histograms,
                         "leave-one-out" if loo else "heldout")
