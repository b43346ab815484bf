"""Synthetic data, hypersphere training and embedding-space metrics."""

from .data import Batch, Dataset, SyntheticDatasetSpec, class_mean_directions, generate_dataset, make_batches
from .encoders import FreeEmbeddingTable, MLPEncoder
from .metrics import (
    Histogram,
    KNNResult,
    MarginReport,
    MetricsReport,
    evaluate,
    margin_report,
    nearest_neighbor_similarities,
    similarity_histogram,
    weighted_knn,
)
from .train import SGD, TrainConfig, TrainingDivergedError, TrainResult, build_encoder, learning_rate, train


def embeddings_for_eval(result: TrainResult, dataset: Dataset):
    """``(train_emb, test_emb)``; ``test_emb`` is None for the table encoder (leave-one-out)."""
    enc = result.encoder
    if isinstance(enc, FreeEmbeddingTable):
        return enc.embed(), None
    return enc.embed(dataset.train_x), enc.embed(dataset.test_x)


def train_and_evaluate(cfg: TrainConfig, dataset: Dataset, ks=(1, 5)) -> tuple[TrainResult, MetricsReport]:
    result = train(cfg, dataset)
    tr, te = embeddings_for_eval(result, dataset)
    report = evaluate(tr, dataset.train_y, te, None if te is None else dataset.test_y,
                      ks=ks, train_loss=result.epoch_losses)
    return result, report


__all__ = [
    "Batch", "Dataset", "FreeEmbeddingTable", "Histogram", "KNNResult", "MLPEncoder", "MarginReport",
    "MetricsReport", "SGD", "SyntheticDatasetSpec", "TrainConfig", "TrainResult", "TrainingDivergedError",
    "build_encoder", "class_mean_directions", "embeddings_for_eval", "evaluate", "generate_dataset",
    "learning_rate", "make_batches", "margin_report", "nearest_neighbor_similarities",
    "similarity_histogram", "train", "train_and_evaluate", "weighted_knn",
]
