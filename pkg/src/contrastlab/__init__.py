"""Supervised and self-supervised contrastive losses on the unit sphere.

Loss kernels, analytic gradients, the latent-variable generative model
behind them, divergence floors on the ideal loss, and a small training
harness for synthetic data.
"""

__version__ = "0.1.0"

from .core import (
    DegenerateBatchError,
    EmbeddingMatrix,
    IndexPartition,
    ProjectionError,
    ValidationError,
    cosine_similarity_matrix,
    partition_for_anchor,
    random_unit_rows,
    renormalize_rows,
)
from .losses import (
    EPSILON_GRID,
    INFONCE,
    SINCERE,
    SUPCON,
    LossKind,
    LossReport,
    batch_loss,
    eps_supinfonce_pair_loss,
    info_nce_loss,
    pair_loss,
    sincere_pair_loss,
    supcon_pair_loss,
    supcon_pseudo_probability_sum,
)
from .gradients import (
    PairGradient,
    batch_gradient,
    finite_difference_gradient,
    relative_error,
    sincere_grad_wrt_anchor,
    sincere_grad_wrt_positive,
    supcon_grad_wrt_positive,
    supcon_repulsion_witness,
)
from .genmodel import (
    Categorical,
    DiagonalGaussian,
    IsotropicGaussian,
    brute_force_posterior,
    posterior_selfsup,
    posterior_supervised,
    sample_selfsup,
    sample_supervised,
)
from .bounds import (
    BoundReport,
    bound_report,
    check_bounds,
    ideal_loss_mc,
    ideal_supcon_loss_mc,
    kl_divergence,
    sincere_bound,
    supcon_bound,
    symmetrized_kl,
)
