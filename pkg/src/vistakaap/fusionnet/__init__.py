"""Desk-scale hybrid fusion classifier (pair-level and late WeightedAdd fusion)."""

from .network import (
    BASELINE_PAIRS,
    VARIANTS,
    VISTA_PAIRS,
    Dense,
    ForwardResult,
    FusionPredictor,
    FusionTopology,
    WeightedAddLayer,
    build_topology,
    featurize,
    forward,
    gradients,
    loss,
    mean_loss,
    pairs_for,
    topology_from_dict,
    weighted_add_op,
)
from .train import (
    TrainConfig,
    TrainingReport,
    accuracy,
    effective_weights,
    make_synthetic_dataset,
    modality_ablation,
    split,
    train,
)

weighted_add = weighted_add_op
