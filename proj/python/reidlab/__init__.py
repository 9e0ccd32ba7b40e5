"""Compact person re-identification toolkit (C++ core)."""

from ._core import (
    ConfigError,
    FormatError,
    arch_counts,
    cli,
    cross_entropy_smoothed,
    cyclic_lr,
    distance_matrix,
    evaluate,
    gem_pool,
    gen_synthetic,
    gradient_suite,
    is_snapshot_epoch,
    pairwise_distances,
    random_erase,
    track_sim,
    train_toy,
    triplet_loss,
    warmup_lr,
)

__version__ = "0.1.0"
