"""Group-CAM saliency toolkit: grouped score-weighted class activation maps,
a Grad-CAM baseline, deletion/insertion and pointing-game evaluation, and a
saliency-guided fine-tuning augmenter, backed by a C++ core."""

from ._core import (
    Model,
    augment_image,
    deletion_curve,
    finetune_loop,
    finetune_mask,
    gaussian_blur2d,
    generate_fixtures,
    grad_cam,
    group_cam,
    insertion_curve,
    overall_score,
    pointing_hit,
    read_saliency_grid,
    sanity_check,
    train_fixture_model,
    write_saliency_grid,
)

__all__ = [
    "Model",
    "augment_image",
    "deletion_curve",
    "finetune_loop",
    "finetune_mask",
    "gaussian_blur2d",
    "generate_fixtures",
    "grad_cam",
    "group_cam",
    "insertion_curve",
    "overall_score",
    "pointing_hit",
    "read_saliency_grid",
    "sanity_check",
    "train_fixture_model",
    "write_saliency_grid",
]
