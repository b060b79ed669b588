"""Adversarial masked-image-modeling semi-supervised segmentation.

Thin wrapper around the compiled core module. The main operations are:

- :func:`generate_data` -- write a synthetic dataset directory
- :func:`train` -- run one training configuration, returns final test metrics
- :func:`segment` -- apply a trained checkpoint to one image
- :func:`dice_score`, :func:`hausdorff`, :func:`evaluate` -- metrics
- :func:`sample_patch_mask`, :func:`supervised_loss` -- building blocks
- :func:`estimate_bound` -- measure the adaptation-bound terms
"""

from ._core import (
    ConfigError,
    IoError,
    NumericError,
    ShapeError,
    default_config,
    dice_score,
    estimate_bound,
    evaluate,
    generate_data,
    hausdorff,
    sample_patch_mask,
    segment,
    supervised_loss,
    train,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericError",
    "ShapeError",
    "default_config",
    "dice_score",
    "estimate_bound",
    "evaluate",
    "generate_data",
    "hausdorff",
    "sample_patch_mask",
    "segment",
    "supervised_loss",
    "train",
]
