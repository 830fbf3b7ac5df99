"""Functional area detection toolkit."""

from ._core import (
    Checkpoint,
    Error,
    FormatError,
    categories,
    detect,
    evaluate,
    f1_score,
    iou,
    oversegment,
    propose,
    read_pnm,
    render,
    simulate_quadratic,
    spectral_radius,
    synthesize,
    write_pnm,
)

__all__ = [
    "Checkpoint",
    "Error",
    "FormatError",
    "categories",
    "detect",
    "evaluate",
    "f1_score",
    "iou",
    "oversegment",
    "propose",
    "read_pnm",
    "render",
    "simulate_quadratic",
    "spectral_radius",
    "synthesize",
    "write_pnm",
]
