"""Secure training engines over additively shared data."""

from .base import TrainResult
from .config import (
    DEFAULT_SIGMOID_COEFFS,
    TrainingConfig,
    horizontal_schedule,
    horizontal_triple_needs,
    schedule_digest,
    select_batch_owner,
    vertical_triple_needs,
)
from .horizontal import (
    HorizontalEngine,
    train_horizontal_linear,
    train_horizontal_logistic,
)
from .sigmoid import sigmoid_poly_shares
from .vertical import (
    VerticalEngine,
    train_vertical_linear,
    train_vertical_logistic,
)

__all__ = [
    "DEFAULT_SIGMOID_COEFFS",
    "HorizontalEngine",
    "TrainResult",
    "TrainingConfig",
    "VerticalEngine",
    "horizontal_schedule",
    "horizontal_triple_needs",
    "schedule_digest",
    "select_batch_owner",
    "sigmoid_poly_shares",
    "train_horizontal_linear",
    "train_horizontal_logistic",
    "train_vertical_linear",
    "train_vertical_logistic",
    "vertical_triple_needs",
]
