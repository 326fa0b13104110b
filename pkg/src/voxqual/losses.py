"""Training losses: MAE for rating regression, class-distance-weighted
cross-entropy for 3-class severity classification.

The distance-weighted loss is -log(y_c) * |i - c| with i the argmax of the
predicted probabilities and c the true class. The distance factor is a
constant in the graph: no gradient flows through the argmax, and a sample
whose argmax is already correct contributes exactly zero loss and zero
gradient. `distance_floor` can replace |i - c| with max(|i - c|, floor)
for trainability experiments; the default 0 keeps the verbatim behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, absdiff, as_tensor, log, mean, mul, slice_axis


@dataclass
class ClassPrediction:
    probs: Tensor  # strictly positive, sums to 1
    true_index: int

    def __post_init__(self):
        self.probs = as_tensor(self.probs)
        if self.probs.data.ndim != 1 or self.probs.size < 2:
            raise ValueError("class probabilities must be a vector of >= 2 entries")
        if not (0 <= self.true_index < self.probs.size):
            raise ValueError(f"true class {self.true_index} out of range")

    @property
    def predicted_index(self) -> int:
        # np.argmax takes the lowest index on ties
        return int(np.argmax(self.probs.data))


def mae_loss(pred, target) -> Tensor:
    """Mean absolute error over the output vector."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mae_loss: length mismatch {pred.shape} vs {target.shape}")
    return mean(absdiff(pred, target))


def scdw_ce_loss(prediction: ClassPrediction, distance_floor: int = 0) -> Tensor:
    """-log(y_c) * |i - c|, the distance treated as a constant."""
    c = prediction.true_index
    y_c = slice_axis(prediction.probs, 0, c, c + 1)
    if float(y_c.data[0]) <= 0.0:
        raise ValueError(f"probability of the true class must be positive, got {float(y_c.data[0])}")
    distance = max(abs(prediction.predicted_index - c), distance_floor)
    factor = Tensor(np.asarray(-float(distance), dtype=prediction.probs.dtype))
    return mean(mul(log(y_c), factor))
