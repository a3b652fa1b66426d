"""
Loss algebra: multi-label weighting and adapted R-Drop.

The base term weights the squared error of Overall by w and splits 1 - w equally over
the six auxiliary dimensions. The consistency term applies the same weighting to the
squared difference between stochastic forward passes of one sample.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np

from .config import NUM_DIMENSIONS, OVERALL_INDEX, LossConfig
from .corpus import ScoreVector
from .exceptions import DataError


def dimension_weights(overall_weight: float) -> np.ndarray:
    """Per-dimension loss weights: w for Overall, (1 - w) / 6 for the others."""
    weights = np.full(NUM_DIMENSIONS, (1.0 - overall_weight) / (NUM_DIMENSIONS - 1))
    weights[OVERALL_INDEX] = overall_weight
    return weights


def _label_array(label) -> np.ndarray:
    if isinstance(label, ScoreVector):
        return label.as_array()
    return np.asarray(label, dtype=np.float64)


def multi_label_loss(pred: np.ndarray, label, w: float) -> Tuple[float, np.ndarray]:
    """
    Weighted squared error over the seven dimensions.

    Args:
        pred: Seven predicted scores
        label: ScoreVector or seven gold scores
        w: Weight of Overall in [0, 1]

    Returns:
        Tuple of (weighted loss, unweighted squared error per dimension)
    """
    if not 0.0 <= w <= 1.0:
        raise DataError(f"overall weight must lie in [0, 1], got {w}")
    errors = (np.asarray(pred, dtype=np.float64) - _label_array(label)) ** 2
    return float(np.dot(dimension_weights(w), errors)), errors


@dataclass(frozen=True)
class LossBreakdown:
    """Consistency term, base term and their combination for one sample."""

    l_r: float
    l_b: float
    total: float
    per_dimension_l_b: np.ndarray


def rdrop_loss(preds: Sequence[np.ndarray], label, cfg: LossConfig) -> LossBreakdown:
    """
    Adapted R-Drop loss for one sample over F stochastic forward passes.

    l_b is the mean multi-label loss of the F predictions; l_r is the mean over all
    unordered prediction pairs of their w-weighted squared difference;
    total = alpha * l_r + (1 - alpha) * l_b.

    Raises:
        DataError: len(preds) differs from cfg.forwards
    """
    if len(preds) != cfg.forwards:
        raise DataError(f"expected {cfg.forwards} predictions, got {len(preds)}")
    weights = dimension_weights(cfg.overall_weight)
    y = _label_array(label)
    stacked = np.stack([np.asarray(p, dtype=np.float64) for p in preds])

    per_dimension = ((stacked - y) ** 2).mean(axis=0)
    l_b = float(np.dot(weights, per_dimension))

    pairs = list(combinations(range(len(preds)), 2))
    if pairs:
        l_r = float(np.mean([np.dot(weights, (stacked[j] - stacked[k]) ** 2) for j, k in pairs]))
    else:
        l_r = 0.0

    alpha = cfg.effective_alpha
    return LossBreakdown(
        l_r=l_r,
        l_b=l_b,
        total=alpha * l_r + (1.0 - alpha) * l_b,
        per_dimension_l_b=per_dimension,
    )


def rdrop_loss_gradients(preds: Sequence[np.ndarray], label, cfg: LossConfig) -> List[np.ndarray]:
    """Gradient of ``rdrop_loss(...).total`` w.r.t. each prediction vector."""
    if len(preds) != cfg.forwards:
        raise DataError(f"expected {cfg.forwards} predictions, got {len(preds)}")
    weights = dimension_weights(cfg.overall_weight)
    y = _label_array(label)
    stacked = np.stack([np.asarray(p, dtype=np.float64) for p in preds])
    forwards = len(preds)
    alpha = cfg.effective_alpha
    num_pairs = forwards * (forwards - 1) // 2

    grads = []
    for j in range(forwards):
        base = 2.0 / forwards * weights * (stacked[j] - y)
        grad = (1.0 - alpha) * base
        if num_pairs:
            diff = sum(stacked[j] - stacked[k] for k in range(forwards) if k != j)
            grad = grad + alpha * 2.0 / num_pairs * weights * diff
        grads.append(grad)
    return grads
