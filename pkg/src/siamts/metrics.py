"""Classification metrics and the embedding-collapse statistic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError

# collapse_stat conventions: ~1 for isotropic embeddings, ~0 when every
# embedding sits on the same point of the unit sphere.
COLLAPSE_HEALTHY = 0.5
COLLAPSE_DEGENERATE = 0.1


@dataclass(frozen=True)
class PredictionSet:
    """Paired integer labels in [0, n_classes)."""

    y_true: np.ndarray
    y_pred: np.ndarray
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "y_true", np.asarray(self.y_true, dtype=np.int64))
        object.__setattr__(self, "y_pred", np.asarray(self.y_pred, dtype=np.int64))
        if self.y_true.shape != self.y_pred.shape or self.y_true.ndim != 1:
            raise ShapeError(
                f"prediction set: got shapes {self.y_true.shape} and {self.y_pred.shape}")
        if self.y_true.size == 0:
            raise ShapeError("prediction set: empty")
        for name, arr in (("y_true", self.y_true), ("y_pred", self.y_pred)):
            if arr.min() < 0 or arr.max() >= self.n_classes:
                raise ShapeError(f"prediction set: {name} outside [0, {self.n_classes})")


def accuracy(ps: PredictionSet) -> float:
    return int((ps.y_true == ps.y_pred).sum()) / ps.y_true.size


def kappa(ps: PredictionSet) -> float | None:
    """Cohen's kappa: agreement beyond chance, in [-1, 1].

    Chance agreement is the dot product of the two marginal label
    distributions.  Returns None when chance agreement is exactly 1 (both
    raters constant), where the statistic is undefined.
    """
    n = ps.y_true.size
    observed = int((ps.y_true == ps.y_pred).sum())
    true_counts = np.bincount(ps.y_true, minlength=ps.n_classes)
    pred_counts = np.bincount(ps.y_pred, minlength=ps.n_classes)
    chance_num = int(true_counts @ pred_counts)
    p_observed = observed / n
    p_chance = chance_num / (n * n)
    if p_chance == 1.0:
        return None
    return (p_observed - p_chance) / (1.0 - p_chance)


def collapse_stat(embeddings: np.ndarray) -> float:
    """Dispersion of L2-normalized embeddings, scaled so isotropic ~ 1.

    Mean per-dimension standard deviation of z / ||z||, times sqrt(d).
    Values near 0 mean all embeddings point the same way (collapse).
    """
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ShapeError(f"collapse_stat: need [n>=2, d] embeddings, got {z.shape}")
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NumericError("collapse_stat: zero-norm embedding")
    unit = z / norms
    return float(unit.std(axis=0).mean() * np.sqrt(z.shape[1]))
