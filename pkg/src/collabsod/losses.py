"""Supervision losses and their weighted total."""

from dataclasses import dataclass, astuple

import torch

from .errors import ConfigError, ShapeError, ValidationError

PROB_EPS = 1e-7
REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class LossWeights:
    edge: float = 1.0
    coarse: float = 1.0
    depth: float = 3.0
    final: float = 1.0

    def __post_init__(self):
        for name, value in zip(("edge", "coarse", "depth", "final"), astuple(self)):
            if not value >= 0:
                raise ConfigError(f"loss weight {name}={value} must be nonnegative")


@dataclass
class LossBreakdown:
    edge: torch.Tensor
    coarse: torch.Tensor
    depth: torch.Tensor
    final: torch.Tensor
    total: torch.Tensor

    def as_floats(self):
        return {k: float(v.detach()) for k, v in self.__dict__.items()}


def _reduce(x, reduction):
    if reduction == "mean":
        return x.mean()
    if reduction == "sum":
        return x.sum()
    raise ConfigError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"prediction {tuple(a.shape)} and target {tuple(b.shape)} differ")


def bce_loss(pred_prob, gt, reduction="mean", eps=PROB_EPS):
    """Binary cross entropy on a foreground probability map."""
    _check_shapes(pred_prob, gt)
    if not torch.all((gt == 0) | (gt == 1)):
        raise ValidationError("BCE target must be binary {0, 1}")
    p = pred_prob.clamp(eps, 1 - eps)
    return _reduce(-(gt * torch.log(p) + (1 - gt) * torch.log(1 - p)), reduction)


def smooth_l1_depth_loss(att_depth, depth_gt, reduction="mean"):
    """0.5*d^2 for |d| <= 1, |d| - 0.5 beyond; averaged over the W x H grid."""
    _check_shapes(att_depth, depth_gt)
    d = (att_depth - depth_gt).abs()
    return _reduce(torch.where(d <= 1, 0.5 * d * d, d - 0.5), reduction)


def total_loss(edge, coarse, depth, final, weights=LossWeights()):
    return (
        weights.edge * edge
        + weights.coarse * coarse
        + weights.depth * depth
        + weights.final * final
    )
