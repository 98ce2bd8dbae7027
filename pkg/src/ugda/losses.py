"""Training objectives and the adversarial gradient-flow contract.

The supervised side pairs a heatmap regression loss with a cross-entropy +
soft-Dice mask loss.  The adversarial side trains a patch discriminator on
(mask, heatmap) prediction pairs and turns its judgment into an alignment
signal for the mask head, with heatmap predictions gradient-blocked as
anchors whenever extreme-point supervision exists for the item.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ContractViolationError, InvalidArgumentError

CE_CLIP = 1e-7
DICE_EPS = 1e-5

ROLE_SOURCE = "source_labelled"
ROLE_TARGET_PS = "target_ps"
ROLE_TARGET_UNLABELLED = "target_unlabelled"
ROLES = (ROLE_SOURCE, ROLE_TARGET_PS, ROLE_TARGET_UNLABELLED)


@dataclass(frozen=True)
class BatchRole:
    """Supervision available for one batch item."""

    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise InvalidArgumentError(f"unknown role {self.role!r}")

    @property
    def has_mask(self) -> bool:
        return self.role == ROLE_SOURCE

    @property
    def has_ps(self) -> bool:
        return self.role in (ROLE_SOURCE, ROLE_TARGET_PS)


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 1e-4
    stage_weights: tuple[float, ...] | None = None  # None: 1.0 per auxiliary

    def __post_init__(self):
        if self.lambda_adv < 0:
            raise InvalidArgumentError("lambda_adv must be >= 0")


def _aux_weights(aux, stage_weights):
    if stage_weights is None:
        return [1.0] * len(aux)
    if len(stage_weights) != len(aux):
        raise InvalidArgumentError(
            f"{len(aux)} auxiliaries but {len(stage_weights)} stage weights"
        )
    return list(stage_weights)


def extreme_point_loss(pred, target, aux=(), stage_weights=None) -> torch.Tensor:
    """Mean-squared error over all voxels and channels, plus weighted
    deep-supervision terms."""
    if pred.shape != target.shape:
        raise InvalidArgumentError(f"shape mismatch: {pred.shape} vs {target.shape}")
    loss = F.mse_loss(pred, target)
    for w, a in zip(_aux_weights(aux, stage_weights), aux):
        loss = loss + w * F.mse_loss(a, target)
    return loss


def _bce_dice(prob: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    p = prob.clamp(CE_CLIP, 1.0 - CE_CLIP)
    ce = -(mask * p.log() + (1.0 - mask) * (1.0 - p).log()).mean()
    flat_dims = tuple(range(1, prob.ndim)) if prob.ndim > 1 else (0,)
    inter = (prob * mask).sum(dim=flat_dims)
    denom = prob.sum(dim=flat_dims) + mask.sum(dim=flat_dims)
    dice = 1.0 - (2.0 * inter + DICE_EPS) / (denom + DICE_EPS)
    return ce + dice.mean()


def segmentation_loss(prob, mask, aux=(), stage_weights=None) -> torch.Tensor:
    """Mean cross-entropy (probabilities clipped to [1e-7, 1-1e-7]) plus
    soft Dice with 1e-5 smoothing, plus weighted deep-supervision terms."""
    if prob.shape != mask.shape:
        raise InvalidArgumentError(f"shape mismatch: {prob.shape} vs {mask.shape}")
    for t, name in ((prob, "probabilities"), (mask, "mask")):
        t = t.detach()
        if float(t.min()) < 0.0 or float(t.max()) > 1.0:
            raise InvalidArgumentError(f"{name} must lie in [0, 1]")
    loss = _bce_dice(prob, mask)
    for w, a in zip(_aux_weights(aux, stage_weights), aux):
        loss = loss + w * _bce_dice(a, mask)
    return loss


def supervised_loss(seg=None, ext=None, stage_weights=None) -> torch.Tensor:
    """Combined supervised objective: mask loss over source items plus
    heatmap loss over extreme-point-supervised items.

    ``seg`` is ``(prob, mask, aux)`` stacked over the mask-labelled items;
    ``ext`` is ``(pred, target, aux)`` stacked over the PS-carrying items.
    Either side may be None (e.g. a purely unlabelled batch scores 0).
    """
    parts = []
    if seg is not None:
        prob, mask, aux = seg
        parts.append(segmentation_loss(prob, mask, aux, stage_weights))
    if ext is not None:
        pred, target, aux = ext
        parts.append(extreme_point_loss(pred, target, aux, stage_weights))
    if not parts:
        return torch.tensor(0.0)
    return sum(parts)


def discriminator_loss(src_logits: torch.Tensor, tgt_logits: torch.Tensor) -> torch.Tensor:
    """BCE pushing source pairs to label 1 and target pairs to label 0.

    Callers must pass logits computed on detached predictions so gradients
    reach only discriminator parameters.
    """
    return F.softplus(-src_logits).mean() + F.softplus(tgt_logits).mean()


def adversarial_loss(tgt_logits: torch.Tensor) -> torch.Tensor:
    """BCE on target logits with the label switched to 1 (fool the judge)."""
    return F.softplus(-tgt_logits).mean()


def total_loss(sup: torch.Tensor, adv: torch.Tensor | None, weights: LossWeights) -> torch.Tensor:
    """Supervised plus lambda-weighted adversarial objective.

    With ``lambda_adv == 0`` the adversarial term is skipped entirely so
    main-network gradients are bitwise identical to supervised-only
    training.
    """
    if weights.lambda_adv == 0.0 or adv is None:
        return sup
    return sup + weights.lambda_adv * adv


@contextmanager
def frozen_parameters(*modules):
    """Temporarily block gradient flow into the given modules' parameters."""
    params = [p for m in modules for p in m.parameters()]
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad_(flag)


def anchored_heatmap_input(heatmap_pred: torch.Tensor, ps_present) -> torch.Tensor:
    """Summed heatmap channel with per-item anchor gradient blocking.

    For items whose extreme points are supervised (``ps_present`` True) the
    heatmap prediction is detached, so downstream adversarial gradients
    can never move it; unsupervised items keep the full graph.
    """
    from .networks import summed_channel

    summed = summed_channel(heatmap_pred)
    keep = torch.tensor(
        [not p for p in ps_present], device=summed.device, dtype=torch.bool
    ).view(-1, *([1] * (summed.ndim - 1)))
    if keep.shape[0] != summed.shape[0]:
        raise InvalidArgumentError("ps_present length must match batch size")
    return torch.where(keep, summed, summed.detach())


def check_target_roles(roles) -> None:
    """The adversarial objective is defined on target items only."""
    for r in roles:
        role = r.role if isinstance(r, BatchRole) else r
        if role == ROLE_SOURCE:
            raise ContractViolationError(
                "adversarial loss applied to a source-labelled item"
            )
