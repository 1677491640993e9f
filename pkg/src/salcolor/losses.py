"""Training objectives: pixel, attention, adversarial, penalty, perceptual.

The generator total is assembled as

    total = l1 + lambda_g * adv_g + lambda_a * attention + lambda_p * perceptual

with the adversarial and perceptual components forced to zero during
stage 1. Critics train on a Wasserstein objective with gradient penalty by
default; a least-squares mode is available for ablation and skips the
penalty entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .imageops import apply_saliency_weight

WGAN = "wgan"
LSGAN = "lsgan"

DEFAULT_LAMBDA_G = 0.05
DEFAULT_LAMBDA_A = 0.5
DEFAULT_LAMBDA_P = 5.0
DEFAULT_GP_LAMBDA = 10.0


@dataclass(frozen=True)
class LossWeights:
    lambda_g: float = DEFAULT_LAMBDA_G
    lambda_a: float = DEFAULT_LAMBDA_A
    lambda_p: float = DEFAULT_LAMBDA_P
    gp_lambda: float = DEFAULT_GP_LAMBDA

    def __post_init__(self) -> None:
        for name in ("lambda_g", "lambda_a", "lambda_p", "gp_lambda"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")


@dataclass
class LossBreakdown:
    """One step's loss components; generator side plus critic-side extras."""

    l1: float
    attention: float
    adv_g: float
    perceptual: float
    total: float
    adv_d: float = 0.0
    gp_c: float = 0.0
    gp_a: float = 0.0

    def as_floats(self) -> "LossBreakdown":
        return LossBreakdown(*(scalar(getattr(self, f.name)) for f in _FIELDS))


_FIELDS = list(LossBreakdown.__dataclass_fields__.values())


def scalar(value) -> float:
    """Python float of a loss component, whether tensor or number."""
    if isinstance(value, torch.Tensor):
        return value.item()
    return float(value)


def pixel_loss(pred: torch.Tensor, target: torch.Tensor, mode: str = "l1") -> torch.Tensor:
    """Mean absolute (or squared, mode='l2') error between color images."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if mode == "l1":
        return (pred - target).abs().mean()
    if mode == "l2":
        return ((pred - target) ** 2).mean()
    raise ValueError(f"unknown pixel loss mode '{mode}' (expected 'l1' or 'l2')")


def attention_loss(
    pred_color: torch.Tensor,
    pred_saliency: torch.Tensor,
    gt_color: torch.Tensor,
    gt_saliency: torch.Tensor,
) -> torch.Tensor:
    """L1 between predicted and ground-truth saliency-weighted images."""
    pred_w = apply_saliency_weight(pred_color, pred_saliency)
    gt_w = apply_saliency_weight(gt_color, gt_saliency)
    return (pred_w - gt_w).abs().mean()


def generator_adv_loss(
    color_scores: torch.Tensor,
    weighted_scores: torch.Tensor | None = None,
    mode: str = WGAN,
) -> torch.Tensor:
    """Adversarial generator term over one or both critic score maps."""
    if mode == WGAN:
        loss = -color_scores.mean()
        if weighted_scores is not None:
            loss = loss - weighted_scores.mean()
        return loss
    if mode == LSGAN:
        loss = 0.5 * ((color_scores - 1.0) ** 2).mean()
        if weighted_scores is not None:
            loss = loss + 0.5 * ((weighted_scores - 1.0) ** 2).mean()
        return loss
    raise ValueError(f"unknown adversarial mode '{mode}' (expected '{WGAN}' or '{LSGAN}')")


def gradient_penalty(
    critic,
    real: torch.Tensor,
    fake: torch.Tensor,
    gp_lambda: float = DEFAULT_GP_LAMBDA,
    rng: torch.Generator | int | None = None,
) -> torch.Tensor:
    """Two-sided gradient penalty on random interpolations of real and fake.

    Each sample gets its own uniform mixing coefficient. The critic's patch
    map is reduced to a per-sample scalar by mean before differentiation, and
    the penalty is ``gp_lambda * mean((||grad||_2 - 1)^2)`` over the batch.
    """
    if real.shape != fake.shape:
        raise ValueError(f"shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}")
    if gp_lambda < 0:
        raise ValueError("gp_lambda must be non-negative")
    if gp_lambda == 0:
        return real.new_zeros(())
    if isinstance(rng, int):
        rng = torch.Generator(device=real.device).manual_seed(rng)
    batch = real.shape[0]
    eps_shape = (batch,) + (1,) * (real.dim() - 1)
    eps = torch.rand(eps_shape, generator=rng, dtype=real.dtype, device=real.device)
    mixed = (eps * real.detach() + (1.0 - eps) * fake.detach()).requires_grad_(True)
    scores = critic(mixed)
    per_sample = scores.reshape(batch, -1).mean(dim=1)
    grads = torch.autograd.grad(
        outputs=per_sample.sum(), inputs=mixed, create_graph=True
    )[0]
    norms = grads.reshape(batch, -1).norm(2, dim=1)
    return gp_lambda * ((norms - 1.0) ** 2).mean()


def critic_loss(
    color_real: torch.Tensor,
    color_fake: torch.Tensor,
    weighted_real: torch.Tensor | None = None,
    weighted_fake: torch.Tensor | None = None,
    gp_color: torch.Tensor | float = 0.0,
    gp_weighted: torch.Tensor | float = 0.0,
    mode: str = WGAN,
) -> torch.Tensor:
    """Joint critic objective over the color critic and, when present, the
    saliency-weighted critic. In least-squares mode the penalties are ignored."""
    if (weighted_real is None) != (weighted_fake is None):
        raise ValueError("weighted_real and weighted_fake must be given together")
    if mode == WGAN:
        loss = color_fake.mean() - color_real.mean()
        if weighted_real is not None:
            loss = loss + weighted_fake.mean() - weighted_real.mean()
        return loss + gp_color + gp_weighted
    if mode == LSGAN:
        loss = 0.5 * (((color_real - 1.0) ** 2).mean() + (color_fake ** 2).mean())
        if weighted_real is not None:
            loss = loss + 0.5 * (
                ((weighted_real - 1.0) ** 2).mean() + (weighted_fake ** 2).mean()
            )
        return loss
    raise ValueError(f"unknown adversarial mode '{mode}' (expected '{WGAN}' or '{LSGAN}')")


def perceptual_loss(
    extractor,
    pred: torch.Tensor,
    target: torch.Tensor,
    layer: str | None = None,
) -> torch.Tensor:
    """L1 distance between frozen extractor features of pred and target."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    pred_feat = extractor(pred, layer)
    with torch.no_grad():
        target_feat = extractor(target, layer)
    return (pred_feat - target_feat).abs().mean()


def total_generator_loss(
    l1,
    adv_g,
    attention,
    perceptual,
    weights: LossWeights,
    stage: int,
) -> LossBreakdown:
    """Combine generator components into a LossBreakdown for the given stage.

    Stage 1 keeps only the pixel and attention terms; stage 2 applies the
    full weighting. Components may be floats or scalar tensors.
    """
    if stage not in (1, 2):
        raise ValueError(f"stage must be 1 or 2, got {stage}")
    if stage == 1:
        total = l1 + weights.lambda_a * attention
        return LossBreakdown(l1=l1, attention=attention, adv_g=0.0, perceptual=0.0, total=total)
    total = l1 + weights.lambda_g * adv_g + weights.lambda_a * attention + weights.lambda_p * perceptual
    return LossBreakdown(l1=l1, attention=attention, adv_g=adv_g, perceptual=perceptual, total=total)
